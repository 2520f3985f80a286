#include "cgsta/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cgsta/rng.hpp"

namespace cgsta::dataio {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
        std::size_t comma = line.find(',', pos);
        std::string cell = line.substr(pos, comma == std::string::npos ? comma : comma - pos);
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        cells.push_back(std::move(cell));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return cells;
}

double parse_cell(const std::string& cell, std::size_t line_no, std::size_t col) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || p != last || !std::isfinite(v))
        fail("load_csv: cannot parse cell '" + cell + "' at row " + std::to_string(line_no) +
             ", column " + std::to_string(col + 1));
    return v;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

TimeSeries load_csv(const std::string& path, bool has_header,
                    const std::optional<std::string>& label_column) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("load_csv: cannot open " + path);
    if (label_column && !has_header) fail("load_csv: label column requires a header row");

    TimeSeries out;
    std::string line;
    std::size_t line_no = 0;
    std::size_t n_cols = 0;
    long label_idx = -1;

    if (has_header) {
        if (!std::getline(in, line)) fail("load_csv: empty file " + path);
        ++line_no;
        auto names = split_line(line);
        n_cols = names.size();
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (label_column && names[i] == *label_column) {
                label_idx = static_cast<long>(i);
            } else {
                out.variable_names.push_back(names[i]);
            }
        }
        if (label_column && label_idx < 0)
            fail("load_csv: label column '" + *label_column + "' not found in " + path);
    }

    std::vector<int> labels;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto cells = split_line(line);
        if (n_cols == 0) n_cols = cells.size();
        if (cells.size() != n_cols)
            fail("load_csv: ragged row " + std::to_string(line_no) + " in " + path + " (got " +
                 std::to_string(cells.size()) + " cells, expected " + std::to_string(n_cols) + ")");
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const double v = parse_cell(cells[c], line_no, c);
            if (static_cast<long>(c) == label_idx) {
                if (v != 0.0 && v != 1.0)
                    fail("load_csv: label cell must be 0 or 1 at row " + std::to_string(line_no));
                labels.push_back(static_cast<int>(v));
            } else {
                out.values.push_back(v);
            }
        }
        ++out.t;
    }
    if (out.t == 0) fail("load_csv: no data rows in " + path);
    out.k = n_cols - (label_idx >= 0 ? 1 : 0);
    if (out.k < 1) fail("load_csv: no value columns in " + path);
    if (out.variable_names.empty())
        for (std::size_t i = 0; i < out.k; ++i)
            out.variable_names.push_back("v" + std::to_string(i));
    if (label_idx >= 0) out.labels = std::move(labels);
    return out;
}

void write_csv(const std::string& path, const TimeSeries& series, bool with_labels) {
    std::ofstream outf(path, std::ios::binary);
    if (!outf) fail("write_csv: cannot open " + path);
    const bool labels = with_labels && series.labels.has_value();
    for (std::size_t c = 0; c < series.k; ++c) {
        if (c) outf << ',';
        outf << (c < series.variable_names.size() ? series.variable_names[c]
                                                  : "v" + std::to_string(c));
    }
    if (labels) outf << ",label";
    outf << '\n';
    for (std::size_t t = 0; t < series.t; ++t) {
        for (std::size_t c = 0; c < series.k; ++c) {
            if (c) outf << ',';
            outf << fmt(series.at(t, c));
        }
        if (labels) outf << ',' << (*series.labels)[t];
        outf << '\n';
    }
}

Normalizer fit_normalizer(const TimeSeries& train) {
    if (train.t == 0) fail("fit_normalizer: empty series");
    Normalizer n;
    n.mean.assign(train.k, 0.0);
    n.std.assign(train.k, 0.0);
    for (std::size_t t = 0; t < train.t; ++t)
        for (std::size_t c = 0; c < train.k; ++c) n.mean[c] += train.at(t, c);
    for (auto& m : n.mean) m /= static_cast<double>(train.t);
    for (std::size_t t = 0; t < train.t; ++t)
        for (std::size_t c = 0; c < train.k; ++c) {
            const double d = train.at(t, c) - n.mean[c];
            n.std[c] += d * d;
        }
    for (auto& s : n.std) s = std::max(std::sqrt(s / static_cast<double>(train.t)), kEps);
    return n;
}

TimeSeries apply_normalizer(const Normalizer& n, const TimeSeries& series) {
    if (n.mean.size() != series.k)
        fail("apply_normalizer: normalizer has " + std::to_string(n.mean.size()) +
             " variables, series has " + std::to_string(series.k));
    TimeSeries out = series;
    for (std::size_t t = 0; t < series.t; ++t)
        for (std::size_t c = 0; c < series.k; ++c)
            out.values[t * series.k + c] = (series.at(t, c) - n.mean[c]) / std::max(n.std[c], kEps);
    return out;
}

WindowBatch make_windows(const TimeSeries& series, std::size_t window_len, std::size_t stride) {
    if (window_len > series.t) fail("make_windows: series shorter than window");
    if (window_len == 0 || stride == 0) fail("make_windows: window and stride must be positive");
    WindowBatch b;
    b.k = series.k;
    b.l = window_len;
    b.n = (series.t - window_len) / stride + 1;
    b.windows.resize(b.n * b.k * b.l);
    b.start_indices.resize(b.n);
    b.is_augmented.assign(b.n, false);
    for (std::size_t i = 0; i < b.n; ++i) {
        const std::size_t start = i * stride;
        b.start_indices[i] = start;
        double* w = b.windows.data() + i * b.k * b.l;
        for (std::size_t c = 0; c < b.k; ++c)
            for (std::size_t t = 0; t < window_len; ++t)
                w[c * window_len + t] = series.at(start + t, c);
    }
    return b;
}

SplitResult split(const TimeSeries& series) {
    const std::size_t t1 = static_cast<std::size_t>(0.6 * static_cast<double>(series.t));
    const std::size_t t2 = static_cast<std::size_t>(0.8 * static_cast<double>(series.t));
    if (t1 == 0 || t2 <= t1 || t2 >= series.t)
        fail("split: series too short for a 0.6/0.2/0.2 split (T=" + std::to_string(series.t) +
             ")");
    auto take = [&](std::size_t from, std::size_t to) {
        TimeSeries s;
        s.k = series.k;
        s.t = to - from;
        s.variable_names = series.variable_names;
        s.values.assign(series.values.begin() + static_cast<long>(from * series.k),
                        series.values.begin() + static_cast<long>(to * series.k));
        if (series.labels)
            s.labels = std::vector<int>(series.labels->begin() + static_cast<long>(from),
                                        series.labels->begin() + static_cast<long>(to));
        return s;
    };
    return {take(0, t1), take(t1, t2), take(t2, series.t)};
}

SynthResult gen_synthetic(const SynthConfig& cfg) {
    if (cfg.k < 2 || cfg.n_groups == 0 || cfg.k % cfg.n_groups != 0)
        fail("gen_synthetic: K must be >= 2 and divisible into n_groups");
    if (!(cfg.anomaly_rate > 0.0 && cfg.anomaly_rate <= 0.2))
        fail("gen_synthetic: anomaly_rate must be in (0, 0.2]");
    if (cfg.t_train < 10 || cfg.t_test < 100) fail("gen_synthetic: series too short");

    Rng rng(cfg.seed);
    const std::size_t K = cfg.k;
    const std::size_t per_group = K / cfg.n_groups;
    const double rho = 0.92;
    const double eta = std::sqrt(1.0 - rho * rho);

    std::vector<std::size_t> groups(K);
    std::vector<double> load(K), noise(K), offset(K), scale(K);
    for (std::size_t v = 0; v < K; ++v) {
        groups[v] = v / per_group;
        load[v] = rng.uniform(0.80, 0.95);
        noise[v] = rng.uniform(0.22, 0.32);
        offset[v] = rng.uniform(-2.0, 2.0);
        scale[v] = rng.uniform(0.5, 2.0);
    }

    const std::size_t burn = 300;
    const std::size_t total = burn + cfg.t_train + cfg.t_test;
    std::vector<double> z(cfg.n_groups, 0.0);
    std::vector<double> all(total * K);
    for (std::size_t t = 0; t < total; ++t) {
        for (auto& zg : z) zg = rho * zg + eta * rng.normal();
        for (std::size_t v = 0; v < K; ++v)
            all[t * K + v] =
                offset[v] + scale[v] * (load[v] * z[groups[v]] + noise[v] * rng.normal());
    }

    SynthResult res;
    res.groups = groups;
    auto& train = res.train;
    train.t = cfg.t_train;
    train.k = K;
    train.values.assign(all.begin() + static_cast<long>(burn * K),
                        all.begin() + static_cast<long>((burn + cfg.t_train) * K));
    auto& test = res.test;
    test.t = cfg.t_test;
    test.k = K;
    test.values.assign(all.begin() + static_cast<long>((burn + cfg.t_train) * K), all.end());
    test.labels = std::vector<int>(cfg.t_test, 0);
    for (std::size_t v = 0; v < K; ++v) {
        train.variable_names.push_back("v" + std::to_string(v));
        test.variable_names.push_back("v" + std::to_string(v));
    }

    // Plant labeled anomaly segments with per-kind step budgets: point spikes
    // (half the labeled steps), dependency breaks (one variable decoupled
    // onto an independent fast driver with the same marginal variance), and
    // group-level mean drift. Segments are non-overlapping with margin.
    const std::size_t budget =
        static_cast<std::size_t>(std::llround(cfg.anomaly_rate * static_cast<double>(cfg.t_test)));
    std::size_t kind_budget[3];
    kind_budget[0] = budget / 2;               // point
    kind_budget[1] = (budget * 15) / 100;      // break
    kind_budget[2] = budget - kind_budget[0] - kind_budget[1];  // drift
    std::vector<std::pair<std::size_t, std::size_t>> occupied;  // [start, end)
    auto overlaps = [&](std::size_t s, std::size_t e) {
        for (auto [os, oe] : occupied)
            if (s < oe + 10 && os < e + 10) return true;
        return false;
    };
    res.kinds.assign(cfg.t_test, 0);
    std::size_t planted[3] = {0, 0, 0};
    std::size_t attempts = 0;
    while ((planted[0] < kind_budget[0] || planted[1] < kind_budget[1] ||
            planted[2] < kind_budget[2]) &&
           attempts < 100000) {
        ++attempts;
        int kind = static_cast<int>(rng.integer(3));
        if (planted[static_cast<std::size_t>(kind)] >=
            kind_budget[static_cast<std::size_t>(kind)])
            continue;
        std::size_t len = kind == 0 ? 1 + rng.integer(2) : 15 + rng.integer(16);
        len = std::min(len, kind_budget[static_cast<std::size_t>(kind)] -
                                planted[static_cast<std::size_t>(kind)]);
        if (len == 0 || len > cfg.t_test) continue;
        const std::size_t start = rng.integer(cfg.t_test - len + 1);
        if (overlaps(start, start + len)) continue;

        if (kind == 0) {
            const std::size_t v = rng.integer(K);
            const double mag = rng.uniform(4.0, 6.0) * scale[v];
            const double sign = rng.coin() ? 1.0 : -1.0;
            for (std::size_t t = start; t < start + len; ++t) test.values[t * K + v] += sign * mag;
            res.n_point_steps += len;
        } else if (kind == 1) {
            // independent driver, same stationary variance, faster dynamics:
            // the conditional law breaks at every step of the segment
            const std::size_t v = rng.integer(K);
            const double rho_b = rho;  // same dynamics, independent path: the level diverges
            const double eta_b = std::sqrt(1.0 - rho_b * rho_b);
            double zp = 0.0;
            for (int b = 0; b < 50; ++b) zp = rho_b * zp + eta_b * rng.normal();
            for (std::size_t t = start; t < start + len; ++t) {
                zp = rho_b * zp + eta_b * rng.normal();
                test.values[t * K + v] =
                    offset[v] + scale[v] * (load[v] * zp + noise[v] * rng.normal());
            }
            res.n_break_steps += len;
        } else {
            const std::size_t g = rng.integer(cfg.n_groups);
            const double delta = rng.uniform(2.6, 3.2);
            const double sign = rng.coin() ? 1.0 : -1.0;
            for (std::size_t t = start; t < start + len; ++t)
                for (std::size_t v = 0; v < K; ++v)
                    if (groups[v] == g) test.values[t * K + v] += sign * delta * scale[v];
            res.n_drift_steps += len;
        }
        for (std::size_t t = start; t < start + len; ++t) {
            (*test.labels)[t] = 1;
            res.kinds[t] = kind + 1;
        }
        occupied.emplace_back(start, start + len);
        planted[static_cast<std::size_t>(kind)] += len;
    }
    const std::size_t total_planted = planted[0] + planted[1] + planted[2];
    if (total_planted + budget / 10 < budget)
        fail("gen_synthetic: could not place enough anomaly segments");
    return res;
}

}  // namespace cgsta::dataio
