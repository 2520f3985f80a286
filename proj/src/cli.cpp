#include "cgsta/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include "cgsta/dataio.hpp"
#include "cgsta/metrics.hpp"
#include "cgsta/model.hpp"
#include "cgsta/trainer.hpp"

namespace cgsta::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "cgsta 0.1.0";

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string row_repr(const dataio::TimeSeries& s, std::size_t row) {
    std::string r;
    for (std::size_t c = 0; c < s.k; ++c) {
        if (c) r += ',';
        r += fmt(s.at(row, c));
    }
    return r;
}

json fingerprint(const dataio::TimeSeries& s) {
    json f;
    f["rows"] = s.t;
    f["k"] = s.k;
    f["hash_first_row"] = fnv1a(row_repr(s, 0));
    f["hash_last_row"] = fnv1a(row_repr(s, s.t - 1));
    return f;
}

void write_manifest(const std::string& out_dir, const std::string& command, const json& extra) {
    json m = extra;
    m["command"] = command;
    m["tool_version"] = kToolVersion;
    m["timestamp"] = static_cast<long long>(std::time(nullptr));
    std::ofstream f(out_dir + "/manifest.json", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write manifest in " + out_dir);
    f << m.dump(2) << '\n';
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create directory " + dir);
}

// Loads a CSV, extracting the label column when the header carries it.
dataio::TimeSeries load_series(const std::string& path, const config::Config& cfg,
                               bool require_labels) {
    std::optional<std::string> label;
    if (cfg.has_header) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + path);
        std::string header;
        std::getline(in, header);
        std::stringstream hs(header);
        std::string cell;
        while (std::getline(hs, cell, ',')) {
            while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
            if (cell == cfg.label_column) label = cfg.label_column;
        }
    }
    if (require_labels && !label)
        throw std::runtime_error(path + " carries no '" + cfg.label_column +
                                 "' column; labeled data required");
    return dataio::load_csv(path, cfg.has_header, label);
}

config::Config load_config(const std::string& path) {
    if (path.empty()) return config::Config{};
    return config::parse_file(path);
}

void write_history_files(const std::string& out_dir, const train::TrainResult& result,
                         bool has_saa) {
    std::ofstream h(out_dir + "/history.csv", std::ios::binary);
    h << "step,epoch,L_det,L_cds,L_saa,L_total\n";
    for (const auto& s : result.history)
        h << s.step << ',' << s.epoch << ',' << fmt(s.l_det) << ',' << fmt(s.l_cds) << ','
          << fmt(s.l_saa) << ',' << fmt(s.l_total) << '\n';

    std::ofstream c(out_dir + "/cds_terms.csv", std::ios::binary);
    c << "step,L_intra_local,L_intra_regional,L_intra_global,L_inter,L_fusion\n";
    for (const auto& s : result.history)
        c << s.step << ',' << fmt(s.intra_local) << ',' << fmt(s.intra_regional) << ','
          << fmt(s.intra_global) << ',' << fmt(s.inter) << ',' << fmt(s.fusion) << '\n';

    if (has_saa) {
        std::ofstream d(out_dir + "/saa_drift.csv", std::ios::binary);
        d << "step,fro_local\n";
        for (const auto& s : result.history) d << s.step << ',' << fmt(s.fro_local) << '\n';
    }
}

struct EvalOutcome {
    double auroc = 0, auprc = 0, f1 = 0, threshold = 0;
    std::size_t n_pos = 0, n_neg = 0;
};

EvalOutcome evaluate_scores(const density::ScoreSeries& scores, const std::vector<int>& labels) {
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t t = 0; t < scores.scores.size(); ++t) {
        if (scores.coverage[t] < 1) continue;
        s.push_back(scores.scores[t]);
        y.push_back(labels[t]);
    }
    EvalOutcome e;
    e.auroc = metrics::auroc(s, y);
    e.auprc = metrics::auprc(s, y);
    auto [f1, th] = metrics::best_f1(s, y);
    e.f1 = f1;
    e.threshold = th;
    for (int l : y) (l == 1 ? e.n_pos : e.n_neg) += 1;
    return e;
}

void write_score_csv(const std::string& path, const density::ScoreSeries& scores,
                     const std::vector<int>* labels) {
    std::ofstream f(path, std::ios::binary);
    f << "t,score,coverage";
    if (labels) f << ",label";
    f << '\n';
    for (std::size_t t = 0; t < scores.scores.size(); ++t) {
        if (scores.coverage[t] < 1) continue;
        f << t << ',' << fmt(scores.scores[t]) << ',' << scores.coverage[t];
        if (labels) f << ',' << (*labels)[t];
        f << '\n';
    }
}

struct RunOutcome {
    bool ok = false;
    std::string error;
    EvalOutcome eval;
};

RunOutcome run_one(config::Config cfg, const dataio::TimeSeries& train_series,
                   const dataio::TimeSeries& test_series, std::size_t stride) {
    RunOutcome out;
    try {
        auto result = train::train(cfg, train_series);
        auto scores = model::score_series(result.model, test_series, stride);
        out.eval = evaluate_scores(scores, *test_series.labels);
        out.ok = true;
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

// Runs tasks on up to `parallel` worker threads (1 = sequential). Each task
// owns its state; only the task-index counter is shared.
void run_pool(std::size_t parallel, std::vector<std::function<void()>>& tasks) {
    if (parallel <= 1) {
        for (auto& t : tasks) t();
        return;
    }
    std::mutex mu;
    std::size_t next = 0;
    auto worker = [&] {
        while (true) {
            std::size_t mine;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= tasks.size()) return;
                mine = next++;
            }
            tasks[mine]();
        }
    };
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < std::min(parallel, tasks.size()); ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
}

// ---- commands -------------------------------------------------------------

int cmd_synth(const std::string& out_dir, std::size_t k, std::size_t groups, std::size_t t_train,
              std::size_t t_test, double rate, std::uint64_t seed) {
    ensure_dir(out_dir);
    dataio::SynthConfig cfg{k, groups, t_train, t_test, rate, seed};
    auto r = dataio::gen_synthetic(cfg);
    dataio::write_csv(out_dir + "/train.csv", r.train, false);
    dataio::write_csv(out_dir + "/test.csv", r.test, true);

    json extra;
    extra["synth"] = {{"k", k},         {"groups", groups}, {"t_train", t_train},
                      {"t_test", t_test}, {"rate", rate},     {"seed", seed}};
    extra["planted"] = {{"point_steps", r.n_point_steps},
                        {"break_steps", r.n_break_steps},
                        {"drift_steps", r.n_drift_steps}};
    extra["data"] = {{"train", fingerprint(r.train)}, {"test", fingerprint(r.test)}};
    write_manifest(out_dir, "synth", extra);
    std::cout << "synth: wrote " << out_dir << "/train.csv and test.csv ("
              << r.n_point_steps + r.n_break_steps + r.n_drift_steps << " labeled steps)\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::string& variant_flag) {
    config::Config cfg = load_config(config_path);
    if (!variant_flag.empty()) cfg.variant = config::variant_from_string(variant_flag);
    auto series = load_series(data_dir + "/train.csv", cfg, false);
    ensure_dir(out_dir);

    try {
        auto result = train::train(cfg, series);
        model::save_checkpoint(out_dir + "/checkpoint.ckpt", result.model);
        const bool has_saa =
            cfg.variant == config::Variant::full || cfg.variant == config::Variant::no_cds;
        write_history_files(out_dir, result, has_saa);
        json extra;
        extra["config"] = config::flatten(cfg);
        extra["seed"] = cfg.seed;
        extra["data"] = {{"train", fingerprint(series)}};
        extra["epochs_run"] = result.epochs_run;
        extra["best_epoch"] = result.best_epoch;
        write_manifest(out_dir, "train", extra);
        std::cout << "train: " << result.history.size() << " steps, checkpoint at " << out_dir
                  << "/checkpoint.ckpt\n";
        return 0;
    } catch (const train::NumericError& e) {
        const std::string diag = out_dir + "/diagnostics.txt";
        std::ofstream d(diag, std::ios::binary);
        d << "numeric failure at step " << e.step << ": " << e.what() << '\n';
        std::cerr << "train: numeric failure; diagnostics at " << diag << '\n';
        return 2;
    }
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& out_dir,
             long stride_flag) {
    auto m = model::load_checkpoint(ckpt);
    auto test = load_series(data_dir + "/test.csv", m.cfg, true);
    const std::size_t stride =
        stride_flag > 0 ? static_cast<std::size_t>(stride_flag) : m.cfg.stride_test;
    ensure_dir(out_dir);

    auto scores = model::score_series(m, test, stride);
    auto e = evaluate_scores(scores, *test.labels);
    write_score_csv(out_dir + "/score.csv", scores, &*test.labels);

    const std::string dataset = fs::path(data_dir).filename().string();
    std::ofstream f(out_dir + "/metrics.csv", std::ios::binary);
    f << "dataset,variant,seed,auroc,auprc,f1,threshold\n";
    f << dataset << ',' << config::variant_to_string(m.cfg.variant) << ',' << m.cfg.seed << ','
      << fmt(e.auroc) << ',' << fmt(e.auprc) << ',' << fmt(e.f1) << ',' << fmt(e.threshold)
      << '\n';

    json extra;
    extra["checkpoint"] = ckpt;
    extra["stride"] = stride;
    extra["config"] = config::flatten(m.cfg);
    extra["seed"] = m.cfg.seed;
    extra["data"] = {{"test", fingerprint(test)}};
    write_manifest(out_dir, "eval", extra);
    std::cout << "eval: auroc=" << fmt(e.auroc) << " auprc=" << fmt(e.auprc) << " f1=" << fmt(e.f1)
              << '\n';
    return 0;
}

int cmd_score(const std::string& ckpt, const std::string& data_dir, const std::string& out_dir,
              long stride_flag) {
    auto m = model::load_checkpoint(ckpt);
    auto test = load_series(data_dir + "/test.csv", m.cfg, false);
    const std::size_t stride =
        stride_flag > 0 ? static_cast<std::size_t>(stride_flag) : m.cfg.stride_test;
    ensure_dir(out_dir);
    auto scores = model::score_series(m, test, stride);
    write_score_csv(out_dir + "/score.csv", scores, test.labels ? &*test.labels : nullptr);
    json extra;
    extra["checkpoint"] = ckpt;
    extra["stride"] = stride;
    extra["config"] = config::flatten(m.cfg);
    extra["seed"] = m.cfg.seed;
    extra["data"] = {{"test", fingerprint(test)}};
    write_manifest(out_dir, "score", extra);
    std::cout << "score: wrote " << out_dir << "/score.csv\n";
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& data_dir,
               const std::string& out_dir, std::size_t seeds, std::size_t parallel) {
    config::Config base = load_config(config_path);
    auto train_series = load_series(data_dir + "/train.csv", base, false);
    auto test_series = load_series(data_dir + "/test.csv", base, true);
    ensure_dir(out_dir);
    const std::string dataset = fs::path(data_dir).filename().string();

    const std::vector<config::Variant> variants = {config::Variant::full, config::Variant::no_saa,
                                                   config::Variant::no_cds,
                                                   config::Variant::no_dlgc};
    struct Cell {
        config::Variant variant;
        std::uint64_t seed;
        RunOutcome outcome;
    };
    std::vector<Cell> cells;
    for (auto v : variants)
        for (std::size_t s = 0; s < seeds; ++s) cells.push_back({v, base.seed + s, {}});

    std::vector<std::function<void()>> tasks;
    tasks.reserve(cells.size());
    for (auto& cell : cells)
        tasks.push_back([&cell, &base, &train_series, &test_series] {
            config::Config cfg = base;
            cfg.variant = cell.variant;
            cfg.seed = cell.seed;
            cell.outcome = run_one(cfg, train_series, test_series, base.stride_test);
        });
    run_pool(parallel, tasks);

    std::ofstream mf(out_dir + "/metrics.csv", std::ios::binary);
    mf << "dataset,variant,seed,auroc,auprc,f1,threshold\n";
    std::map<config::Variant, std::map<std::string, std::vector<double>>> by_variant;
    std::vector<std::string> failures;
    for (const auto& c : cells) {
        const std::string vname = config::variant_to_string(c.variant);
        if (!c.outcome.ok) {
            failures.push_back(vname + " seed " + std::to_string(c.seed) + ": " + c.outcome.error);
            continue;
        }
        mf << dataset << ',' << vname << ',' << c.seed << ',' << fmt(c.outcome.eval.auroc) << ','
           << fmt(c.outcome.eval.auprc) << ',' << fmt(c.outcome.eval.f1) << ','
           << fmt(c.outcome.eval.threshold) << '\n';
        by_variant[c.variant]["auroc"].push_back(c.outcome.eval.auroc);
        by_variant[c.variant]["auprc"].push_back(c.outcome.eval.auprc);
        by_variant[c.variant]["f1"].push_back(c.outcome.eval.f1);
    }

    // aggregate with paired t-tests of Full vs each ablation (Full's own row
    // compares against the runner-up variant by mean)
    std::ofstream af(out_dir + "/aggregate.csv", std::ios::binary);
    af << "dataset,variant,metric,mean,std,p_vs_runner_up\n";
    const std::vector<std::string> metric_names = {"auroc", "auprc", "f1"};
    for (auto v : variants) {
        if (!by_variant.count(v)) continue;
        for (const auto& mname : metric_names) {
            const auto& vals = by_variant[v][mname];
            auto agg = metrics::aggregate_seeds(vals);
            std::string pstr = "nan";
            std::vector<double> other;
            if (v == config::Variant::full) {
                double best = -1;
                for (auto w : variants) {
                    if (w == v || !by_variant.count(w)) continue;
                    auto wa = metrics::aggregate_seeds(by_variant[w][mname]);
                    if (wa.mean > best) {
                        best = wa.mean;
                        other = by_variant[w][mname];
                    }
                }
            } else if (by_variant.count(config::Variant::full)) {
                other = by_variant[config::Variant::full][mname];
            }
            if (other.size() == vals.size() && vals.size() >= 2) {
                try {
                    pstr = fmt(metrics::paired_t_test(vals, other).p);
                } catch (const std::exception&) {
                    pstr = "nan";  // degenerate differences
                }
            }
            af << dataset << ',' << config::variant_to_string(v) << ',' << mname << ','
               << fmt(agg.mean) << ',' << fmt(agg.std) << ',' << pstr
               << (agg.single_seed ? ",single_seed" : "") << '\n';
        }
    }

    json extra;
    extra["config"] = config::flatten(base);
    extra["seeds"] = seeds;
    extra["data"] = {{"train", fingerprint(train_series)}, {"test", fingerprint(test_series)}};
    if (!failures.empty()) extra["partial_failures"] = failures;
    write_manifest(out_dir, "ablate", extra);
    std::cout << "ablate: " << cells.size() - failures.size() << "/" << cells.size()
              << " runs succeeded\n";
    for (const auto& f : failures) std::cerr << "ablate: FAILED " << f << '\n';
    return 0;
}

int cmd_sweep(const std::string& param, std::string values_csv, const std::string& config_path,
              const std::string& data_dir, const std::string& out_dir, std::size_t seeds,
              std::size_t parallel) {
    if (param != "alpha" && param != "gamma" && param != "beta")
        throw CLI::ValidationError("--param must be alpha, gamma, or beta");
    if (values_csv.empty()) {
        if (param == "alpha")
            values_csv = "0.70,0.75,0.80,0.85,0.90,0.95";
        else if (param == "gamma")
            values_csv = "0.80,0.85,0.90,0.95";
        else
            throw CLI::ValidationError("--values required for beta (no default grid)");
    }
    std::vector<double> values;
    std::stringstream vs(values_csv);
    std::string cell;
    while (std::getline(vs, cell, ',')) {
        if (cell.empty()) continue;
        values.push_back(std::stod(cell));
    }
    if (values.empty()) throw CLI::ValidationError("--values produced an empty list");

    config::Config base = load_config(config_path);
    auto train_series = load_series(data_dir + "/train.csv", base, false);
    auto test_series = load_series(data_dir + "/test.csv", base, true);
    ensure_dir(out_dir);

    struct Cell {
        double value;
        std::uint64_t seed;
        RunOutcome outcome;
    };
    std::vector<Cell> cells;
    for (double v : values)
        for (std::size_t s = 0; s < seeds; ++s) cells.push_back({v, base.seed + s, {}});

    std::vector<std::function<void()>> tasks;
    tasks.reserve(cells.size());
    for (auto& cell : cells)
        tasks.push_back([&cell, &base, &param, &train_series, &test_series] {
            config::Config cfg = base;
            cfg.seed = cell.seed;
            if (param == "alpha")
                cfg.alpha = cell.value;
            else if (param == "gamma")
                cfg.gamma = cell.value;
            else
                cfg.beta = cell.value;
            cell.outcome = run_one(cfg, train_series, test_series, base.stride_test);
        });
    run_pool(parallel, tasks);

    std::ofstream sf(out_dir + "/sweep.csv", std::ios::binary);
    sf << "param,value,seed,auroc,auprc\n";
    std::size_t failed = 0;
    for (const auto& c : cells) {
        if (!c.outcome.ok) {
            ++failed;
            std::cerr << "sweep: FAILED " << param << "=" << fmt(c.value) << " seed " << c.seed
                      << ": " << c.outcome.error << '\n';
            continue;
        }
        sf << param << ',' << fmt(c.value) << ',' << c.seed << ',' << fmt(c.outcome.eval.auroc)
           << ',' << fmt(c.outcome.eval.auprc) << '\n';
    }

    json extra;
    extra["config"] = config::flatten(base);
    extra["param"] = param;
    extra["values"] = values;
    extra["seeds"] = seeds;
    extra["data"] = {{"train", fingerprint(train_series)}, {"test", fingerprint(test_series)}};
    write_manifest(out_dir, "sweep", extra);
    std::cout << "sweep: " << cells.size() - failed << "/" << cells.size() << " runs succeeded\n";
    return 0;
}

void write_matrix_csv(const std::string& path, const std::vector<double>& m, std::size_t rows,
                      std::size_t cols) {
    std::ofstream f(path, std::ios::binary);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            if (j) f << ',';
            f << fmt(m[i * cols + j]);
        }
        f << '\n';
    }
}

int cmd_case(const std::string& ckpt, const std::string& data_dir, std::size_t index,
             std::size_t topk, const std::string& out_dir, long stride_flag) {
    auto m = model::load_checkpoint(ckpt);
    auto test = load_series(data_dir + "/test.csv", m.cfg, false);
    const std::size_t stride = stride_flag > 0 ? static_cast<std::size_t>(stride_flag) : 1;
    ensure_dir(out_dir);

    auto snap = model::case_snapshot(m, test, index, stride);
    write_matrix_csv(out_dir + "/a_local_dyn.csv", snap.a_local_dyn, snap.k, snap.k);
    write_matrix_csv(out_dir + "/a_regional.csv", snap.a_regional, snap.k, snap.k);
    write_matrix_csv(out_dir + "/a_global.csv", snap.a_global, snap.k, snap.k);
    write_matrix_csv(out_dir + "/a_local_stable.csv", snap.a_local_stable, snap.k, snap.k);
    write_matrix_csv(out_dir + "/delta_local.csv", snap.delta_local, snap.k, snap.k);

    // top-k sensors by mean score over the window
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t v = 0; v < snap.k; ++v) {
        double mean = 0;
        for (std::size_t t = 1; t < snap.l; ++t) mean += snap.sensor_scores[v * snap.l + t];
        ranked.emplace_back(mean / static_cast<double>(snap.l - 1), v);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    const std::size_t kk = std::min(topk, snap.k);
    std::ofstream f(out_dir + "/case_scores.csv", std::ios::binary);
    f << "sensor";
    for (std::size_t t = 0; t < snap.l; ++t) f << ",t" << t;
    f << '\n';
    for (std::size_t r = 0; r < kk; ++r) {
        const std::size_t v = ranked[r].second;
        f << (v < test.variable_names.size() ? test.variable_names[v] : "v" + std::to_string(v));
        for (std::size_t t = 0; t < snap.l; ++t) f << ',' << fmt(snap.sensor_scores[v * snap.l + t]);
        f << '\n';
    }

    json extra;
    extra["checkpoint"] = ckpt;
    extra["index"] = index;
    extra["topk"] = topk;
    extra["stride"] = stride;
    extra["config"] = config::flatten(m.cfg);
    extra["seed"] = m.cfg.seed;
    extra["data"] = {{"test", fingerprint(test)}};
    write_manifest(out_dir, "case", extra);
    std::cout << "case: exported window " << index << " snapshots to " << out_dir << '\n';
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"CGSTA multivariate time-series anomaly detector"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "Generate the synthetic benchmark");
    std::string synth_out;
    std::size_t synth_k = 12, synth_groups = 3, synth_t_train = 20000, synth_t_test = 4000;
    double synth_rate = 0.05;
    std::uint64_t synth_seed = 7;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--k", synth_k, "Variables");
    synth->add_option("--groups", synth_groups, "Latent groups");
    synth->add_option("--t-train", synth_t_train, "Training steps");
    synth->add_option("--t-test", synth_t_test, "Test steps");
    synth->add_option("--rate", synth_rate, "Anomaly rate");
    synth->add_option("--seed", synth_seed, "Generator seed");

    auto* tr = app.add_subcommand("train", "Train a model");
    std::string tr_config, tr_data, tr_out, tr_variant;
    tr->add_option("--config", tr_config, "INI config file");
    tr->add_option("--data", tr_data, "Data directory with train.csv")->required();
    tr->add_option("--out", tr_out, "Output directory")->required();
    tr->add_option("--variant", tr_variant, "full|no_saa|no_cds|no_dlgc");

    auto* ev = app.add_subcommand("eval", "Score a labeled test set and emit metrics");
    std::string ev_ckpt, ev_data, ev_out;
    long ev_stride = 0;
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
    ev->add_option("--data", ev_data, "Data directory with labeled test.csv")->required();
    ev->add_option("--out", ev_out, "Output directory")->required();
    ev->add_option("--stride", ev_stride, "Scoring stride (default: config stride_test)");

    auto* sc = app.add_subcommand("score", "Score a series without metrics");
    std::string sc_ckpt, sc_data, sc_out;
    long sc_stride = 0;
    sc->add_option("--checkpoint", sc_ckpt, "Checkpoint file")->required();
    sc->add_option("--data", sc_data, "Data directory with test.csv")->required();
    sc->add_option("--out", sc_out, "Output directory")->required();
    sc->add_option("--stride", sc_stride, "Scoring stride (default: config stride_test)");

    auto* ab = app.add_subcommand("ablate", "Run all four variants across seeds");
    std::string ab_config, ab_data, ab_out;
    std::size_t ab_seeds = 5, ab_parallel = 1;
    ab->add_option("--config", ab_config, "INI config file");
    ab->add_option("--data", ab_data, "Data directory")->required();
    ab->add_option("--out", ab_out, "Output directory")->required();
    ab->add_option("--seeds", ab_seeds, "Number of seeds");
    ab->add_option("--parallel", ab_parallel, "Concurrent runs");

    auto* sw = app.add_subcommand("sweep", "Hyperparameter sweep");
    std::string sw_param, sw_values, sw_config, sw_data, sw_out;
    std::size_t sw_seeds = 2, sw_parallel = 1;
    sw->add_option("--param", sw_param, "alpha|gamma|beta")->required();
    sw->add_option("--values", sw_values, "Comma-separated grid (defaults for alpha/gamma)");
    sw->add_option("--config", sw_config, "INI config file");
    sw->add_option("--data", sw_data, "Data directory")->required();
    sw->add_option("--out", sw_out, "Output directory")->required();
    sw->add_option("--seeds", sw_seeds, "Seeds per value");
    sw->add_option("--parallel", sw_parallel, "Concurrent runs");

    auto* ca = app.add_subcommand("case", "Export one window's graphs and sensor scores");
    std::string ca_ckpt, ca_data, ca_out;
    std::size_t ca_index = 0, ca_topk = 5;
    long ca_stride = 1;
    ca->add_option("--checkpoint", ca_ckpt, "Checkpoint file")->required();
    ca->add_option("--data", ca_data, "Data directory with test.csv")->required();
    ca->add_option("--index", ca_index, "Window index")->required();
    ca->add_option("--topk", ca_topk, "Sensors to export");
    ca->add_option("--out", ca_out, "Output directory")->required();
    ca->add_option("--stride", ca_stride, "Windowing stride");

    std::vector<const char*> argv;
    argv.push_back("cgsta");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), const_cast<char**>(argv.data()));
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (synth->parsed())
            return cmd_synth(synth_out, synth_k, synth_groups, synth_t_train, synth_t_test,
                             synth_rate, synth_seed);
        if (tr->parsed()) return cmd_train(tr_config, tr_data, tr_out, tr_variant);
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_out, ev_stride);
        if (sc->parsed()) return cmd_score(sc_ckpt, sc_data, sc_out, sc_stride);
        if (ab->parsed()) return cmd_ablate(ab_config, ab_data, ab_out, ab_seeds, ab_parallel);
        if (sw->parsed())
            return cmd_sweep(sw_param, sw_values, sw_config, sw_data, sw_out, sw_seeds,
                             sw_parallel);
        if (ca->parsed()) return cmd_case(ca_ckpt, ca_data, ca_index, ca_topk, ca_out, ca_stride);
    } catch (const train::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 2;
    } catch (const CLI::Error& e) {
        std::cerr << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args);
}

}  // namespace cgsta::cli
