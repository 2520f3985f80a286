#include "cgsta/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cgsta/cds.hpp"
#include "cgsta/rng.hpp"

namespace cgsta::model {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

void ParamStore::add(std::string name, Shape shape, std::vector<double> value) {
    if (index_.count(name)) fail("ParamStore: duplicate parameter " + name);
    if (shape_numel(shape) != value.size()) fail("ParamStore: shape/value mismatch for " + name);
    index_[name] = entries_.size();
    entries_.push_back({std::move(name), std::move(shape), std::move(value)});
}

ParamStore::Entry& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) fail("ParamStore: unknown parameter " + name);
    return entries_[it->second];
}

const ParamStore::Entry& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail("ParamStore: unknown parameter " + name);
    return entries_[it->second];
}

std::size_t ParamStore::total_numel() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

dlgc::DlgcConfig dlgc_config(const config::Config& cfg, std::size_t k) {
    dlgc::DlgcConfig dc;
    dc.k = k;
    dc.d_e = cfg.d_e;
    dc.d_u = cfg.d_u;
    dc.d_a = cfg.d_a;
    dc.f_in = cfg.f_in;
    dc.h = cfg.h;
    dc.r = cfg.r;
    dc.g = cfg.g;
    dc.tau_assign = cfg.tau_assign;
    dc.lambda_soft = cfg.lambda_soft;
    return dc;
}

ParamStore init_params(const config::Config& cfg, std::size_t k) {
    cfg.validate();
    const bool single = cfg.variant == config::Variant::no_dlgc;
    const bool has_saa = cfg.variant == config::Variant::full ||
                         cfg.variant == config::Variant::no_cds;
    if (!single) {
        if (cfg.r >= k) fail("init_params: r must be < K (r=" + std::to_string(cfg.r) +
                             ", K=" + std::to_string(k) + ")");
    }

    ParamStore store;
    // Each parameter draws from its own stream so that the shared parameters
    // of different variants initialize identically under one seed.
    auto normal = [&](const std::string& name, Shape shape, double sd) {
        Rng rng(cfg.seed ^ fnv1a64(name));
        std::vector<double> v(shape_numel(shape));
        for (auto& x : v) x = sd * rng.normal();
        store.add(name, std::move(shape), std::move(v));
    };
    auto zeros_p = [&](const std::string& name, Shape shape) {
        store.add(name, shape, std::vector<double>(shape_numel(shape), 0.0));
    };

    const std::size_t L = cfg.window;
    if (!single) {
        normal("dlgc.e", {k, cfg.d_e}, 1.0);
        normal("dlgc.c_regional", {cfg.r, cfg.d_e}, 1.0);
        normal("dlgc.c_global", {cfg.g, cfg.d_e}, 1.0);
    }
    normal("dlgc.w_q", {cfg.d_u, cfg.d_a}, 1.0 / std::sqrt(static_cast<double>(cfg.d_u)));
    normal("dlgc.w_k", {cfg.d_u, cfg.d_a}, 1.0 / std::sqrt(static_cast<double>(cfg.d_u)));
    normal("dlgc.u_w", {L, cfg.d_u}, 1.0 / std::sqrt(static_cast<double>(L)));
    zeros_p("dlgc.u_b", {cfg.d_u});
    normal("dlgc.lift_w", {1, cfg.f_in}, 1.0);
    zeros_p("dlgc.lift_b", {cfg.f_in});

    const char* scales[3] = {"local", "regional", "global"};
    const int n_scales = single ? 1 : 3;
    for (int s = 0; s < n_scales; ++s) {
        normal("gcn." + std::string(scales[s]) + ".w1", {cfg.f_in, cfg.h},
               1.0 / std::sqrt(static_cast<double>(cfg.f_in)));
        normal("gcn." + std::string(scales[s]) + ".w2", {cfg.h, cfg.h},
               1.0 / std::sqrt(static_cast<double>(cfg.h)));
    }
    if (has_saa) {
        for (int s = 0; s < 3; ++s) {
            normal("saa." + std::string(scales[s]) + ".w", {k * k, cfg.d_g},
                   1.0 / static_cast<double>(k));
            zeros_p("saa." + std::string(scales[s]) + ".b", {cfg.d_g});
        }
    }

    // temporal conv stack: kernel 3, dilations 1/2/4
    for (int layer = 0; layer < 3; ++layer) {
        const std::size_t c_in = layer == 0 ? 1 : cfg.h_t;
        const double sd = 1.0 / std::sqrt(3.0 * static_cast<double>(c_in));
        for (int tap = 0; tap < 3; ++tap)
            normal("density.tc" + std::to_string(layer) + ".w" + std::to_string(tap),
                   {c_in, cfg.h_t}, sd);
        zeros_p("density.tc" + std::to_string(layer) + ".b", {cfg.h_t});
    }
    const std::size_t feat_width = (single ? cfg.h : 3 * cfg.h) + cfg.h_t;
    normal("density.fuse.w", {feat_width, cfg.h_f},
           1.0 / std::sqrt(static_cast<double>(feat_width)));
    zeros_p("density.fuse.b", {cfg.h_f});
    normal("density.mu.w", {cfg.h_f, 1}, 0.01);
    zeros_p("density.mu.b", {1});
    normal("density.logvar.w", {cfg.h_f, 1}, 0.01);
    zeros_p("density.logvar.b", {1});
    return store;
}

BoundModel bind(Tape* tape, const ParamStore& store, const config::Config& cfg,
                bool requires_grad) {
    const bool single = cfg.variant == config::Variant::no_dlgc;
    const bool has_saa = store.has("saa.local.w");

    BoundModel b;
    std::unordered_map<std::string, Tensor> bound;
    for (const auto& e : store.entries()) {
        Tensor t;
        if (tape && requires_grad) {
            t = tape->leaf(e.shape, e.value, true);
        } else {
            t = constant(e.shape, e.value);
        }
        b.leaves.push_back(t);
        bound[e.name] = t;
    }
    auto get = [&](const std::string& name) { return bound.at(name); };

    if (!single) {
        b.dlgc.e = get("dlgc.e");
        b.dlgc.c_regional = get("dlgc.c_regional");
        b.dlgc.c_global = get("dlgc.c_global");
    }
    b.dlgc.w_q = get("dlgc.w_q");
    b.dlgc.w_k = get("dlgc.w_k");
    b.dlgc.u_w = get("dlgc.u_w");
    b.dlgc.u_b = get("dlgc.u_b");
    b.dlgc.lift_w = get("dlgc.lift_w");
    b.dlgc.lift_b = get("dlgc.lift_b");
    const char* scales[3] = {"local", "regional", "global"};
    const int n_scales = single ? 1 : 3;
    for (int s = 0; s < n_scales; ++s) {
        b.dlgc.gcn_w1[s] = get("gcn." + std::string(scales[s]) + ".w1");
        b.dlgc.gcn_w2[s] = get("gcn." + std::string(scales[s]) + ".w2");
    }
    if (has_saa)
        for (int s = 0; s < 3; ++s) {
            b.saa_w[s] = get("saa." + std::string(scales[s]) + ".w");
            b.saa_b[s] = get("saa." + std::string(scales[s]) + ".b");
        }
    for (int layer = 0; layer < 3; ++layer) {
        for (int tap = 0; tap < 3; ++tap)
            b.density.tc_w[layer][tap] =
                get("density.tc" + std::to_string(layer) + ".w" + std::to_string(tap));
        b.density.tc_b[layer] = get("density.tc" + std::to_string(layer) + ".b");
    }
    b.density.fuse_w = get("density.fuse.w");
    b.density.fuse_b = get("density.fuse.b");
    b.density.mu_w = get("density.mu.w");
    b.density.mu_b = get("density.mu.b");
    b.density.lv_w = get("density.logvar.w");
    b.density.lv_b = get("density.logvar.b");
    return b;
}

density::NllResult forward_nll(const BoundModel& b, const config::Config& cfg,
                               const Tensor& windows) {
    const bool single = cfg.variant == config::Variant::no_dlgc;
    auto enc = dlgc::encode_scales(windows, b.dlgc, dlgc_config(cfg, windows.shape[1]), single);
    Tensor h_concat = single
                          ? enc.h.local
                          : cds::fuse(enc.h.local, enc.h.regional, enc.h.global_scale).h_concat;
    Tensor t_feat = density::temporal_encode(windows, b.density);
    auto [mu, lv] = density::fuse_and_head(h_concat, t_feat, b.density, cfg.logvar_clamp);
    Tensor targets = transpose(windows, {0, 2, 1});
    return density::nll(targets, mu, lv);
}

density::ScoreSeries score_series(const Model& m, const dataio::TimeSeries& series,
                                  std::size_t stride) {
    const auto norm = dataio::apply_normalizer(m.normalizer, series);
    const auto wins = dataio::make_windows(norm, m.cfg.window, stride);
    const std::size_t L = m.cfg.window, K = wins.k;

    density::ScoreSeries out;
    out.scores.assign(series.t, 0.0);
    out.coverage.assign(series.t, 0);

    BoundModel bound = bind(nullptr, m.params, m.cfg, false);
    const std::size_t chunk = 64;
    for (std::size_t lo = 0; lo < wins.n; lo += chunk) {
        const std::size_t hi = std::min(wins.n, lo + chunk);
        const std::size_t nb = hi - lo;
        std::vector<double> buf(wins.windows.begin() + static_cast<long>(lo * K * L),
                                wins.windows.begin() + static_cast<long>(hi * K * L));
        Tensor pos = constant({nb, K, L}, std::move(buf));
        auto res = forward_nll(bound, m.cfg, pos);
        const double* ps = res.per_step.ptr();  // (nb, L)
        for (std::size_t i = 0; i < nb; ++i) {
            const std::size_t start = wins.start_indices[lo + i];
            for (std::size_t t = 1; t < L; ++t) {
                out.scores[start + t] += ps[i * L + t];
                out.coverage[start + t] += 1;
            }
        }
    }
    for (std::size_t t = 0; t < series.t; ++t)
        if (out.coverage[t] > 0) out.scores[t] /= static_cast<double>(out.coverage[t]);
    return out;
}

CaseSnapshot case_snapshot(const Model& m, const dataio::TimeSeries& series,
                           std::size_t window_index, std::size_t stride) {
    const auto norm = dataio::apply_normalizer(m.normalizer, series);
    const auto wins = dataio::make_windows(norm, m.cfg.window, stride);
    if (window_index >= wins.n)
        fail("case_snapshot: window index " + std::to_string(window_index) + " out of range (" +
             std::to_string(wins.n) + " windows)");
    const std::size_t K = wins.k, L = wins.l;
    const bool single = m.cfg.variant == config::Variant::no_dlgc;

    std::vector<double> buf(wins.window(window_index), wins.window(window_index) + K * L);
    Tensor pos = constant({1, K, L}, std::move(buf));
    BoundModel bound = bind(nullptr, m.params, m.cfg, false);
    auto enc = dlgc::encode_scales(pos, bound.dlgc, dlgc_config(m.cfg, K), single);

    CaseSnapshot snap;
    snap.k = K;
    snap.l = L;
    snap.a_local_dyn = *enc.graphs.a_local.data;
    snap.a_regional = single ? std::vector<double>(K * K, 0.0) : *enc.graphs.a_regional.data;
    snap.a_global = single ? std::vector<double>(K * K, 0.0) : *enc.graphs.a_global.data;
    snap.a_local_stable = m.bank.initialized ? m.bank.a_stable[0] : std::vector<double>(K * K, 0.0);
    snap.delta_local.resize(K * K);
    for (std::size_t i = 0; i < K * K; ++i)
        snap.delta_local[i] = std::abs(snap.a_local_dyn[i] - snap.a_local_stable[i]);

    auto res = forward_nll(bound, m.cfg, pos);
    snap.sensor_scores.assign(K * L, 0.0);
    const double* pe = res.per_elem.ptr();  // (1,L,K)
    for (std::size_t t = 1; t < L; ++t)
        for (std::size_t v = 0; v < K; ++v) snap.sensor_scores[v * L + t] = pe[t * K + v];
    return snap;
}

// ---- checkpoint ----------------------------------------------------------------

void save_checkpoint(const std::string& path, const Model& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("save_checkpoint: cannot open " + path);

    std::vector<std::pair<std::string, const std::vector<double>*>> tensors;
    std::vector<Shape> shapes;
    for (const auto& e : m.params.entries()) {
        tensors.emplace_back(e.name, &e.value);
        shapes.push_back(e.shape);
    }
    const std::size_t K = m.normalizer.mean.size();
    tensors.emplace_back("norm.mean", &m.normalizer.mean);
    shapes.push_back({K});
    tensors.emplace_back("norm.std", &m.normalizer.std);
    shapes.push_back({K});
    const char* bank_names[3] = {"bank.local", "bank.regional", "bank.global"};
    std::array<std::vector<double>, 3> bank_zero;
    for (int s = 0; s < 3; ++s) {
        if (m.bank.initialized) {
            tensors.emplace_back(bank_names[s], &m.bank.a_stable[static_cast<std::size_t>(s)]);
            shapes.push_back({m.bank.k, m.bank.k});
        } else {
            bank_zero[static_cast<std::size_t>(s)].assign(K * K, 0.0);
            tensors.emplace_back(bank_names[s], &bank_zero[static_cast<std::size_t>(s)]);
            shapes.push_back({K, K});
        }
    }

    out << "CGSTA1\n";
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        out << tensors[i].first << ' ' << shapes[i].size();
        for (std::size_t d : shapes[i]) out << ' ' << d;
        out << '\n';
    }
    out << "config " << config::flatten(m.cfg) << " bank.initialized="
        << (m.bank.initialized ? 1 : 0) << '\n';
    out << '\n';
    for (const auto& [name, vec] : tensors)
        out.write(reinterpret_cast<const char*>(vec->data()),
                  static_cast<std::streamsize>(vec->size() * sizeof(double)));
    if (!out) fail("save_checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("load_checkpoint: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "CGSTA1")
        fail("load_checkpoint: bad magic in " + path);

    struct Decl {
        std::string name;
        Shape shape;
    };
    std::vector<Decl> decls;
    std::string config_line;
    while (std::getline(in, line)) {
        if (line.rfind("config ", 0) == 0) {
            config_line = line.substr(7);
            break;
        }
        std::istringstream ls(line);
        Decl d;
        std::size_t ndim = 0;
        if (!(ls >> d.name >> ndim)) fail("load_checkpoint: malformed manifest line '" + line + "'");
        for (std::size_t i = 0; i < ndim; ++i) {
            std::size_t dim = 0;
            if (!(ls >> dim) || dim == 0) fail("load_checkpoint: malformed dims in '" + line + "'");
            d.shape.push_back(dim);
        }
        decls.push_back(std::move(d));
    }
    if (config_line.empty()) fail("load_checkpoint: missing config line");
    if (!std::getline(in, line) || !line.empty())
        fail("load_checkpoint: missing blank separator before payload");

    bool bank_init = false;
    {
        std::istringstream cs(config_line);
        std::string tok, rest;
        while (cs >> tok) {
            if (tok.rfind("bank.initialized=", 0) == 0) {
                bank_init = tok.substr(17) == "1";
            } else {
                if (!rest.empty()) rest += ' ';
                rest += tok;
            }
        }
        config_line = rest;
    }

    Model m;
    m.cfg = config::from_flat(config_line);
    std::size_t expected = 0;
    for (const auto& d : decls) expected += shape_numel(d.shape);

    std::vector<double> payload(expected);
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(expected * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != expected * sizeof(double))
        fail("load_checkpoint: payload length mismatch (truncated file?)");
    char extra;
    if (in.read(&extra, 1))
        fail("load_checkpoint: payload length mismatch (trailing bytes)");

    std::size_t off = 0;
    for (const auto& d : decls) {
        const std::size_t n = shape_numel(d.shape);
        std::vector<double> vals(payload.begin() + static_cast<long>(off),
                                 payload.begin() + static_cast<long>(off + n));
        off += n;
        if (d.name == "norm.mean") {
            m.normalizer.mean = std::move(vals);
        } else if (d.name == "norm.std") {
            m.normalizer.std = std::move(vals);
        } else if (d.name.rfind("bank.", 0) == 0) {
            const int s = d.name == "bank.local" ? 0 : (d.name == "bank.regional" ? 1 : 2);
            m.bank.k = d.shape[0];
            m.bank.a_stable[static_cast<std::size_t>(s)] = std::move(vals);
        } else {
            m.params.add(d.name, d.shape, std::move(vals));
        }
    }
    m.bank.initialized = bank_init;
    return m;
}

}  // namespace cgsta::model
