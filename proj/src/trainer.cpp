#include "cgsta/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "cgsta/augment.hpp"
#include "cgsta/cds.hpp"
#include "cgsta/rng.hpp"

namespace cgsta::train {

namespace {

constexpr std::uint64_t kTrainStreamSalt = 0x5DEECE66Dull;

bool variant_has_cds(config::Variant v) {
    return v == config::Variant::full || v == config::Variant::no_saa;
}
bool variant_has_saa(config::Variant v) {
    return v == config::Variant::full || v == config::Variant::no_cds;
}

// Hard region assignment from current parameter values (no tape).
std::vector<std::size_t> current_groups(const model::ParamStore& params,
                                        const config::Config& cfg, std::size_t k) {
    if (cfg.variant == config::Variant::no_dlgc || !params.has("dlgc.e")) {
        // contiguous equal split when no learned regions exist
        const std::size_t n_groups = std::min(cfg.g, k);
        std::vector<std::size_t> groups(k);
        const std::size_t per = (k + n_groups - 1) / n_groups;
        for (std::size_t v = 0; v < k; ++v) groups[v] = std::min(v / per, n_groups - 1);
        return groups;
    }
    const auto& e = params.at("dlgc.e");
    const auto& c = params.at("dlgc.c_regional");
    const std::size_t de = cfg.d_e, r = cfg.r;
    std::vector<std::size_t> groups(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t best = 0;
        double bv = -1e308;
        for (std::size_t reg = 0; reg < r; ++reg) {
            double dot = 0;
            for (std::size_t d = 0; d < de; ++d) dot += e.value[i * de + d] * c.value[reg * de + d];
            if (dot > bv) {
                bv = dot;
                best = reg;
            }
        }
        groups[i] = best;
    }
    return groups;
}

}  // namespace

void adam_step(model::ParamStore& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps,
               double clip_norm, std::size_t step_index) {
    auto& entries = params.entries();
    if (grads.size() != entries.size())
        throw std::invalid_argument("adam_step: gradient count mismatch");
    if (state.m.empty()) {
        state.m.resize(entries.size());
        state.v.resize(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            state.m[i].assign(entries[i].value.size(), 0.0);
            state.v[i].assign(entries[i].value.size(), 0.0);
        }
    }

    double norm2 = 0.0;
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].size() != entries[i].value.size())
            throw std::invalid_argument("adam_step: gradient shape mismatch for " +
                                        entries[i].name);
        for (double g : grads[i]) {
            if (!std::isfinite(g))
                throw NumericError(step_index, "adam_step: non-finite gradient for parameter " +
                                                   entries[i].name + " at step " +
                                                   std::to_string(step_index));
            norm2 += g * g;
        }
    }
    const double norm = std::sqrt(norm2);
    const double scale = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;

    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto& value = entries[i].value;
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < value.size(); ++j) {
            const double g = grads[i][j] * scale;
            m[j] = beta1 * m[j] + (1.0 - beta1) * g;
            v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            value[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

LossBreakdown total_loss(Tape& tape, const model::BoundModel& bound, const Tensor& pos_windows,
                         const Tensor& neg_windows, const saa::StableGraphBank& bank,
                         const config::Config& cfg, bool saa_active) {
    const bool single = cfg.variant == config::Variant::no_dlgc;
    const bool use_cds = variant_has_cds(cfg.variant);
    const bool use_saa = variant_has_saa(cfg.variant);
    const std::size_t n = pos_windows.shape[0], k = pos_windows.shape[1];
    const auto dcfg = model::dlgc_config(cfg, k);

    LossBreakdown out;
    auto enc_pos = dlgc::encode_scales(pos_windows, bound.dlgc, dcfg, single);

    Tensor h_concat, z_fusion_pos;
    if (single) {
        h_concat = enc_pos.h.local;
    } else {
        auto fused = cds::fuse(enc_pos.h.local, enc_pos.h.regional, enc_pos.h.global_scale);
        h_concat = fused.h_concat;
        z_fusion_pos = fused.z_fusion;
    }

    Tensor t_feat = density::temporal_encode(pos_windows, bound.density);
    auto [mu, lv] = density::fuse_and_head(h_concat, t_feat, bound.density, cfg.logvar_clamp);
    auto nll_res = density::nll(transpose(pos_windows, {0, 2, 1}), mu, lv);
    Tensor total = nll_res.l_det;
    out.values.l_det = nll_res.l_det.scalar();

    std::optional<dlgc::EncodeResult> enc_neg;
    if (use_cds && !single) {
        enc_neg = dlgc::encode_scales(neg_windows, bound.dlgc, dcfg, false);
        Tensor zp[3] = {cds::pool_scale(enc_pos.h.local), cds::pool_scale(enc_pos.h.regional),
                        cds::pool_scale(enc_pos.h.global_scale)};
        Tensor zn[3] = {cds::pool_scale(enc_neg->h.local), cds::pool_scale(enc_neg->h.regional),
                        cds::pool_scale(enc_neg->h.global_scale)};
        cds::CdsParts parts;
        parts.intra_local = cds::intra_scale_loss(zp[0], zn[0], cfg.tau);
        parts.intra_regional = cds::intra_scale_loss(zp[1], zn[1], cfg.tau);
        parts.intra_global = cds::intra_scale_loss(zp[2], zn[2], cfg.tau);
        parts.inter = cds::inter_scale_loss(zp[0], zp[1], zp[2], zn[0], zn[1], zn[2]);
        auto fused_neg = cds::fuse(enc_neg->h.local, enc_neg->h.regional, enc_neg->h.global_scale);
        parts.fusion = cds::fusion_loss(z_fusion_pos, fused_neg.z_fusion, cfg.tau);
        Tensor cds_sum = cds::cds_total(parts);

        out.values.intra_local = parts.intra_local.scalar();
        out.values.intra_regional = parts.intra_regional.scalar();
        out.values.intra_global = parts.intra_global.scalar();
        out.values.inter = parts.inter.scalar();
        out.values.fusion = parts.fusion.scalar();
        out.values.l_cds = cds_sum.scalar();
        total = add(total, smul(cds_sum, cfg.alpha));
    }

    if (use_saa && !single) {
        // Batch-mean dynamic adjacencies feed the post-step EMA.
        const double* al = enc_pos.graphs.a_local.ptr();
        std::vector<double> mean_local(k * k, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t e = 0; e < k * k; ++e) mean_local[e] += al[i * k * k + e];
        for (auto& x : mean_local) x /= static_cast<double>(n);
        out.batch_mean_dyn[0] = std::move(mean_local);
        out.batch_mean_dyn[1] = *enc_pos.graphs.a_regional.data;
        out.batch_mean_dyn[2] = *enc_pos.graphs.a_global.data;

        if (bank.initialized) {
            double f2 = 0.0;
            for (std::size_t e = 0; e < k * k; ++e) {
                const double d = out.batch_mean_dyn[0][e] - bank.a_stable[0][e];
                f2 += d * d;
            }
            out.values.fro_local = std::sqrt(f2);
        }

        if (saa_active) {
            bank.require_initialized();
            // Stable branch: same weights and features, constant adjacencies.
            Tensor a_st[3] = {expand_leading(bank.stable(0), n),
                              expand_leading(dlgc::rownorm_with_self_loop(bank.stable(1)), n),
                              expand_leading(dlgc::rownorm_with_self_loop(bank.stable(2)), n)};
            out.stable_nodes_lo = tape.size();
            Tensor h_st[3], g_st[3];
            for (int s = 0; s < 3; ++s)
                h_st[s] = dlgc::gcn_encode(enc_pos.x_feat, a_st[s], bound.dlgc.gcn_w1[s],
                                           bound.dlgc.gcn_w2[s]);
            for (int s = 0; s < 3; ++s)
                g_st[s] = saa::graph_project(reshape(bank.stable(s), {1, k * k}), bound.saa_w[s],
                                             bound.saa_b[s]);
            out.stable_nodes_hi = tape.size();

            Tensor consist = saa::consistency_loss(
                {enc_pos.h.local, enc_pos.h.regional, enc_pos.h.global_scale},
                {detach(h_st[0]), detach(h_st[1]), detach(h_st[2])});

            // Dynamic and pseudo-anomalous graph codes per scale.
            Tensor aug_a_local = enc_neg ? enc_neg->graphs.a_local
                                         : dlgc::local_adjacency(neg_windows, bound.dlgc, dcfg);
            Tensor g_dyn[3], g_aug[3];
            g_dyn[0] = saa::graph_project(reshape(enc_pos.graphs.a_local, {n, k * k}),
                                          bound.saa_w[0], bound.saa_b[0]);
            g_aug[0] = saa::graph_project(reshape(aug_a_local, {n, k * k}), bound.saa_w[0],
                                          bound.saa_b[0]);
            for (int s = 1; s < 3; ++s) {
                const Tensor& a =
                    s == 1 ? enc_pos.graphs.a_regional : enc_pos.graphs.a_global;
                Tensor vec = expand_leading(reshape(a, {k * k}), n);  // (N, K*K), constant
                g_dyn[s] = saa::graph_project(vec, bound.saa_w[s], bound.saa_b[s]);
                // the binary adjacencies do not depend on the window, so the
                // pseudo-anomalous branch carries the same code
                g_aug[s] = g_dyn[s];
            }
            Tensor contrast = saa::graph_contrast_loss(g_dyn[0], detach(g_st[0]), g_aug[0], cfg.tau);
            for (int s = 1; s < 3; ++s)
                contrast = add(contrast, saa::graph_contrast_loss(g_dyn[s], detach(g_st[s]),
                                                                  g_aug[s], cfg.tau));
            Tensor saa_sum = saa::saa_total(consist, contrast);

            out.values.consist = consist.scalar();
            out.values.contrast = contrast.scalar();
            out.values.l_saa = saa_sum.scalar();
            total = add(total, smul(saa_sum, cfg.beta));
        }
    }

    out.total = total;
    out.values.l_total = total.scalar();
    return out;
}

double detection_loss_eval(const model::Model& m, const dataio::WindowBatch& windows) {
    model::BoundModel bound = model::bind(nullptr, m.params, m.cfg, false);
    const std::size_t chunk = 64;
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t lo = 0; lo < windows.n; lo += chunk) {
        const std::size_t hi = std::min(windows.n, lo + chunk);
        std::vector<double> buf(
            windows.windows.begin() + static_cast<long>(lo * windows.k * windows.l),
            windows.windows.begin() + static_cast<long>(hi * windows.k * windows.l));
        Tensor pos = constant({hi - lo, windows.k, windows.l}, std::move(buf));
        auto res = model::forward_nll(bound, m.cfg, pos);
        acc += res.l_det.scalar() * static_cast<double>(hi - lo);
        count += hi - lo;
    }
    return count ? acc / static_cast<double>(count) : 0.0;
}

TrainResult train(const config::Config& cfg, const dataio::TimeSeries& series) {
    cfg.validate();
    auto parts = dataio::split(series);
    auto normalizer = dataio::fit_normalizer(parts.train);
    auto train_norm = dataio::apply_normalizer(normalizer, parts.train);
    if (parts.train.t < cfg.window)
        throw std::runtime_error("train: training split shorter than one window");
    auto wins = dataio::make_windows(train_norm, cfg.window, cfg.stride);
    if (wins.n < cfg.batch)
        throw std::runtime_error("train: fewer windows (" + std::to_string(wins.n) +
                                 ") than one batch (" + std::to_string(cfg.batch) + ")");

    std::optional<dataio::WindowBatch> val_wins;
    if (parts.val.t >= cfg.window)
        val_wins = dataio::make_windows(dataio::apply_normalizer(normalizer, parts.val),
                                        cfg.window, cfg.stride);

    TrainResult result;
    result.model.cfg = cfg;
    result.model.params = model::init_params(cfg, series.k);
    result.model.normalizer = normalizer;
    result.model.bank.k = series.k;
    model::Model& m = result.model;

    const bool has_saa = variant_has_saa(cfg.variant) && cfg.variant != config::Variant::no_dlgc;
    const std::size_t K = series.k, L = cfg.window, B = cfg.batch;

    augment::AugmentConfig acfg;
    acfg.point_magnitude = cfg.aug_point_magnitude;
    acfg.point_fraction = cfg.aug_point_fraction;
    acfg.replace_len_fraction = cfg.aug_replace_len_fraction;
    acfg.drift_magnitude = cfg.aug_drift_magnitude;
    acfg.w_point = cfg.aug_w_point;
    acfg.w_context = cfg.aug_w_context;
    acfg.w_drift = cfg.aug_w_drift;
    acfg.validate();

    Rng rng(cfg.seed ^ kTrainStreamSalt);
    AdamState adam;
    std::vector<std::size_t> order(wins.n);
    for (std::size_t i = 0; i < wins.n; ++i) order[i] = i;

    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_snapshot;
    std::size_t since_best = 0;
    std::size_t step = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        // seeded Fisher-Yates shuffle
        for (std::size_t i = wins.n; i-- > 1;)
            std::swap(order[i], order[rng.integer(i + 1)]);

        for (std::size_t bstart = 0; bstart + B <= wins.n; bstart += B) {
            ++step;
            std::vector<double> pos_buf(B * K * L), neg_buf(B * K * L);
            const auto groups = current_groups(m.params, cfg, K);
            for (std::size_t i = 0; i < B; ++i) {
                const double* w = wins.window(order[bstart + i]);
                std::copy(w, w + K * L, pos_buf.begin() + static_cast<long>(i * K * L));
                std::vector<double> win(w, w + K * L);
                auto aug = augment::make_pseudo_anomaly(win, K, L, groups, rng, acfg);
                std::copy(aug.window.begin(), aug.window.end(),
                          neg_buf.begin() + static_cast<long>(i * K * L));
            }
            Tensor pos = constant({B, K, L}, std::move(pos_buf));
            Tensor neg = constant({B, K, L}, std::move(neg_buf));

            Tape tape;
            auto bound = model::bind(&tape, m.params, cfg, true);
            auto lb = total_loss(tape, bound, pos, neg, m.bank, cfg,
                                 has_saa && m.bank.initialized);
            if (!std::isfinite(lb.values.l_total))
                throw NumericError(step, "train: non-finite loss at step " + std::to_string(step));

            auto grads = tape.backward(lb.total);
            if (lb.stable_nodes_hi > lb.stable_nodes_lo) {
                for (std::size_t id = lb.stable_nodes_lo; id < lb.stable_nodes_hi; ++id)
                    if (!grads.zero_or_absent(static_cast<int>(id)))
                        throw std::logic_error(
                            "train: gradient reached a stable-branch node at step " +
                            std::to_string(step));
            }
            std::vector<std::vector<double>> gvecs;
            gvecs.reserve(bound.leaves.size());
            for (const Tensor& leaf : bound.leaves)
                gvecs.push_back(*tape.grad_of(grads, leaf).data);
            adam_step(m.params, gvecs, adam, cfg.lr, 0.9, 0.999, 1e-8, cfg.clip_norm, step);
            if (has_saa) m.bank.ema_update(lb.batch_mean_dyn, cfg.gamma);

            lb.values.step = step;
            lb.values.epoch = epoch;
            result.history.push_back(lb.values);
        }
        result.epochs_run = epoch;

        if (val_wins) {
            const double vl = detection_loss_eval(m, *val_wins);
            result.val_ldet.push_back(vl);
            if (vl < best_val) {
                best_val = vl;
                result.best_epoch = epoch;
                best_snapshot.clear();
                for (const auto& e : m.params.entries()) best_snapshot.push_back(e.value);
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                break;
            }
        }
    }

    if (!best_snapshot.empty()) {
        auto& entries = m.params.entries();
        for (std::size_t i = 0; i < entries.size(); ++i) entries[i].value = best_snapshot[i];
    }
    return result;
}

}  // namespace cgsta::train
