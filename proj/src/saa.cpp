#include "cgsta/saa.hpp"

#include <cmath>
#include <stdexcept>

namespace cgsta::saa {

void StableGraphBank::ema_update(const std::array<std::vector<double>, kScales>& batch_mean_dyn,
                                 double gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw std::invalid_argument("ema_update: gamma must lie in [0,1)");
    const std::size_t kk = k * k;
    for (const auto& m : batch_mean_dyn)
        if (m.size() != kk) throw std::invalid_argument("ema_update: adjacency shape mismatch");
    if (!initialized) {
        a_stable = batch_mean_dyn;
        initialized = true;
        return;
    }
    for (int s = 0; s < kScales; ++s)
        for (std::size_t i = 0; i < kk; ++i)
            a_stable[static_cast<std::size_t>(s)][i] =
                gamma * a_stable[static_cast<std::size_t>(s)][i] +
                (1.0 - gamma) * batch_mean_dyn[static_cast<std::size_t>(s)][i];
}

void StableGraphBank::require_initialized() const {
    if (!initialized)
        throw std::logic_error("stable bank empty; run one step first");
}

Tensor StableGraphBank::stable(int scale) const {
    require_initialized();
    return constant({k, k}, a_stable[static_cast<std::size_t>(scale)]);
}

Tensor consistency_loss(const std::vector<Tensor>& h_dyn, const std::vector<Tensor>& h_stable) {
    if (h_dyn.empty() || h_dyn.size() != h_stable.size())
        throw std::invalid_argument("consistency_loss: scale lists must match");
    Tensor acc;
    bool first = true;
    for (std::size_t s = 0; s < h_dyn.size(); ++s) {
        const Tensor& d = h_dyn[s];
        const std::size_t n = d.shape[0];
        Tensor fd = reshape(d, {n, d.numel() / n});
        Tensor fs = reshape(h_stable[s], {n, d.numel() / n});
        Tensor cos_rows = cosine_sim(fd, fs);  // (N,)
        Tensor term = mean(cos_rows);
        acc = first ? term : add(acc, term);
        first = false;
    }
    return neg(acc);
}

Tensor graph_project(const Tensor& a_rows_flat, const Tensor& w, const Tensor& b) {
    return tanh(add(matmul(a_rows_flat, w), b));
}

Tensor graph_contrast_loss(const Tensor& g_dyn, const Tensor& g_stable, const Tensor& g_dyn_aug,
                           double tau) {
    if (tau <= 0.0) throw std::invalid_argument("graph_contrast_loss: tau must be > 0");
    if (g_dyn_aug.shape[0] == 0 || g_dyn.shape[0] == 0)
        throw std::invalid_argument("graph_contrast_loss: needs at least one sample per branch");
    Tensor dn = l2_normalize(g_dyn, 1);
    Tensor sn = l2_normalize(g_stable, 1);
    Tensor an = l2_normalize(g_dyn_aug, 1);
    Tensor s_pos = matmul(dn, transpose(sn));  // (N,1)
    Tensor s_neg = matmul(an, transpose(sn));  // (M,1)
    Tensor e_pos = exp(smul(s_pos, 1.0 / tau));
    Tensor neg_sum = sum(exp(smul(s_neg, 1.0 / tau)));  // scalar
    Tensor den = add(e_pos, neg_sum);
    return mean(sub(log(den), log(e_pos)));
}

Tensor saa_total(const Tensor& l_consist, const Tensor& l_contrast) {
    return add(l_consist, l_contrast);
}

}  // namespace cgsta::saa
