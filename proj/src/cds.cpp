#include "cgsta/cds.hpp"

#include <stdexcept>

namespace cgsta::cds {

namespace {

// Row sum of exp(S/tau) with the diagonal excluded.
Tensor offdiag_exp_rowsum(const Tensor& s, double tau, const Tensor& mask) {
    return sum(mul(exp(smul(s, 1.0 / tau)), mask), 1);
}

Tensor exp_rowsum(const Tensor& s, double tau) { return sum(exp(smul(s, 1.0 / tau)), 1); }

Tensor offdiag_mask(std::size_t n) {
    std::vector<double> m(n * n, 1.0);
    for (std::size_t i = 0; i < n; ++i) m[i * n + i] = 0.0;
    return constant({n, n}, std::move(m));
}

}  // namespace

Tensor pool_scale(const Tensor& h) {
    if (h.ndim() != 4) throw std::invalid_argument("pool_scale: expected (N,K,L,H)");
    return mean(mean(h, 1), 1);
}

Tensor intra_scale_loss(const Tensor& z_pos, const Tensor& z_neg, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("intra_scale_loss: tau must be > 0");
    if (z_pos.shape != z_neg.shape)
        throw std::invalid_argument("intra_scale_loss: view shapes must match");
    const std::size_t n = z_pos.shape[0];
    if (n < 2) throw std::invalid_argument("intra-scale loss needs batch >= 2");

    Tensor pn = l2_normalize(z_pos, 1);
    Tensor nn = l2_normalize(z_neg, 1);
    Tensor s_pp = matmul(pn, transpose(pn));
    Tensor s_nn = matmul(nn, transpose(nn));
    Tensor s_pn = matmul(pn, transpose(nn));
    Tensor s_np = transpose(s_pn);
    Tensor mask = offdiag_mask(n);

    Tensor num_p = offdiag_exp_rowsum(s_pp, tau, mask);
    Tensor den_p = add(num_p, exp_rowsum(s_pn, tau));
    Tensor l_pos = mean(sub(log(den_p), log(num_p)));

    Tensor num_n = offdiag_exp_rowsum(s_nn, tau, mask);
    Tensor den_n = add(num_n, exp_rowsum(s_np, tau));
    Tensor l_neg = mean(sub(log(den_n), log(num_n)));

    return smul(add(l_pos, l_neg), 0.5);
}

Tensor inter_scale_loss(const Tensor& z_local_pos, const Tensor& z_regional_pos,
                        const Tensor& z_global_pos, const Tensor& z_local_neg,
                        const Tensor& z_regional_neg, const Tensor& z_global_neg) {
    auto view_term = [](const Tensor& zl, const Tensor& zr, const Tensor& zg) {
        Tensor agree = add(add(cosine_sim(zl, zr), cosine_sim(zl, zg)), cosine_sim(zr, zg));
        return neg(smul(mean(agree), 1.0 / 3.0));
    };
    Tensor normal = view_term(z_local_pos, z_regional_pos, z_global_pos);
    Tensor anom = view_term(z_local_neg, z_regional_neg, z_global_neg);
    return smul(add(normal, anom), 0.5);
}

FuseResult fuse(const Tensor& h_local, const Tensor& h_regional, const Tensor& h_global) {
    if (h_local.shape != h_regional.shape || h_local.shape != h_global.shape)
        throw std::invalid_argument("fuse: per-scale shapes must match");
    FuseResult out;
    out.h_concat = concat({h_local, h_regional, h_global}, 3);
    out.z_fusion = pool_scale(out.h_concat);
    return out;
}

Tensor fusion_loss(const Tensor& z_fusion_pos, const Tensor& z_fusion_neg, double tau) {
    return intra_scale_loss(z_fusion_pos, z_fusion_neg, tau);
}

Tensor cds_total(const CdsParts& parts) {
    return add(add(add(add(parts.intra_local, parts.intra_regional), parts.intra_global),
                   parts.inter),
               parts.fusion);
}

}  // namespace cgsta::cds
