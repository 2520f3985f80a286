#include "cgsta/dlgc.hpp"

#include <cmath>
#include <stdexcept>

namespace cgsta::dlgc {

namespace {

// argmax over each row of a (rows x cols) value matrix; ties break low.
std::vector<int> row_argmax(const double* vals, std::size_t rows, std::size_t cols) {
    std::vector<int> out(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        int best = 0;
        double bv = vals[i * cols];
        for (std::size_t j = 1; j < cols; ++j)
            if (vals[i * cols + j] > bv) {
                bv = vals[i * cols + j];
                best = static_cast<int>(j);
            }
        out[i] = best;
    }
    return out;
}

}  // namespace

Tensor local_adjacency(const Tensor& windows, const DlgcTensors& p, const DlgcConfig& cfg) {
    // windows: (N,K,L); descriptors u_i = window row i * U + b
    Tensor u = add(matmul(windows, p.u_w), p.u_b);       // (N,K,d_u)
    Tensor q = matmul(u, p.w_q);                         // (N,K,d_a)
    Tensor kk = matmul(u, p.w_k);                        // (N,K,d_a)
    Tensor logits = smul(matmul(q, transpose(kk)), 1.0 / std::sqrt(static_cast<double>(cfg.d_a)));
    return softmax(logits, -1);
}

Assignments assign_regions(const Tensor& e, const Tensor& c_regional, const Tensor& c_global,
                           double tau_assign) {
    if (tau_assign <= 0.0) throw std::invalid_argument("assign_regions: tau_assign must be > 0");
    const std::size_t k = e.shape[0];
    const std::size_t r = c_regional.shape[0];

    Assignments out;
    Tensor logits = smul(matmul(e, transpose(c_regional)), 1.0 / tau_assign);  // (K,R)
    out.s_soft = softmax(logits, 1);
    out.phi = row_argmax(logits.ptr(), k, r);

    // Region mean embeddings from the hard assignment; empty regions get a
    // zero row and no psi entry.
    std::vector<double> m(r * k, 0.0);
    std::vector<std::size_t> count(r, 0);
    for (std::size_t i = 0; i < k; ++i) ++count[static_cast<std::size_t>(out.phi[i])];
    for (std::size_t i = 0; i < k; ++i) {
        const auto reg = static_cast<std::size_t>(out.phi[i]);
        m[reg * k + i] = 1.0 / static_cast<double>(count[reg]);
    }
    Tensor m_phi = constant({r, k}, std::move(m));
    Tensor e_regional = matmul(m_phi, e);  // (R,d_e), differentiable in E

    Tensor g_logits = smul(matmul(e_regional, transpose(c_global)), 1.0 / tau_assign);  // (R,G)
    out.g_soft = softmax(g_logits, 1);
    auto hard = row_argmax(g_logits.ptr(), r, c_global.shape[0]);
    out.psi.assign(r, -1);
    for (std::size_t reg = 0; reg < r; ++reg)
        if (count[reg] > 0) out.psi[reg] = hard[reg];
    return out;
}

Tensor regional_adjacency(const std::vector<int>& phi) {
    const std::size_t k = phi.size();
    std::vector<double> a(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            if (phi[i] == phi[j]) a[i * k + j] = 1.0;
    return constant({k, k}, std::move(a));
}

Tensor global_adjacency(const std::vector<int>& phi, const std::vector<int>& psi) {
    const std::size_t k = phi.size();
    std::vector<double> a(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            if (psi[static_cast<std::size_t>(phi[i])] == psi[static_cast<std::size_t>(phi[j])])
                a[i * k + j] = 1.0;
    return constant({k, k}, std::move(a));
}

Tensor rownorm_with_self_loop(const Tensor& a) {
    const std::size_t k = a.shape[0];
    std::vector<double> eye(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) eye[i * k + i] = 1.0;
    Tensor ai = add(a, constant({k, k}, std::move(eye)));
    Tensor rowsum = sum(ai, 1);  // (K,)
    // divide row i by rowsum[i]: broadcast along the trailing axis of A^T
    return transpose(div(transpose(ai), rowsum));
}

Tensor gcn_encode(const Tensor& x_feat, const Tensor& a_batched, const Tensor& w1,
                  const Tensor& w2) {
    const std::size_t n = x_feat.shape[0], k = x_feat.shape[1], l = x_feat.shape[2],
                      f = x_feat.shape[3];
    const std::size_t h = w1.shape[1];
    Tensor x0 = reshape(x_feat, {n, k, l * f});
    Tensor p1 = matmul(a_batched, x0);
    Tensor h1 = relu(matmul(reshape(p1, {n, k, l, f}), w1));
    Tensor p2 = matmul(a_batched, reshape(h1, {n, k, l * h}));
    return matmul(reshape(p2, {n, k, l, h}), w2);
}

EncodeResult encode_scales(const Tensor& windows, const DlgcTensors& p, const DlgcConfig& cfg,
                           bool single_scale) {
    const std::size_t n = windows.shape[0], k = windows.shape[1], l = windows.shape[2];
    EncodeResult out;

    out.x_feat = add(matmul(reshape(windows, {n, k, l, 1}), p.lift_w), p.lift_b);

    out.graphs.a_local = local_adjacency(windows, p, cfg);
    out.h.local = gcn_encode(out.x_feat, out.graphs.a_local, p.gcn_w1[0], p.gcn_w2[0]);
    if (single_scale) return out;

    out.graphs.assign = assign_regions(p.e, p.c_regional, p.c_global, cfg.tau_assign);
    const Assignments& as = out.graphs.assign;
    out.graphs.a_regional = regional_adjacency(as.phi);
    out.graphs.a_global = global_adjacency(as.phi, as.psi);

    // Hard structure dominates; the soft-membership mixture keeps E and the
    // centers trainable (zero mixing reproduces the hard adjacency exactly).
    if (cfg.lambda_soft == 0.0) {
        out.graphs.a_eff_regional = out.graphs.a_regional;
        out.graphs.a_eff_global = out.graphs.a_global;
    } else {
        Tensor ssT = matmul(as.s_soft, transpose(as.s_soft));
        out.graphs.a_eff_regional = add(smul(out.graphs.a_regional, 1.0 - cfg.lambda_soft),
                                        smul(ssT, cfg.lambda_soft));
        Tensor m_var = matmul(as.s_soft, as.g_soft);  // (K,G)
        Tensor mmT = matmul(m_var, transpose(m_var));
        out.graphs.a_eff_global =
            add(smul(out.graphs.a_global, 1.0 - cfg.lambda_soft), smul(mmT, cfg.lambda_soft));
    }

    Tensor a_reg_hat = expand_leading(rownorm_with_self_loop(out.graphs.a_eff_regional), n);
    Tensor a_glb_hat = expand_leading(rownorm_with_self_loop(out.graphs.a_eff_global), n);
    out.h.regional = gcn_encode(out.x_feat, a_reg_hat, p.gcn_w1[1], p.gcn_w2[1]);
    out.h.global_scale = gcn_encode(out.x_feat, a_glb_hat, p.gcn_w1[2], p.gcn_w2[2]);
    return out;
}

}  // namespace cgsta::dlgc
