#include "cgsta/density.hpp"

#include <cmath>
#include <stdexcept>

namespace cgsta::density {

namespace {

constexpr double kLn2Pi = 1.8378770664093454836;

// Right-shift along the time axis by `s` steps, zero-filled on the left.
Tensor shift_time(const Tensor& x, std::size_t s) {
    const std::size_t n = x.shape[0], k = x.shape[1], l = x.shape[2], c = x.shape[3];
    if (s == 0) return x;
    if (s >= l) return zeros({n, k, l, c});
    Tensor pad = zeros({n, k, s, c});
    Tensor head = slice(x, 2, 0, l - s);
    return concat({pad, head}, 2);
}

// One causal conv layer: y[t] = sum_j x[t - j*dilation] W_j + b.
Tensor conv_layer(const Tensor& x, const Tensor w[3], const Tensor& b, std::size_t dilation) {
    Tensor acc = add(matmul(x, w[0]), b);
    acc = add(acc, matmul(shift_time(x, dilation), w[1]));
    acc = add(acc, matmul(shift_time(x, 2 * dilation), w[2]));
    return acc;
}

}  // namespace

Tensor temporal_encode(const Tensor& windows, const DensityTensors& p) {
    const std::size_t n = windows.shape[0], k = windows.shape[1], l = windows.shape[2];
    Tensor x = reshape(windows, {n, k, l, 1});
    Tensor h1 = relu(conv_layer(x, p.tc_w[0], p.tc_b[0], 1));
    Tensor h2 = relu(conv_layer(h1, p.tc_w[1], p.tc_b[1], 2));
    return conv_layer(h2, p.tc_w[2], p.tc_b[2], 4);
}

std::pair<Tensor, Tensor> fuse_and_head(const Tensor& h_concat, const Tensor& t_feat,
                                        const DensityTensors& p, double logvar_clamp) {
    if (h_concat.shape[0] != t_feat.shape[0] || h_concat.shape[1] != t_feat.shape[1] ||
        h_concat.shape[2] != t_feat.shape[2])
        throw std::invalid_argument("fuse_and_head: feature shapes disagree on N,K,L");
    const std::size_t n = h_concat.shape[0], k = h_concat.shape[1], l = h_concat.shape[2];

    Tensor feat = concat({h_concat, t_feat}, 3);
    // predictive conditioning: the density at t sees features at t-1
    Tensor shifted = shift_time(feat, 1);
    Tensor hidden = relu(add(matmul(shifted, p.fuse_w), p.fuse_b));  // (N,K,L,H_f)
    Tensor mu = reshape(add(matmul(hidden, p.mu_w), p.mu_b), {n, k, l});
    Tensor lv = clamp(reshape(add(matmul(hidden, p.lv_w), p.lv_b), {n, k, l}), -logvar_clamp,
                      logvar_clamp);
    return {transpose(mu, {0, 2, 1}), transpose(lv, {0, 2, 1})};
}

NllResult nll(const Tensor& x, const Tensor& mu, const Tensor& logvar) {
    if (x.shape != mu.shape || x.shape != logvar.shape)
        throw std::invalid_argument("nll: shapes must match");
    const std::size_t l = x.shape[1];
    Tensor d = sub(x, mu);
    Tensor per_elem =
        smul(sadd(add(logvar, mul(mul(d, d), exp(neg(logvar)))), kLn2Pi), 0.5);  // (N,L,K)
    NllResult out;
    out.per_elem = per_elem;
    out.per_step = mean(per_elem, 2);  // (N,L); column 0 is a cold prediction
    if (l < 2) throw std::invalid_argument("nll: window too short to score (L < 2)");
    out.l_det = mean(slice(per_elem, 1, 1, l - 1));
    return out;
}

}  // namespace cgsta::density
