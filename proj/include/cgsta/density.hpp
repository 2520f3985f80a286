#pragma once

#include <utility>
#include <vector>

#include "cgsta/tensor.hpp"

namespace cgsta::density {

// Causal dilated temporal convolution stack (kernel 3, dilations 1/2/4),
// shared across variables.
struct DensityTensors {
    Tensor tc_w[3][3];  // [layer][tap]: (C_in, H_t)
    Tensor tc_b[3];     // (H_t)
    Tensor fuse_w, fuse_b;  // (feat_width, H_f), (H_f)
    Tensor mu_w, mu_b;      // (H_f, 1), (1)
    Tensor lv_w, lv_b;      // (H_f, 1), (1)
};

// (N,K,L) -> (N,K,L,H_t); output at step t depends only on inputs <= t.
Tensor temporal_encode(const Tensor& windows, const DensityTensors& p);

// Conditional diagonal-Gaussian head. The density of x_t is parameterized by
// features at t-1 (zero features before the window start), so step 0 of each
// window is a cold prediction and excluded from the loss and from scoring.
// Returns mu and clamped log-variance, each (N,L,K).
std::pair<Tensor, Tensor> fuse_and_head(const Tensor& h_concat, const Tensor& t_feat,
                                        const DensityTensors& p, double logvar_clamp);

struct NllResult {
    Tensor l_det;     // scalar, mean over scored (i,t,k): t >= 1
    Tensor per_step;  // (N,L) mean over variables; column 0 is unscored
    Tensor per_elem;  // (N,L,K)
};
NllResult nll(const Tensor& x, const Tensor& mu, const Tensor& logvar);

// Per-time-step anomaly scores aligned to a series; coverage counts the
// windows that contributed a scored step. coverage == 0 marks unscored steps.
struct ScoreSeries {
    std::vector<double> scores;
    std::vector<int> coverage;
};

}  // namespace cgsta::density
