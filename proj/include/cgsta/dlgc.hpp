#pragma once

#include <vector>

#include "cgsta/tensor.hpp"

namespace cgsta::dlgc {

struct DlgcConfig {
    std::size_t k = 12;      // variables
    std::size_t d_e = 16;    // variable embedding width
    std::size_t d_u = 32;    // window descriptor width
    std::size_t d_a = 16;    // attention projection width
    std::size_t f_in = 8;    // lifted per-step feature width
    std::size_t h = 32;      // GCN output width
    std::size_t r = 8;       // regions
    std::size_t g = 3;       // global clusters
    double tau_assign = 0.5;
    double lambda_soft = 0.1;
};

// Parameter tensors for one forward pass (leaves bound by the caller).
struct DlgcTensors {
    Tensor e, c_regional, c_global;
    Tensor w_q, w_k;
    Tensor u_w, u_b;        // window descriptor projection L -> d_u
    Tensor lift_w, lift_b;  // per-step lift 1 -> f_in
    Tensor gcn_w1[3], gcn_w2[3];  // local, regional, global
};

struct Assignments {
    Tensor s_soft;          // (K,R) softmax over regions, gradient path
    Tensor g_soft;          // (R,G) softmax over global clusters
    std::vector<int> phi;   // K hard region ids
    std::vector<int> psi;   // R hard global ids, -1 for empty regions
};

struct LayeredGraphs {
    Tensor a_local;         // (N,K,K) row-stochastic, per window
    Tensor a_regional;      // (K,K) binary, shared across the batch
    Tensor a_global;        // (K,K) binary, shared across the batch
    Tensor a_eff_regional;  // (K,K) soft-mixed adjacency fed to the GCN
    Tensor a_eff_global;
    Assignments assign;
};

struct ScaleEmbeddings {
    Tensor local, regional, global_scale;  // each (N,K,L,H)
};

struct EncodeResult {
    LayeredGraphs graphs;
    ScaleEmbeddings h;
    Tensor x_feat;  // (N,K,L,F_in) lifted features, reused by the stable branch
};

// Scaled dot-product attention over learned per-variable window descriptors.
Tensor local_adjacency(const Tensor& windows, const DlgcTensors& p, const DlgcConfig& cfg);

Assignments assign_regions(const Tensor& e, const Tensor& c_regional, const Tensor& c_global,
                           double tau_assign);

Tensor regional_adjacency(const std::vector<int>& phi);
Tensor global_adjacency(const std::vector<int>& phi, const std::vector<int>& psi);

// Row-normalizes A with self-loop: D^-1 (A + I).
Tensor rownorm_with_self_loop(const Tensor& a);

// Two-layer graph convolution shared across time steps:
// H1 = relu(A X W1), out = A H1 W2.
Tensor gcn_encode(const Tensor& x_feat, const Tensor& a_batched, const Tensor& w1,
                  const Tensor& w2);

EncodeResult encode_scales(const Tensor& windows, const DlgcTensors& p, const DlgcConfig& cfg,
                           bool single_scale = false);

}  // namespace cgsta::dlgc
