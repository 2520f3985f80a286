#pragma once

#include <array>
#include <vector>

#include "cgsta/tensor.hpp"

namespace cgsta::saa {

inline constexpr int kScales = 3;  // local, regional, global

// Global per-scale EMA of batch-mean dynamic adjacencies. Single-writer
// (the trainer, after each optimizer step); treated as a constant inside
// every gradient computation.
struct StableGraphBank {
    std::size_t k = 0;
    std::array<std::vector<double>, kScales> a_stable;  // each K*K
    bool initialized = false;

    // A_stable <- gamma * A_stable + (1-gamma) * A_dyn; the first call copies
    // A_dyn directly.
    void ema_update(const std::array<std::vector<double>, kScales>& batch_mean_dyn, double gamma);
    void require_initialized() const;
    Tensor stable(int scale) const;  // (K,K) constant
};

// Negated cosine agreement between dynamic and stable GCN embeddings, summed
// over scales, averaged over the batch. Stable-side tensors must already be
// detached by the caller.
Tensor consistency_loss(const std::vector<Tensor>& h_dyn, const std::vector<Tensor>& h_stable);

// tanh(vec(A) W + b); one shared projector per scale across the dynamic,
// stable, and augmented branches.
Tensor graph_project(const Tensor& a_rows_flat, const Tensor& w, const Tensor& b);

// InfoNCE on graph codes: pulls each dynamic code toward the (shared) stable
// code against M pseudo-anomalous codes.
Tensor graph_contrast_loss(const Tensor& g_dyn, const Tensor& g_stable, const Tensor& g_dyn_aug,
                           double tau);

Tensor saa_total(const Tensor& l_consist, const Tensor& l_contrast);

}  // namespace cgsta::saa
