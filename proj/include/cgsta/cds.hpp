#pragma once

#include "cgsta/tensor.hpp"

namespace cgsta::cds {

// Mean over variable and time axes: (N,K,L,H) -> (N,H).
Tensor pool_scale(const Tensor& h);

// Symmetric multi-positive InfoNCE between the normal and pseudo-anomalous
// view embeddings. The numerator sums similarities to the OTHER positives
// (k != i); the denominator adds all N cross-view terms. Cosine similarity,
// shared temperature.
Tensor intra_scale_loss(const Tensor& z_pos, const Tensor& z_neg, double tau);

// Negative mean pairwise cosine agreement across the three scales, averaged
// over the normal and pseudo-anomalous views.
Tensor inter_scale_loss(const Tensor& z_local_pos, const Tensor& z_regional_pos,
                        const Tensor& z_global_pos, const Tensor& z_local_neg,
                        const Tensor& z_regional_neg, const Tensor& z_global_neg);

struct FuseResult {
    Tensor h_concat;  // (N,K,L,3H)
    Tensor z_fusion;  // (N,3H)
};
FuseResult fuse(const Tensor& h_local, const Tensor& h_regional, const Tensor& h_global);

Tensor fusion_loss(const Tensor& z_fusion_pos, const Tensor& z_fusion_neg, double tau);

struct CdsParts {
    Tensor intra_local, intra_regional, intra_global, inter, fusion;
};
Tensor cds_total(const CdsParts& parts);

}  // namespace cgsta::cds
