#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cgsta/rng.hpp"

namespace cgsta::augment {

struct AugmentConfig {
    double point_magnitude = 3.0;       // in per-window std units
    double point_fraction = 0.02;       // fraction of (variable, step) cells
    double replace_len_fraction = 0.25; // fraction of L for the swapped segment
    double drift_magnitude = 1.5;       // in std units
    double w_point = 1.0 / 3, w_context = 1.0 / 3, w_drift = 1.0 / 3;

    void validate() const;
};

// All operate on a K x L window buffer in place-free style: input untouched,
// perturbed copy returned. rng is the caller's stream; identical state gives
// identical output.
std::vector<double> point_inject(const std::vector<double>& window, std::size_t k, std::size_t l,
                                 Rng& rng, const AugmentConfig& cfg);
std::vector<double> context_replace(const std::vector<double>& window, std::size_t k,
                                    std::size_t l, Rng& rng, const AugmentConfig& cfg);
std::vector<double> cluster_drift(const std::vector<double>& window, std::size_t k, std::size_t l,
                                  const std::vector<std::size_t>& groups, Rng& rng,
                                  const AugmentConfig& cfg);

struct PseudoAnomaly {
    std::vector<double> window;
    std::string strategy;  // point | context | drift
};

PseudoAnomaly make_pseudo_anomaly(const std::vector<double>& window, std::size_t k, std::size_t l,
                                  const std::vector<std::size_t>& groups, Rng& rng,
                                  const AugmentConfig& cfg);

}  // namespace cgsta::augment
