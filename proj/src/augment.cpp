#include "cgsta/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cgsta/tensor.hpp"

namespace cgsta::augment {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

// Population std of one variable row, floored at kEps.
double row_std(const double* row, std::size_t l) {
    double m = 0.0;
    for (std::size_t t = 0; t < l; ++t) m += row[t];
    m /= static_cast<double>(l);
    double v = 0.0;
    for (std::size_t t = 0; t < l; ++t) {
        const double d = row[t] - m;
        v += d * d;
    }
    return std::max(std::sqrt(v / static_cast<double>(l)), kEps);
}

}  // namespace

void AugmentConfig::validate() const {
    auto frac = [](double x) { return x > 0.0 && x < 1.0; };
    if (!frac(point_fraction) || !frac(replace_len_fraction))
        fail("augment: fractions must lie in (0,1)");
    if (point_magnitude <= 0.0 || drift_magnitude <= 0.0)
        fail("augment: magnitudes must be positive");
    if (w_point < 0 || w_context < 0 || w_drift < 0 ||
        std::abs(w_point + w_context + w_drift - 1.0) > 1e-9)
        fail("augment: strategy weights must be non-negative and sum to 1");
}

std::vector<double> point_inject(const std::vector<double>& window, std::size_t k, std::size_t l,
                                 Rng& rng, const AugmentConfig& cfg) {
    std::vector<double> out = window;
    const std::size_t cells = k * l;
    std::size_t hits = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.point_fraction * static_cast<double>(cells))));
    hits = std::min(hits, cells);

    // partial Fisher-Yates for distinct cells
    std::vector<std::size_t> idx(cells);
    for (std::size_t i = 0; i < cells; ++i) idx[i] = i;
    for (std::size_t i = 0; i < hits; ++i) {
        const std::size_t j = i + rng.integer(cells - i);
        std::swap(idx[i], idx[j]);
    }
    for (std::size_t i = 0; i < hits; ++i) {
        const std::size_t cell = idx[i];
        const std::size_t var = cell / l;
        const double sd = row_std(window.data() + var * l, l);
        const double sign = rng.coin() ? 1.0 : -1.0;
        out[cell] += sign * cfg.point_magnitude * sd;
    }
    return out;
}

std::vector<double> context_replace(const std::vector<double>& window, std::size_t k,
                                    std::size_t l, Rng& rng, const AugmentConfig& cfg) {
    if (l < 4) fail("context_replace: window too short for segment geometry (L < 4)");
    std::size_t seg = static_cast<std::size_t>(
        std::llround(cfg.replace_len_fraction * static_cast<double>(l)));
    seg = std::clamp<std::size_t>(seg, 1, l / 2);

    const std::size_t var = rng.integer(k);
    // two non-overlapping offsets, exchanged (value multiset preserved)
    std::size_t a = 0, b = 0;
    do {
        a = rng.integer(l - seg + 1);
        b = rng.integer(l - seg + 1);
    } while (a + seg > b && b + seg > a);

    std::vector<double> out = window;
    double* row = out.data() + var * l;
    for (std::size_t t = 0; t < seg; ++t) std::swap(row[a + t], row[b + t]);
    return out;
}

std::vector<double> cluster_drift(const std::vector<double>& window, std::size_t k, std::size_t l,
                                  const std::vector<std::size_t>& groups, Rng& rng,
                                  const AugmentConfig& cfg) {
    if (groups.size() != k) fail("cluster_drift: group assignment must cover all variables");
    std::size_t n_groups = 0;
    for (std::size_t g : groups) n_groups = std::max(n_groups, g + 1);
    const std::size_t target = rng.integer(n_groups);
    const double sign = rng.coin() ? 1.0 : -1.0;
    const std::size_t span = std::max<std::size_t>(1, l / 2);

    std::vector<double> out = window;
    for (std::size_t v = 0; v < k; ++v) {
        if (groups[v] != target) continue;
        const double sd = row_std(window.data() + v * l, l);
        double* row = out.data() + v * l;
        for (std::size_t t = l - span; t < l; ++t) row[t] += sign * cfg.drift_magnitude * sd;
    }
    return out;
}

PseudoAnomaly make_pseudo_anomaly(const std::vector<double>& window, std::size_t k, std::size_t l,
                                  const std::vector<std::size_t>& groups, Rng& rng,
                                  const AugmentConfig& cfg) {
    cfg.validate();
    const double u = rng.uniform();
    if (u < cfg.w_point) return {point_inject(window, k, l, rng, cfg), "point"};
    if (u < cfg.w_point + cfg.w_context) return {context_replace(window, k, l, rng, cfg), "context"};
    return {cluster_drift(window, k, l, groups, rng, cfg), "drift"};
}

}  // namespace cgsta::augment
