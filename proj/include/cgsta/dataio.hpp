#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cgsta/tensor.hpp"

namespace cgsta::dataio {

// A multivariate series: T time steps by K variables, row-major. Labels are
// per-step {0,1} and used for evaluation only.
struct TimeSeries {
    std::size_t t = 0, k = 0;
    std::vector<double> values;  // t x k
    std::vector<std::string> variable_names;
    std::optional<std::vector<int>> labels;

    double at(std::size_t row, std::size_t col) const { return values[row * k + col]; }
};

struct Normalizer {
    std::vector<double> mean;
    std::vector<double> std;  // population std, floored at kEps
};

struct WindowBatch {
    std::size_t n = 0, k = 0, l = 0;
    std::vector<double> windows;  // n x k x l
    std::vector<std::size_t> start_indices;
    std::vector<bool> is_augmented;

    const double* window(std::size_t i) const { return windows.data() + i * k * l; }
};

TimeSeries load_csv(const std::string& path, bool has_header,
                    const std::optional<std::string>& label_column = std::nullopt);
void write_csv(const std::string& path, const TimeSeries& series, bool with_labels);

Normalizer fit_normalizer(const TimeSeries& train);
TimeSeries apply_normalizer(const Normalizer& n, const TimeSeries& series);

WindowBatch make_windows(const TimeSeries& series, std::size_t window_len, std::size_t stride);

struct SplitResult {
    TimeSeries train, val, test;
};
// Contiguous chronological 0.6/0.2/0.2 split.
SplitResult split(const TimeSeries& series);

struct SynthConfig {
    std::size_t k = 12;
    std::size_t n_groups = 3;
    std::size_t t_train = 20000;
    std::size_t t_test = 4000;
    double anomaly_rate = 0.05;
    std::uint64_t seed = 7;
};

struct SynthResult {
    TimeSeries train;
    TimeSeries test;  // carries labels
    // How many labeled steps each anomaly kind contributed.
    std::size_t n_point_steps = 0, n_break_steps = 0, n_drift_steps = 0;
    std::vector<int> kinds;  // per test step: 0 normal, 1 point, 2 break, 3 drift
    std::vector<std::size_t> groups;  // variable -> group id
};

// Groupwise latent AR(1) drivers with per-variable mixing and noise; the test
// split carries planted spikes, dependency breaks, and group mean drifts with
// exact labels. Fully deterministic given the seed.
SynthResult gen_synthetic(const SynthConfig& cfg);

}  // namespace cgsta::dataio
