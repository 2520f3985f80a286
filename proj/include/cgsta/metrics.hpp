#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace cgsta::metrics {

// Probability that a random positive outranks a random negative; ties count
// one half. Exact rank-based computation.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Average precision with deterministic tie order (score desc, index asc).
double auprc(const std::vector<double>& scores, const std::vector<int>& labels);

// Best point-level F1 over thresholds at every distinct score (predict
// anomalous when score >= threshold); returns the smallest threshold
// attaining the maximum. No point adjustment.
std::pair<double, double> best_f1(const std::vector<double>& scores,
                                  const std::vector<int>& labels);

struct Aggregate {
    double mean = 0, std = 0;  // population std
    bool single_seed = false;  // <2 seeds: std reported as 0 with a warning flag
};
Aggregate aggregate_seeds(const std::vector<double>& values);

// Classical paired t-test, n-1 dof, two-sided p via the regularized
// incomplete beta function. Zero-variance differences are an error.
struct TTest {
    double t = 0, p = 1;
};
TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

// Regularized incomplete beta I_x(a, b); exposed for tests.
double betainc(double a, double b, double x);

}  // namespace cgsta::metrics
