#include "cgsta/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cgsta::metrics {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void check_labels(const std::vector<double>& scores, const std::vector<int>& labels,
                  const char* op, bool need_neg) {
    if (scores.size() != labels.size() || scores.empty())
        fail(std::string(op) + ": scores and labels must be equal-length and non-empty");
    std::size_t pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) fail(std::string(op) + ": labels must be 0 or 1");
        pos += static_cast<std::size_t>(l);
    }
    if (pos == 0) fail(std::string(op) + ": needs at least one positive");
    if (need_neg && pos == labels.size()) fail(std::string(op) + ": needs at least one negative");
}

// indices sorted by (score desc, index asc)
std::vector<std::size_t> desc_order(const std::vector<double>& scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

// continued fraction for the incomplete beta function (Lentz)
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEpsIter = 3e-14;
    constexpr double kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEpsIter) break;
    }
    return h;
}

}  // namespace

double betainc(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double bt =
        std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                 b * std::log(1.0 - x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_labels(scores, labels, "auroc", true);
    const std::size_t n = scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // averaged 1-based ranks
        for (std::size_t q = i; q < j; ++q)
            if (labels[idx[q]] == 1) {
                rank_sum_pos += avg_rank;
                ++n_pos;
            }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    const double u = rank_sum_pos - static_cast<double>(n_pos) *
                                        (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_labels(scores, labels, "auprc", false);
    const auto idx = desc_order(scores);
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += static_cast<std::size_t>(l);
    double ap = 0.0;
    std::size_t tp = 0;
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (labels[idx[r]] == 1) {
            ++tp;
            ap += static_cast<double>(tp) / static_cast<double>(r + 1);
        }
    }
    return ap / static_cast<double>(n_pos);
}

std::pair<double, double> best_f1(const std::vector<double>& scores,
                                  const std::vector<int>& labels) {
    // all-positive labels are a legal degenerate case (min threshold gives F1 1)
    check_labels(scores, labels, "best_f1", false);
    const auto idx = desc_order(scores);
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += static_cast<std::size_t>(l);

    double best = -1.0, best_th = 0.0;
    std::size_t tp = 0, pred = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        const double th = scores[idx[i]];
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == th) {
            if (labels[idx[j]] == 1) ++tp;
            ++pred;
            ++j;
        }
        const std::size_t fp = pred - tp;
        const std::size_t fn = n_pos - tp;
        const double f1 = 2.0 * static_cast<double>(tp) /
                          (2.0 * static_cast<double>(tp) + static_cast<double>(fp) +
                           static_cast<double>(fn));
        if (f1 > best || (f1 == best && th < best_th)) {
            best = f1;
            best_th = th;
        }
        i = j;
    }
    return {best, best_th};
}

Aggregate aggregate_seeds(const std::vector<double>& values) {
    if (values.empty()) fail("aggregate_seeds: no values");
    Aggregate a;
    for (double v : values) a.mean += v;
    a.mean /= static_cast<double>(values.size());
    if (values.size() < 2) {
        a.single_seed = true;
        return a;
    }
    if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; }))
        return a;  // exactly zero spread
    double s2 = 0.0;
    for (double v : values) s2 += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(s2 / static_cast<double>(values.size()));
    return a;
}

TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        fail("paired_t_test: needs two equal-length samples with n >= 2");
    const std::size_t n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    double mean = 0.0;
    for (double x : d) mean += x;
    mean /= static_cast<double>(n);
    double s2 = 0.0;
    for (double x : d) s2 += (x - mean) * (x - mean);
    s2 /= static_cast<double>(n - 1);  // sample variance
    if (s2 == 0.0) fail("degenerate t-test: zero variance of differences");

    TTest r;
    r.t = mean / std::sqrt(s2 / static_cast<double>(n));
    const double nu = static_cast<double>(n - 1);
    r.p = betainc(nu / 2.0, 0.5, nu / (nu + r.t * r.t));
    return r;
}

}  // namespace cgsta::metrics
