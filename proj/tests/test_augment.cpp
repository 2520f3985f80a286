#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "cgsta/augment.hpp"
#include "cgsta/rng.hpp"

using namespace cgsta;
using namespace cgsta::augment;

namespace {

std::vector<double> random_window(Rng& rng, std::size_t k, std::size_t l) {
    std::vector<double> w(k * l);
    for (auto& x : w) x = rng.normal();
    return w;
}

std::size_t count_diff(const std::vector<double>& a, const std::vector<double>& b) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) ++n;
    return n;
}

}  // namespace

TEST_CASE("point_inject changes exactly the budgeted cells") {
    AugmentConfig cfg;
    cfg.point_fraction = 0.124;  // rounds to 1 cell on a 2x4 window
    cfg.point_magnitude = 3.0;
    std::vector<double> zero(8, 0.0);
    Rng rng(5);
    auto out = point_inject(zero, 2, 4, rng, cfg);
    CHECK(count_diff(zero, out) == 1);
    for (double v : out)
        if (v != 0.0) CHECK(std::abs(v) == doctest::Approx(3.0 * 1e-8));  // eps-floored std of zeros

    // on a non-degenerate window the offset is 3 per-row stds
    Rng rng2(6);
    std::vector<double> w = {1, 2, 3, 4, 5, 6, 7, 8};
    auto out2 = point_inject(w, 2, 4, rng2, cfg);
    CHECK(count_diff(w, out2) == 1);

    // larger fraction: exact rounded count of distinct cells
    AugmentConfig cfg3;
    cfg3.point_fraction = 0.25;
    Rng rng3(7);
    auto w3 = random_window(rng3, 4, 10);
    auto out3 = point_inject(w3, 4, 10, rng3, cfg3);
    CHECK(count_diff(w3, out3) == 10);
}

TEST_CASE("point_inject is deterministic in the rng state") {
    AugmentConfig cfg;
    Rng a(42), b(42);
    std::vector<double> w(6 * 12);
    Rng init(1);
    for (auto& x : w) x = init.normal();
    CHECK(point_inject(w, 6, 12, a, cfg) == point_inject(w, 6, 12, b, cfg));
}

TEST_CASE("context_replace swaps segments within one variable") {
    AugmentConfig cfg;
    cfg.replace_len_fraction = 0.25;
    Rng rng(3);
    std::vector<double> w = {1, 2, 3, 4, 5, 6, 7, 8,   // var 0
                             10, 20, 30, 40, 50, 60, 70, 80};  // var 1
    auto out = context_replace(w, 2, 8, rng, cfg);

    // exactly one variable touched; its multiset of values is preserved
    int touched = 0;
    for (std::size_t v = 0; v < 2; ++v) {
        std::vector<double> orig(w.begin() + static_cast<long>(v * 8),
                                 w.begin() + static_cast<long>((v + 1) * 8));
        std::vector<double> got(out.begin() + static_cast<long>(v * 8),
                                out.begin() + static_cast<long>((v + 1) * 8));
        if (orig != got) {
            ++touched;
            auto so = orig, sg = got;
            std::sort(so.begin(), so.end());
            std::sort(sg.begin(), sg.end());
            CHECK(so == sg);
            CHECK(count_diff(orig, got) == 4);  // two segments of length 2 exchanged
        }
    }
    CHECK(touched == 1);
    CHECK_THROWS_AS(context_replace({1, 2, 3}, 1, 3, rng, cfg), std::invalid_argument);
}

TEST_CASE("cluster_drift shifts one group over the trailing half") {
    AugmentConfig cfg;
    cfg.drift_magnitude = 1.5;
    std::vector<std::size_t> groups = {0, 0, 1, 1};
    Rng rng(11);
    auto w = random_window(rng, 4, 8);
    Rng drng(2);
    auto out = cluster_drift(w, 4, 8, groups, drng, cfg);

    // exactly one group's rows changed, on exactly the last L/2 steps
    std::vector<bool> row_changed(4, false);
    for (std::size_t v = 0; v < 4; ++v)
        for (std::size_t t = 0; t < 8; ++t)
            if (out[v * 8 + t] != w[v * 8 + t]) {
                row_changed[v] = true;
                CHECK(t >= 4);
            }
    CHECK(row_changed[0] == row_changed[1]);
    CHECK(row_changed[2] == row_changed[3]);
    CHECK(row_changed[0] != row_changed[2]);

    // drifted rows moved by ~drift_magnitude * row std on the trailing half
    for (std::size_t v = 0; v < 4; ++v) {
        if (!row_changed[v]) continue;
        double m = 0, s2 = 0;
        for (std::size_t t = 0; t < 8; ++t) m += w[v * 8 + t];
        m /= 8;
        for (std::size_t t = 0; t < 8; ++t) s2 += (w[v * 8 + t] - m) * (w[v * 8 + t] - m);
        const double sd = std::sqrt(s2 / 8);
        double delta = 0;
        for (std::size_t t = 4; t < 8; ++t) delta += out[v * 8 + t] - w[v * 8 + t];
        delta /= 4;
        CHECK(std::abs(std::abs(delta) - 1.5 * sd) < 1e-12);
    }

    // zero-variance row still drifts through the eps floor
    std::vector<double> flat(4 * 8, 2.0);
    Rng frng(9);
    auto fout = cluster_drift(flat, 4, 8, groups, frng, cfg);
    CHECK(count_diff(flat, fout) == 8);  // two rows x trailing 4 steps
}

TEST_CASE("make_pseudo_anomaly samples strategies by weight") {
    AugmentConfig cfg;
    cfg.w_point = 1.0;
    cfg.w_context = 0.0;
    cfg.w_drift = 0.0;
    Rng rng(17);
    auto w = random_window(rng, 3, 12);
    std::vector<std::size_t> groups = {0, 0, 1};
    for (int i = 0; i < 10; ++i) {
        auto r = make_pseudo_anomaly(w, 3, 12, groups, rng, cfg);
        CHECK(r.strategy == "point");
        CHECK(count_diff(w, r.window) >= 1);
    }
}

TEST_CASE("make_pseudo_anomaly always perturbs and matches weights empirically") {
    AugmentConfig cfg;  // uniform thirds
    Rng rng(23);
    auto w = random_window(rng, 4, 16);
    std::vector<std::size_t> groups = {0, 0, 1, 1};
    std::map<std::string, int> freq;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        auto r = make_pseudo_anomaly(w, 4, 16, groups, rng, cfg);
        CHECK(r.window != w);
        ++freq[r.strategy];
    }
    for (const auto& [tag, count] : freq) {
        const double f = static_cast<double>(count) / trials;
        INFO(tag, " frequency ", f);
        CHECK(std::abs(f - 1.0 / 3) < 0.02);
    }
}

TEST_CASE("config validation rejects bad fields") {
    AugmentConfig cfg;
    cfg.point_fraction = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = AugmentConfig{};
    cfg.w_point = 0.9;  // weights no longer sum to 1
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = AugmentConfig{};
    cfg.drift_magnitude = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
