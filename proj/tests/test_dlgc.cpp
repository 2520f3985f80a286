#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cgsta/dlgc.hpp"
#include "cgsta/rng.hpp"

using namespace cgsta;
using namespace cgsta::dlgc;

namespace {

std::vector<double> randv(Rng& rng, std::size_t n, double sd = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = sd * rng.normal();
    return v;
}

DlgcConfig tiny_cfg() {
    DlgcConfig c;
    c.k = 4;
    c.d_e = 4;
    c.d_u = 6;
    c.d_a = 4;
    c.f_in = 3;
    c.h = 5;
    c.r = 2;
    c.g = 1;
    c.tau_assign = 0.5;
    c.lambda_soft = 0.1;
    return c;
}

DlgcTensors tiny_params(Rng& rng, const DlgcConfig& c, std::size_t l) {
    DlgcTensors p;
    p.e = constant({c.k, c.d_e}, randv(rng, c.k * c.d_e));
    p.c_regional = constant({c.r, c.d_e}, randv(rng, c.r * c.d_e));
    p.c_global = constant({c.g, c.d_e}, randv(rng, c.g * c.d_e));
    p.w_q = constant({c.d_u, c.d_a}, randv(rng, c.d_u * c.d_a, 0.5));
    p.w_k = constant({c.d_u, c.d_a}, randv(rng, c.d_u * c.d_a, 0.5));
    p.u_w = constant({l, c.d_u}, randv(rng, l * c.d_u, 0.5));
    p.u_b = zeros({c.d_u});
    p.lift_w = constant({1, c.f_in}, randv(rng, c.f_in));
    p.lift_b = zeros({c.f_in});
    for (int s = 0; s < 3; ++s) {
        p.gcn_w1[s] = constant({c.f_in, c.h}, randv(rng, c.f_in * c.h, 0.5));
        p.gcn_w2[s] = constant({c.h, c.h}, randv(rng, c.h * c.h, 0.5));
    }
    return p;
}

}  // namespace

TEST_CASE("local adjacency: uniform on all-equal windows, rows sum to 1") {
    Rng rng(101);
    auto cfg = tiny_cfg();
    const std::size_t L = 8;
    auto p = tiny_params(rng, cfg, L);

    Tensor equal_win = full({2, cfg.k, L}, 0.7);  // identical rows => equal logits
    Tensor a = local_adjacency(equal_win, p, cfg);
    for (std::size_t i = 0; i < a.numel(); ++i)
        CHECK(a.at(i) == doctest::Approx(1.0 / cfg.k).epsilon(1e-12));

    Tensor win = constant({3, cfg.k, L}, randv(rng, 3 * cfg.k * L));
    Tensor ar = local_adjacency(win, p, cfg);
    for (std::size_t row = 0; row < 3 * cfg.k; ++row) {
        double s = 0;
        for (std::size_t j = 0; j < cfg.k; ++j) s += ar.at(row * cfg.k + j);
        CHECK(std::abs(s - 1.0) < 1e-9);
    }
}

TEST_CASE("local adjacency: variable permutation permutes rows and columns") {
    Rng rng(103);
    auto cfg = tiny_cfg();
    const std::size_t L = 8;
    auto p = tiny_params(rng, cfg, L);
    auto wv = randv(rng, cfg.k * L);
    Tensor win = constant({1, cfg.k, L}, wv);
    const std::vector<std::size_t> perm = {2, 0, 3, 1};
    std::vector<double> wp(cfg.k * L);
    for (std::size_t i = 0; i < cfg.k; ++i)
        for (std::size_t t = 0; t < L; ++t) wp[i * L + t] = wv[perm[i] * L + t];
    Tensor win_p = constant({1, cfg.k, L}, wp);

    Tensor a = local_adjacency(win, p, cfg);
    Tensor ap = local_adjacency(win_p, p, cfg);
    for (std::size_t i = 0; i < cfg.k; ++i)
        for (std::size_t j = 0; j < cfg.k; ++j)
            CHECK(ap.at(i * cfg.k + j) ==
                  doctest::Approx(a.at(perm[i] * cfg.k + perm[j])).epsilon(1e-12));
}

TEST_CASE("assign_regions: dominant dot product, tie rule, softmax limit") {
    Tensor e = constant({2, 2}, {1, 0, 0, 1});
    Tensor c = constant({2, 2}, {1, 0, 0, 1});
    Tensor cg = constant({1, 2}, {1, 1});
    auto a = assign_regions(e, c, cg, 0.5);
    CHECK(a.phi[0] == 0);
    CHECK(a.phi[1] == 1);

    // equal logits: smallest index wins
    Tensor e_tie = constant({1, 2}, {1, 1});
    Tensor c_tie = constant({2, 2}, {1, 1, 1, 1});
    auto t = assign_regions(e_tie, c_tie, cg, 0.5);
    CHECK(t.phi[0] == 0);

    // small temperature pushes s_soft to one-hot at phi
    auto sharp = assign_regions(e, c, cg, 0.01);
    CHECK(sharp.s_soft.at(0) > 1.0 - 1e-12);
    CHECK(sharp.s_soft.at(3) > 1.0 - 1e-12);
}

TEST_CASE("regional adjacency membership rule") {
    CHECK(*regional_adjacency({0, 0, 1}).data ==
          std::vector<double>{1, 1, 0, 1, 1, 0, 0, 0, 1});
    auto all_same = regional_adjacency({2, 2, 2, 2});
    for (double v : *all_same.data) CHECK(v == 1.0);
    auto distinct = regional_adjacency({0, 1, 2});
    CHECK(*distinct.data == std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
}

TEST_CASE("global adjacency: merging and coarsening") {
    // two regions mapped to the same cluster: all-ones over their union
    auto a = global_adjacency({0, 0, 1, 1}, {0, 0});
    for (double v : *a.data) CHECK(v == 1.0);
    // psi all distinct: global equals regional
    auto phi = std::vector<int>{0, 0, 1, 2};
    auto g = global_adjacency(phi, {0, 1, 2});
    CHECK(*g.data == *regional_adjacency(phi).data);
    // coarsening: regional edge implies global edge
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> ph(6), ps(3);
        for (auto& x : ph) x = static_cast<int>(rng.integer(3));
        for (auto& x : ps) x = static_cast<int>(rng.integer(2));
        auto ar = regional_adjacency(ph);
        auto ag = global_adjacency(ph, ps);
        for (std::size_t i = 0; i < 36; ++i)
            if (ar.at(i) == 1.0) CHECK(ag.at(i) == 1.0);
    }
}

TEST_CASE("gcn_encode: identity graph and constant propagation") {
    const std::size_t n = 2, k = 3, l = 4, h = 3;
    Rng rng(5);
    auto xv = randv(rng, n * k * l * h);
    Tensor x = constant({n, k, l, h}, xv);
    std::vector<double> eye(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) eye[i * k + i] = 1.0;
    Tensor a = expand_leading(constant({k, k}, eye), n);
    std::vector<double> id_h(h * h, 0.0);
    for (std::size_t i = 0; i < h; ++i) id_h[i * h + i] = 1.0;
    Tensor w_id = constant({h, h}, id_h);

    Tensor out = gcn_encode(x, a, w_id, w_id);
    CHECK(out.shape == Shape{n, k, l, h});
    for (std::size_t i = 0; i < out.numel(); ++i)
        CHECK(out.at(i) == doctest::Approx(std::max(xv[i], 0.0)));

    // constant feature across variables survives any row-stochastic adjacency
    Tensor xc = full({1, k, l, h}, 0.4);
    Tensor arand = softmax(constant({k, k}, randv(rng, k * k)), 1);
    Tensor outc = gcn_encode(xc, expand_leading(arand, 1), w_id, w_id);
    for (std::size_t i = 0; i < outc.numel(); ++i)
        CHECK(outc.at(i) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("encode_scales invariants and soft-mixture identities") {
    Rng rng(211);
    auto cfg = tiny_cfg();
    const std::size_t L = 8, N = 2;
    auto p = tiny_params(rng, cfg, L);
    Tensor win = constant({N, cfg.k, L}, randv(rng, N * cfg.k * L));

    SUBCASE("lambda_soft = 0 reproduces the hard adjacency bitwise") {
        auto c0 = cfg;
        c0.lambda_soft = 0.0;
        auto enc = encode_scales(win, p, c0);
        CHECK(*enc.graphs.a_eff_regional.data == *enc.graphs.a_regional.data);
        CHECK(*enc.graphs.a_eff_global.data == *enc.graphs.a_global.data);
    }

    SUBCASE("one-hot soft assignment makes S S^T equal the hard adjacency") {
        // sharpen by shrinking the temperature
        auto sharp = cfg;
        sharp.tau_assign = 1e-4;
        auto enc = encode_scales(win, p, sharp);
        Tensor ssT = matmul(enc.graphs.assign.s_soft, transpose(enc.graphs.assign.s_soft));
        for (std::size_t i = 0; i < ssT.numel(); ++i)
            CHECK(ssT.at(i) == doctest::Approx(enc.graphs.a_regional.at(i)).epsilon(1e-9));
    }

    SUBCASE("binary graph structure: symmetric, unit diagonal, block unions") {
        auto enc = encode_scales(win, p, cfg);
        const std::size_t k = cfg.k;
        for (std::size_t i = 0; i < k; ++i) {
            CHECK(enc.graphs.a_regional.at(i * k + i) == 1.0);
            CHECK(enc.graphs.a_global.at(i * k + i) == 1.0);
            for (std::size_t j = 0; j < k; ++j) {
                CHECK(enc.graphs.a_regional.at(i * k + j) == enc.graphs.a_regional.at(j * k + i));
                CHECK(enc.graphs.a_global.at(i * k + j) == enc.graphs.a_global.at(j * k + i));
                if (enc.graphs.a_regional.at(i * k + j) == 1.0)
                    CHECK(enc.graphs.a_global.at(i * k + j) == 1.0);
            }
        }
        CHECK(enc.h.local.shape == Shape{N, cfg.k, L, cfg.h});
        CHECK(enc.h.regional.shape == Shape{N, cfg.k, L, cfg.h});
        CHECK(enc.h.global_scale.shape == Shape{N, cfg.k, L, cfg.h});
    }

    SUBCASE("encode_scales is deterministic") {
        auto e1 = encode_scales(win, p, cfg);
        auto e2 = encode_scales(win, p, cfg);
        CHECK(*e1.h.global_scale.data == *e2.h.global_scale.data);
        CHECK(*e1.graphs.a_local.data == *e2.graphs.a_local.data);
    }
}

TEST_CASE("gradients flow to the embeddings and centers through the soft path") {
    Rng rng(307);
    auto cfg = tiny_cfg();
    const std::size_t L = 8, N = 2;
    auto pv = tiny_params(rng, cfg, L);
    auto win_v = randv(rng, N * cfg.k * L);

    auto run = [&](Tape& tape, const std::vector<Tensor>& leaves) {
        DlgcTensors p = pv;
        p.e = leaves[0];
        p.c_regional = leaves[1];
        Tensor win = constant({N, cfg.k, L}, win_v);
        auto enc = encode_scales(win, p, cfg);
        return sum(mul(enc.h.regional, enc.h.regional));
    };

    // analytic gradient is nonzero and matches finite differences
    auto res = grad_check(run,
                          {{{cfg.k, cfg.d_e}, *pv.e.data},
                           {{cfg.r, cfg.d_e}, *pv.c_regional.data}},
                          1e-5);
    REQUIRE_FALSE(res.nan_failure);
    CHECK(res.max_rel_err < 1e-3);

    Tape tape;
    Tensor e_leaf = tape.leaf({cfg.k, cfg.d_e}, *pv.e.data, true);
    Tensor c_leaf = tape.leaf({cfg.r, cfg.d_e}, *pv.c_regional.data, true);
    Tensor loss = run(tape, {e_leaf, c_leaf});
    auto g = tape.backward(loss);
    double norm_c = 0;
    for (double v : *tape.grad_of(g, c_leaf).data) norm_c += v * v;
    CHECK(norm_c > 0.0);
}

TEST_CASE("attention path gradients match finite differences") {
    Rng rng(401);
    auto cfg = tiny_cfg();
    const std::size_t L = 8, N = 2;
    auto pv = tiny_params(rng, cfg, L);
    auto win_v = randv(rng, N * cfg.k * L);

    auto run = [&](Tape&, const std::vector<Tensor>& leaves) {
        DlgcTensors p = pv;
        p.w_q = leaves[0];
        p.u_w = leaves[1];
        Tensor win = constant({N, cfg.k, L}, win_v);
        Tensor a = local_adjacency(win, p, cfg);
        return sum(mul(a, a));
    };
    auto res = grad_check(run,
                          {{{cfg.d_u, cfg.d_a}, *pv.w_q.data}, {{L, cfg.d_u}, *pv.u_w.data}},
                          1e-5);
    REQUIRE_FALSE(res.nan_failure);
    CHECK(res.max_rel_err < 1e-3);
}
