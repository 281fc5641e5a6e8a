#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "l2r/gating.hpp"

using namespace l2r;

TEST_CASE("softmax_temp") {
    SUBCASE("constant logits give the uniform distribution") {
        Vec s = softmax_temp(Vec(5, 3.7), 1.0);
        for (double v : s) CHECK(v == doctest::Approx(0.2).epsilon(1e-14));
    }
    SUBCASE("two-way oracle") {
        Vec s = softmax_temp(Vec{0.0, std::log(3.0)}, 1.0);
        CHECK(s[0] == doctest::Approx(0.25).epsilon(1e-14));
        CHECK(s[1] == doctest::Approx(0.75).epsilon(1e-14));
    }
    SUBCASE("sums to one and keeps the argmax for any temperature") {
        Rng rng(21);
        for (int t = 0; t < 100; ++t) {
            Vec z(7);
            for (double& v : z) v = rng.uniform(-30.0, 30.0);
            const double tau = std::exp(rng.uniform(-3.0, 3.0));
            Vec s = softmax_temp(z, tau);
            double acc = 0.0;
            for (double v : s) acc += v;
            CHECK(std::fabs(acc - 1.0) <= 1e-12);
            const auto az = std::max_element(z.begin(), z.end()) - z.begin();
            const auto as = std::max_element(s.begin(), s.end()) - s.begin();
            CHECK(az == as);
        }
    }
    SUBCASE("rejects tau <= 0") {
        CHECK_THROWS_AS(softmax_temp(Vec{1.0, 2.0}, 0.0), std::invalid_argument);
        CHECK_THROWS_AS(softmax_temp(Vec{1.0, 2.0}, -1.0), std::invalid_argument);
    }
}

TEST_CASE("top_k_select") {
    CHECK(top_k_select(Vec{0.1, 0.4, 0.3, 0.2}, 2) == std::vector<std::size_t>{1, 2});
    CHECK(top_k_select(Vec{0.25, 0.25, 0.25, 0.25}, 3) == std::vector<std::size_t>{0, 1, 2});
    CHECK(top_k_select(Vec{0.1, 0.4, 0.3, 0.2}, 4) == std::vector<std::size_t>{1, 2, 3, 0});
    CHECK_THROWS_AS(top_k_select(Vec{0.5, 0.5}, 0), std::invalid_argument);
    CHECK_THROWS_AS(top_k_select(Vec{0.5, 0.5}, 3), std::invalid_argument);

    // deterministic tie-break toward the smaller index
    Vec s{0.3, 0.1, 0.3, 0.3};
    CHECK(top_k_select(s, 2) == std::vector<std::size_t>{0, 2});
}

TEST_CASE("make_decision invariants") {
    Rng rng(22);
    for (int t = 0; t < 200; ++t) {
        Vec z(6);
        for (double& v : z) v = rng.uniform(-5.0, 5.0);
        const std::size_t k = 1 + rng.below(6);
        RoutingDecision d = make_decision(z, 1.0, k);
        double acc = 0.0;
        for (double v : d.scores) acc += v;
        CHECK(std::fabs(acc - 1.0) <= 1e-9);
        CHECK(d.selected.size() == k);
        for (std::size_t i = 0; i + 1 < k; ++i) {
            CHECK(d.scores[d.selected[i]] >= d.scores[d.selected[i + 1]]);
            if (d.scores[d.selected[i]] == d.scores[d.selected[i + 1]])
                CHECK(d.selected[i] < d.selected[i + 1]);
        }
        std::vector<std::size_t> sorted = d.selected;
        std::sort(sorted.begin(), sorted.end());
        CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
        for (std::size_t i = 0; i < k; ++i) CHECK(d.gate_weights[i] == d.scores[d.selected[i]]);
    }
}

TEST_CASE("make_decision renormalized variant") {
    Vec z{1.0, 0.5, -2.0, 0.0};
    RoutingDecision d = make_decision(z, 1.0, 2, true);
    double acc = 0.0;
    for (double g : d.gate_weights) acc += g;
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-12));
    RoutingDecision raw = make_decision(z, 1.0, 2, false);
    CHECK(raw.gate_weights[0] == raw.scores[raw.selected[0]]);
}

namespace {

ExpertBank identity_bank(std::size_t n, std::size_t d) {
    ExpertBank b = ExpertBank::zeros(n, d);
    for (auto& e : b.experts) e.w = Mat::identity(d);
    return b;
}

}  // namespace

TEST_CASE("moe_forward") {
    const std::size_t d = 3;
    Vec x{1.0, -2.0, 0.5};

    SUBCASE("all-zero experts leave the residual") {
        ExpertBank bank = ExpertBank::zeros(4, d);
        RoutingDecision dec = make_decision(Vec{1.0, 0.0, 0.0, 0.0}, 1.0, 2);
        CHECK(moe_forward(x, bank, dec) == x);
    }
    SUBCASE("single identity expert scales the residual") {
        ExpertBank bank = identity_bank(2, d);
        RoutingDecision dec = make_decision(Vec{10.0, -10.0}, 1.0, 1);
        const double w = dec.gate_weights[0];
        Vec y = moe_forward(x, bank, dec);
        for (std::size_t j = 0; j < d; ++j)
            CHECK(y[j] == doctest::Approx((1.0 + w) * x[j]).epsilon(1e-14));
    }
    SUBCASE("sparse result matches the dense mixture with zeroed weights") {
        Rng rng(23);
        const std::size_t n = 5;
        ExpertBank bank = ExpertBank::zeros(n, d);
        for (auto& e : bank.experts) {
            for (double& v : e.w.data) v = rng.normal();
            for (double& v : e.b) v = rng.normal();
        }
        Vec z(n);
        for (double& v : z) v = rng.normal();
        RoutingDecision dec = make_decision(z, 1.0, 2);

        Vec dense = x;
        for (std::size_t i = 0; i < n; ++i) {
            double g = 0.0;
            for (std::size_t j = 0; j < dec.selected.size(); ++j)
                if (dec.selected[j] == i) g = dec.gate_weights[j];
            Vec e = bank.experts[i](x);
            for (std::size_t t = 0; t < d; ++t) dense[t] += g * e[t];
        }
        Vec sparse = moe_forward(x, bank, dec);
        for (std::size_t t = 0; t < d; ++t)
            CHECK(std::fabs(sparse[t] - dense[t]) <= 1e-12 * std::max(1.0, std::fabs(dense[t])));
    }
    SUBCASE("exactly k expert evaluations") {
        ExpertBank bank = identity_bank(6, d);
        for (std::size_t k = 1; k <= 6; ++k) {
            RoutingDecision dec = make_decision(Vec{6, 5, 4, 3, 2, 1}, 1.0, k);
            std::uint64_t count = 0;
            moe_forward(x, bank, dec, &count);
            CHECK(count == k);
        }
    }
    SUBCASE("mixture delta stays in the span of selected expert outputs") {
        Rng rng(24);
        ExpertBank bank = ExpertBank::zeros(4, d);
        for (auto& e : bank.experts)
            for (double& v : e.w.data) v = rng.normal();
        RoutingDecision dec = make_decision(Vec{1.0, 0.5, 0.2, 0.1}, 1.0, 2);
        Vec y = moe_forward(x, bank, dec);
        Vec recon = x;
        for (std::size_t j = 0; j < dec.selected.size(); ++j) {
            Vec e = bank.experts[dec.selected[j]](x);
            for (std::size_t t = 0; t < d; ++t) recon[t] += dec.gate_weights[j] * e[t];
        }
        for (std::size_t t = 0; t < d; ++t) CHECK(y[t] == doctest::Approx(recon[t]).epsilon(1e-14));
    }
}

TEST_CASE("expert permutation equivariance") {
    Rng rng(25);
    const std::size_t n = 5, d = 3;
    ExpertBank bank = ExpertBank::zeros(n, d);
    for (auto& e : bank.experts) {
        for (double& v : e.w.data) v = rng.normal();
        for (double& v : e.b) v = rng.normal();
    }
    Vec x{0.2, 1.0, -0.7};
    Vec z{0.9, -0.3, 1.4, 0.0, 0.2};

    std::vector<std::size_t> perm{3, 0, 4, 1, 2};  // new index -> old index
    ExpertBank pbank = ExpertBank::zeros(n, d);
    Vec pz(n);
    for (std::size_t i = 0; i < n; ++i) {
        pbank.experts[i] = bank.experts[perm[i]];
        pz[i] = z[perm[i]];
    }
    RoutingDecision d1 = make_decision(z, 1.0, 2);
    RoutingDecision d2 = make_decision(pz, 1.0, 2);
    // permuted decision selects the same experts under the relabeling
    for (std::size_t j = 0; j < 2; ++j) CHECK(perm[d2.selected[j]] == d1.selected[j]);
    Vec y1 = moe_forward(x, bank, d1);
    Vec y2 = moe_forward(x, pbank, d2);
    CHECK(y1 == y2);
}

TEST_CASE("route_token") {
    Rng rng(26);
    RouterConfig cfg;
    cfg.d = 4;
    cfg.r = 2;
    cfg.n_experts = 2;
    cfg.n_anchors = 1;
    cfg.top_k = 2;
    cfg.mode = ScoreMode::L2R_SIPS;
    cfg.norm_style = NormStyle::NONE;
    LatentRouterState st;
    st.proj.w_q = Mat(4, 2);
    for (double& v : st.proj.w_q.data) v = rng.normal();
    st.proj.rms_gain = Vec(4, 1.0);
    Rng ra = rng.split("a");
    st.anchors = AnchorSet::init_unit_sphere(ra, 2, 1, 2);

    SUBCASE("identical experts make y independent of the logits") {
        ExpertBank bank = ExpertBank::zeros(2, 4);
        for (auto& e : bank.experts) {
            e.w = Mat::identity(4);
            e.b = Vec{0.1, 0.2, 0.3, 0.4};
        }
        Vec x{1.0, 2.0, 3.0, 4.0};
        auto [d1, y1] = route_token(x, RouterState{st}, bank, cfg);

        LatentRouterState st2 = st;  // different anchors, same experts
        Rng rb = rng.split("b");
        st2.anchors = AnchorSet::init_unit_sphere(rb, 2, 1, 2);
        auto [d2, y2] = route_token(x, RouterState{st2}, bank, cfg);
        for (std::size_t j = 0; j < 4; ++j) CHECK(y1[j] == doctest::Approx(y2[j]).epsilon(1e-12));
    }

    SUBCASE("constructed dominance pins the top expert") {
        RouterConfig lin;
        lin.mode = ScoreMode::LINEAR;
        lin.d = 4;
        lin.n_experts = 3;
        lin.top_k = 1;
        LinearRouterWeights w;
        w.w_g = Mat(4, 3);
        for (std::size_t i = 0; i < 4; ++i) w.w_g.at(i, 0) = 10.0;  // expert 0 dominates
        ExpertBank bank = ExpertBank::zeros(3, 4);
        auto [dec, y] = route_token(Vec{1, 1, 1, 1}, RouterState{w}, bank, lin);
        CHECK(dec.selected[0] == 0);
    }

    SUBCASE("pipeline equals manual composition bitwise") {
        ExpertBank bank = ExpertBank::zeros(2, 4);
        for (auto& e : bank.experts)
            for (double& v : e.w.data) v = rng.normal();
        Vec x{0.5, -0.25, 1.5, 2.0};
        auto [dec, y] = route_token(x, RouterState{st}, bank, cfg);
        Vec z = route_logits(x, RouterState{st}, cfg);
        RoutingDecision manual = make_decision(z, cfg.tau, cfg.top_k);
        Vec ym = moe_forward(x, bank, manual);
        CHECK(dec.logits == manual.logits);
        CHECK(dec.scores == manual.scores);
        CHECK(dec.selected == manual.selected);
        CHECK(y == ym);
    }
}
