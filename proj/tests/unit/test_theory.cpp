#include <doctest.h>

#include <pmdlab/theory.hpp>

#include <cmath>
#include <limits>
#include <optional>

using namespace pmdlab::theory;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_CASE("exact bound at k = 1 and rate") {
    const double g = 0.9, b = 0.7, qs = 3.0, q0 = 5.0;
    CHECK(exact_epmd_bound(1, g, b, qs, q0) == doctest::Approx(g * (q0 + 2 * b * qs)).epsilon(1e-15));
    CHECK(exact_rate(0.99, 0.95) == doctest::Approx(0.9995).epsilon(1e-15));
    CHECK(slack(1e-10, 0.9) == doctest::Approx(4e-9).epsilon(1e-12));
}

TEST_CASE("exact bound decreases in k") {
    double prev = exact_epmd_bound(1, 0.95, 0.5, 1.0, 2.0);
    for (int k = 2; k < 500; ++k) {
        const double cur = exact_epmd_bound(k, 0.95, 0.5, 1.0, 2.0);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("vanilla C1 against high precision oracle") {
    CHECK(rel(vanilla_c1(0.9, 0.7, 5, 10.0), 4672.422) < 1e-12);
    const double residual = vanilla_bound(1000000, 0.9, 0.7, 5, 10.0, 1.0);
    CHECK(rel(residual, 785.29396554) < 1e-9);
}

TEST_CASE("vanilla bound with unbounded memory reduces to the exact part") {
    const double g = 0.9, b = 0.7;
    const double d = exact_rate(g, b);
    for (int k : {0, 1, 10, 100}) {
        CHECK(vanilla_bound(k, g, b, std::nullopt, 10.0, 2.0) ==
              doctest::Approx(g * std::pow(d, k) * 2.0).epsilon(1e-13));
    }
    CHECK(beta_power(0.7, std::nullopt) == 0.0);
}

TEST_CASE("vanilla eps terms") {
    const double g = 0.9, b = 0.7, eps = 0.01;
    const double c1 = vanilla_c1(g, b, 5, 10.0, eps);
    CHECK(c1 == doctest::Approx(vanilla_c1(g, b, 5, 10.0) + g * eps / ((1 - g) * (1 - b))).epsilon(1e-13));
    const double floor = (1 + g * g) * eps / ((1 - g) * (1 - g) * (1 - b));
    CHECK(vanilla_bound(0, g, b, 5, 10.0, 1.0, eps) ==
          doctest::Approx(g + std::pow(b, 5) * c1 + floor).epsilon(1e-13));
}

TEST_CASE("minimum memory grid") {
    struct Row {
        double gamma;
        double beta;
        double threshold;
        std::size_t min_m;
    };
    const Row rows[] = {
        {0.9, 0.5, 9.38154295118, 10},     {0.9, 0.7, 19.6317573561, 20},
        {0.9, 0.9, 76.7761587757, 77},     {0.9, 0.95, 171.16084476, 172},
        {0.95, 0.5, 11.5152070304, 12},    {0.95, 0.7, 23.79537759, 24},
        {0.95, 0.9, 90.930217482, 91},     {0.95, 0.95, 200.265048681, 201},
        {0.99, 0.5, 16.2623701706, 17},    {0.99, 0.7, 33.0329581919, 34},
        {0.99, 0.9, 122.243390196, 123},   {0.99, 0.95, 264.60612962, 265},
    };
    for (const auto& r : rows) {
        CAPTURE(r.gamma);
        CAPTURE(r.beta);
        CHECK(min_memory_threshold(r.gamma, r.beta) == doctest::Approx(r.threshold).epsilon(1e-10));
        CHECK(min_memory(r.gamma, r.beta) == r.min_m);
        const auto at = wc_constants(r.gamma, r.beta, r.min_m);
        const auto below = wc_constants(r.gamma, r.beta, r.min_m - 1);
        CHECK(at.converges);
        CHECK(at.d1 + at.d2 < 1.0);
        CHECK_FALSE(below.converges);
        CHECK(below.d1 + below.d2 >= 1.0);
    }
}

TEST_CASE("minimum memory increases with gamma") {
    for (double b : {0.5, 0.7, 0.9, 0.95}) {
        CHECK(min_memory(0.9, b) < min_memory(0.95, b));
        CHECK(min_memory(0.95, b) < min_memory(0.99, b));
    }
}

TEST_CASE("weight corrected constants against oracle") {
    const auto c264 = wc_constants(0.99, 0.95, 264);
    CHECK(rel(c264.d1, 0.99975795980361042) < 1e-12);
    CHECK(rel(c264.d2, 0.00025782958664746663) < 1e-12);
    CHECK(rel(c264.rate, 1.0000147523370122) < 1e-12);
    CHECK(c264.d1 + c264.d2 > 1.0);

    const auto c265 = wc_constants(0.99, 0.95, 265);
    CHECK(rel(c265.d1, 0.99974506179731313) < 1e-12);
    CHECK(rel(c265.d2, 0.00024493809120645979) < 1e-12);
    CHECK(rel(c265.rate, 0.9999906292315446) < 1e-12);
    CHECK(c265.d1 + c265.d2 < 1.0);
    CHECK(c265.d1 == doctest::Approx(0.9997).epsilon(1e-4));
    CHECK(c265.d2 == doctest::Approx(0.0002).epsilon(0.25));
}

TEST_CASE("large memory rate approaches the exact rate") {
    for (double g : {0.9, 0.95, 0.99}) {
        for (double b : {0.5, 0.7, 0.9, 0.95}) {
            const auto c = wc_constants(g, b, 10 * min_memory(g, b));
            CHECK(std::abs(c.rate - exact_rate(g, b)) < 1e-3);
        }
    }
}

TEST_CASE("theory constants bundle") {
    const auto t = theory_constants(0.9, 0.7, 20, 10.0);
    CHECK(t.d == doctest::Approx(exact_rate(0.9, 0.7)));
    CHECK(t.min_memory == 20);
    CHECK(t.d < 1.0);
    CHECK(t.wc.converges);
    CHECK(t.c1_vanilla == doctest::Approx(vanilla_c1(0.9, 0.7, 20, 10.0)));
}

TEST_CASE("vanilla improvement bound") {
    const double g = 0.9, b = 0.7, alpha = 2.0, r = 10.0;
    CHECK(api_bound_vanilla(g, b, std::nullopt, alpha, r) == 0.0);
    // alpha beta^{M-1} R <= 2 at M = 20
    const double bm = std::pow(b, 20);
    CHECK(api_bound_vanilla(g, b, 20, alpha, r) ==
          doctest::Approx(g * bm * alpha * std::pow(b, 19) * r * r / (1 - g)).epsilon(1e-12));
    // alpha beta^{M-1} R > 2 at M = 2
    CHECK(api_bound_vanilla(g, b, 2, alpha, r) ==
          doctest::Approx(g * b * b * 2.0 * r / (1 - g)).epsilon(1e-12));
    const double eps = 0.01;
    CHECK(api_bound_vanilla(g, b, 2, alpha, r, eps) ==
          doctest::Approx(g * b * b * 2.0 * (r + eps) / (1 - g) + eval_improvement_term(g, eps))
              .epsilon(1e-12));
    CHECK(eval_improvement_term(g, eps) == doctest::Approx((1 + g) * eps / (1 - g)));
}

TEST_CASE("weight corrected improvement bound") {
    CHECK(api_bound_wc(0.9, 0.7, 20, 0.0) == 0.0);
    CHECK(rel(api_bound_wc(0.9, 0.7, 20, 1.0), 0.014374077335635635) < 1e-12);
    CHECK(api_bound_wc(0.9, 0.7, 20, 2.0) == doctest::Approx(2 * api_bound_wc(0.9, 0.7, 20, 1.0)));
}

TEST_CASE("generic improvement bound") {
    CHECK(api_bound_generic(0.9, 0.4, 0.5, 2.0) == doctest::Approx(0.9 * 0.4 * 0.5 * 2.0 / 0.1));
    CHECK(api_bound_generic(0.9, 0.4, 0.0, 2.0, 0.01) == doctest::Approx(eval_improvement_term(0.9, 0.01)));
}

TEST_CASE("x_k sequence above minimum memory") {
    XkParams p;
    p.gamma = 0.99;
    p.beta = 0.95;
    p.memory = 265;
    const auto s = xk_sequence(p, 200000);
    REQUIRE(s.x.size() == 200001);
    CHECK(s.x.front() == doctest::Approx(2.0));
    CHECK_FALSE(s.diverged);
    for (std::size_t k = 1; k < s.x.size(); ++k) {
        if (s.x[k] > s.x[k - 1] * (1 + 1e-15)) {
            FAIL_CHECK("x increased at k=" << k);
            break;
        }
    }
    for (std::size_t k = 0; k < s.x.size(); ++k) {
        if (s.x[k] > s.x_prime[k] * (1 + 1e-12)) {
            FAIL_CHECK("x above x' at k=" << k);
            break;
        }
    }
    const double dd = s.constants.d1 + s.constants.d2;
    for (std::size_t a = 0; a * (p.memory + 1) < s.x.size(); ++a) {
        const std::size_t k = a * (p.memory + 1);
        CHECK(s.x[k] <= std::pow(dd, static_cast<double>(a)) * s.x[0] * (1 + 1e-12));
        CHECK(s.x[k] <= s.x_double_prime[k] * (1 + 1e-12));
    }
}

TEST_CASE("x_k converges for M = 265 and not for M = 264") {
    XkParams p;
    p.gamma = 0.99;
    p.beta = 0.95;
    p.memory = 265;
    XkRecurrence good(p);
    bool below = false;
    for (std::size_t k = 0; k < 2000000 && !below; ++k) below = good.step() < 1e-3 * good.x0();
    CHECK(below);

    p.memory = 264;
    XkRecurrence bad(p);
    double min_ratio = 1.0;
    for (std::size_t k = 0; k < 2000000; ++k) {
        const double v = bad.step();
        if (k > 100000) min_ratio = std::min(min_ratio, v / bad.x0());
    }
    CHECK(bad.value() > bad.x0());
    CHECK(min_ratio > 0.5);
}

TEST_CASE("x_k is geometric when d2 vanishes") {
    XkParams p;
    p.gamma = 0.9;
    p.beta = 0.5;
    p.memory = 5000;  // beta^M underflows to zero
    XkRecurrence r(p);
    REQUIRE(r.constants().d2 == 0.0);
    const double d1 = r.constants().d1;
    CHECK(d1 == doctest::Approx(exact_rate(0.9, 0.5)).epsilon(1e-15));
    double expect = r.x0();
    for (int k = 1; k <= 300; ++k) {
        expect *= d1;
        CHECK(r.step() == doctest::Approx(expect).epsilon(1e-13));
    }
}

TEST_CASE("x_k with evaluation error settles at the floor") {
    XkParams p;
    p.gamma = 0.9;
    p.beta = 0.7;
    p.memory = 20;
    p.eps_eval = 0.01;
    XkRecurrence r(p);
    const double floor = r.eps_floor();
    const auto& c = r.constants();
    CHECK(floor == doctest::Approx((1 + 0.81) * 0.01 / (0.1 * (1 - c.d1 - c.d2))).epsilon(1e-12));
    for (int k = 0; k < 200000; ++k) r.step();
    CHECK(r.value() == doctest::Approx(floor).epsilon(1e-6));
    CHECK(r.value() <= r.x_prime(r.k()) * (1 + 1e-12));

    p.memory = 19;
    CHECK(std::isinf(XkRecurrence(p).eps_floor()));
}

TEST_CASE("divergent series is truncated and flagged") {
    XkParams p;
    p.gamma = 0.99;
    p.beta = 0.95;
    p.memory = 100;
    const auto s = xk_sequence(p, 10000000);
    CHECK(s.diverged);
    CHECK(s.x.size() < 10000001);
    CHECK(s.x.back() > kDivergenceCap * s.x.front());
}
