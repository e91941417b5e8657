#include <doctest.h>

#include <cmath>

#include "boostlora/bounds.hpp"
#include "boostlora/dataset.hpp"
#include "test_util.hpp"

using namespace boostlora;
using testutil::random_matrix;
using testutil::random_vector;

TEST_CASE("complexity term reproduces the reported operating points") {
    // 2 * 115.6 * 0.81 / (2.6 * sqrt(50000))
    CHECK(complexity_term(115.6, 0.81, 2.6, 50000) == doctest::Approx(0.322).epsilon(0.0065));
    // the ~0.5% regime: X ~ 1, B ~ 0.2, theta 1, n 7500
    CHECK(complexity_term(1.0, 0.2, 1.0, 7500) == doctest::Approx(0.0046).epsilon(0.11));
    CHECK(complexity_term(115.6, 0.0, 2.6, 50000) == 0.0);
    CHECK_THROWS_AS(complexity_term(1.0, 1.0, 0.0, 10), RangeError);
    CHECK_THROWS_AS(complexity_term(1.0, 1.0, -1.0, 10), RangeError);
}

TEST_CASE("margin term counts strictly-below fractions") {
    const std::vector<double> margins{0.5, 1.5, 2.5};
    CHECK(margin_term(margins, 0.1) == 0.0);
    CHECK(margin_term(margins, 3.0) == 1.0);
    CHECK(margin_term(margins, 2.0) == doctest::Approx(2.0 / 3.0));
    // strict comparison: theta exactly on a margin does not count it
    CHECK(margin_term(margins, 1.5) == doctest::Approx(1.0 / 3.0));

    double prev = 0.0;
    for (double theta = 0.05; theta < 4.0; theta += 0.05) {
        const double cur = margin_term(margins, theta);
        CHECK(cur >= prev);
        prev = cur;
    }
}

TEST_CASE("confidence term closed form") {
    CHECK(confidence_term(0.05, 50000) == doctest::Approx(0.006074).epsilon(1e-3));
    const double base = confidence_term(0.1, 1000);
    CHECK(confidence_term(0.1, 4000) == doctest::Approx(base / 2.0).epsilon(1e-12));
    const double delta = 2.0 * std::exp(-2.0); // log(2/delta) = 2
    CHECK(confidence_term(delta, 32) == doctest::Approx(std::sqrt(1.0 / 32.0)).epsilon(1e-12));
    CHECK_THROWS_AS(confidence_term(0.0, 10), RangeError);
    CHECK_THROWS_AS(confidence_term(1.0, 10), RangeError);
}

TEST_CASE("evaluate_bound finds the interior optimum of the reference setup") {
    // Margins uniform on [a, b] chosen so that the analytic minimizer of
    // F(theta) + 2XB/(theta sqrt(n)) sits at theta = 2.6 with F(2.6) = 0.375.
    const double width = 2.6 * 2.6 / (2.0 * 115.6 * 0.81 / std::sqrt(50000.0));
    const double a = 2.6 - 0.375 * width;
    const Index n = 50000;
    std::vector<double> margins(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        margins[std::size_t(i)] =
            a + (static_cast<double>(i) + 0.5) / static_cast<double>(n) * width;
    }
    BoundInputs inputs;
    inputs.margins = margins;
    inputs.b_total = 0.81;
    inputs.x = 115.6;
    inputs.n = n;
    inputs.delta = 0.05;

    CHECK(margin_term(margins, 2.6) == doctest::Approx(0.375).epsilon(1e-9));

    const BoundReport rep = evaluate_bound(inputs, default_theta_grid(margins));
    CHECK(rep.theta_star > 2.35);
    CHECK(rep.theta_star < 2.85);
    CHECK(rep.bound_at_star == doctest::Approx(0.703).epsilon(0.012));
    CHECK_FALSE(rep.vacuous);

    SUBCASE("decomposition identity holds pointwise") {
        for (std::size_t i = 0; i < rep.theta_grid.size(); ++i) {
            const double sum =
                rep.margin_terms[i] + rep.complexity_terms[i] + rep.confidence_term;
            CHECK(std::abs(rep.bounds[i] - sum) < 1e-12);
        }
    }
    SUBCASE("complexity strictly decreasing over the grid") {
        for (std::size_t i = 1; i < rep.theta_grid.size(); ++i) {
            CHECK(rep.complexity_terms[i] < rep.complexity_terms[i - 1]);
        }
    }
}

TEST_CASE("degenerate grids and vacuous bounds") {
    BoundInputs inputs;
    inputs.margins = {1.0, 2.0, 3.0};
    inputs.b_total = 1.0;
    inputs.x = 1.0;
    inputs.n = 3;
    const BoundReport one = evaluate_bound(inputs, {2.0});
    CHECK(one.theta_star == 2.0);

    inputs.x = 1e9;
    const BoundReport huge = evaluate_bound(inputs, default_theta_grid(inputs.margins));
    CHECK(huge.vacuous);
    CHECK(huge.bound_at_star >= 1.0);

    CHECK_THROWS_AS(evaluate_bound(inputs, {}), RangeError);
}

TEST_CASE("complexity is additive over per-round budgets") {
    // Rademacher subadditivity collapses to an identity for the linear term
    const std::vector<double> b{0.1, 0.05, 0.2, 0.01};
    double total = 0.0, parts = 0.0;
    for (double bt : b) {
        total += bt;
        parts += complexity_term(3.7, bt, 1.3, 500);
    }
    CHECK(complexity_term(3.7, total, 1.3, 500) == doctest::Approx(parts).epsilon(1e-12));
}

TEST_CASE("default theta grid spans two decades of the max margin") {
    const std::vector<double> margins{0.5, 4.0, 8.0};
    const auto grid = default_theta_grid(margins);
    REQUIRE(grid.size() == 64);
    CHECK(grid.front() == doctest::Approx(0.08));
    CHECK(grid.back() == doctest::Approx(8.0));
    for (std::size_t i = 1; i < grid.size(); ++i) {
        CHECK(grid[i] > grid[i - 1]);
    }
}

TEST_CASE("feature-norm estimation") {
    const FrozenModel model = make_linear_model(5, 3, 11);
    AdapterConfig cfg;
    cfg.rank = 2;
    cfg.proj_dim = 3;
    cfg.groups = 1;
    cfg.seed = 13;
    const AdapterState adapter = make_adapter_state(cfg, model.adapted_factors(), 1);

    SUBCASE("zero inputs through a bias-free path give zero") {
        FrozenModel biasless = model;
        biasless.linears[0].b.setZero();
        LabeledDataset zeros;
        zeros.num_classes = 3;
        zeros.features = Matrix::Zero(4, 5);
        zeros.labels = {0, 1, 2, 0};
        const AdapterState st = make_adapter_state(cfg, biasless.adapted_factors(), 1);
        CHECK(max_feature_norm(biasless, zeros, st) == 0.0);
    }
    SUBCASE("single example equals its phi norm") {
        LabeledDataset one;
        one.num_classes = 3;
        one.features = random_matrix(1, 5, 17);
        one.labels = {1};
        const auto taps = margin_taps(model, one.features.row(0).transpose(), 1);
        const Vector phi = feature_map(adapter.windows[0], adapter.projections[0], taps[0].h,
                                       taps[0].readout);
        CHECK(max_feature_norm(model, one, adapter) == doctest::Approx(phi.norm()).epsilon(1e-12));
        CHECK(estimate_x(model, one, {adapter}) ==
              doctest::Approx(phi.norm()).epsilon(1e-12));
    }
    SUBCASE("monotone under dataset inclusion") {
        SyntheticSpec spec;
        spec.classes = 3;
        spec.dim = 5;
        spec.n = 30;
        spec.seed = 19;
        const LabeledDataset data = make_gaussian_mixture(spec);
        std::vector<Index> half;
        for (Index i = 0; i < 15; ++i) half.push_back(i);
        const LabeledDataset sub = subset(data, half);
        CHECK(max_feature_norm(model, data, adapter) >=
              max_feature_norm(model, sub, adapter));
    }
}

TEST_CASE("regression audit flags only out-of-budget flips") {
    EvalResult before, after;
    before.margins = {10.0, 0.05, 1.0, -0.2};
    after.margins = {-1.0, -0.1, 2.0, 0.3};

    const RegressionAudit audit = regression_audit(before, after, 1, 0.1, 1.0);
    CHECK(audit.margin_budget == doctest::Approx(0.1));
    REQUIRE(audit.flips.size() == 2); // examples 0 and 1 flipped
    CHECK(audit.flips[0] == 0);
    CHECK(audit.flips[1] == 1);
    // only the margin-10 flip violates m(x) < M*eps*H
    REQUIRE(audit.violations.size() == 1);
    CHECK(audit.violations[0] == 0);
    // 3 correct before, 2 flips
    CHECK(audit.regression_rate == doctest::Approx(2.0 / 3.0));

    const RegressionAudit clean = regression_audit(before, before, 1, 0.1, 1.0);
    CHECK(clean.flips.empty());
    CHECK(clean.regression_rate == 0.0);

    EvalResult mismatched;
    mismatched.margins = {1.0};
    CHECK_THROWS_AS(regression_audit(before, mismatched, 1, 0.1, 1.0), ShapeError);
}
