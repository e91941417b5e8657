#include "boostlora/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "boostlora/parallel.hpp"

namespace boostlora {

double complexity_term(double x, double b_total, double theta, Index n) {
    if (!(theta > 0.0)) {
        throw RangeError("complexity_term: theta must be positive");
    }
    if (n < 1) {
        throw RangeError("complexity_term: n must be at least 1");
    }
    return 2.0 * x * b_total / (theta * std::sqrt(static_cast<double>(n)));
}

double margin_term(const std::vector<double>& margins, double theta) {
    if (!(theta > 0.0)) {
        throw RangeError("margin_term: theta must be positive");
    }
    if (margins.empty()) {
        return 0.0;
    }
    std::size_t below = 0;
    for (double m : margins) {
        if (m < theta) {
            ++below;
        }
    }
    return static_cast<double>(below) / static_cast<double>(margins.size());
}

double confidence_term(double delta, Index n) {
    if (!(delta > 0.0 && delta < 1.0)) {
        throw RangeError("confidence_term: delta must lie in (0,1)");
    }
    if (n < 1) {
        throw RangeError("confidence_term: n must be at least 1");
    }
    return std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(n)));
}

BoundReport evaluate_bound(const BoundInputs& inputs, const std::vector<double>& grid) {
    if (grid.empty()) {
        throw RangeError("evaluate_bound: empty theta grid");
    }
    BoundReport rep;
    rep.theta_grid = grid;
    rep.confidence_term = confidence_term(inputs.delta, inputs.n);
    rep.margin_terms.reserve(grid.size());
    rep.complexity_terms.reserve(grid.size());
    rep.bounds.reserve(grid.size());

    double best = std::numeric_limits<double>::infinity();
    double best_theta = 0.0;
    for (double theta : grid) {
        const double mt = margin_term(inputs.margins, theta);
        const double ct = complexity_term(inputs.x, inputs.b_total, theta, inputs.n);
        const double b = mt + ct + rep.confidence_term;
        rep.margin_terms.push_back(mt);
        rep.complexity_terms.push_back(ct);
        rep.bounds.push_back(b);
        if (b < best || (b == best && theta < best_theta)) {
            best = b;
            best_theta = theta;
        }
    }
    rep.theta_star = best_theta;
    rep.bound_at_star = best;
    rep.vacuous = best >= 1.0;
    return rep;
}

std::vector<double> default_theta_grid(const std::vector<double>& margins) {
    double max_margin = 0.0;
    for (double m : margins) {
        max_margin = std::max(max_margin, m);
    }
    if (max_margin <= 0.0) {
        max_margin = 1.0; // degenerate margin set; fall back to a unit span
    }
    const int points = 64;
    const double lo = std::log(0.01 * max_margin);
    const double hi = std::log(max_margin);
    std::vector<double> grid(points);
    for (int i = 0; i < points; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(points - 1);
        grid[static_cast<std::size_t>(i)] = std::exp(lo + frac * (hi - lo));
    }
    return grid;
}

double max_feature_norm(const FrozenModel& model, const LabeledDataset& data,
                        const AdapterState& adapter, int threads) {
    const Index n = data.size();
    const Index chunks = chunk_count(n);
    std::vector<double> partial(static_cast<std::size_t>(chunks), 0.0);
    parallel_chunks(n, threads, [&](Index c, Index begin, Index end) {
        double& best = partial[static_cast<std::size_t>(c)];
        for (Index i = begin; i < end; ++i) {
            const auto taps = margin_taps(model, data.features.row(i).transpose(),
                                          data.labels[static_cast<std::size_t>(i)]);
            double sq = 0.0;
            for (Index g = 0; g < adapter.cfg.groups; ++g) {
                Vector phi = Vector::Zero(adapter.cfg.proj_dim);
                for (Index m = 0; m < adapter.tying.modules(); ++m) {
                    if (adapter.tying.group_of_module[static_cast<std::size_t>(m)] != g) {
                        continue;
                    }
                    phi += feature_map(adapter.windows[static_cast<std::size_t>(m)],
                                       adapter.projections[static_cast<std::size_t>(g)],
                                       taps[static_cast<std::size_t>(m)].h,
                                       taps[static_cast<std::size_t>(m)].readout);
                }
                sq += phi.squaredNorm();
            }
            best = std::max(best, std::sqrt(sq));
        }
    });
    double best = 0.0;
    for (double b : partial) {
        best = std::max(best, b);
    }
    return best;
}

double estimate_x(const FrozenModel& model, const LabeledDataset& data,
                  const std::vector<AdapterState>& rounds, int threads) {
    double best = 0.0;
    for (const auto& st : rounds) {
        best = std::max(best, max_feature_norm(model, data, st, threads));
    }
    return best;
}

RegressionAudit regression_audit(const EvalResult& before, const EvalResult& after, Index m,
                                 double eps, double h) {
    if (before.margins.size() != after.margins.size()) {
        throw ShapeError("regression_audit: prediction sets have different sizes");
    }
    RegressionAudit audit;
    audit.margin_budget = static_cast<double>(m) * eps * h;
    std::size_t correct_before = 0;
    for (std::size_t i = 0; i < before.margins.size(); ++i) {
        const bool was_correct = before.margins[i] > 0.0;
        const bool now_correct = after.margins[i] > 0.0;
        if (was_correct) {
            ++correct_before;
        }
        if (was_correct && !now_correct) {
            audit.flips.push_back(static_cast<Index>(i));
            if (!(before.margins[i] < audit.margin_budget)) {
                audit.violations.push_back(static_cast<Index>(i));
            }
        }
    }
    audit.regression_rate = correct_before == 0
                                ? 0.0
                                : static_cast<double>(audit.flips.size()) /
                                      static_cast<double>(correct_before);
    return audit;
}

} // namespace boostlora
