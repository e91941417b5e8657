#include "boostlora/adapter.hpp"

#include <cmath>
#include <random>
#include <string>

namespace boostlora {

namespace {

// splitmix64; decorrelates the (seed, group, i) stream keys.
std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t stream_key(std::uint64_t seed, std::uint64_t group, std::uint64_t i) {
    return mix64(mix64(mix64(seed) ^ group) ^ (i + 0x51ed2701ULL));
}

} // namespace

ProjectionSet make_projections(const AdapterConfig& cfg, Index group) {
    if (cfg.rank < 1 || cfg.proj_dim < 1 || cfg.groups < 1) {
        throw ConfigError("make_projections: rank, proj_dim and groups must all be >= 1");
    }
    const double stddev = 1.0 / std::sqrt(static_cast<double>(cfg.rank));
    ProjectionSet out;
    out.mats.reserve(static_cast<std::size_t>(cfg.proj_dim));
    for (Index i = 0; i < cfg.proj_dim; ++i) {
        std::mt19937_64 rng(stream_key(cfg.seed, static_cast<std::uint64_t>(group),
                                       static_cast<std::uint64_t>(i)));
        std::normal_distribution<double> gauss(0.0, stddev);
        Matrix p(cfg.rank, cfg.rank);
        for (Index r = 0; r < cfg.rank; ++r) {
            for (Index c = 0; c < cfg.rank; ++c) {
                p(r, c) = gauss(rng);
            }
        }
        out.mats.push_back(std::move(p));
    }
    return out;
}

TyingAssignment tie_modules(Index num_modules, Index g) {
    if (g < 1) {
        throw ConfigError("tie_modules: need at least one group");
    }
    if (g > num_modules) {
        throw ConfigError("tie_modules: " + std::to_string(g) + " groups exceed " +
                          std::to_string(num_modules) + " modules");
    }
    TyingAssignment out;
    out.groups = g;
    out.group_of_module.resize(static_cast<std::size_t>(num_modules));
    for (Index m = 0; m < num_modules; ++m) {
        out.group_of_module[static_cast<std::size_t>(m)] = m % g;
    }
    return out;
}

Matrix build_r(const Vector& v, const ProjectionSet& p) {
    if (v.size() != p.size()) {
        throw ShapeError("build_r: v has length " + std::to_string(v.size()) + " but " +
                         std::to_string(p.size()) + " projections exist");
    }
    if (p.size() == 0) {
        throw ShapeError("build_r: empty projection set");
    }
    Matrix r = Matrix::Zero(p.mats[0].rows(), p.mats[0].cols());
    for (Index i = 0; i < p.size(); ++i) {
        r += v(i) * p.mats[static_cast<std::size_t>(i)];
    }
    return r;
}

Matrix delta_w(const SvdFactors& window, const Matrix& r_mat) {
    const Index r = window.sigma.size();
    if (r_mat.rows() != r || r_mat.cols() != r) {
        throw ShapeError("delta_w: R is " + std::to_string(r_mat.rows()) + "x" +
                         std::to_string(r_mat.cols()) + " but the window has rank " +
                         std::to_string(r));
    }
    return window.u * (window.sigma.asDiagonal() * r_mat) * window.v.transpose();
}

SvdFactors select_window(const SvdFactors& f, Basis basis, Index r, Index round) {
    const Index p = f.sigma.size();
    if (round < 1) {
        throw RangeError("select_window: rounds are 1-based, got " + std::to_string(round));
    }
    if (basis == Basis::Top) {
        if (r > p) {
            throw CapacityError("select_window: top window of rank " + std::to_string(r) +
                                " exceeds the " + std::to_string(p) + " available singular vectors");
        }
        return truncate(f, 0, r);
    }
    if (r * round > p) {
        throw CapacityError("select_window: rotate basis exhausted at round " +
                            std::to_string(round) + " (needs " + std::to_string(r * round) +
                            " of " + std::to_string(p) + " singular vectors)");
    }
    return truncate(f, r * (round - 1), r);
}

Matrix merge(const Matrix& w, const Matrix& delta) {
    if (w.rows() != delta.rows() || w.cols() != delta.cols()) {
        throw ShapeError("merge: weight is " + std::to_string(w.rows()) + "x" +
                         std::to_string(w.cols()) + " but delta is " + std::to_string(delta.rows()) +
                         "x" + std::to_string(delta.cols()));
    }
    return w + delta;
}

Vector feature_map(const SvdFactors& window, const ProjectionSet& p, const Vector& h,
                   const Vector& readout) {
    if (h.size() != window.v.rows()) {
        throw ShapeError("feature_map: h has length " + std::to_string(h.size()) +
                         ", window expects " + std::to_string(window.v.rows()));
    }
    if (readout.size() != window.u.rows()) {
        throw ShapeError("feature_map: readout has length " + std::to_string(readout.size()) +
                         ", window expects " + std::to_string(window.u.rows()));
    }
    const Vector left = window.sigma.asDiagonal() * (window.u.transpose() * readout);
    const Vector right = window.v.transpose() * h;
    Vector phi(p.size());
    for (Index i = 0; i < p.size(); ++i) {
        phi(i) = left.dot(p.mats[static_cast<std::size_t>(i)] * right);
    }
    return phi;
}

Vector grad_v(const Matrix& upstream, const SvdFactors& window, const ProjectionSet& p,
              const Matrix& h) {
    if (upstream.rows() != h.rows()) {
        throw ShapeError("grad_v: upstream batch has " + std::to_string(upstream.rows()) +
                         " rows, h has " + std::to_string(h.rows()));
    }
    Vector g = Vector::Zero(p.size());
    for (Index b = 0; b < upstream.rows(); ++b) {
        g += feature_map(window, p, h.row(b).transpose(), upstream.row(b).transpose());
    }
    return g;
}

Matrix AdapterState::r_for_module(Index m) const {
    const Index g = tying.group_of_module[static_cast<std::size_t>(m)];
    return build_r(v[static_cast<std::size_t>(g)], projections[static_cast<std::size_t>(g)]);
}

Matrix AdapterState::delta_for_module(Index m) const {
    return delta_w(windows[static_cast<std::size_t>(m)], r_for_module(m));
}

Vector AdapterState::apply(Index m, const Vector& h) const {
    const Index g = tying.group_of_module[static_cast<std::size_t>(m)];
    const SvdFactors& win = windows[static_cast<std::size_t>(m)];
    if (!group_active(g)) {
        return Vector::Zero(win.u.rows());
    }
    const Matrix r = r_for_module(m);
    const Vector right = r * (win.v.transpose() * h);
    return win.u * (win.sigma.asDiagonal() * right);
}

Vector AdapterState::apply_transpose(Index m, const Vector& g) const {
    const Index grp = tying.group_of_module[static_cast<std::size_t>(m)];
    const SvdFactors& win = windows[static_cast<std::size_t>(m)];
    if (!group_active(grp)) {
        return Vector::Zero(win.v.rows());
    }
    const Matrix r = r_for_module(m);
    const Vector left = r.transpose() * (win.sigma.asDiagonal() * (win.u.transpose() * g));
    return win.v * left;
}

void AdapterState::reset_v() {
    for (auto& vg : v) {
        vg.setZero();
    }
}

double AdapterState::v_norm() const {
    double sq = 0.0;
    for (const auto& vg : v) {
        sq += vg.squaredNorm();
    }
    return std::sqrt(sq);
}

Vector AdapterState::v_concat() const {
    Vector flat(cfg.trainable_params());
    Index at = 0;
    for (const auto& vg : v) {
        flat.segment(at, vg.size()) = vg;
        at += vg.size();
    }
    return flat;
}

void AdapterState::set_v_concat(const Vector& flat) {
    if (flat.size() != cfg.trainable_params()) {
        throw ShapeError("set_v_concat: expected " + std::to_string(cfg.trainable_params()) +
                         " entries, got " + std::to_string(flat.size()));
    }
    Index at = 0;
    for (auto& vg : v) {
        vg = flat.segment(at, vg.size());
        at += vg.size();
    }
}

AdapterState make_adapter_state(const AdapterConfig& cfg,
                                const std::vector<SvdFactors>& full_factors, Index round) {
    AdapterState st;
    st.cfg = cfg;
    st.tying = tie_modules(static_cast<Index>(full_factors.size()), cfg.groups);
    st.v.assign(static_cast<std::size_t>(cfg.groups), Vector::Zero(cfg.proj_dim));
    st.projections.reserve(static_cast<std::size_t>(cfg.groups));
    for (Index g = 0; g < cfg.groups; ++g) {
        st.projections.push_back(make_projections(cfg, g));
    }
    st.windows.reserve(full_factors.size());
    for (const auto& f : full_factors) {
        st.windows.push_back(select_window(f, cfg.basis, cfg.rank, round));
    }
    return st;
}

} // namespace boostlora
