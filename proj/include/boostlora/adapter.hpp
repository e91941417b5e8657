#ifndef BOOSTLORA_ADAPTER_HPP
#define BOOSTLORA_ADAPTER_HPP

#include <cstdint>
#include <vector>

#include "boostlora/linalg.hpp"

namespace boostlora {

enum class Basis { Top, Rotate };

/// Micro-adapter shape: rank of each round's window, projection dimension,
/// number of tying groups. Trainable parameters per round = groups * proj_dim.
struct AdapterConfig {
    Index rank = 2;
    Index proj_dim = 3;
    Index groups = 4;
    Basis basis = Basis::Rotate;
    std::uint64_t seed = 0;
    double epsilon_rank_eps = 0.01;

    Index trainable_params() const { return groups * proj_dim; }
};

/// The frozen random r x r projections of one tying group.
struct ProjectionSet {
    std::vector<Matrix> mats;

    Index size() const { return static_cast<Index>(mats.size()); }
};

/// module_index -> group_index, tiled: group(m) = m mod g.
struct TyingAssignment {
    std::vector<Index> group_of_module;
    Index groups = 0;

    Index modules() const { return static_cast<Index>(group_of_module.size()); }
};

/// Draws the u frozen projections of one group: i.i.d. Gaussian entries with
/// mean 0 and variance 1/rank, from a stream keyed by (seed, group, i) so the
/// draw for one group never depends on how many groups exist.
ProjectionSet make_projections(const AdapterConfig& cfg, Index group);

/// Tiled assignment of num_modules adapted modules to g groups.
/// Throws ConfigError when g exceeds num_modules.
TyingAssignment tie_modules(Index num_modules, Index g);

/// R = sum_i v_i P_i. Linear in v.
Matrix build_r(const Vector& v, const ProjectionSet& p);

/// Delta W = U diag(sigma) R V^T for the given window.
Matrix delta_w(const SvdFactors& window, const Matrix& r_mat);

/// Basis strategy. Rounds are 1-based: Top always takes the leading r
/// columns, Rotate takes columns [r*(round-1), r*round).
/// Throws CapacityError when Rotate runs past the available spectrum.
SvdFactors select_window(const SvdFactors& f, Basis basis, Index r, Index round);

/// W + Delta, checked for matching shapes. The adapter that produced Delta is
/// discardable afterwards.
Matrix merge(const Matrix& w, const Matrix& delta);

/// phi_i = readout^T U diag(sigma) P_i V^T h. The adapter's effect on the
/// readout direction's logit is exactly <v, phi>.
Vector feature_map(const SvdFactors& window, const ProjectionSet& p, const Vector& h,
                   const Vector& readout);

/// dL/dv_i = sum over batch rows of upstream^T U diag(sigma) P_i V^T h,
/// where row b of `upstream` is dL/d(module output) and row b of `h` is the
/// module input for example b.
Vector grad_v(const Matrix& upstream, const SvdFactors& window, const ProjectionSet& p,
              const Matrix& h);

/// The live adapter of one boosting round: per-group trainable vectors and
/// frozen projections, plus each adapted module's SVD window. Windows and
/// projections are immutable once built; only v changes during training.
struct AdapterState {
    AdapterConfig cfg;
    TyingAssignment tying;
    std::vector<Vector> v;                  // per group, length proj_dim
    std::vector<ProjectionSet> projections; // per group
    std::vector<SvdFactors> windows;        // per adapted module

    bool group_active(Index g) const { return !v[static_cast<std::size_t>(g)].isZero(0.0); }

    /// R for the group owning module m.
    Matrix r_for_module(Index m) const;

    /// Materialized Delta W of module m under the current v.
    Matrix delta_for_module(Index m) const;

    /// Applies the factored update U (sigma o (R (V^T h))) to a module input;
    /// returns the contribution to the module output. Skips work (and returns
    /// an exact zero) when the owning group's v is identically zero.
    Vector apply(Index m, const Vector& h) const;

    /// Delta^T g = V R^T (sigma o (U^T g)); the backward counterpart of apply.
    Vector apply_transpose(Index m, const Vector& g) const;

    void reset_v();
    double v_norm() const; ///< l2 norm of all groups' v concatenated
    Vector v_concat() const;
    void set_v_concat(const Vector& flat);
};

/// Builds a fresh adapter (v = 0) for one round: selects each module's window
/// from its full factors and wires the tied groups.
AdapterState make_adapter_state(const AdapterConfig& cfg,
                                const std::vector<SvdFactors>& full_factors, Index round);

} // namespace boostlora

#endif // BOOSTLORA_ADAPTER_HPP
