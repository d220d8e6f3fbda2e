#pragma once

// Geodesic variations V(t, s^1..s^k) and the correspondence between their
// mixed parameter derivatives and geodesics of the lifted sprays S^(r).

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "jetspray/bundle.hpp"
#include "jetspray/flow.hpp"
#include "jetspray/spray.hpp"

namespace jetspray {

/// Mixed derivatives are taken by finite differences up to this order.
inline constexpr int kMaxDerivativeDepth = 3;

struct InitialCondition {
    Eigen::VectorXd x;
    Eigen::VectorXd v;
};

/// A k-parameter family of geodesics: for each s in (-eps, eps)^k the
/// geodesic with initial condition init(s) at t_init, sampled on [t_lo, t_hi].
struct GeodesicVariation {
    Semispray spray;
    int k = 1;
    double eps = 0.1;
    std::function<InitialCondition(std::span<const double>)> init;
    double t_lo = 0.0;
    double t_hi = 1.0;
    double t_init = 0.0;
    double step = kDefaultStep;
};

/// An order-r curve j(t) in T^r M together with its velocity blocks.
struct DerivedCurve {
    int r = 0;
    std::vector<double> t_grid;
    std::vector<BundlePoint> pos;
    std::vector<BundlePoint> vel;
};

struct StencilOptions {
    double h_s = 1e-3;
    bool richardson = true;
};

/// The geodesic s -> V(., s) as an order-0 record.  TruncatedVariation if it
/// does not cover the span; InvalidArgument for s outside (-eps, eps)^k.
GeodesicRecord variation_geodesic(const GeodesicVariation& V, std::span<const double> s);

/// V(t, s) integrated directly to t.
Eigen::VectorXd evaluate_variation(const GeodesicVariation& V, double t, std::span<const double> s);

/// d_{s^{i_1}} ... d_{s^{i_r}} V at s = 0 along the t-grid, indices 1-based
/// and possibly repeated.  Bit j of the result holds the derivative in
/// s^{i_{r-j+1}}.  Central differences, optionally with one Richardson level.
/// DepthCap for r > 3.
DerivedCurve mixed_derivative(const GeodesicVariation& V, std::span<const int> indices,
                              const StencilOptions& options = {});

/// Max block discrepancy between mixed_derivative and the S^(r) geodesic
/// started from its initial state.
double verify_variation_theorem_forward(const GeodesicVariation& V, std::span<const int> indices,
                                        const StencilOptions& options = {});

struct Reconstruction {
    GeodesicVariation variation;
    /// Final half-width after halving from 0.1.
    double eps = 0.0;
};

/// r-parameter variation whose mixed derivative d_{s^1}...d_{s^r} V|_0 is
/// the S^(r) geodesic g.  The t-span of g is extended by one step on each
/// side.  ShrinkEpsilon if no half-width >= 1e-8 keeps every initial
/// condition on a 5^r grid slashed and inside the chart.
Reconstruction variation_from_geodesic(const Semispray& spray, const GeodesicRecord& g);

/// Half-width 0.1 / 2^m for the smallest m such that velocity_margin(eps) > 0
/// (a lower bound for |v(s)| on the whole cube) and every init(s) on a 5^k
/// grid over [-eps, eps]^k is slashed and inside the chart.  ShrinkEpsilon
/// below 1e-8.
double select_half_width(const Semispray& spray, int k,
                         const std::function<InitialCondition(std::span<const double>)>& init,
                         const std::function<double(double)>& velocity_margin);

/// Keep the grid points of g with t in [t_lo, t_hi].
GeodesicRecord restrict_record(const GeodesicRecord& g, double t_lo, double t_hi);

/// Max discrepancy between g and mixed_derivative(V, (1..r)) of its
/// reconstruction, over the grid times of g.
double round_trip_residual(const Semispray& spray, const GeodesicRecord& g, const StencilOptions& options = {});

/// Max over a of |p^(r)_a(d_{s^1}...d_{s^r} V) - d_{s^{r-a+1}} V| along the grid.
double projection_identity_check(const GeodesicVariation& V, int r, const StencilOptions& options = {});

}  // namespace jetspray
