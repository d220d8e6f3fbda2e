#pragma once

// Geodesics of the lifted semisprays S^(r): curves gamma in T^r M with
// gamma'' = S^(r)(gamma'), integrated with fixed-step RK4.

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jetspray/bundle.hpp"
#include "jetspray/spray.hpp"

namespace jetspray {

inline constexpr double kDefaultStep = 1e-3;
/// Base velocities below this norm count as leaving the slashed bundle.
inline constexpr double kSlashedThreshold = 1e-12;
/// Base positions beyond this norm count as leaving the chart (e.g. reaching
/// the pole of the stereographic sphere chart).
inline constexpr double kChartEscape = 1e8;

enum class RecordStatus { Complete, LeftSlashed, LeftDomain, NonFinite };

std::string_view to_string(RecordStatus status) noexcept;

struct GeodesicRecord {
    std::string spray_label;
    int r = 0;
    std::vector<double> t_grid;
    std::vector<BundlePoint> pos;
    /// Velocities as order-r points (the fiber half of gamma').
    std::vector<BundlePoint> vel;
    double step = kDefaultStep;
    RecordStatus status = RecordStatus::Complete;
    std::string exit_reason;

    bool truncated() const noexcept { return status != RecordStatus::Complete; }
    std::size_t size() const noexcept { return t_grid.size(); }
    /// Index of the grid point closest to t.
    std::size_t index_of(double t) const;
    /// The T^{r+1} M point gamma'(t_k).
    BundlePoint state(std::size_t k) const { return join_top(pos[k], vel[k]); }
};

/// Throws TruncatedRecord if the record stopped early.
void require_complete(const GeodesicRecord& record);

/// Integrate S^(r) from (xi0, eta0) at t0 to t1 (t1 < t0 runs backwards).
/// OutsideSlashed if the initial state is not in the slashed bundle; a
/// mid-flight exit returns the accepted prefix with status and reason set.
GeodesicRecord integrate_geodesic(const Semispray& spray, const BundlePoint& xi0, const BundlePoint& eta0,
                                  double t0, double t1, double step = kDefaultStep);

/// Same as integrate_geodesic with the initial state given at t_init and the
/// grid covering [t_lo, t_hi] (t_lo <= t_init <= t_hi) in ascending order.
GeodesicRecord integrate_geodesic_span(const Semispray& spray, const BundlePoint& xi0, const BundlePoint& eta0,
                                       double t_lo, double t_hi, double step = kDefaultStep, double t_init = 0.0);

/// Geodesic flow phi^(r)_t of S^(r) on T^{r+1} M; r is state.r() - 1.
BundlePoint flow_map(const Semispray& spray, const BundlePoint& state, double t, double step = kDefaultStep);

/// Max block discrepancy between phi^(r+1)_t(xi) and
/// kappa_{r+2} o D phi^(r)_t o kappa_{r+2}(xi), the tangent map taken by
/// central differences with step fd_step.  xi is an order r+2 point.
double check_flow_lift(const Semispray& spray, const BundlePoint& xi, double t, double step = kDefaultStep,
                       double fd_step = 1e-5);

/// Apply a block map (projection, involution) to every position and velocity.
GeodesicRecord map_record(const GeodesicRecord& record, const std::function<BundlePoint(const BundlePoint&)>& f);

/// The r Jacobi fields p^(r)_a o j, a = 1..r.  BadOrder for r = 0.
std::vector<GeodesicRecord> extract_jacobi_fields(const GeodesicRecord& record);

/// Post-hoc residual of gamma'' = S^(r) o gamma' on a record: the larger of
/// |d pos/dt - vel| and |d vel/dt - lifted_rhs| over interior grid points,
/// derivatives by fourth-order central differences.
double geodesic_residual(const Semispray& spray, const GeodesicRecord& record);

/// Flattening helpers between bundle points and Eigen vectors.
Eigen::VectorXd to_vector(const BundlePoint& p);
BundlePoint to_point(int n, int r, const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace jetspray
