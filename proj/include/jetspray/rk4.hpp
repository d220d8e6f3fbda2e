#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "jetspray/error.hpp"

namespace jetspray {

/// One classical Runge-Kutta step.  All integrators in the library go
/// through this function, so systems that share leading components (a
/// geodesic and quantities transported along it) reproduce those components
/// bit for bit.
template <class Rhs>
Eigen::VectorXd rk4_increment(const Eigen::VectorXd& y, double h, Rhs&& f) {
    const Eigen::VectorXd k1 = f(y);
    const Eigen::VectorXd k2 = f(Eigen::VectorXd(y + (0.5 * h) * k1));
    const Eigen::VectorXd k3 = f(Eigen::VectorXd(y + (0.5 * h) * k2));
    const Eigen::VectorXd k4 = f(Eigen::VectorXd(y + h * k3));
    return (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

template <class Rhs>
Eigen::VectorXd rk4_step(const Eigen::VectorXd& y, double h, Rhs&& f) {
    return y + rk4_increment(y, h, f);
}

struct Trajectory {
    std::vector<double> t;
    std::vector<Eigen::VectorXd> y;
    bool stopped = false;
    std::string reason;
};

/// Grid t0, t0 + h, ..., t1 with |h| = step; the last step is shortened if
/// (t1 - t0) is not a multiple of step.  t1 < t0 integrates backwards.
inline std::vector<double> fixed_step_grid(double t0, double t1, double step) {
    if (!(step > 0.0)) throw Error(ErrorKind::InvalidArgument, "step must be positive");
    std::vector<double> grid{t0};
    const double span = std::abs(t1 - t0);
    if (span == 0.0) return grid;
    const double h = t1 > t0 ? step : -step;
    const long steps = std::max(1L, static_cast<long>(std::ceil(span / step - 1e-9)));
    for (long k = 1; k < steps; ++k) grid.push_back(t0 + static_cast<double>(k) * h);
    grid.push_back(t1);
    return grid;
}

/// RK4 from y0 over an explicit time grid, with the state updates
/// accumulated by compensated summation.  The run stops early (keeping the
/// accepted prefix) when `check` returns a non-empty reason for a new state,
/// the state turns non-finite, or the right-hand side throws DomainError /
/// OutsideSlashed.
template <class Rhs, class Check>
Trajectory integrate_on_grid(const Eigen::VectorXd& y0, const std::vector<double>& grid, Rhs&& f, Check&& check) {
    Trajectory out;
    if (grid.empty()) throw Error(ErrorKind::InvalidArgument, "empty time grid");
    out.t.push_back(grid.front());
    out.y.push_back(y0);
    Eigen::VectorXd carry = Eigen::VectorXd::Zero(y0.size());
    for (std::size_t k = 1; k < grid.size(); ++k) {
        Eigen::VectorXd next;
        try {
            const Eigen::VectorXd& y = out.y.back();
            const Eigen::VectorXd inc = rk4_increment(y, grid[k] - grid[k - 1], f) - carry;
            next = y + inc;
            carry = (next - y) - inc;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::DomainError && e.kind() != ErrorKind::OutsideSlashed) throw;
            out.stopped = true;
            out.reason = e.what();
            return out;
        }
        if (!next.allFinite()) {
            out.stopped = true;
            out.reason = "non-finite state";
            return out;
        }
        if (std::string why = check(next); !why.empty()) {
            out.stopped = true;
            out.reason = std::move(why);
            return out;
        }
        out.t.push_back(grid[k]);
        out.y.push_back(std::move(next));
    }
    return out;
}

/// integrate_on_grid over fixed_step_grid(t0, t1, step).
template <class Rhs, class Check>
Trajectory integrate_fixed_step(const Eigen::VectorXd& y0, double t0, double t1, double step, Rhs&& f,
                                Check&& check) {
    return integrate_on_grid(y0, fixed_step_grid(t0, t1, step), std::forward<Rhs>(f), std::forward<Check>(check));
}

}  // namespace jetspray
