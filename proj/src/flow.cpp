#include "jetspray/flow.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "jetspray/rk4.hpp"

namespace jetspray {

std::string_view to_string(RecordStatus status) noexcept {
    switch (status) {
    case RecordStatus::Complete: return "complete";
    case RecordStatus::LeftSlashed: return "left_slashed";
    case RecordStatus::LeftDomain: return "left_domain";
    case RecordStatus::NonFinite: return "non_finite";
    }
    return "unknown";
}

std::size_t GeodesicRecord::index_of(double t) const {
    if (t_grid.empty()) throw Error(ErrorKind::GridTooShort, "empty record");
    const auto it = std::lower_bound(t_grid.begin(), t_grid.end(), t);
    if (it == t_grid.begin()) return 0;
    if (it == t_grid.end()) return t_grid.size() - 1;
    const std::size_t k = static_cast<std::size_t>(it - t_grid.begin());
    return (t - t_grid[k - 1] <= t_grid[k] - t) ? k - 1 : k;
}

void require_complete(const GeodesicRecord& record) {
    if (record.truncated()) {
        throw Error(ErrorKind::TruncatedRecord,
                    std::string(to_string(record.status)) + " at t = " +
                        (record.t_grid.empty() ? std::string("?") : std::to_string(record.t_grid.back())) + ": " +
                        record.exit_reason);
    }
}

Eigen::VectorXd to_vector(const BundlePoint& p) {
    return Eigen::Map<const Eigen::VectorXd>(p.data().data(), static_cast<Eigen::Index>(p.data().size()));
}

BundlePoint to_point(int n, int r, const Eigen::Ref<const Eigen::VectorXd>& v) {
    return BundlePoint(n, r, std::vector<double>(v.data(), v.data() + v.size()));
}

namespace {

struct GeodesicSystem {
    const Semispray& spray;
    int n;
    int r;
    Eigen::Index half;

    Eigen::VectorXd operator()(const Eigen::VectorXd& z) const {
        const BundlePoint xi = to_point(n, r, z.head(half));
        const BundlePoint eta = to_point(n, r, z.tail(half));
        const BundlePoint acc = lifted_rhs(spray, xi, eta);
        Eigen::VectorXd dz(z.size());
        dz.head(half) = z.tail(half);
        dz.tail(half) = to_vector(acc);
        return dz;
    }

    std::string check(const Eigen::VectorXd& z) const {
        if (z.segment(half, n).norm() < kSlashedThreshold) return "base velocity below slashed threshold";
        const Eigen::VectorXd x = z.head(n);
        if (x.norm() > kChartEscape) return "position escaped the chart";
        if (!spray.in_domain(std::span<const double>(x.data(), static_cast<std::size_t>(n)))) {
            return "left the chart domain";
        }
        return {};
    }
};

RecordStatus classify(const std::string& reason) {
    if (reason.find("slashed") != std::string::npos || reason.find("OutsideSlashed") != std::string::npos ||
        reason.find("velocity") != std::string::npos) {
        return RecordStatus::LeftSlashed;
    }
    if (reason.find("non-finite") != std::string::npos) return RecordStatus::NonFinite;
    return RecordStatus::LeftDomain;
}

GeodesicRecord to_record(const Semispray& spray, int n, int r, double step, const Trajectory& traj) {
    GeodesicRecord rec;
    rec.spray_label = spray.label();
    rec.r = r;
    rec.step = step;
    rec.t_grid = traj.t;
    const Eigen::Index half = static_cast<Eigen::Index>(n) << r;
    rec.pos.reserve(traj.y.size());
    rec.vel.reserve(traj.y.size());
    for (const auto& z : traj.y) {
        rec.pos.push_back(to_point(n, r, z.head(half)));
        rec.vel.push_back(to_point(n, r, z.tail(half)));
    }
    if (traj.stopped) {
        rec.status = classify(traj.reason);
        rec.exit_reason = traj.reason;
    }
    return rec;
}

void check_initial(const Semispray& spray, const BundlePoint& xi0, const BundlePoint& eta0) {
    if (xi0.n() != spray.n() || eta0.n() != spray.n() || xi0.r() != eta0.r()) {
        throw Error(ErrorKind::OrderMismatch, "initial state does not match spray dimension or lift order");
    }
    if (!in_slashed(join_top(xi0, eta0))) {
        throw Error(ErrorKind::OutsideSlashed, "initial base velocity is zero");
    }
    if (!spray.in_domain(xi0.block(0))) {
        throw Error(ErrorKind::DomainError, "initial point outside the chart");
    }
}

}  // namespace

GeodesicRecord integrate_geodesic(const Semispray& spray, const BundlePoint& xi0, const BundlePoint& eta0,
                                  double t0, double t1, double step) {
    check_initial(spray, xi0, eta0);
    const int n = spray.n();
    const int r = xi0.r();
    GeodesicSystem sys{spray, n, r, static_cast<Eigen::Index>(n) << r};
    Eigen::VectorXd z0(2 * sys.half);
    z0 << to_vector(xi0), to_vector(eta0);
    const Trajectory traj = integrate_fixed_step(
        z0, t0, t1, step, sys, [&sys](const Eigen::VectorXd& z) { return sys.check(z); });
    return to_record(spray, n, r, step, traj);
}

GeodesicRecord integrate_geodesic_span(const Semispray& spray, const BundlePoint& xi0, const BundlePoint& eta0,
                                       double t_lo, double t_hi, double step, double t_init) {
    if (t_lo > t_init || t_hi < t_init) {
        throw Error(ErrorKind::InvalidArgument, "span must contain the initial time");
    }
    GeodesicRecord fwd = integrate_geodesic(spray, xi0, eta0, t_init, t_hi, step);
    if (t_lo == t_init) return fwd;
    GeodesicRecord bwd = integrate_geodesic(spray, xi0, eta0, t_init, t_lo, step);
    GeodesicRecord out;
    out.spray_label = fwd.spray_label;
    out.r = fwd.r;
    out.step = step;
    for (std::size_t k = bwd.size(); k-- > 1;) {
        out.t_grid.push_back(bwd.t_grid[k]);
        out.pos.push_back(bwd.pos[k]);
        out.vel.push_back(bwd.vel[k]);
    }
    out.t_grid.insert(out.t_grid.end(), fwd.t_grid.begin(), fwd.t_grid.end());
    out.pos.insert(out.pos.end(), fwd.pos.begin(), fwd.pos.end());
    out.vel.insert(out.vel.end(), fwd.vel.begin(), fwd.vel.end());
    if (bwd.truncated()) {
        out.status = bwd.status;
        out.exit_reason = "backward: " + bwd.exit_reason;
    } else if (fwd.truncated()) {
        out.status = fwd.status;
        out.exit_reason = fwd.exit_reason;
    }
    return out;
}

BundlePoint flow_map(const Semispray& spray, const BundlePoint& state, double t, double step) {
    auto [xi, eta] = split_top(state);
    if (t == 0.0) {
        check_initial(spray, xi, eta);
        return state;
    }
    const GeodesicRecord rec = integrate_geodesic(spray, xi, eta, 0.0, t, step);
    require_complete(rec);
    return rec.state(rec.size() - 1);
}

double check_flow_lift(const Semispray& spray, const BundlePoint& xi, double t, double step, double fd_step) {
    const int top = xi.r();
    if (top < 2) throw Error(ErrorKind::BadOrder, "flow lift identity needs a point of T^{r+2}M");
    const BundlePoint lhs = flow_map(spray, xi, t, step);

    const auto [base, fiber] = split_top(involution(xi, top));
    BundlePoint tangent = fiber;
    const BundlePoint image = flow_map(spray, base, t, step);
    if (t != 0.0) {
        BundlePoint plus = base, minus = base;
        for (std::size_t i = 0; i < base.data().size(); ++i) {
            plus.data()[i] += fd_step * fiber.data()[i];
            minus.data()[i] -= fd_step * fiber.data()[i];
        }
        const BundlePoint fp = flow_map(spray, plus, t, step);
        const BundlePoint fm = flow_map(spray, minus, t, step);
        for (std::size_t i = 0; i < tangent.data().size(); ++i) {
            tangent.data()[i] = (fp.data()[i] - fm.data()[i]) / (2.0 * fd_step);
        }
    }
    const BundlePoint rhs = involution(join_top(image, tangent), top);
    return max_abs_diff(lhs, rhs);
}

GeodesicRecord map_record(const GeodesicRecord& record, const std::function<BundlePoint(const BundlePoint&)>& f) {
    GeodesicRecord out;
    out.spray_label = record.spray_label;
    out.t_grid = record.t_grid;
    out.step = record.step;
    out.status = record.status;
    out.exit_reason = record.exit_reason;
    out.pos.reserve(record.size());
    out.vel.reserve(record.size());
    for (std::size_t k = 0; k < record.size(); ++k) {
        out.pos.push_back(f(record.pos[k]));
        out.vel.push_back(f(record.vel[k]));
    }
    out.r = out.pos.empty() ? record.r : out.pos.front().r();
    return out;
}

std::vector<GeodesicRecord> extract_jacobi_fields(const GeodesicRecord& record) {
    if (record.r < 1) throw Error(ErrorKind::BadOrder, "Jacobi fields need a geodesic of S^(r) with r >= 1");
    if (record.r == 1) return {record};
    std::vector<GeodesicRecord> out;
    for (int a = 1; a <= record.r; ++a) {
        out.push_back(map_record(record, [a](const BundlePoint& p) { return canonical_projection(p, a); }));
    }
    return out;
}

double geodesic_residual(const Semispray& spray, const GeodesicRecord& record) {
    const std::size_t m = record.size();
    if (m < 5) throw Error(ErrorKind::GridTooShort, "residual needs at least 5 grid points");
    double worst = 0.0;
    bool any = false;
    for (std::size_t k = 2; k + 2 < m; ++k) {
        const double h = record.t_grid[k + 1] - record.t_grid[k];
        bool uniform = true;
        for (int j = -2; j <= 2; ++j) {
            const double dt = record.t_grid[k + static_cast<std::size_t>(j + 2) - 2] - record.t_grid[k];
            if (std::abs(dt - j * h) > 1e-9 * std::abs(h)) uniform = false;
        }
        if (!uniform) continue;
        any = true;
        const BundlePoint acc = lifted_rhs(spray, record.pos[k], record.vel[k]);
        const std::size_t len = record.pos[k].data().size();
        for (std::size_t i = 0; i < len; ++i) {
            auto d = [&](const std::vector<BundlePoint>& f) {
                return (f[k - 2].data()[i] - 8.0 * f[k - 1].data()[i] + 8.0 * f[k + 1].data()[i] -
                        f[k + 2].data()[i]) /
                       (12.0 * h);
            };
            worst = std::max(worst, std::abs(d(record.pos) - record.vel[k].data()[i]));
            worst = std::max(worst, std::abs(d(record.vel) - acc.data()[i]));
        }
    }
    if (!any) throw Error(ErrorKind::GridTooShort, "no uniformly spaced interior points");
    return worst;
}

}  // namespace jetspray
