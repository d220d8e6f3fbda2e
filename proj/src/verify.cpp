#include "jetspray/verify.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "jetspray/bundle.hpp"
#include "jetspray/error.hpp"
#include "jetspray/flow.hpp"
#include "jetspray/io.hpp"
#include "jetspray/jacobi.hpp"
#include "jetspray/multidual.hpp"
#include "jetspray/variation.hpp"

namespace jetspray {

namespace {

using Rng = std::mt19937_64;

// Raised by a check whose preconditions do not hold for the given spray.
struct Skipped {
    std::string why;
};

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

BundlePoint random_point(Rng& rng, int n, int r, double scale = 1.0) {
    BundlePoint p(n, r);
    for (double& v : p.data()) v = scale * uniform(rng, -1, 1);
    return p;
}

double relative(double diff, double value) { return diff / std::max(1.0, std::abs(value)); }

// A base point inside the chart and a velocity of norm about one.
struct Sample {
    Eigen::VectorXd x, y;
};

Sample random_sample(const Semispray& S, Rng& rng, double radius = 0.3) {
    const int n = S.n();
    for (int attempt = 0; attempt < 100; ++attempt) {
        Eigen::VectorXd x(n), y(n);
        for (int i = 0; i < n; ++i) {
            x[i] = uniform(rng, -radius, radius);
            y[i] = uniform(rng, -1, 1);
        }
        if (y.norm() < 0.2) continue;
        y /= y.norm();
        if (S.in_domain(std::span<const double>(x.data(), static_cast<std::size_t>(n)))) return {x, y};
    }
    throw Skipped{"no sample point inside the chart"};
}

BundlePoint vec_point(const Eigen::VectorXd& v) { return to_point(static_cast<int>(v.size()), 0, v); }

GeodesicRecord complete_geodesic(const Semispray& S, const BundlePoint& pos, const BundlePoint& vel, double t1,
                                 double step = kDefaultStep) {
    GeodesicRecord rec = integrate_geodesic(S, pos, vel, 0.0, t1, step);
    if (rec.truncated()) throw Skipped{"geodesic stopped early: " + rec.exit_reason};
    return rec;
}

// ---------------------------------------------------------------------------
// bundle

double involution_square(const Semispray& S, Rng& rng) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int r = uniform_int(rng, 2, 4);
        const BundlePoint xi = random_point(rng, S.n(), r);
        for (int level = 2; level <= r; ++level) {
            worst = std::max(worst, max_abs_diff(involution(involution(xi, level), level), xi));
        }
    }
    return worst;
}

double structure_identities(const Semispray& S, Rng& rng) {
    auto kappa = [](const BundlePoint& p, int level) { return level == 1 ? p : involution(p, level); };
    auto pi = [](const BundlePoint& p) { return project(p, ProjectionKind::Pi); };
    auto dpi = [](const BundlePoint& p) { return project(p, ProjectionKind::DPi); };
    auto ddpi = [](const BundlePoint& p) { return project(p, ProjectionKind::DDPi); };
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int r = uniform_int(rng, 1, 4);
        const BundlePoint b = random_point(rng, S.n(), r + 1), c = random_point(rng, S.n(), r + 2);
        worst = std::max(worst, max_abs_diff(pi(kappa(b, r)), kappa(pi(b), r)));
        worst = std::max(worst, max_abs_diff(dpi(b), pi(kappa(b, r + 1))));
        worst = std::max(worst, max_abs_diff(dpi(pi(c)), pi(ddpi(c))));
        worst = std::max(worst, max_abs_diff(ddpi(kappa(c, r + 2)), kappa(ddpi(c), r + 1)));
        worst = std::max(worst, max_abs_diff(pi(dpi(c)), pi(pi(c))));
    }
    return worst;
}

double canonical_projections(const Semispray& S, Rng& rng) {
    std::function<BundlePoint(const BundlePoint&, int)> recursive = [&](const BundlePoint& xi, int a) {
        const int r = xi.r();
        if (r == 1) return xi;
        if (a < r) return recursive(project(xi, ProjectionKind::Pi), a);
        return recursive(project(xi, ProjectionKind::DPi), r - 1);
    };
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const BundlePoint xi = random_point(rng, S.n(), uniform_int(rng, 1, 5));
        for (int a = 1; a <= xi.r(); ++a) {
            worst = std::max(worst, max_abs_diff(canonical_projection(xi, a), recursive(xi, a)));
        }
    }
    return worst;
}

// Central-difference mixed partial of the representative map at 0.
double representative_map_check(const Semispray& S, Rng& rng) {
    const double h = 1e-3;
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const int r = uniform_int(rng, 1, 3);
        const BundlePoint xi = random_point(rng, S.n(), r);
        const RepresentativeMap W = representative_map(xi);
        std::vector<double> mixed(static_cast<std::size_t>(S.n()), 0.0);
        for (unsigned signs = 0; signs < (1u << r); ++signs) {
            std::vector<double> s(static_cast<std::size_t>(r));
            double weight = 1.0;
            for (int j = 0; j < r; ++j) {
                const bool minus = (signs >> j) & 1u;
                s[static_cast<std::size_t>(j)] = minus ? -h : h;
                weight *= minus ? -1.0 : 1.0;
            }
            const auto v = W(s);
            for (int i = 0; i < S.n(); ++i) mixed[static_cast<std::size_t>(i)] += weight * v[static_cast<std::size_t>(i)];
        }
        const Mask top = static_cast<Mask>(xi.block_count() - 1);
        for (int i = 0; i < S.n(); ++i) {
            worst = std::max(worst, std::abs(mixed[static_cast<std::size_t>(i)] / std::pow(2 * h, r) - xi(top, i)));
        }
    }
    return worst;
}

double multidual_roundtrip(const Semispray& S, Rng& rng) {
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const BundlePoint xi = random_point(rng, S.n(), uniform_int(rng, 0, 5));
        worst = std::max(worst, max_abs_diff(from_multiduals(to_multiduals(xi)), xi));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// spray

double first_lift(const Semispray& S, Rng& rng) {
    const int n = S.n();
    double worst = 0.0;
    std::vector<ScalarField> vert, comp;
    for (int i = 0; i < n; ++i) {
        ScalarField Gi{n, 1, [&S, n, i](std::span<const Multidual> c) {
                           return S.coefficients(c.subspan(0, static_cast<std::size_t>(n)),
                                                 c.subspan(static_cast<std::size_t>(n), static_cast<std::size_t>(n)))
                               [static_cast<std::size_t>(i)];
                       }};
        vert.push_back(md_lift(Gi, LiftKind::Vertical));
        comp.push_back(md_lift(Gi, LiftKind::Complete));
    }
    for (int trial = 0; trial < 100; ++trial) {
        const Sample a = random_sample(S, rng);
        BundlePoint xi(n, 1), eta(n, 1);
        for (int i = 0; i < n; ++i) {
            xi(0, i) = a.x[i];
            xi(1, i) = a.y[i];
            eta(0, i) = uniform(rng, -1, 1);
            eta(1, i) = uniform(rng, -1, 1);
        }
        const BundlePoint acc = lifted_rhs(S, xi, eta);
        std::vector<double> p(xi.data());
        p.insert(p.end(), eta.data().begin(), eta.data().end());
        for (int i = 0; i < n; ++i) {
            const double v = vert[static_cast<std::size_t>(i)](std::span<const double>(p));
            const double c = comp[static_cast<std::size_t>(i)](std::span<const double>(p));
            worst = std::max(worst, relative(std::abs(acc(0, i) + 2 * v), v));
            worst = std::max(worst, relative(std::abs(acc(1, i) + 2 * c), c));
        }
    }
    return worst;
}

double connection_fd(const Semispray& S, Rng& rng) {
    const double h = 1e-5;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Sample a = random_sample(S, rng);
        const Eigen::MatrixXd N = connection(S, a.x, a.y);
        for (int j = 0; j < S.n(); ++j) {
            const Eigen::VectorXd e = Eigen::VectorXd::Unit(S.n(), j);
            const Eigen::VectorXd fd =
                (S.coefficients(a.x, a.y + h * e) - S.coefficients(a.x, a.y - h * e)) / (2 * h);
            for (int i = 0; i < S.n(); ++i) worst = std::max(worst, relative(std::abs(N(i, j) - fd[i]), N(i, j)));
        }
    }
    return worst;
}

double homogeneity(const Semispray& S, Rng& rng) {
    return classify_homogeneity(S, 100, rng()).max_violation;
}

double endomorphism_kills_velocity(const Semispray& S, Rng& rng) {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Sample a = random_sample(S, rng);
        const Eigen::MatrixXd Phi = jacobi_endomorphism(S, a.x, a.y);
        worst = std::max(worst, (Phi * a.y).cwiseAbs().maxCoeff() / std::max(1.0, Phi.cwiseAbs().maxCoeff()));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// flow

double rk4_order(const Semispray& S, Rng& rng) {
    const Sample a = random_sample(S, rng);
    const GeodesicRecord ref = complete_geodesic(S, vec_point(a.x), vec_point(a.y), 2.0, 0.0125);
    auto error = [&](double step) {
        const GeodesicRecord rec = complete_geodesic(S, vec_point(a.x), vec_point(a.y), 2.0, step);
        double worst = 0.0;
        for (std::size_t k = 0; k < rec.size(); ++k) {
            const std::size_t j = ref.index_of(rec.t_grid[k]);
            worst = std::max(worst, max_abs_diff(rec.pos[k], ref.pos[j]));
        }
        return worst;
    };
    const double coarse = error(0.1), fine = error(0.05);
    if (fine < 1e-13) return std::numeric_limits<double>::infinity();
    return coarse / fine;
}

double lift_projections(const Semispray& S, Rng& rng) {
    double worst = 0.0;
    for (int r = 1; r <= 3; ++r) {
        const Sample a = random_sample(S, rng);
        BundlePoint pos = random_point(rng, S.n(), r, 0.2), vel = random_point(rng, S.n(), r, 0.5);
        for (int i = 0; i < S.n(); ++i) {
            pos(0, i) = a.x[i];
            vel(0, i) = a.y[i];
        }
        const GeodesicRecord rec = complete_geodesic(S, pos, vel, 0.5);
        auto mapped = [&](const std::function<BundlePoint(const BundlePoint&)>& f) {
            return geodesic_residual(S, map_record(rec, f));
        };
        worst = std::max(worst, geodesic_residual(S, rec));
        worst = std::max(worst, mapped([](const BundlePoint& p) { return project(p, ProjectionKind::Pi); }));
        if (r >= 2) {
            worst = std::max(worst, mapped([r](const BundlePoint& p) { return involution(p, r); }));
            worst = std::max(worst, mapped([](const BundlePoint& p) { return project(p, ProjectionKind::DPi); }));
        }
        for (const auto& field : extract_jacobi_fields(rec)) worst = std::max(worst, geodesic_residual(S, field));
    }
    return worst;
}

double flow_lift(const Semispray& S, Rng& rng) {
    double worst = 0.0;
    for (int r = 0; r <= 1; ++r) {
        const Sample a = random_sample(S, rng);
        BundlePoint xi = random_point(rng, S.n(), r + 2, 0.3);
        const Mask vel_block = bit(r + 1);
        for (int i = 0; i < S.n(); ++i) {
            xi(0, i) = a.x[i];
            xi(vel_block, i) = a.y[i];
        }
        worst = std::max(worst, check_flow_lift(S, xi, 0.5));
    }
    return worst;
}

double determinism(const Semispray& S, Rng& rng) {
    const Sample a = random_sample(S, rng);
    BundlePoint pos = random_point(rng, S.n(), 2, 0.2), vel = random_point(rng, S.n(), 2, 0.5);
    for (int i = 0; i < S.n(); ++i) {
        pos(0, i) = a.x[i];
        vel(0, i) = a.y[i];
    }
    const GeodesicRecord x = complete_geodesic(S, pos, vel, 0.5), y = complete_geodesic(S, pos, vel, 0.5);
    double worst = x.t_grid == y.t_grid ? 0.0 : 1.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        worst = std::max({worst, max_abs_diff(x.pos[k], y.pos[k]), max_abs_diff(x.vel[k], y.vel[k])});
    }
    return worst;
}

// ---------------------------------------------------------------------------
// variation

// Two-parameter family through a sample point, nonlinear in both parameters.
GeodesicVariation sample_variation(const Semispray& S, Rng& rng, double t_hi) {
    const Sample a = random_sample(S, rng);
    const int n = S.n();
    const Eigen::VectorXd x = a.x, y = a.y;
    auto init = [x, y, n](std::span<const double> s) {
        Eigen::VectorXd x0 = x, v0 = y;
        x0[0] += 0.5 * s[1];
        x0[n > 1 ? 1 : 0] += 0.3 * s[1] * s[1];
        if (n > 1) {
            const double c = std::cos(s[0]), sn = std::sin(s[0]);
            v0[0] = c * y[0] - sn * y[1];
            v0[1] = sn * y[0] + c * y[1];
        } else {
            v0 *= 1.0 + s[0];
        }
        return InitialCondition{x0, (1.0 + 0.4 * s[1]) * v0};
    };
    return GeodesicVariation{S, 2, 0.1, init, 0.0, t_hi, 0.0, kDefaultStep};
}

template <class F>
auto variation_guard(F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::TruncatedVariation || e.kind() == ErrorKind::ShrinkEpsilon) throw Skipped{e.what()};
        throw;
    }
}

double forward_r1(const Semispray& S, Rng& rng) {
    const GeodesicVariation V = sample_variation(S, rng, 2.0);
    return variation_guard([&] {
        double worst = 0.0;
        for (int a : {1, 2}) {
            const int idx[] = {a};
            worst = std::max(worst, verify_variation_theorem_forward(V, idx));
        }
        return worst;
    });
}

double forward_r2(const Semispray& S, Rng& rng) {
    const GeodesicVariation V = sample_variation(S, rng, 2.0);
    return variation_guard([&] {
        const int idx[] = {1, 2};
        return verify_variation_theorem_forward(V, idx);
    });
}

double fd_order(const Semispray& S, Rng& rng) {
    const GeodesicVariation V = sample_variation(S, rng, 2.0);
    return variation_guard([&] {
        const int idx[] = {1};
        const double coarse = verify_variation_theorem_forward(V, idx, {2e-3, false});
        const double fine = verify_variation_theorem_forward(V, idx, {1e-3, false});
        if (coarse < 1e-11) return std::numeric_limits<double>::infinity();
        return coarse / fine;
    });
}

double round_trip(const Semispray& S, Rng& rng) {
    double worst = 0.0;
    for (int r = 1; r <= 2; ++r) {
        const Sample a = random_sample(S, rng);
        BundlePoint pos = random_point(rng, S.n(), r, 0.2), vel = random_point(rng, S.n(), r, 0.3);
        for (int i = 0; i < S.n(); ++i) {
            pos(0, i) = a.x[i];
            vel(0, i) = a.y[i];
        }
        const GeodesicRecord g = complete_geodesic(S, pos, vel, 1.0);
        worst = std::max(worst, variation_guard([&] { return round_trip_residual(S, g); }));
    }
    return worst;
}

double projection_identity(const Semispray& S, Rng& rng) {
    const GeodesicVariation V = sample_variation(S, rng, 1.0);
    return variation_guard([&] { return projection_identity_check(V, 2); });
}

// ---------------------------------------------------------------------------
// jacobi

struct JacobiSetup {
    std::shared_ptr<const BaseCurve> base;
    ParallelFrame frame;
};

JacobiSetup jacobi_setup(const Semispray& S, Rng& rng, double t_hi = 2.0) {
    const Sample a = random_sample(S, rng);
    const auto base = make_base_curve(S, complete_geodesic(S, vec_point(a.x), vec_point(a.y), t_hi));
    if (S.n() < 2) return {base, ParallelFrame{base, {}, {}}};
    return {base, make_parallel_frame(base)};
}

JacobiTensor focal(const ParallelFrame& frame) {
    const int n = frame.base->spray.n();
    return integrate_jacobi_tensor(frame.base, Eigen::MatrixXd::Zero(n, n), frame.transverse_identity(0));
}

double max_norm(const TensorAlongCurve& T) {
    double worst = 0.0;
    for (const auto& c : T.comps) worst = std::max(worst, c.cwiseAbs().maxCoeff());
    return worst;
}

double parallel_frame_check(const Semispray& S, Rng& rng) {
    const JacobiSetup s = jacobi_setup(S, rng);
    double worst = 0.0;
    for (int a = 0; a < S.n() - 1; ++a) {
        TensorAlongCurve e{Valence::Vector, s.base, 0, {}};
        for (const auto& m : s.frame.e) e.comps.push_back(m.col(a));
        worst = std::max(worst, max_norm(covariant_derivative(e)));
    }
    return worst;
}

double velocity_parallel(const Semispray& S, Rng& rng) {
    const JacobiSetup s = jacobi_setup(S, rng);
    TensorAlongCurve c{Valence::Vector, s.base, 0, {}};
    for (std::size_t k = 0; k < s.base->size(); ++k) c.comps.push_back(s.base->velocity(k));
    return max_norm(covariant_derivative(c));
}

Eigen::MatrixXd random_matrix(Rng& rng, int n) {
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n * n; ++i) m.data()[i] = uniform(rng, -1, 1);
    return m;
}

double tensor_residual(const Semispray& S, Rng& rng) {
    const JacobiSetup s = jacobi_setup(S, rng);
    return integrate_jacobi_tensor(s.base, random_matrix(rng, S.n()), random_matrix(rng, S.n())).residual;
}

double field_equivalence(const Semispray& S, Rng& rng) {
    const JacobiSetup s = jacobi_setup(S, rng);
    Eigen::VectorXd v0(S.n());
    for (int i = 0; i < S.n(); ++i) v0[i] = uniform(rng, -1, 1);
    const JacobiTensor J = integrate_jacobi_tensor(s.base, random_matrix(rng, S.n()), random_matrix(rng, S.n()));
    return jacobi_field_equivalence(parallel_transport(s.base, v0), J);
}

double transversality(const Semispray& S, Rng& rng) {
    const JacobiSetup s = jacobi_setup(S, rng);
    const int n = S.n();
    const PropagationReport report =
        check_transversal_propagation(s.frame, Eigen::MatrixXd::Zero(n, n), s.frame.transverse_identity(0));
    if (!report.phi_transversal) throw Skipped{"the Jacobi endomorphism is not transversal along the sample"};
    return std::max(report.conclusion.kernel_violation, report.conclusion.image_violation);
}

double nabla_transversal(const Semispray& S, Rng& rng) {
    const JacobiSetup s = jacobi_setup(S, rng);
    const JacobiTensor J = focal(s.frame);
    if (!check_transversality(J.J, s.frame).transversal) throw Skipped{"J is not transversal"};
    const TransversalityReport r = check_transversality(J.nabla_J, s.frame);
    return std::max(r.kernel_violation, r.image_violation);
}

double tensor_variation_roundtrip(const Semispray& S, Rng& rng) {
    const JacobiSetup s = jacobi_setup(S, rng);
    const JacobiTensor J = focal(s.frame);
    const GeodesicVariation V = variation_guard([&] { return variation_from_tensor(J, s.frame); });
    double worst = 0.0;
    for (int a = 1; a <= S.n() - 1; ++a) {
        const int idx[] = {a};
        const DerivedCurve d = variation_guard([&] { return mixed_derivative(V, idx); });
        for (std::size_t k = 0; k < J.J.size(); ++k) {
            const std::size_t j = static_cast<std::size_t>(
                std::lower_bound(d.t_grid.begin(), d.t_grid.end(), J.J.t(k) - 1e-9) - d.t_grid.begin());
            if (j >= d.t_grid.size() || std::abs(d.t_grid[j] - J.J.t(k)) > 1e-9) continue;
            const Eigen::VectorXd Je = J.J.comps[k] * s.frame.e[k].col(a - 1);
            for (int i = 0; i < S.n(); ++i) worst = std::max(worst, std::abs(Je[i] - d.pos[j](1, i)));
        }
    }
    return worst;
}

template <class F>
auto singular_guard(F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::SingularAt || e.kind() == ErrorKind::NotDiffeo) throw Skipped{e.what()};
        throw;
    }
}

double riccati(const Semispray& S, Rng& rng) {
    const JacobiSetup s = jacobi_setup(S, rng);
    return singular_guard([&] { return riccati_residual(focal(s.frame), s.frame, 0.3, 1.5).residual; });
}

struct ShapeSetup {
    JacobiSetup jac;
    JacobiTensor J;
    GeodesicVariation V;
};

ShapeSetup shape_setup(const Semispray& S, Rng& rng) {
    JacobiSetup s = jacobi_setup(S, rng, 1.6);
    JacobiTensor J = focal(s.frame);
    GeodesicVariation V = variation_guard([&] { return variation_from_tensor(J, s.frame); });
    // the variation's own base grid starts at the base start like the frame
    V.t_lo = V.t_init;
    V.t_hi = s.base->record.t_grid.back();
    return {std::move(s), std::move(J), std::move(V)};
}

double shape_vs_riccati(const Semispray& S, Rng& rng) {
    const ShapeSetup s = shape_setup(S, rng);
    return singular_guard([&] {
        return variation_guard([&] { return check_J1_J2(s.V, s.J, s.jac.frame, 0.3, 1.5).j1; });
    });
}

double liouville(const Semispray& S, Rng& rng) {
    const ShapeSetup s = shape_setup(S, rng);
    return singular_guard([&] {
        return variation_guard([&] { return check_J1_J2(s.V, s.J, s.jac.frame, 0.3, 1.5).j2; });
    });
}

double shape_kills_velocity(const Semispray& S, Rng& rng) {
    const ShapeSetup s = shape_setup(S, rng);
    return singular_guard([&] {
        return variation_guard([&] { return shape_operator(s.V, 0.3, 1.5).velocity_violation; });
    });
}

double chart_tlines(const Semispray& S, Rng& rng) {
    const JacobiSetup s = jacobi_setup(S, rng, 1.3);
    return singular_guard([&] {
        try {
            return build_chart(focal(s.frame), s.frame, 0.3, 1.2).tline_residual;
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::ChartFailed || e.kind() == ErrorKind::NotEmbeddable) throw Skipped{e.what()};
            throw;
        }
    });
}

double connection_map_vertical(const Semispray& S, Rng& rng) {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Sample a = random_sample(S, rng);
        BundlePoint xi(S.n(), 2);
        Eigen::VectorXd Y(S.n());
        for (int i = 0; i < S.n(); ++i) {
            xi(0, i) = a.x[i];
            xi(1, i) = a.y[i];
            xi(3, i) = Y[i] = uniform(rng, -1, 1);
        }
        const BundlePoint out = connection_map(S, xi);
        for (int i = 0; i < S.n(); ++i) {
            worst = std::max({worst, std::abs(out(0, i) - a.x[i]), std::abs(out(1, i) - Y[i])});
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------

struct CheckDef {
    CheckInfo info;
    std::function<double(const Semispray&, Rng&)> run;
};

const std::vector<CheckDef>& definitions() {
    static const std::vector<CheckDef> defs = [] {
        const Comparison le = Comparison::AtMost, ge = Comparison::AtLeast;
        std::vector<CheckDef> d{
            {{"bundle.canonical_projections", "closed-form canonical projections equal their recursion", 0.0, le,
              false, 1},
             canonical_projections},
            {{"bundle.involution_square", "involution applied twice is the identity", 0.0, le, false, 1},
             involution_square},
            {{"bundle.multidual_roundtrip", "points survive conversion to multiduals and back", 0.0, le, false, 1},
             multidual_roundtrip},
            {{"bundle.representative_map", "mixed partial of the representative map reproduces the point", 1e-6, le,
              false, 1},
             representative_map_check},
            {{"bundle.structure_identities", "projection and involution commutation identities", 0.0, le, false, 1},
             structure_identities},
            {{"flow.determinism", "repeated integration is bitwise identical", 0.0, le, false, 1}, determinism},
            {{"flow.flow_lift", "flow of the lifted spray is the conjugated tangent of the flow", 1e-4, le, false, 1},
             flow_lift},
            {{"flow.lift_projections", "projections of lifted geodesics are geodesics of lower lifts", 1e-6, le,
              false, 1},
             lift_projections},
            {{"flow.rk4_order", "error ratio under step halving", 8.0, ge, false, 1}, rk4_order},
            {{"jacobi.chart_tlines", "coordinate t-lines of the chart are geodesics", 1e-6, le, true, 2},
             chart_tlines},
            {{"jacobi.connection_map_vertical", "connection map of a vertical vector", 0.0, le, false, 1},
             connection_map_vertical},
            {{"jacobi.field_equivalence", "J applied to a parallel field is a Jacobi field", 1e-5, le, true, 1},
             field_equivalence},
            {{"jacobi.liouville", "d/dt det J = trace A det J", 1e-4, le, true, 2}, liouville},
            {{"jacobi.nabla_transversal", "nabla J of a transversal J is transversal", 1e-6, le, true, 2},
             nabla_transversal},
            {{"jacobi.parallel_frame", "transported frame vectors are parallel", 1e-7, le, true, 2},
             parallel_frame_check},
            {{"jacobi.riccati", "nabla L + L^2 + Phi = 0 on an interior window", 1e-5, le, true, 2}, riccati},
            {{"jacobi.shape_kills_velocity", "shape operator annihilates the velocity", 1e-6, le, true, 2},
             shape_kills_velocity},
            {{"jacobi.shape_vs_riccati", "shape operator equals nabla J o J^-1", 1e-4, le, true, 2},
             shape_vs_riccati},
            {{"jacobi.tensor_residual", "integrated Jacobi tensors solve the Jacobi equation", 1e-6, le, true, 1},
             tensor_residual},
            {{"jacobi.tensor_variation_roundtrip", "variation built from J reproduces J", 1e-4, le, true, 2},
             tensor_variation_roundtrip},
            {{"jacobi.transversality", "transversal initial data stay transversal", 1e-6, le, true, 2},
             transversality},
            {{"jacobi.velocity_parallel", "the velocity of a geodesic is parallel", 1e-7, le, true, 1},
             velocity_parallel},
            {{"spray.connection_fd", "connection matches finite differences of G", 1e-6, le, false, 1},
             connection_fd},
            {{"spray.endomorphism_kills_velocity", "Jacobi endomorphism annihilates the velocity", 1e-9, le, true, 1},
             endomorphism_kills_velocity},
            {{"spray.first_lift", "first lift equals vertical and complete lifts of G", 1e-13, le, false, 1},
             first_lift},
            {{"spray.homogeneity", "coefficients are 2-homogeneous in the velocity", 1e-9, le, true, 1}, homogeneity},
            {{"variation.fd_order", "forward residual ratio when the stencil step halves", 3.5, ge, false, 1},
             fd_order},
            {{"variation.forward_r1", "first derivatives of variations are lifted geodesics", 1e-5, le, false, 1},
             forward_r1},
            {{"variation.forward_r2", "mixed second derivatives are geodesics of the second lift", 1e-3, le, false,
              1},
             forward_r2},
            {{"variation.projection_identity", "canonical projections of mixed derivatives", 1e-4, le, false, 1},
             projection_identity},
            {{"variation.round_trip", "reconstructed variations reproduce lifted geodesics", 1e-3, le, false, 1},
             round_trip},
        };
        std::sort(d.begin(), d.end(), [](const CheckDef& a, const CheckDef& b) { return a.info.name < b.info.name; });
        return d;
    }();
    return defs;
}

std::uint64_t name_hash(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
    return h;
}

bool passes(double residual, double threshold, Comparison cmp) {
    if (std::isnan(residual)) return false;
    return cmp == Comparison::AtMost ? residual <= threshold : residual >= threshold;
}

}  // namespace

std::string_view to_string(CheckStatus status) noexcept {
    switch (status) {
    case CheckStatus::Pass: return "pass";
    case CheckStatus::Fail: return "fail";
    case CheckStatus::Skip: return "skip";
    }
    return "unknown";
}

const std::vector<CheckInfo>& check_catalog() {
    static const std::vector<CheckInfo> catalog = [] {
        std::vector<CheckInfo> out;
        for (const auto& d : definitions()) out.push_back(d.info);
        return out;
    }();
    return catalog;
}

unsigned worker_count(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("JETSPRAY_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<CheckResult> run_checks(const Semispray& spray, const VerifyOptions& options) {
    std::set<std::string> known;
    for (const auto& d : definitions()) known.insert(d.info.name);
    for (const auto& [name, value] : options.thresholds) {
        if (!known.contains(name)) throw Error(ErrorKind::InvalidArgument, "unknown check \"" + name + "\" in thresholds");
    }
    for (const auto& name : options.only) {
        if (!known.contains(name)) throw Error(ErrorKind::InvalidArgument, "unknown check \"" + name + "\"");
    }
    const std::set<std::string> only(options.only.begin(), options.only.end());

    std::vector<const CheckDef*> selected;
    for (const auto& d : definitions()) {
        if (only.empty() || only.contains(d.info.name)) selected.push_back(&d);
    }
    std::vector<CheckResult> results(selected.size());

    const bool is_spray = classify_homogeneity(spray, 100, options.seed).kind == Homogeneity::Spray;

    auto run_one = [&](std::size_t idx) {
        const CheckDef& def = *selected[idx];
        CheckResult& res = results[idx];
        res.name = def.info.name;
        res.comparison = def.info.comparison;
        const auto th = options.thresholds.find(def.info.name);
        res.threshold = th != options.thresholds.end() ? th->second : def.info.threshold;
        if (def.info.spray_only && !is_spray) {
            res.status = CheckStatus::Skip;
            res.note = "needs a spray; coefficients are not 2-homogeneous";
            return;
        }
        if (spray.n() < def.info.min_dimension) {
            res.status = CheckStatus::Skip;
            res.note = "needs dimension >= " + std::to_string(def.info.min_dimension);
            return;
        }
        Rng rng(options.seed ^ name_hash(def.info.name));
        const auto start = std::chrono::steady_clock::now();
        try {
            res.residual = def.run(spray, rng);
            res.status = passes(res.residual, res.threshold, res.comparison) ? CheckStatus::Pass : CheckStatus::Fail;
        } catch (const Skipped& s) {
            res.status = CheckStatus::Skip;
            res.note = s.why;
        } catch (const std::exception& e) {
            res.status = CheckStatus::Fail;
            res.residual = std::numeric_limits<double>::quiet_NaN();
            res.note = e.what();
        }
        if (options.timing) {
            res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
    };

    const unsigned workers = std::min<unsigned>(worker_count(options.threads), static_cast<unsigned>(selected.size()));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < selected.size(); i = next++) run_one(i);
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
    return std::none_of(results.begin(), results.end(), [](const CheckResult& r) { return r.status == CheckStatus::Fail; });
}

std::string report_json(const std::vector<CheckResult>& results) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : results) {
        nlohmann::ordered_json j;
        j["check"] = r.name;
        j["status"] = std::string(to_string(r.status));
        if (r.status == CheckStatus::Skip || !std::isfinite(r.residual)) {
            j["residual"] = nullptr;
        } else {
            j["residual"] = r.residual;
        }
        j["threshold"] = r.threshold;
        j["seconds"] = r.seconds;
        arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
}

std::string report_text(const std::vector<CheckResult>& results) {
    std::ostringstream out;
    for (const auto& r : results) {
        std::string status(to_string(r.status));
        std::transform(status.begin(), status.end(), status.begin(), [](unsigned char c) { return std::toupper(c); });
        out << status << "  " << r.name;
        if (r.status != CheckStatus::Skip) {
            out << "  residual=" << format_real(r.residual) << (r.comparison == Comparison::AtMost ? " <= " : " >= ")
                << format_real(r.threshold);
        }
        if (!r.note.empty()) out << "  (" << r.note << ")";
        out << '\n';
    }
    return out.str();
}

}  // namespace jetspray
