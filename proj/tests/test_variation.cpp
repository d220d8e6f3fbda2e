#include <doctest.h>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "jetspray/variation.hpp"

using namespace jetspray;

namespace {

Eigen::Vector2d rotate(const Eigen::Vector2d& v, double angle) {
    return Eigen::Vector2d(std::cos(angle) * v[0] - std::sin(angle) * v[1],
                           std::sin(angle) * v[0] + std::cos(angle) * v[1]);
}

// Two-parameter variation with nonlinear dependence on both parameters.
GeodesicVariation curved_variation(const Semispray& S, double t_hi) {
    GeodesicVariation V{S, 2, 0.1, [](std::span<const double> s) {
                            const Eigen::Vector2d x0(0.2 + 0.5 * s[1], -0.1 + 0.3 * s[1] * s[1]);
                            const Eigen::Vector2d v0 = (1.0 + 0.4 * s[1]) * rotate(Eigen::Vector2d(0.8, 0.3), s[0]);
                            return InitialCondition{x0, v0};
                        },
                        0.0, t_hi, 0.0, 1e-3};
    return V;
}

GeodesicVariation rotated_from_origin(const Semispray& S, double t_hi) {
    return GeodesicVariation{S, 1, 0.1, [](std::span<const double> s) {
                                 return InitialCondition{Eigen::Vector2d::Zero(), rotate(Eigen::Vector2d(1, 0), s[0])};
                             },
                             0.0, t_hi, 0.0, 1e-3};
}

}  // namespace

TEST_CASE("evaluating variations") {
    SUBCASE("flat variation is a pencil of lines") {
        const Eigen::Vector2d x0(0.5, -1), v(1, 2), w(-0.3, 0.7);
        GeodesicVariation V{make_flat(2), 1, 0.5,
                            [=](std::span<const double> s) { return InitialCondition{x0, v + s[0] * w}; }, 0.0, 1.0,
                            0.0, 1e-3};
        for (double s : {-0.2, 0.0, 0.3}) {
            const double sv[] = {s};
            CHECK((evaluate_variation(V, 0.8, sv) - (x0 + 0.8 * (v + s * w))).norm() < 1e-13);
        }
        const double bad[] = {0.6};
        CHECK_THROWS_AS(evaluate_variation(V, 0.5, bad), Error);
        const double ok[] = {0.0};
        CHECK_THROWS_AS(evaluate_variation(V, 1.5, ok), Error);
    }
    SUBCASE("sphere variation rotates the radial geodesic") {
        const GeodesicVariation V = rotated_from_origin(make_constant_curvature(2, 1.0), 2.0);
        for (double s : {-0.05, 0.07}) {
            const double sv[] = {s};
            const Eigen::Vector2d expected = 2 * std::tan(0.75) * Eigen::Vector2d(std::cos(s), std::sin(s));
            CHECK((evaluate_variation(V, 1.5, sv) - expected).norm() < 1e-10);
        }
    }
    SUBCASE("zero slice is the base geodesic") {
        const GeodesicVariation V = curved_variation(make_constant_curvature(2, -1.0), 1.0);
        const double zero[] = {0.0, 0.0};
        const GeodesicRecord slice = variation_geodesic(V, zero);
        const GeodesicRecord base =
            integrate_geodesic(V.spray, BundlePoint(2, 0, {0.2, -0.1}), BundlePoint(2, 0, {0.8, 0.3}), 0.0, 1.0, 1e-3);
        CHECK(slice.pos == base.pos);
    }
    SUBCASE("truncation is reported") {
        const GeodesicVariation V = rotated_from_origin(make_constant_curvature(2, 1.0), 4.0);
        const double zero[] = {0.0};
        try {
            variation_geodesic(V, zero);
            FAIL("expected TruncatedVariation");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::TruncatedVariation);
        }
    }
}

TEST_CASE("mixed derivatives") {
    SUBCASE("flat first derivative is (x0 + t v, t w)") {
        const Eigen::Vector2d x0(0.5, -1), v(1, 2), w(-0.3, 0.7);
        GeodesicVariation V{make_flat(2), 1, 0.5,
                            [=](std::span<const double> s) { return InitialCondition{x0, v + s[0] * w}; }, 0.0, 1.0,
                            0.0, 1e-3};
        const int idx[] = {1};
        const DerivedCurve d = mixed_derivative(V, idx);
        for (std::size_t k = 0; k < d.t_grid.size(); k += 100) {
            const double t = d.t_grid[k];
            for (int i = 0; i < 2; ++i) {
                CHECK(std::abs(d.pos[k](0, i) - (x0[i] + t * v[i])) < 1e-12);
                CHECK(std::abs(d.pos[k](1, i) - t * w[i]) < 1e-9);
            }
        }
    }
    SUBCASE("sphere Jacobi field of a rotated radial geodesic has metric length sin t") {
        const double K = 1.0;
        const GeodesicVariation V = rotated_from_origin(make_constant_curvature(2, K), 2.0);
        const int idx[] = {1};
        const DerivedCurve d = mixed_derivative(V, idx);
        for (std::size_t k = 0; k < d.t_grid.size(); k += 50) {
            const Eigen::VectorXd x = to_vector(d.pos[k]).head(2);
            const Eigen::Vector2d J(d.pos[k](1, 0), d.pos[k](1, 1));
            const double metric_len = std::sqrt(constant_curvature_metric_scale(K, x)) * J.norm();
            CHECK(std::abs(metric_len - std::sin(d.t_grid[k])) < 1e-5);
            CHECK(std::abs(J[0]) < 1e-8);  // normal to the radial direction e1
        }
    }
    SUBCASE("base block equals the base geodesic exactly") {
        const GeodesicVariation V = curved_variation(make_constant_curvature(2, 1.0), 0.5);
        const int idx[] = {1, 2};
        const DerivedCurve d = mixed_derivative(V, idx);
        const double zero[] = {0.0, 0.0};
        const GeodesicRecord base = variation_geodesic(V, zero);
        for (std::size_t k = 0; k < base.size(); ++k) {
            CHECK(d.pos[k](0, 0) == base.pos[k](0, 0));
            CHECK(d.pos[k](0, 1) == base.pos[k](0, 1));
        }
    }
    SUBCASE("depth cap and bad indices") {
        const GeodesicVariation V = curved_variation(make_flat(2), 0.1);
        const int deep[] = {1, 1, 2, 2};
        try {
            mixed_derivative(V, deep);
            FAIL("expected DepthCap");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::DepthCap);
        }
        const int bad[] = {3};
        CHECK_THROWS_AS(mixed_derivative(V, bad), Error);
    }
}

TEST_CASE("forward correspondence: mixed derivatives are lifted geodesics") {
    SUBCASE("flat") {
        GeodesicVariation V{make_flat(2), 2, 0.1, [](std::span<const double> s) {
                                const Eigen::Vector2d x0(0.2 + 0.5 * s[1], -0.1);
                                const Eigen::Vector2d v(0.8 + 0.3 * s[0], 0.3 - 0.2 * s[0] * s[1] + 0.1 * s[1]);
                                return InitialCondition{x0, v};
                            },
                            0.0, 2.0, 0.0, 1e-3};
        const int one[] = {2};
        const int two[] = {1, 2};
        CHECK(verify_variation_theorem_forward(V, one) < 1e-9);
        CHECK(verify_variation_theorem_forward(V, two) < 1e-9);
    }
    for (double K : {1.0, -1.0}) {
        CAPTURE(K);
        const GeodesicVariation V = curved_variation(make_constant_curvature(2, K), 2.0);
        const int one[] = {1};
        const int two[] = {1, 2};
        const int repeated[] = {1, 1};
        CHECK(verify_variation_theorem_forward(V, one) < 1e-5);
        CHECK(verify_variation_theorem_forward(V, two) < 1e-3);
        CHECK(verify_variation_theorem_forward(V, repeated) < 1e-3);
    }
    SUBCASE("damped semispray") {
        const int one[] = {1};
        CHECK(verify_variation_theorem_forward(curved_variation(make_damped(2, 1.0), 2.0), one) < 1e-5);
    }
}

TEST_CASE("forward residual is second order in the parameter step") {
    const GeodesicVariation V = curved_variation(make_constant_curvature(2, 1.0), 2.0);
    for (std::vector<int> idx : {std::vector<int>{1}, std::vector<int>{1, 2}}) {
        const double coarse = verify_variation_theorem_forward(V, idx, {1e-3, false});
        const double fine = verify_variation_theorem_forward(V, idx, {5e-4, false});
        CAPTURE(coarse);
        CAPTURE(fine);
        CHECK(coarse / fine >= 3.5);
    }
}

TEST_CASE("reconstruction from lifted geodesics") {
    SUBCASE("flat first lift gives the linear variation") {
        const Semispray S = make_flat(1);
        // Jacobi field a + t b along x0 + t v
        const GeodesicRecord g = integrate_geodesic(S, BundlePoint(1, 1, {0.3, 0.5}), BundlePoint(1, 1, {1.0, -2.0}),
                                                    0.0, 1.0, 1e-2);
        const Reconstruction rec = variation_from_geodesic(S, g);
        CHECK(rec.eps == 0.1);
        const double s[] = {0.05};
        CHECK(evaluate_variation(rec.variation, 0.6, s)[0] ==
              doctest::Approx(0.3 + 0.6 * 1.0 + 0.05 * (0.5 + 0.6 * -2.0)).epsilon(1e-13));
        CHECK(round_trip_residual(S, g) < 1e-9);
        CHECK(rec.variation.t_lo == doctest::Approx(-0.01));
        CHECK(rec.variation.t_hi == doctest::Approx(1.01));
    }
    SUBCASE("sphere second lift") {
        const Semispray S = make_constant_curvature(2, 1.0);
        const GeodesicRecord g = integrate_geodesic(S, BundlePoint(2, 2, {0.1, 0.2, 0.5, -0.3, 0.2, 0.1, -0.4, 0.6}),
                                                    BundlePoint(2, 2, {1.0, 0.2, 0.3, 0.3, -0.5, 0.2, 0.1, 0.1}),
                                                    0.0, 1.0, 1e-3);
        CHECK(round_trip_residual(S, g) < 1e-3);
    }
    SUBCASE("damped first lift") {
        const Semispray S = make_damped(2, 1.0);
        const GeodesicRecord g = integrate_geodesic(S, BundlePoint(2, 1, {0.1, 0.2, 0.5, -0.3}),
                                                    BundlePoint(2, 1, {1.0, 0.2, 0.3, 0.3}), 0.0, 2.0, 1e-3);
        CHECK(round_trip_residual(S, g) < 1e-5);
    }
    SUBCASE("epsilon shrinks until the velocity stays nonzero") {
        const Semispray S = make_flat(1);
        // base velocity 0.01 with derivative block 1: v(s) = 0.01 + s vanishes at s = -0.01
        const GeodesicRecord g = integrate_geodesic(S, BundlePoint(1, 1, {0.0, 0.0}), BundlePoint(1, 1, {0.01, 1.0}),
                                                    0.0, 0.1, 1e-2);
        const Reconstruction rec = variation_from_geodesic(S, g);
        CHECK(rec.eps < 0.02);
        CHECK(rec.eps >= 0.005);
    }
    SUBCASE("order zero is rejected") {
        const GeodesicRecord g = integrate_geodesic(make_flat(1), BundlePoint(1, 0, {0.0}), BundlePoint(1, 0, {1.0}),
                                                    0.0, 0.1, 1e-2);
        CHECK_THROWS_AS(variation_from_geodesic(make_flat(1), g), Error);
    }
}

TEST_CASE("canonical projections of mixed derivatives are first derivatives") {
    CHECK(projection_identity_check(curved_variation(make_flat(2), 1.0), 2) < 1e-9);
    CHECK(projection_identity_check(curved_variation(make_constant_curvature(2, 1.0), 1.0), 2) < 1e-4);
    CHECK(projection_identity_check(curved_variation(make_constant_curvature(2, 1.0), 1.0), 1) == 0.0);
}

TEST_CASE("restricting records to a window") {
    const GeodesicRecord g = integrate_geodesic(make_flat(1), BundlePoint(1, 0, {0.0}), BundlePoint(1, 0, {1.0}),
                                                0.0, 1.0, 0.1);
    const GeodesicRecord w = restrict_record(g, 0.25, 0.75);
    CHECK(w.t_grid.front() == doctest::Approx(0.3));
    CHECK(w.t_grid.back() == doctest::Approx(0.7));
    CHECK_THROWS_AS(restrict_record(g, 2.0, 3.0), Error);
}
