#include <doctest.h>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "jetspray/flow.hpp"
#include "test_support.hpp"

using namespace jetspray;
using jetspray::testing::random_point;

namespace {

BundlePoint vec_point(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return BundlePoint(n, 0, std::move(v));
}

// Unit sphere embedding of the K = 1 conformal chart.
Eigen::Vector3d sphere_embed(const Eigen::Vector2d& x) {
    const double phi = 1.0 + x.squaredNorm() / 4.0;
    return Eigen::Vector3d(x[0] / phi, x[1] / phi, (1.0 - x.squaredNorm() / 4.0) / phi);
}

// Maximum residual of the lower-order geodesic equation over a mapped record.
double mapped_residual(const Semispray& S, const GeodesicRecord& rec,
                       const std::function<BundlePoint(const BundlePoint&)>& f) {
    return geodesic_residual(S, map_record(rec, f));
}

}  // namespace

TEST_CASE("flat geodesic is a straight line") {
    const Semispray S = make_flat(2);
    const GeodesicRecord rec = integrate_geodesic(S, vec_point({0, 0}), vec_point({1, 0}), 0.0, 1.0, 1e-3);
    CHECK_FALSE(rec.truncated());
    CHECK(rec.size() == 1001);
    for (std::size_t k = 0; k < rec.size(); k += 100) {
        CHECK(rec.pos[k](0, 0) == doctest::Approx(rec.t_grid[k]).epsilon(1e-14));
        CHECK(rec.pos[k](0, 1) == 0.0);
    }
    CHECK(rec.t_grid.back() == 1.0);
}

TEST_CASE("sphere geodesics follow great circles and close after 2 pi") {
    const Semispray S = make_constant_curvature(2, 1.0);
    // unit speed at (1, 0): the conformal factor there is 1/1.25^2
    const Eigen::Vector2d x0(1.0, 0.0), v0(0.0, 1.25);
    const double T = 2.0 * M_PI;
    const GeodesicRecord rec = integrate_geodesic(S, vec_point({1, 0}), vec_point({0, 1.25}), 0.0, T, 1e-3);
    REQUIRE_FALSE(rec.truncated());
    CHECK((to_vector(rec.pos.back()) - x0).norm() < 1e-6);

    const double h = 1e-6;
    const Eigen::Vector3d E0 = sphere_embed(x0);
    const Eigen::Vector3d V0 = (sphere_embed(x0 + h * v0) - sphere_embed(x0 - h * v0)) / (2 * h);
    CHECK(V0.norm() == doctest::Approx(1.0).epsilon(1e-8));
    for (std::size_t k = 0; k < rec.size(); k += 500) {
        const double t = rec.t_grid[k];
        const Eigen::Vector3d expected = std::cos(t) * E0 + std::sin(t) * V0;
        CHECK((sphere_embed(to_vector(rec.pos[k])) - expected).norm() < 1e-8);
    }
}

TEST_CASE("damped geodesic velocity decays exponentially") {
    const Semispray S = make_damped(2, 1.0);
    const GeodesicRecord rec = integrate_geodesic(S, vec_point({0, 0}), vec_point({1, -2}), 0.0, 2.0, 1e-3);
    for (std::size_t k = 0; k < rec.size(); k += 50) {
        const double decay = std::exp(-2.0 * rec.t_grid[k]);
        CHECK(std::abs(rec.vel[k](0, 0) - decay) < 1e-8);
        CHECK(std::abs(rec.vel[k](0, 1) + 2 * decay) < 1e-8);
    }
}

TEST_CASE("initial-state errors and truncation") {
    const Semispray flat = make_flat(2);
    try {
        integrate_geodesic(flat, vec_point({0, 0}), vec_point({0, 0}), 0, 1);
        FAIL("expected OutsideSlashed");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::OutsideSlashed);
    }

    SUBCASE("leaving a chart domain keeps the accepted prefix") {
        const Semispray half(1, "half-line", SprayKind::Custom,
                             [](auto, auto y, auto out) { out[0] = 0.0 * y[0]; },
                             [](std::span<const double> x) { return x[0] < 1.0; });
        const GeodesicRecord rec = integrate_geodesic(half, vec_point({0}), vec_point({1}), 0, 2, 1e-2);
        CHECK(rec.status == RecordStatus::LeftDomain);
        CHECK(rec.t_grid.back() < 1.0);
        CHECK(rec.t_grid.back() > 0.98);
        try {
            require_complete(rec);
            FAIL("expected TruncatedRecord");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::TruncatedRecord);
        }
    }
    SUBCASE("velocity reaching zero leaves the slashed bundle") {
        const Semispray brake = make_custom(1, [](auto, auto y, auto out) { out[0] = 0.5 + 0.0 * y[0]; });
        const GeodesicRecord rec = integrate_geodesic(brake, vec_point({0}), vec_point({0.5}), 0, 1, 1e-3);
        CHECK(rec.status == RecordStatus::LeftSlashed);
        CHECK(rec.t_grid.back() == doctest::Approx(0.499));
    }
    SUBCASE("sphere geodesic through the pole escapes the chart") {
        const Semispray S = make_constant_curvature(2, 1.0);
        const GeodesicRecord rec = integrate_geodesic(S, vec_point({0, 0}), vec_point({1, 0}), 0, 4, 1e-3);
        CHECK(rec.status == RecordStatus::LeftDomain);
        CHECK(std::abs(rec.t_grid.back() - M_PI) < 0.01);
    }
}

TEST_CASE("two-sided spans and backward integration") {
    const Semispray S = make_constant_curvature(2, -1.0);
    const GeodesicRecord rec = integrate_geodesic_span(S, vec_point({0, 0}), vec_point({1, 0}), -1.0, 1.5, 1e-3);
    CHECK(rec.t_grid.front() == -1.0);
    CHECK(rec.t_grid.back() == 1.5);
    CHECK(std::is_sorted(rec.t_grid.begin(), rec.t_grid.end()));
    const std::size_t k0 = rec.index_of(0.0);
    CHECK(rec.t_grid[k0] == 0.0);
    for (double t : {-1.0, -0.4, 0.7, 1.5}) {
        const std::size_t k = rec.index_of(t);
        CHECK(rec.pos[k](0, 0) == doctest::Approx(2 * std::tanh(rec.t_grid[k] / 2)).epsilon(1e-10));
    }
    CHECK_THROWS_AS(integrate_geodesic_span(S, vec_point({0, 0}), vec_point({1, 0}), 0.5, 1.0), Error);
}

TEST_CASE("flow map") {
    const Semispray sphere = make_constant_curvature(2, 1.0);
    const BundlePoint state(2, 1, {0.3, -0.2, 0.5, 0.4});
    CHECK(flow_map(sphere, state, 0.0) == state);

    SUBCASE("flat first lift is affine") {
        // T^2 M state (x, y, X, Y): position (x, y), velocity (X, Y)
        const BundlePoint s(1, 2, {0.1, 0.2, 1.0, -1.0});
        const double t = 0.7;
        const BundlePoint expected(1, 2, {0.1 + t * 1.0, 0.2 - t * 1.0, 1.0, -1.0});
        CHECK(max_abs_diff(flow_map(make_flat(1), s, t), expected) < 1e-14);
    }
    SUBCASE("group property on the sphere") {
        const BundlePoint a = flow_map(sphere, state, 0.6);
        const BundlePoint b = flow_map(sphere, flow_map(sphere, state, 0.3), 0.3);
        CHECK(max_abs_diff(a, b) < 1e-8);
    }
}

TEST_CASE("flow lift identity") {
    const BundlePoint xi(2, 2, {0.2, -0.1, 0.3, 0.5, 1.0, 0.4, -0.2, 0.6});
    // the flat flow is affine, so a wide difference step is exact and keeps rounding small
    CHECK(check_flow_lift(make_flat(2), xi, 0.8, 1e-3, 1e-2) < 1e-10);
    CHECK(check_flow_lift(make_constant_curvature(2, 1.0), xi, 0.5) < 1e-4);
    CHECK(check_flow_lift(make_constant_curvature(2, 1.0), xi, 0.0) == 0.0);
    const BundlePoint xi3 = random_point(2, 3);
    CHECK(check_flow_lift(make_constant_curvature(2, 1.0), xi3, 0.5) < 1e-4);
    CHECK_THROWS_AS(check_flow_lift(make_flat(2), random_point(2, 1), 0.5), Error);
}

TEST_CASE("Jacobi field extraction") {
    SUBCASE("flat second lift projects to (x, y) and (x, X)") {
        const BundlePoint pos(1, 2, {0.1, 0.2, 0.3, 0.4}), vel(1, 2, {1.0, -0.5, 0.25, 2.0});
        const GeodesicRecord rec = integrate_geodesic(make_flat(1), pos, vel, 0, 1, 1e-2);
        const auto fields = extract_jacobi_fields(rec);
        REQUIRE(fields.size() == 2);
        const std::size_t k = rec.size() - 1;
        CHECK(fields[0].pos[k].data() == std::vector<double>{rec.pos[k](0, 0), rec.pos[k](1, 0)});
        CHECK(fields[1].pos[k].data() == std::vector<double>{rec.pos[k](0, 0), rec.pos[k](2, 0)});
        CHECK(fields[1].r == 1);
    }
    SUBCASE("first lift returns the input") {
        const GeodesicRecord rec = integrate_geodesic(make_flat(1), BundlePoint(1, 1, {0, 0}),
                                                      BundlePoint(1, 1, {1, 1}), 0, 1, 1e-1);
        const auto fields = extract_jacobi_fields(rec);
        REQUIRE(fields.size() == 1);
        CHECK(fields[0].pos == rec.pos);
    }
    SUBCASE("order zero has no Jacobi fields") {
        const GeodesicRecord rec = integrate_geodesic(make_flat(1), vec_point({0}), vec_point({1}), 0, 1, 1e-1);
        CHECK_THROWS_AS(extract_jacobi_fields(rec), Error);
    }
    SUBCASE("sphere second lift: both fields satisfy the first-lift equation") {
        const Semispray S = make_constant_curvature(2, 1.0);
        BundlePoint pos = random_point(2, 2), vel = random_point(2, 2);
        for (double& v : pos.data()) v *= 0.3;
        const GeodesicRecord rec = integrate_geodesic(S, pos, vel, 0, 1, 1e-3);
        REQUIRE_FALSE(rec.truncated());
        for (const auto& f : extract_jacobi_fields(rec)) CHECK(geodesic_residual(S, f) < 1e-6);
    }
}

TEST_CASE("projections and involutions of lifted geodesics are geodesics (property)") {
    const Semispray S = make_constant_curvature(2, -1.0);
    for (int r = 1; r <= 3; ++r) {
        BundlePoint pos = random_point(2, r), vel = random_point(2, r);
        for (double& v : pos.data()) v *= 0.2;
        const GeodesicRecord rec = integrate_geodesic(S, pos, vel, 0, 0.5, 1e-3);
        REQUIRE_FALSE(rec.truncated());
        const double own = geodesic_residual(S, rec);
        CHECK(own < 1e-8);
        const double tol = 10 * std::max(own, 1e-9);
        CHECK(mapped_residual(S, rec, [](const BundlePoint& p) { return project(p, ProjectionKind::Pi); }) < tol);
        if (r >= 2) {
            CHECK(mapped_residual(S, rec, [r](const BundlePoint& p) { return involution(p, r); }) < tol);
            CHECK(mapped_residual(S, rec, [](const BundlePoint& p) { return project(p, ProjectionKind::DPi); }) < tol);
        }
    }
}

TEST_CASE("integration is deterministic") {
    const Semispray S = make_constant_curvature(3, 1.0);
    const BundlePoint pos = random_point(3, 2), vel = random_point(3, 2);
    const GeodesicRecord a = integrate_geodesic(S, pos, vel, 0, 0.3, 1e-3);
    const GeodesicRecord b = integrate_geodesic(S, pos, vel, 0, 0.3, 1e-3);
    CHECK(a.t_grid == b.t_grid);
    CHECK(a.pos == b.pos);
    CHECK(a.vel == b.vel);
}

TEST_CASE("halving the step shrinks the error at least eightfold") {
    const Semispray S = make_constant_curvature(2, 1.0);
    auto error = [&](double step) {
        const GeodesicRecord rec = integrate_geodesic(S, vec_point({0, 0}), vec_point({1, 0}), 0, 2, step);
        double worst = 0.0;
        for (std::size_t k = 0; k < rec.size(); ++k) {
            worst = std::max(worst, std::abs(rec.pos[k](0, 0) - 2 * std::tan(rec.t_grid[k] / 2)));
        }
        return worst;
    };
    const double coarse = error(0.1), fine = error(0.05);
    CHECK(coarse / fine >= 8.0);
}

TEST_CASE("residual needs enough grid points") {
    const GeodesicRecord rec = integrate_geodesic(make_flat(1), vec_point({0}), vec_point({1}), 0, 0.3, 0.1);
    CHECK_THROWS_AS(geodesic_residual(make_flat(1), rec), Error);
}
