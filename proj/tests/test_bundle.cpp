#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "jetspray/bundle.hpp"
#include "test_support.hpp"

using namespace jetspray;
using jetspray::testing::random_point;

namespace {

BundlePoint point(int n, int r, std::vector<double> data) { return BundlePoint(n, r, std::move(data)); }

// kappa_1 is the identity; higher levels are bit swaps.
BundlePoint kappa(const BundlePoint& xi, int level) { return level == 1 ? xi : involution(xi, level); }

BundlePoint pi(const BundlePoint& xi) { return project(xi, ProjectionKind::Pi); }
BundlePoint dpi(const BundlePoint& xi) { return project(xi, ProjectionKind::DPi); }
BundlePoint ddpi(const BundlePoint& xi) { return project(xi, ProjectionKind::DDPi); }

// Recursive definition of the canonical projections, kept independent of the closed form.
BundlePoint recursive_projection(const BundlePoint& xi, int a) {
    const int r = xi.r();
    if (r == 1) return xi;
    if (a < r) return recursive_projection(pi(xi), a);
    return recursive_projection(dpi(xi), r - 1);
}

// Nested evaluation w^(k)(u, v, s^1..s^k) = w^(k-1)(u + s^1 v, s^2..s^k).
std::vector<double> nested_w(std::vector<double> blocks, int n, const std::vector<double>& s) {
    for (double sk : s) {
        const std::size_t half = blocks.size() / 2;
        std::vector<double> next(half);
        for (std::size_t i = 0; i < half; ++i) next[i] = blocks[i] + sk * blocks[half + i];
        blocks = std::move(next);
    }
    REQUIRE(blocks.size() == static_cast<std::size_t>(n));
    return blocks;
}

void require_kind(ErrorKind kind, const std::function<void()>& f) {
    try {
        f();
        FAIL("expected " << to_string(kind));
    } catch (const Error& e) {
        CHECK(e.kind() == kind);
    }
}

}  // namespace

TEST_CASE("involution swaps the middle blocks") {
    const BundlePoint xi = point(1, 2, {1, 2, 3, 4});
    CHECK(involution(xi, 2).data() == std::vector<double>{1, 3, 2, 4});
    require_kind(ErrorKind::BadLevel, [&] { involution(xi, 3); });
    require_kind(ErrorKind::BadLevel, [&] { involution(xi, 1); });
}

TEST_CASE("involution realizes the swap of mixed partials") {
    // W(s, t) = s^2 t at (1, 1); g(inner, outer) -> T^2 R point with inner on bit 1, outer on bit 2
    const double h = 1e-4;
    auto second_jet = [h](const std::function<double(double, double)>& g) {
        const double d_in = (g(1 + h, 1) - g(1 - h, 1)) / (2 * h);
        const double d_out = (g(1, 1 + h) - g(1, 1 - h)) / (2 * h);
        const double d_mix = (g(1 + h, 1 + h) - g(1 + h, 1 - h) - g(1 - h, 1 + h) + g(1 - h, 1 - h)) / (4 * h * h);
        return point(1, 2, {g(1, 1), d_in, d_out, d_mix});
    };
    auto W = [](double s, double t) { return s * s * t; };
    const BundlePoint dt_ds = second_jet([&](double s, double t) { return W(s, t); });
    const BundlePoint ds_dt = second_jet([&](double t, double s) { return W(s, t); });
    CHECK(max_abs_diff(dt_ds, involution(ds_dt, 2)) < 1e-6);
    CHECK(dt_ds(1, 0) == doctest::Approx(2.0));
    CHECK(dt_ds(2, 0) == doctest::Approx(1.0));
}

TEST_CASE("projection examples") {
    const BundlePoint xi = point(1, 2, {1, 2, 3, 4});
    CHECK(pi(xi).data() == std::vector<double>{1, 2});
    CHECK(dpi(xi).data() == std::vector<double>{1, 3});
    require_kind(ErrorKind::BadOrder, [&] { ddpi(xi); });
    require_kind(ErrorKind::BadOrder, [] { pi(BundlePoint(1, 0)); });
    require_kind(ErrorKind::BadOrder, [] { dpi(BundlePoint(1, 1)); });
}

TEST_CASE("structure identities hold exactly (property)") {
    for (int trial = 0; trial < 100; ++trial) {
        const int n = jetspray::testing::uniform_int(1, 3);
        const int r = jetspray::testing::uniform_int(1, 4);
        const BundlePoint a = random_point(n, r);
        const BundlePoint b = random_point(n, r + 1);
        const BundlePoint c = random_point(n, r + 2);
        INFO("n = " << n << ", r = " << r);
        CHECK(kappa(kappa(a, r), r) == a);
        CHECK(pi(kappa(b, r)) == kappa(pi(b), r));
        CHECK(dpi(b) == pi(kappa(b, r + 1)));
        CHECK(dpi(pi(c)) == pi(ddpi(c)));
        CHECK(ddpi(kappa(c, r + 2)) == kappa(ddpi(c), r + 1));
        if (r >= 2) CHECK(pi(dpi(b)) == pi(pi(b)));
    }
    // the last identity at r = 1 reads pi_0 o D pi_0 = pi_0 o pi_1 on T^2 M
    const BundlePoint t2 = random_point(2, 2);
    CHECK(pi(dpi(t2)) == pi(pi(t2)));
}

TEST_CASE("canonical projection examples") {
    const BundlePoint xi = point(1, 2, {1, 2, 3, 4});
    CHECK(canonical_projection(xi, 1).data() == std::vector<double>{1, 2});
    CHECK(canonical_projection(xi, 2).data() == std::vector<double>{1, 3});
    const BundlePoint t = point(2, 1, {1, 2, 3, 4});
    CHECK(canonical_projection(t, 1) == t);
    require_kind(ErrorKind::BadIndex, [&] { canonical_projection(xi, 3); });
    require_kind(ErrorKind::BadIndex, [&] { canonical_projection(xi, 0); });
}

TEST_CASE("canonical projections equal the recursive definition (property)") {
    for (int r = 1; r <= 5; ++r) {
        for (int trial = 0; trial < 10; ++trial) {
            const BundlePoint xi = random_point(2, r);
            for (int a = 1; a <= r; ++a) {
                const BundlePoint p = canonical_projection(xi, a);
                CHECK(p == recursive_projection(xi, a));
                CHECK(p.block(0)[0] == xi.block(0)[0]);
                CHECK(p.block(0)[1] == xi.block(0)[1]);
            }
            if (r >= 2) {
                CHECK(canonical_projection(xi, 1) == [&] {
                    BundlePoint q = xi;
                    while (q.r() > 1) q = pi(q);
                    return q;
                }());
            }
        }
    }
}

TEST_CASE("canonical projections are pairwise distinct at a witness point") {
    for (int r = 1; r <= 5; ++r) {
        BundlePoint xi(1, r);
        for (Mask A = 0; A < xi.block_count(); ++A) xi(A, 0) = static_cast<double>(A);
        for (int a = 1; a <= r; ++a) {
            for (int b = a + 1; b <= r; ++b) CHECK(canonical_projection(xi, a) != canonical_projection(xi, b));
        }
    }
}

TEST_CASE("fiber operations") {
    const BundlePoint u = point(1, 1, {1, 2}), v = point(1, 1, {1, 5});
    CHECK(fiber_add(u, v).data() == std::vector<double>{1, 7});
    CHECK(fiber_scale(u, 0.0).data() == std::vector<double>{1, 0});
    const BundlePoint w = point(1, 2, {1, 2, 3, 4});
    CHECK(fiber_scale(w, 2.0).data() == std::vector<double>{1, 2, 6, 8});
    require_kind(ErrorKind::BaseMismatch, [&] { fiber_add(u, point(1, 1, {1.1, 5})); });
    CHECK_NOTHROW(fiber_add(u, point(1, 1, {1 + 1e-13, 5})));
}

TEST_CASE("Liouville field") {
    CHECK(liouville(point(1, 1, {1, 2})).data() == std::vector<double>{1, 2, 0, 2});
    const BundlePoint z = liouville(point(2, 1, {1, 2, 0, 0}));
    for (Mask A = 2; A < 4; ++A) {
        for (double v : z.block(A)) CHECK(v == 0.0);
    }
    // d/ds of (x, (1+s) y) by central differences
    const BundlePoint xi = random_point(2, 2);
    const BundlePoint C = liouville(xi);
    const double h = 1e-3;
    const BundlePoint plus = fiber_scale(xi, 1 + h), minus = fiber_scale(xi, 1 - h);
    auto [base, deriv] = split_top(C);
    CHECK(base == xi);
    for (std::size_t i = 0; i < deriv.data().size(); ++i) {
        CHECK(deriv.data()[i] == doctest::Approx((plus.data()[i] - minus.data()[i]) / (2 * h)));
    }
}

TEST_CASE("slashed bundle membership") {
    CHECK_FALSE(in_slashed(point(1, 1, {1, 0})).member);
    CHECK_FALSE(in_slashed(point(1, 2, {1, 2, 0, 4})).member);
    CHECK(in_slashed(point(1, 2, {1, 0, 3, 0})).member);
}

TEST_CASE("representative map") {
    const BundlePoint xi = point(1, 2, {1, 2, 3, 4});
    const RepresentativeMap W = representative_map(xi);
    for (double s1 : {-0.3, 0.0, 0.7}) {
        for (double s2 : {-1.1, 0.5}) {
            const std::vector<double> s{s1, s2};
            CHECK(W(s)[0] == doctest::Approx(1 + 3 * s1 + 2 * s2 + 4 * s1 * s2));
        }
    }
    const BundlePoint t = point(2, 1, {1, 2, 3, 4});
    const std::vector<double> s{0.25};
    CHECK(representative_map(t)(s) == std::vector<double>{1 + 0.25 * 3, 2 + 0.25 * 4});
    BundlePoint constant(2, 3);
    constant(0, 0) = 5;
    constant(0, 1) = -1;
    const std::vector<double> s3{0.1, 0.2, 0.3};
    CHECK(representative_map(constant)(s3) == std::vector<double>{5, -1});
}

TEST_CASE("representative map agrees with the nested recursion (property)") {
    for (int r = 1; r <= 4; ++r) {
        for (int trial = 0; trial < 10; ++trial) {
            const BundlePoint xi = random_point(2, r);
            std::vector<double> s(static_cast<std::size_t>(r));
            for (double& v : s) v = jetspray::testing::uniform();
            const std::vector<double> a = representative_map(xi)(s);
            const std::vector<double> b = nested_w(xi.data(), 2, s);
            for (int i = 0; i < 2; ++i) CHECK(a[static_cast<std::size_t>(i)] == doctest::Approx(b[static_cast<std::size_t>(i)]).epsilon(1e-13));
        }
    }
}

TEST_CASE("mixed partials of the representative map reproduce the point (property)") {
    const double h = 1e-3;
    for (int r = 1; r <= 3; ++r) {
        for (int trial = 0; trial < 5; ++trial) {
            const BundlePoint xi = random_point(2, r);
            const RepresentativeMap W = representative_map(xi);
            BundlePoint rebuilt(2, r);
            for (Mask A = 0; A < xi.block_count(); ++A) {
                // central-difference stencil in the parameters selected by A
                const int k = __builtin_popcount(A);
                for (Mask signs = 0; signs < (Mask{1} << k); ++signs) {
                    std::vector<double> s(static_cast<std::size_t>(r), 0.0);
                    double weight = 1.0;
                    int used = 0;
                    for (int j = 1; j <= r; ++j) {
                        if (!has_bit(A, j)) continue;
                        const bool minus = ((signs >> used) & 1u) != 0;
                        s[static_cast<std::size_t>(r - j)] = minus ? -h : h;
                        weight *= minus ? -1.0 : 1.0;
                        ++used;
                    }
                    const std::vector<double> w = W(s);
                    for (int i = 0; i < 2; ++i) rebuilt(A, i) += weight * w[static_cast<std::size_t>(i)] / std::pow(2 * h, k);
                }
            }
            CHECK(max_abs_diff(rebuilt, xi) < 1e-6);
        }
    }
}

TEST_CASE("multidual conversion round trip") {
    const BundlePoint xi = random_point(3, 3);
    const auto md = to_multiduals(xi);
    CHECK(from_multiduals(md) == xi);
}
