#include "jetspray/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace jetspray {

namespace {

void require_shape(const BundlePoint& a, const BundlePoint& b) {
    if (a.n() != b.n() || a.r() != b.r()) {
        throw Error(ErrorKind::OrderMismatch, "bundle points of shape (n=" + std::to_string(a.n()) +
                                                  ", r=" + std::to_string(a.r()) + ") and (n=" +
                                                  std::to_string(b.n()) + ", r=" + std::to_string(b.r()) + ")");
    }
}

// Drop bit `drop` from an order-r point; bits above it move down one place.
BundlePoint drop_bit(const BundlePoint& xi, int drop) {
    const int r = xi.r();
    BundlePoint out(xi.n(), r - 1);
    const Mask below = bit(drop) - 1;
    for (Mask A = 0; A < out.block_count(); ++A) {
        const Mask src = (A & below) | ((A & ~below) << 1);
        std::copy_n(xi.block(src).begin(), xi.n(), out.block(A).begin());
    }
    return out;
}

}  // namespace

BundlePoint::BundlePoint(int n, int r) : n_(n), r_(r) {
    if (n < 1) throw Error(ErrorKind::InvalidArgument, "chart dimension must be positive");
    if (r < 0 || r > kMaxOrder) throw Error(ErrorKind::BadOrder, "bundle order " + std::to_string(r));
    data_.assign(static_cast<std::size_t>(n) << r, 0.0);
}

BundlePoint::BundlePoint(int n, int r, std::vector<double> data) : BundlePoint(n, r) {
    if (data.size() != data_.size()) {
        throw Error(ErrorKind::InvalidArgument, "expected " + std::to_string(data_.size()) +
                                                    " coordinates, got " + std::to_string(data.size()));
    }
    data_ = std::move(data);
}

double max_abs_diff(const BundlePoint& a, const BundlePoint& b) {
    require_shape(a, b);
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

double max_abs(const BundlePoint& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

std::pair<BundlePoint, BundlePoint> split_top(const BundlePoint& xi) {
    if (xi.r() < 1) throw Error(ErrorKind::BadOrder, "cannot split an order-0 point");
    BundlePoint base(xi.n(), xi.r() - 1);
    BundlePoint fiber(xi.n(), xi.r() - 1);
    const std::size_t half = base.data().size();
    std::copy_n(xi.data().begin(), half, base.data().begin());
    std::copy_n(xi.data().begin() + static_cast<std::ptrdiff_t>(half), half, fiber.data().begin());
    return {std::move(base), std::move(fiber)};
}

BundlePoint join_top(const BundlePoint& base, const BundlePoint& fiber) {
    require_shape(base, fiber);
    std::vector<double> data(base.data());
    data.insert(data.end(), fiber.data().begin(), fiber.data().end());
    return BundlePoint(base.n(), base.r() + 1, std::move(data));
}

BundlePoint involution(const BundlePoint& xi, int level) {
    if (level < 2 || level > xi.r()) {
        throw Error(ErrorKind::BadLevel, "involution level " + std::to_string(level) + " on T^" +
                                             std::to_string(xi.r()) + "M");
    }
    BundlePoint out(xi.n(), xi.r());
    for (Mask A = 0; A < xi.block_count(); ++A) {
        const Mask dst = swap_bits(A, level - 1, level);
        std::copy_n(xi.block(A).begin(), xi.n(), out.block(dst).begin());
    }
    return out;
}

BundlePoint project(const BundlePoint& xi, ProjectionKind kind) {
    const int r = xi.r();
    switch (kind) {
    case ProjectionKind::Pi:
        if (r < 1) throw Error(ErrorKind::BadOrder, "pi needs r >= 1");
        return drop_bit(xi, r);
    case ProjectionKind::DPi:
        if (r < 2) throw Error(ErrorKind::BadOrder, "D pi needs r >= 2");
        return drop_bit(xi, r - 1);
    case ProjectionKind::DDPi:
        if (r < 3) throw Error(ErrorKind::BadOrder, "DD pi needs r >= 3");
        return drop_bit(xi, r - 2);
    }
    throw Error(ErrorKind::InvalidArgument, "unknown projection");
}

BundlePoint canonical_projection(const BundlePoint& xi, int a) {
    if (xi.r() < 1) throw Error(ErrorKind::BadOrder, "canonical projections need r >= 1");
    if (a < 1 || a > xi.r()) {
        throw Error(ErrorKind::BadIndex, "projection index " + std::to_string(a) + " for r = " +
                                             std::to_string(xi.r()));
    }
    BundlePoint out(xi.n(), 1);
    std::copy_n(xi.block(0).begin(), xi.n(), out.block(0).begin());
    std::copy_n(xi.block(bit(a)).begin(), xi.n(), out.block(1).begin());
    return out;
}

BundlePoint fiber_combine(const BundlePoint& xi, const BundlePoint& eta, double lambda, FiberMode mode) {
    if (xi.r() < 1) throw Error(ErrorKind::BadOrder, "fiber operations need r >= 1");
    const Mask top = bit(xi.r());
    BundlePoint out = xi;
    if (mode == FiberMode::Scale) {
        for (Mask A = top; A < xi.block_count(); ++A) {
            for (double& v : out.block(A)) v *= lambda;
        }
        return out;
    }
    require_shape(xi, eta);
    for (Mask A = 0; A < top; ++A) {
        for (int i = 0; i < xi.n(); ++i) {
            if (std::abs(xi(A, i) - eta(A, i)) > 1e-12) {
                throw Error(ErrorKind::BaseMismatch, "fiber addition over different base points");
            }
        }
    }
    for (Mask A = top; A < xi.block_count(); ++A) {
        for (int i = 0; i < xi.n(); ++i) out(A, i) += eta(A, i);
    }
    return out;
}

BundlePoint fiber_add(const BundlePoint& xi, const BundlePoint& eta) {
    return fiber_combine(xi, eta, 1.0, FiberMode::Add);
}

BundlePoint fiber_scale(const BundlePoint& xi, double lambda) {
    return fiber_combine(xi, xi, lambda, FiberMode::Scale);
}

BundlePoint liouville(const BundlePoint& xi) {
    if (xi.r() < 1) throw Error(ErrorKind::BadOrder, "Liouville field needs r >= 1");
    BundlePoint velocity(xi.n(), xi.r());
    const Mask top = bit(xi.r());
    for (Mask A = top; A < xi.block_count(); ++A) {
        std::copy_n(xi.block(A).begin(), xi.n(), velocity.block(A).begin());
    }
    return join_top(xi, velocity);
}

SlashedFlag in_slashed(const BundlePoint& xi) {
    if (xi.r() < 1) return SlashedFlag{true};
    double norm2 = 0.0;
    for (double v : xi.block(bit(xi.r()))) norm2 += v * v;
    return SlashedFlag{norm2 > 0.0};
}

std::vector<double> RepresentativeMap::operator()(std::span<const double> s) const {
    const int r = xi_.r();
    if (static_cast<int>(s.size()) != r) {
        throw Error(ErrorKind::InvalidArgument, "representative map takes " + std::to_string(r) + " parameters");
    }
    std::vector<double> out(static_cast<std::size_t>(xi_.n()), 0.0);
    for (Mask A = 0; A < xi_.block_count(); ++A) {
        double w = 1.0;
        for (int j = 1; j <= r; ++j) {
            if (has_bit(A, j)) w *= s[static_cast<std::size_t>(r - j)];
        }
        if (w == 0.0) continue;
        for (int i = 0; i < xi_.n(); ++i) out[static_cast<std::size_t>(i)] += w * xi_(A, i);
    }
    return out;
}

RepresentativeMap representative_map(const BundlePoint& xi) { return RepresentativeMap(xi); }

std::vector<Multidual> to_multiduals(const BundlePoint& xi) {
    std::vector<Multidual> out(static_cast<std::size_t>(xi.n()), Multidual(xi.r(), 0.0));
    for (Mask A = 0; A < xi.block_count(); ++A) {
        for (int i = 0; i < xi.n(); ++i) out[static_cast<std::size_t>(i)][A] = xi(A, i);
    }
    return out;
}

BundlePoint from_multiduals(std::span<const Multidual> coords) {
    if (coords.empty()) throw Error(ErrorKind::InvalidArgument, "no coordinates");
    const int r = coords.front().order();
    const int n = static_cast<int>(coords.size());
    BundlePoint out(n, r);
    for (int i = 0; i < n; ++i) {
        if (coords[static_cast<std::size_t>(i)].order() != r) {
            throw Error(ErrorKind::OrderMismatch, "mixed multidual orders");
        }
        for (Mask A = 0; A < out.block_count(); ++A) out(A, i) = coords[static_cast<std::size_t>(i)][A];
    }
    return out;
}

}  // namespace jetspray
