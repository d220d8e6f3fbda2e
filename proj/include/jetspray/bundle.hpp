#pragma once

// Points of the iterated tangent bundle T^r M over a single n-dimensional
// chart, and the canonical maps between these bundles.
//
// Block convention: a point carries 2^r blocks of n reals indexed by a
// bitmask A of {1..r}.  If the point is the mixed partial
// d_{s^1} ... d_{s^r} W at 0, block A holds the partial in the parameters
// s^{r-j+1} for j in A; bit 1 is the innermost derivative and bit r the
// outermost one.  For r = 2 the blocks (0, {1}, {2}, {1,2}) are (x, y, X, Y).

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "jetspray/error.hpp"
#include "jetspray/multidual.hpp"

namespace jetspray {

/// Flip bits i and j (1-based) of a mask.
constexpr Mask swap_bits(Mask m, int i, int j) noexcept {
    const Mask bi = (m >> (i - 1)) & 1u;
    const Mask bj = (m >> (j - 1)) & 1u;
    if (bi == bj) return m;
    return m ^ ((Mask{1} << (i - 1)) | (Mask{1} << (j - 1)));
}

constexpr bool has_bit(Mask m, int j) noexcept { return ((m >> (j - 1)) & 1u) != 0; }
constexpr Mask bit(int j) noexcept { return Mask{1} << (j - 1); }

class BundlePoint {
public:
    BundlePoint() = default;
    /// Zero point of T^r M over an n-dimensional chart.
    BundlePoint(int n, int r);
    /// Blocks given in bitmask order, concatenated (size n * 2^r).
    BundlePoint(int n, int r, std::vector<double> data);

    int n() const noexcept { return n_; }
    int r() const noexcept { return r_; }
    std::size_t block_count() const noexcept { return std::size_t{1} << r_; }

    std::span<const double> block(Mask m) const { return {data_.data() + m * n_, static_cast<std::size_t>(n_)}; }
    std::span<double> block(Mask m) { return {data_.data() + m * n_, static_cast<std::size_t>(n_)}; }

    double& operator()(Mask m, int i) { return data_[m * n_ + i]; }
    double operator()(Mask m, int i) const { return data_[m * n_ + i]; }

    const std::vector<double>& data() const noexcept { return data_; }
    std::vector<double>& data() noexcept { return data_; }

    friend bool operator==(const BundlePoint&, const BundlePoint&) = default;

private:
    int n_ = 0;
    int r_ = 0;
    std::vector<double> data_;
};

/// Max absolute difference over all blocks; throws OrderMismatch on shape mismatch.
double max_abs_diff(const BundlePoint& a, const BundlePoint& b);
double max_abs(const BundlePoint& a);

/// Split an order-(r+1) point into its base (top bit clear) and fiber (top bit set) halves.
std::pair<BundlePoint, BundlePoint> split_top(const BundlePoint& xi);
/// Inverse of split_top.
BundlePoint join_top(const BundlePoint& base, const BundlePoint& fiber);

/// kappa_k acting on T^r M (kappa_r itself for k = r, D kappa_{r-1} for
/// k = r-1, ...): swaps bits k-1 and k.  BadLevel unless 2 <= k <= r.
BundlePoint involution(const BundlePoint& xi, int level);

enum class ProjectionKind { Pi, DPi, DDPi };

/// pi drops the top bit, D pi drops bit r-1, DD pi drops bit r-2; the
/// surviving higher bits shift down by one.  Result has order r-1.
BundlePoint project(const BundlePoint& xi, ProjectionKind kind);

/// p^{(r)}_a in closed form: the TM point (block 0, block {a}).
BundlePoint canonical_projection(const BundlePoint& xi, int a);

enum class FiberMode { Add, Scale };

/// Vector-space structure of T^r M over T^{r-1} M.  For Add the two points
/// must share the base blocks (top bit clear) within 1e-12.
BundlePoint fiber_combine(const BundlePoint& xi, const BundlePoint& eta, double lambda, FiberMode mode);
BundlePoint fiber_add(const BundlePoint& xi, const BundlePoint& eta);
BundlePoint fiber_scale(const BundlePoint& xi, double lambda);

/// Liouville vector field C_r(xi) = d/ds ((1+s) xi) at s = 0, an order r+1 point.
BundlePoint liouville(const BundlePoint& xi);

struct SlashedFlag {
    bool member = false;
    explicit operator bool() const noexcept { return member; }
};

/// member iff the block with mask {r} is nonzero.
SlashedFlag in_slashed(const BundlePoint& xi);

/// The multilinear map W(s^1..s^r) = sum_A xi_A prod_{j in A} s^{r-j+1}
/// whose mixed partial d_{s^1}...d_{s^r} W at 0 reproduces xi.
class RepresentativeMap {
public:
    explicit RepresentativeMap(BundlePoint xi) : xi_(std::move(xi)) {}

    int parameters() const noexcept { return xi_.r(); }
    /// s holds (s^1, ..., s^r).
    std::vector<double> operator()(std::span<const double> s) const;

    const BundlePoint& point() const noexcept { return xi_; }

private:
    BundlePoint xi_;
};

RepresentativeMap representative_map(const BundlePoint& xi);

/// Multidual coordinates x_i = sum_A xi(A, i) eps_A of order r.
std::vector<Multidual> to_multiduals(const BundlePoint& xi);
/// Inverse of to_multiduals; all entries must share one order.
BundlePoint from_multiduals(std::span<const Multidual> coords);

}  // namespace jetspray
