#pragma once

/**
 * Truncated multi-jets: numbers a = sum_A a_A eps_A over subsets A of
 * {1..r} with eps_i^2 = 0.  Block A is stored at the bitmask index whose
 * bit j-1 marks generator eps_j, so order r carries 2^r reals.
 *
 * Evaluating a smooth function over multidual inputs yields all of its
 * square-free mixed partials at once, which is exactly the data carried
 * by the coordinate blocks of the iterated tangent bundle T^r M.
 */

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>

#include "jetspray/error.hpp"

#ifndef JETSPRAY_MAX_ORDER
#define JETSPRAY_MAX_ORDER 6
#endif

namespace jetspray {

inline constexpr int kMaxOrder = JETSPRAY_MAX_ORDER;
inline constexpr std::size_t kMaxBlocks = std::size_t{1} << kMaxOrder;

using Mask = std::uint32_t;

class Multidual {
public:
    Multidual() noexcept : order_(0) { b_[0] = 0.0; }

    /// Constant `real` embedded at the given order (all infinitesimal blocks zero).
    Multidual(int order, double real);

    /// real + coeff * eps_j, with 1 <= j <= order.
    static Multidual generator(int order, int j, double real = 0.0, double coeff = 1.0);

    /// Build from explicit blocks; blocks.size() must be a power of two.
    static Multidual from_blocks(std::span<const double> blocks);

    Multidual(const Multidual& other) noexcept : order_(other.order_) { copy_from(other); }
    Multidual& operator=(const Multidual& other) noexcept {
        order_ = other.order_;
        copy_from(other);
        return *this;
    }

    int order() const noexcept { return order_; }
    std::size_t size() const noexcept { return std::size_t{1} << order_; }
    double real() const noexcept { return b_[0]; }

    double operator[](Mask m) const noexcept { return b_[m]; }
    double& operator[](Mask m) noexcept { return b_[m]; }

    std::span<const double> blocks() const noexcept { return {b_.data(), size()}; }
    std::span<double> blocks() noexcept { return {b_.data(), size()}; }

    /// Same value viewed at a higher order (new generators get zero coefficients).
    Multidual embed(int new_order) const;

    /// Part free of the top generator, as an order-1-lower value.
    Multidual lower() const;
    /// Coefficient of the top generator, as an order-1-lower value.
    Multidual upper() const;
    /// lo + eps_{r+1} * hi where r is the common order of lo and hi.
    static Multidual join(const Multidual& lo, const Multidual& hi);

    Multidual& operator+=(const Multidual& o);
    Multidual& operator-=(const Multidual& o);
    Multidual& operator*=(const Multidual& o);
    Multidual& operator/=(const Multidual& o);
    Multidual& operator+=(double s) noexcept { b_[0] += s; return *this; }
    Multidual& operator-=(double s) noexcept { b_[0] -= s; return *this; }
    Multidual& operator*=(double s) noexcept;
    Multidual& operator/=(double s) noexcept { return *this *= (1.0 / s); }

    friend bool operator==(const Multidual& a, const Multidual& b) noexcept;

private:
    void copy_from(const Multidual& other) noexcept {
        const std::size_t n = other.size();
        for (std::size_t i = 0; i < n; ++i) b_[i] = other.b_[i];
    }

    int order_;
    std::array<double, kMaxBlocks> b_;
};

Multidual operator-(const Multidual& a);
Multidual operator+(Multidual a, const Multidual& b);
Multidual operator-(Multidual a, const Multidual& b);
Multidual operator*(const Multidual& a, const Multidual& b);
Multidual operator/(const Multidual& a, const Multidual& b);
Multidual operator+(Multidual a, double s);
Multidual operator+(double s, Multidual a);
Multidual operator-(Multidual a, double s);
Multidual operator-(double s, const Multidual& a);
Multidual operator*(Multidual a, double s);
Multidual operator*(double s, Multidual a);
Multidual operator/(Multidual a, double s);
Multidual operator/(double s, const Multidual& a);

/// Multiplicative inverse; SingularJet when the real part is zero.
Multidual inverse(const Multidual& a);

Multidual sin(const Multidual& a);
Multidual cos(const Multidual& a);
Multidual tan(const Multidual& a);
Multidual exp(const Multidual& a);
/// DomainError unless real part > 0.
Multidual log(const Multidual& a);
/// DomainError unless real part > 0.
Multidual sqrt(const Multidual& a);
/// Integer power by repeated products; negative k needs a nonzero real part.
Multidual pow(const Multidual& a, int k);
/// Real power; DomainError unless real part > 0.
Multidual pow(const Multidual& a, double p);

/// f(a) from the derivative tower of f at the real part:
/// derivative(k, x) must return the k-th derivative of f at x.
/// Implemented by recursive splitting on the highest generator,
/// f(u + eps v) = f(u) + eps f'(u) v.
Multidual compose(const Multidual& a, const std::function<double(int, double)>& derivative);

std::ostream& operator<<(std::ostream& os, const Multidual& a);

// ---------------------------------------------------------------------------
// Function lifts
// ---------------------------------------------------------------------------

/// A scalar function on T^s M over an n-dimensional chart.  Coordinates are
/// laid out block-major: the value at (mask A, component i) sits at A*n + i.
/// The callable must accept multidual coordinates of any (common) order.
struct ScalarField {
    int n = 1;
    int s = 0;
    std::function<Multidual(std::span<const Multidual>)> f;

    Multidual operator()(std::span<const Multidual> coords) const;
    double operator()(std::span<const double> coords) const;
};

enum class LiftKind { Vertical, Complete };

/// Vertical or complete lift of f to T^{s+1} M.  The lifted function is
/// again evaluable over multiduals, so lifts compose.
ScalarField md_lift(const ScalarField& f, LiftKind which);

}  // namespace jetspray
