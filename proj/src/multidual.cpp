#include "jetspray/multidual.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

namespace jetspray {

namespace {

void check_order(int order) {
    if (order < 0 || order > kMaxOrder) {
        throw Error(ErrorKind::BadOrder, "multidual order " + std::to_string(order) +
                                             " outside [0, " + std::to_string(kMaxOrder) + "]");
    }
}

void check_same(const Multidual& a, const Multidual& b) {
    if (a.order() != b.order()) {
        throw Error(ErrorKind::OrderMismatch, "orders " + std::to_string(a.order()) + " and " +
                                                  std::to_string(b.order()));
    }
}

Mask swap_bits(Mask m, int i, int j) {
    const Mask bi = (m >> (i - 1)) & 1u;
    const Mask bj = (m >> (j - 1)) & 1u;
    if (bi == bj) return m;
    return m ^ ((Mask{1} << (i - 1)) | (Mask{1} << (j - 1)));
}

Multidual compose_rec(const Multidual& a, int k, const std::function<double(int, double)>& d) {
    if (a.order() == 0) return Multidual(0, d(k, a.real()));
    const Multidual u = a.lower();
    const Multidual v = a.upper();
    return Multidual::join(compose_rec(u, k, d), compose_rec(u, k + 1, d) * v);
}

}  // namespace

Multidual::Multidual(int order, double real) : order_(order) {
    check_order(order);
    b_[0] = real;
    for (std::size_t i = 1; i < size(); ++i) b_[i] = 0.0;
}

Multidual Multidual::generator(int order, int j, double real, double coeff) {
    if (j < 1 || j > order) {
        throw Error(ErrorKind::BadIndex, "generator " + std::to_string(j) + " at order " +
                                             std::to_string(order));
    }
    Multidual out(order, real);
    out[Mask{1} << (j - 1)] = coeff;
    return out;
}

Multidual Multidual::from_blocks(std::span<const double> blocks) {
    int order = 0;
    while ((std::size_t{1} << order) < blocks.size()) ++order;
    if ((std::size_t{1} << order) != blocks.size()) {
        throw Error(ErrorKind::InvalidArgument, "block count must be a power of two");
    }
    Multidual out(order, 0.0);
    for (std::size_t i = 0; i < blocks.size(); ++i) out.b_[i] = blocks[i];
    return out;
}

Multidual Multidual::embed(int new_order) const {
    if (new_order < order_) {
        throw Error(ErrorKind::OrderMismatch, "cannot embed into a lower order");
    }
    Multidual out(new_order, 0.0);
    for (std::size_t i = 0; i < size(); ++i) out.b_[i] = b_[i];
    return out;
}

Multidual Multidual::lower() const {
    if (order_ == 0) throw Error(ErrorKind::BadOrder, "order-0 value has no top generator");
    Multidual out(order_ - 1, 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) out.b_[i] = b_[i];
    return out;
}

Multidual Multidual::upper() const {
    if (order_ == 0) throw Error(ErrorKind::BadOrder, "order-0 value has no top generator");
    Multidual out(order_ - 1, 0.0);
    const std::size_t half = out.size();
    for (std::size_t i = 0; i < half; ++i) out.b_[i] = b_[half + i];
    return out;
}

Multidual Multidual::join(const Multidual& lo, const Multidual& hi) {
    check_same(lo, hi);
    Multidual out(lo.order() + 1, 0.0);
    const std::size_t half = lo.size();
    for (std::size_t i = 0; i < half; ++i) {
        out.b_[i] = lo.b_[i];
        out.b_[half + i] = hi.b_[i];
    }
    return out;
}

Multidual& Multidual::operator+=(const Multidual& o) {
    check_same(*this, o);
    for (std::size_t i = 0; i < size(); ++i) b_[i] += o.b_[i];
    return *this;
}

Multidual& Multidual::operator-=(const Multidual& o) {
    check_same(*this, o);
    for (std::size_t i = 0; i < size(); ++i) b_[i] -= o.b_[i];
    return *this;
}

Multidual& Multidual::operator*=(const Multidual& o) {
    *this = *this * o;
    return *this;
}

Multidual& Multidual::operator/=(const Multidual& o) {
    *this = *this / o;
    return *this;
}

Multidual& Multidual::operator*=(double s) noexcept {
    for (std::size_t i = 0; i < size(); ++i) b_[i] *= s;
    return *this;
}

bool operator==(const Multidual& a, const Multidual& b) noexcept {
    if (a.order_ != b.order_) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.b_[i] != b.b_[i]) return false;
    }
    return true;
}

Multidual operator-(const Multidual& a) { return a * -1.0; }
Multidual operator+(Multidual a, const Multidual& b) { return a += b; }
Multidual operator-(Multidual a, const Multidual& b) { return a -= b; }

// (a b)_A = sum over B subset of A of a_B b_{A\B}
Multidual operator*(const Multidual& a, const Multidual& b) {
    check_same(a, b);
    if (a.order() == 0) return Multidual(0, a.real() * b.real());
    Multidual out(a.order(), 0.0);
    const Mask n = static_cast<Mask>(a.size());
    for (Mask A = 0; A < n; ++A) {
        double acc = 0.0;
        for (Mask B = A;; B = (B - 1) & A) {
            acc += a[B] * b[A ^ B];
            if (B == 0) break;
        }
        out[A] = acc;
    }
    return out;
}

Multidual inverse(const Multidual& a) {
    if (a.order() == 0) {
        if (a.real() == 0.0) throw Error(ErrorKind::SingularJet, "division by a jet with zero real part");
        return Multidual(0, 1.0 / a.real());
    }
    // 1/(u + eps v) = 1/u - eps v/u^2
    const Multidual iu = inverse(a.lower());
    return Multidual::join(iu, -(a.upper() * iu * iu));
}

Multidual operator/(const Multidual& a, const Multidual& b) {
    check_same(a, b);
    return a * inverse(b);
}

Multidual operator+(Multidual a, double s) { return a += s; }
Multidual operator+(double s, Multidual a) { return a += s; }
Multidual operator-(Multidual a, double s) { return a -= s; }
Multidual operator-(double s, const Multidual& a) { return -a + s; }
Multidual operator*(Multidual a, double s) { return a *= s; }
Multidual operator*(double s, Multidual a) { return a *= s; }
Multidual operator/(Multidual a, double s) { return a /= s; }
Multidual operator/(double s, const Multidual& a) { return inverse(a) * s; }

Multidual compose(const Multidual& a, const std::function<double(int, double)>& derivative) {
    return compose_rec(a, 0, derivative);
}

Multidual sin(const Multidual& a) {
    return compose(a, [](int k, double x) { return std::sin(x + k * std::numbers::pi / 2); });
}

Multidual cos(const Multidual& a) {
    return compose(a, [](int k, double x) { return std::cos(x + k * std::numbers::pi / 2); });
}

Multidual tan(const Multidual& a) { return sin(a) / cos(a); }

Multidual exp(const Multidual& a) {
    return compose(a, [](int, double x) { return std::exp(x); });
}

Multidual log(const Multidual& a) {
    if (!(a.real() > 0.0)) throw Error(ErrorKind::DomainError, "log of non-positive real part");
    return compose(a, [](int k, double x) {
        if (k == 0) return std::log(x);
        // (-1)^{k-1} (k-1)! / x^k
        double v = 1.0;
        for (int i = 1; i < k; ++i) v *= -static_cast<double>(i);
        return v / std::pow(x, k);
    });
}

Multidual pow(const Multidual& a, double p) {
    if (!(a.real() > 0.0)) throw Error(ErrorKind::DomainError, "real power of non-positive real part");
    return compose(a, [p](int k, double x) {
        double c = 1.0;
        for (int i = 0; i < k; ++i) c *= (p - i);
        return c * std::pow(x, p - k);
    });
}

Multidual sqrt(const Multidual& a) {
    if (!(a.real() > 0.0)) throw Error(ErrorKind::DomainError, "sqrt of non-positive real part");
    return pow(a, 0.5);
}

Multidual pow(const Multidual& a, int k) {
    if (k < 0) return inverse(pow(a, -k));
    Multidual result(a.order(), 1.0);
    Multidual base = a;
    while (k > 0) {
        if (k & 1) result = result * base;
        k >>= 1;
        if (k > 0) base = base * base;
    }
    return result;
}

std::ostream& operator<<(std::ostream& os, const Multidual& a) {
    os << '[';
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (i) os << ", ";
        os << a[static_cast<Mask>(i)];
    }
    return os << ']';
}

// ---------------------------------------------------------------------------

Multidual ScalarField::operator()(std::span<const Multidual> coords) const {
    const std::size_t expected = static_cast<std::size_t>(n) << s;
    if (coords.size() != expected) {
        throw Error(ErrorKind::InvalidArgument, "scalar field expects " + std::to_string(expected) +
                                                    " coordinates, got " + std::to_string(coords.size()));
    }
    return f(coords);
}

double ScalarField::operator()(std::span<const double> coords) const {
    std::vector<Multidual> md;
    md.reserve(coords.size());
    for (double c : coords) md.emplace_back(0, c);
    return (*this)(std::span<const Multidual>(md)).real();
}

ScalarField md_lift(const ScalarField& field, LiftKind which) {
    const int n = field.n;
    const int s = field.s;
    auto inner = field.f;
    ScalarField lifted;
    lifted.n = n;
    lifted.s = s + 1;
    lifted.f = [n, s, inner, which](std::span<const Multidual> coords) -> Multidual {
        const Mask blocks = Mask{1} << s;
        const Mask fiber_bit = Mask{1} << s;  // bit s+1 of the T^{s+1} point
        std::vector<Multidual> args;
        args.reserve(static_cast<std::size_t>(n) * blocks);
        // Arrange by kappa_{s+1}: the argument of f is (x, X) + eps (y, Y).
        for (Mask A = 0; A < blocks; ++A) {
            const Mask base = s >= 1 ? swap_bits(A, s, s + 1) : A;
            const Mask fiber = s >= 1 ? swap_bits(A | fiber_bit, s, s + 1) : (A | fiber_bit);
            for (int i = 0; i < n; ++i) {
                const Multidual& b = coords[static_cast<std::size_t>(base) * n + i];
                const Multidual& v = coords[static_cast<std::size_t>(fiber) * n + i];
                args.push_back(Multidual::join(b, v));
            }
        }
        const Multidual value = inner(args);
        return which == LiftKind::Vertical ? value.lower() : value.upper();
    };
    return lifted;
}

}  // namespace jetspray
