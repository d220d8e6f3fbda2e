#include "jetspray/spray.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace jetspray {

std::string_view to_string(SprayKind kind) noexcept {
    switch (kind) {
    case SprayKind::Flat: return "flat";
    case SprayKind::ConstantCurvature: return "constant_curvature";
    case SprayKind::Christoffel: return "christoffel";
    case SprayKind::Custom: return "custom";
    case SprayKind::Damped: return "damped";
    }
    return "unknown";
}

Semispray::Semispray(int n, std::string label, SprayKind kind, CoefficientFn g,
                     std::function<bool(std::span<const double>)> domain)
    : n_(n), label_(std::move(label)), kind_(kind), g_(std::move(g)), domain_(std::move(domain)) {
    if (n < 1) throw Error(ErrorKind::InvalidArgument, "spray dimension must be positive");
    if (!g_) throw Error(ErrorKind::InvalidArgument, "spray needs a coefficient function");
}

bool Semispray::in_domain(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != n_) return false;
    for (double v : x) {
        if (!std::isfinite(v)) return false;
    }
    return !domain_ || domain_(x);
}

std::vector<Multidual> Semispray::coefficients(std::span<const Multidual> x, std::span<const Multidual> y) const {
    if (static_cast<int>(x.size()) != n_ || static_cast<int>(y.size()) != n_) {
        throw Error(ErrorKind::InvalidArgument, "spray '" + label_ + "' expects " + std::to_string(n_) +
                                                    "-dimensional inputs");
    }
    std::vector<double> base(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) base[i] = x[i].real();
    if (!in_domain(base)) throw Error(ErrorKind::DomainError, "point outside the chart of spray '" + label_ + "'");
    const int order = x.front().order();
    std::vector<Multidual> out(static_cast<std::size_t>(n_), Multidual(order, 0.0));
    g_(x, y, out);
    return out;
}

Eigen::VectorXd Semispray::coefficients(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
    std::vector<Multidual> xm, ym;
    for (Eigen::Index i = 0; i < x.size(); ++i) xm.emplace_back(0, x[i]);
    for (Eigen::Index i = 0; i < y.size(); ++i) ym.emplace_back(0, y[i]);
    const auto g = coefficients(xm, ym);
    Eigen::VectorXd out(n_);
    for (int i = 0; i < n_; ++i) out[i] = g[static_cast<std::size_t>(i)].real();
    return out;
}

Semispray make_flat(int n) {
    return Semispray(n, "flat", SprayKind::Flat,
                     [](std::span<const Multidual>, std::span<const Multidual>, std::span<Multidual>) {});
}

Semispray make_constant_curvature(int n, double K) {
    // sigma = -log(1 + K|x|^2/4), Gamma^i_jk = delta_ij s_k + delta_ik s_j - delta_jk s_i, s = d sigma
    auto g = [K](std::span<const Multidual> x, std::span<const Multidual> y, std::span<Multidual> out) {
        const int order = x.front().order();
        Multidual xx(order, 0.0), xy(order, 0.0), yy(order, 0.0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            xx += x[i] * x[i];
            xy += x[i] * y[i];
            yy += y[i] * y[i];
        }
        const Multidual phi = 1.0 + xx * (K / 4.0);
        const Multidual scale = (-K / 2.0) / phi;
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = scale * (xy * y[i] - 0.5 * yy * x[i]);
    };
    auto domain = [K](std::span<const double> x) {
        double xx = 0.0;
        for (double v : x) xx += v * v;
        return 1.0 + K * xx / 4.0 > 0.0;
    };
    std::string label = "constant_curvature(K=" + std::to_string(K) + ")";
    Semispray s(n, std::move(label), SprayKind::ConstantCurvature, g, domain);
    s.set_parameter(K);
    return s;
}

Semispray make_damped(int n, double c) {
    auto g = [c](std::span<const Multidual>, std::span<const Multidual> y, std::span<Multidual> out) {
        for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] * c;
    };
    Semispray s(n, "damped(c=" + std::to_string(c) + ")", SprayKind::Damped, g);
    s.set_parameter(c);
    return s;
}

Semispray make_from_christoffel(int n, ChristoffelFn gamma, std::string label) {
    auto g = [n, gamma = std::move(gamma)](std::span<const Multidual> x, std::span<const Multidual> y,
                                           std::span<Multidual> out) {
        const int order = x.front().order();
        const std::size_t nn = static_cast<std::size_t>(n);
        std::vector<Multidual> table(nn * nn * nn, Multidual(order, 0.0));
        gamma(x, table);
        for (std::size_t i = 0; i < nn; ++i) {
            Multidual acc(order, 0.0);
            for (std::size_t j = 0; j < nn; ++j) {
                for (std::size_t k = 0; k < nn; ++k) acc += table[(i * nn + j) * nn + k] * y[j] * y[k];
            }
            out[i] = acc * 0.5;
        }
    };
    return Semispray(n, std::move(label), SprayKind::Christoffel, g);
}

Semispray make_from_christoffel(int n, const std::vector<ChristoffelEntry>& table, std::string label) {
    for (const auto& e : table) {
        if (e.i < 0 || e.i >= n || e.j < 0 || e.j >= n || e.k < 0 || e.k >= n) {
            throw Error(ErrorKind::BadIndex, "Christoffel index out of range");
        }
        for (const auto& t : e.terms) {
            if (static_cast<int>(t.exponents.size()) != n) {
                throw Error(ErrorKind::InvalidArgument, "exponent vector length must equal n");
            }
            for (int p : t.exponents) {
                if (p < 0) throw Error(ErrorKind::InvalidArgument, "negative exponent in Christoffel table");
            }
        }
    }
    auto gamma = [n, table](std::span<const Multidual> x, std::span<Multidual> out) {
        const int order = x.front().order();
        for (const auto& e : table) {
            Multidual acc(order, 0.0);
            for (const auto& t : e.terms) {
                Multidual mono(order, t.coef);
                for (std::size_t v = 0; v < t.exponents.size(); ++v) {
                    if (t.exponents[v] > 0) mono = mono * pow(x[v], t.exponents[v]);
                }
                acc += mono;
            }
            out[static_cast<std::size_t>((e.i * n + e.j) * n + e.k)] += acc;
        }
    };
    return make_from_christoffel(n, gamma, std::move(label));
}

Semispray make_custom(int n, CoefficientFn g, std::string label) {
    return Semispray(n, std::move(label), SprayKind::Custom, std::move(g));
}

Semispray build_spray(const SprayConfig& config) {
    Semispray s = [&]() {
        switch (config.kind) {
        case SprayKind::Flat: return make_flat(config.n);
        case SprayKind::ConstantCurvature: return make_constant_curvature(config.n, config.K);
        case SprayKind::Damped: return make_damped(config.n, config.c);
        case SprayKind::Christoffel: return make_from_christoffel(config.n, config.christoffel);
        case SprayKind::Custom: break;
        }
        throw Error(ErrorKind::InvalidArgument, "custom sprays cannot be built from a config");
    }();
    if (!config.label.empty()) {
        Semispray relabeled(s.n(), config.label, s.kind(),
                            [s](std::span<const Multidual> x, std::span<const Multidual> y, std::span<Multidual> out) {
                                const auto g = s.coefficients(x, y);
                                std::copy(g.begin(), g.end(), out.begin());
                            },
                            [s](std::span<const double> x) { return s.in_domain(x); });
        relabeled.set_parameter(s.parameter());
        return relabeled;
    }
    return s;
}

double constant_curvature_metric_scale(double K, const Eigen::VectorXd& x) {
    const double phi = 1.0 + K * x.squaredNorm() / 4.0;
    return 1.0 / (phi * phi);
}

BundlePoint lifted_rhs(const Semispray& spray, const BundlePoint& xi, const BundlePoint& eta) {
    if (xi.n() != spray.n() || eta.n() != spray.n() || xi.r() != eta.r()) {
        throw Error(ErrorKind::OrderMismatch, "state does not match the spray dimension or lift order");
    }
    if (!in_slashed(join_top(xi, eta))) {
        throw Error(ErrorKind::OutsideSlashed, "base velocity vanishes");
    }
    const auto x = to_multiduals(xi);
    const auto y = to_multiduals(eta);
    auto g = spray.coefficients(x, y);
    for (auto& v : g) v *= -2.0;
    return from_multiduals(g);
}

namespace {

void require_velocity(const Eigen::VectorXd& y) {
    if (y.squaredNorm() == 0.0) throw Error(ErrorKind::OutsideSlashed, "zero velocity");
}

std::vector<Multidual> lift_vec(const Eigen::VectorXd& v, int order) {
    std::vector<Multidual> out;
    out.reserve(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) out.emplace_back(order, v[i]);
    return out;
}

}  // namespace

Eigen::MatrixXd connection(const Semispray& spray, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    require_velocity(y);
    const int n = spray.n();
    Eigen::MatrixXd N(n, n);
    const auto xm = lift_vec(x, 1);
    for (int j = 0; j < n; ++j) {
        auto ym = lift_vec(y, 1);
        ym[static_cast<std::size_t>(j)][1] = 1.0;
        const auto g = spray.coefficients(xm, ym);
        for (int i = 0; i < n; ++i) N(i, j) = g[static_cast<std::size_t>(i)][1];
    }
    return N;
}

Eigen::MatrixXd jacobi_endomorphism(const Semispray& spray, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    require_velocity(y);
    const int n = spray.n();
    const Eigen::VectorXd G = spray.coefficients(x, y);
    const Eigen::MatrixXd N = connection(spray, x, y);
    Eigen::MatrixXd Gx(n, n), SN(n, n);
    for (int j = 0; j < n; ++j) {
        auto xm = lift_vec(x, 1);
        xm[static_cast<std::size_t>(j)][1] = 1.0;
        const auto g = spray.coefficients(xm, lift_vec(y, 1));
        for (int i = 0; i < n; ++i) Gx(i, j) = g[static_cast<std::size_t>(i)][1];
    }
    // eps1 moves along S = (y, -2G), eps2 along d/dy^j; the eps1 eps2 block is S(N^i_j).
    for (int j = 0; j < n; ++j) {
        auto xm = lift_vec(x, 2);
        auto ym = lift_vec(y, 2);
        for (int k = 0; k < n; ++k) {
            xm[static_cast<std::size_t>(k)][1] = y[k];
            ym[static_cast<std::size_t>(k)][1] = -2.0 * G[k];
        }
        ym[static_cast<std::size_t>(j)][2] = 1.0;
        const auto g = spray.coefficients(xm, ym);
        for (int i = 0; i < n; ++i) SN(i, j) = g[static_cast<std::size_t>(i)][3];
    }
    return 2.0 * Gx - SN - N * N;
}

HomogeneityReport classify_homogeneity(const Semispray& spray, int samples, std::uint64_t seed) {
    if (samples < 1) throw Error(ErrorKind::InvalidArgument, "need at least one sample");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const int n = spray.n();
    HomogeneityReport report;
    int taken = 0;
    int attempts = 0;
    while (taken < samples) {
        if (++attempts > 100 * samples) {
            throw Error(ErrorKind::DomainError, "could not sample points inside the chart");
        }
        Eigen::VectorXd x(n), y(n);
        for (int i = 0; i < n; ++i) {
            x[i] = 0.5 * unit(rng);
            y[i] = unit(rng);
        }
        if (!spray.in_domain(std::span<const double>(x.data(), static_cast<std::size_t>(n))) || y.norm() < 1e-3) {
            continue;
        }
        ++taken;
        const Eigen::VectorXd g = spray.coefficients(x, y);
        for (double lambda : {0.5, 2.0, 3.0}) {
            const Eigen::VectorXd lhs = spray.coefficients(x, lambda * y);
            const Eigen::VectorXd rhs = lambda * lambda * g;
            const double scale = std::max(lhs.norm(), rhs.norm());
            if (scale == 0.0) continue;
            report.max_violation = std::max(report.max_violation, (lhs - rhs).norm() / scale);
        }
    }
    report.kind = report.max_violation < 1e-9 ? Homogeneity::Spray : Homogeneity::SemisprayOnly;
    return report;
}

}  // namespace jetspray
