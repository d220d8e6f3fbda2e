#pragma once

// Semisprays on a chart of R^n, given by their coefficient functions G^i in
//
//     S(x, y) = y^i d/dx^i - 2 G^i(x, y) d/dy^i,
//
// evaluable over multidual inputs.  One evaluation of G over order-r
// multiduals yields the iterated complete lift S^(r) on T^r M.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jetspray/bundle.hpp"
#include "jetspray/multidual.hpp"

namespace jetspray {

/// out[i] = G^i(x, y).  x, y and out have length n and share one multidual order.
using CoefficientFn =
    std::function<void(std::span<const Multidual> x, std::span<const Multidual> y, std::span<Multidual> out)>;

/// gamma[(i * n + j) * n + k] = Gamma^i_jk(x).
using ChristoffelFn = std::function<void(std::span<const Multidual> x, std::span<Multidual> gamma)>;

enum class SprayKind { Flat, ConstantCurvature, Christoffel, Custom, Damped };

std::string_view to_string(SprayKind kind) noexcept;

/// One monomial coef * prod_i x_i^exponents[i].
struct PolyTerm {
    std::vector<int> exponents;
    double coef = 0.0;
};

/// Gamma^i_jk (0-based indices) as a polynomial in x.
struct ChristoffelEntry {
    int i = 0;
    int j = 0;
    int k = 0;
    std::vector<PolyTerm> terms;
};

struct SprayConfig {
    SprayKind kind = SprayKind::Flat;
    int n = 2;
    double K = 0.0;
    double c = 0.0;
    std::vector<ChristoffelEntry> christoffel;
    std::string label;
};

class Semispray {
public:
    Semispray(int n, std::string label, SprayKind kind, CoefficientFn g,
              std::function<bool(std::span<const double>)> domain = {});

    int n() const noexcept { return n_; }
    const std::string& label() const noexcept { return label_; }
    SprayKind kind() const noexcept { return kind_; }

    /// Curvature parameter for ConstantCurvature, damping for Damped; 0 otherwise.
    double parameter() const noexcept { return parameter_; }
    void set_parameter(double p) noexcept { parameter_ = p; }

    /// True if the real part of x lies in the chart domain.
    bool in_domain(std::span<const double> x) const;

    /// G(x, y) over multiduals; DomainError outside the chart.
    std::vector<Multidual> coefficients(std::span<const Multidual> x, std::span<const Multidual> y) const;
    Eigen::VectorXd coefficients(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;

private:
    int n_;
    std::string label_;
    SprayKind kind_;
    double parameter_ = 0.0;
    CoefficientFn g_;
    std::function<bool(std::span<const double>)> domain_;
};

Semispray make_flat(int n);
/// Spray of the conformal metric delta_ij / (1 + K |x|^2 / 4)^2 (sphere,
/// flat or Poincare ball chart).  For K < 0 the chart is |x|^2 < 4/|K|.
Semispray make_constant_curvature(int n, double K);
/// G^i = c y^i; not homogeneous of degree two unless c = 0.
Semispray make_damped(int n, double c);
/// G^i = 1/2 Gamma^i_jk(x) y^j y^k.
Semispray make_from_christoffel(int n, ChristoffelFn gamma, std::string label = "christoffel");
Semispray make_from_christoffel(int n, const std::vector<ChristoffelEntry>& table, std::string label = "christoffel");
Semispray make_custom(int n, CoefficientFn g, std::string label = "custom");

Semispray build_spray(const SprayConfig& config);

/// Conformal factor 1/(1 + K|x|^2/4)^2 of the constant-curvature chart metric.
double constant_curvature_metric_scale(double K, const Eigen::VectorXd& x);

/// Acceleration of S^(r) at the state (xi, eta) of T^{r+1} M: the blocks of
/// -2 G(sum xi_A eps_A, sum eta_A eps_A).  OutsideSlashed when the base
/// velocity block of eta vanishes.
BundlePoint lifted_rhs(const Semispray& spray, const BundlePoint& xi, const BundlePoint& eta);

/// N^i_j = dG^i/dy^j at (x, y).
Eigen::MatrixXd connection(const Semispray& spray, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Phi^i_j = 2 dG^i/dx^j - S(N^i_j) - N^i_r N^r_j at (x, y), where
/// S(f) = y^k df/dx^k - 2 G^k df/dy^k.
Eigen::MatrixXd jacobi_endomorphism(const Semispray& spray, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

enum class Homogeneity { Spray, SemisprayOnly };

struct HomogeneityReport {
    Homogeneity kind = Homogeneity::Spray;
    double max_violation = 0.0;
};

/// Samples G(x, lambda y) against lambda^2 G(x, y) at random points for
/// lambda in {0.5, 2, 3}; spray iff the largest relative violation < 1e-9.
HomogeneityReport classify_homogeneity(const Semispray& spray, int samples, std::uint64_t seed = 7);

}  // namespace jetspray
