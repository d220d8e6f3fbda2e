#pragma once

// Tensors along a geodesic c: parallel frames, the dynamical covariant
// derivative, Jacobi tensors (nabla^2 J + Phi J = 0), their correspondence
// with (n-1)-parameter geodesic variations, the Riccati equation and the
// shape operator of a variation.
//
// Components are chart components.  Residuals and determinants of (1,1)
// tensors are taken in the parallel frame B(t) = [c'(t), e_1(t), ...,
// e_{n-1}(t)], i.e. on the matrix B^{-1} T B, whose lower-right block is
// the action on W_t = span{e_a(t)}.

#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "jetspray/flow.hpp"
#include "jetspray/spray.hpp"
#include "jetspray/variation.hpp"

namespace jetspray {

/// A geodesic record of S together with N(c') and Phi(c') on its grid.
struct BaseCurve {
    Semispray spray;
    GeodesicRecord record;
    std::vector<Eigen::MatrixXd> N;
    std::vector<Eigen::MatrixXd> Phi;

    std::size_t size() const noexcept { return record.size(); }
    Eigen::VectorXd position(std::size_t k) const { return to_vector(record.pos[k]); }
    Eigen::VectorXd velocity(std::size_t k) const { return to_vector(record.vel[k]); }
};

/// TruncatedRecord unless the record is a complete order-0 geodesic of spray.
std::shared_ptr<const BaseCurve> make_base_curve(const Semispray& spray, const GeodesicRecord& record);

enum class Valence { Vector, Covector, Endomorphism };

/// Samples of a tensor on the base grid points offset, offset + 1, ...
/// Vectors and covectors are stored as n x 1 columns.
struct TensorAlongCurve {
    Valence valence = Valence::Endomorphism;
    std::shared_ptr<const BaseCurve> base;
    std::size_t offset = 0;
    std::vector<Eigen::MatrixXd> comps;

    std::size_t size() const noexcept { return comps.size(); }
    double t(std::size_t k) const { return base->record.t_grid[offset + k]; }
};

struct ParallelFrame {
    std::shared_ptr<const BaseCurve> base;
    /// n x (n-1) matrices whose columns are e_a(t).
    std::vector<Eigen::MatrixXd> e;
    /// Condition number of [c', e_1, ..., e_{n-1}] per grid point.
    std::vector<double> condition;

    /// B(t_k) = [c'(t_k), e(t_k)].
    Eigen::MatrixXd basis(std::size_t k) const;
    /// B^{-1} T B for a (1,1) tensor sampled at base grid index k.
    Eigen::MatrixXd frame_matrix(const Eigen::MatrixXd& T, std::size_t k) const;
    /// The (n-1) x (n-1) block of frame_matrix acting on W_t.
    Eigen::MatrixXd transverse_block(const Eigen::MatrixXd& T, std::size_t k) const;
    /// The projector onto W_t along c' (the transverse identity).
    Eigen::MatrixXd transverse_identity(std::size_t k) const;
};

/// Orthonormal basis of the Euclidean complement of y, as n x (n-1) columns.
Eigen::MatrixXd complement_basis(const Eigen::VectorXd& y);

/// Parallel-transports the columns of W0 (default: complement_basis(c'(0))).
/// SingularFrame if c'(0) lies in span W0.
ParallelFrame make_parallel_frame(std::shared_ptr<const BaseCurve> base, const Eigen::MatrixXd& W0 = {});

/// Solves dv/dt + N(c') v = 0 from v0 at the first grid point.
TensorAlongCurve parallel_transport(std::shared_ptr<const BaseCurve> base, const Eigen::VectorXd& v0);

/// nabla T with d/dt by five-point finite differences.  Vectors:
/// dX/dt + N X; covectors: da/dt - N^T a; (1,1): dJ/dt + N J - J N.
/// GridTooShort below five samples.
TensorAlongCurve covariant_derivative(const TensorAlongCurve& T);

/// Product of tensors sampled on the same points (composition, or a
/// (1,1) tensor applied to a vector).
TensorAlongCurve compose(const TensorAlongCurve& a, const TensorAlongCurve& b);

struct JacobiTensor {
    TensorAlongCurve J;
    TensorAlongCurve nabla_J;
    /// max of |nabla J - nabla_J| and |nabla(nabla_J) + Phi J| by finite differences.
    double residual = 0.0;
};

/// Residual of the first-order form of nabla^2 J + Phi J = 0.
double jacobi_residual(const TensorAlongCurve& J, const TensorAlongCurve& nabla_J);

/// Integrates dJ/dt = P - N J + J N, dP/dt = -Phi J - N P + P N with
/// J(t_0) = J0, P(t_0) = J0p along the base.
JacobiTensor integrate_jacobi_tensor(std::shared_ptr<const BaseCurve> base, const Eigen::MatrixXd& J0,
                                     const Eigen::MatrixXd& J0p);

/// Max discrepancy between J v and the Jacobi field integrated as an S^(1)
/// geodesic from the matching initial state.  v must be parallel.
double jacobi_field_equivalence(const TensorAlongCurve& v, const JacobiTensor& J);

/// J with J c' = 0 and J e_a = d_{s^a} V(t, 0).  The frame must be built on
/// the base geodesic of V.  SingularFrame if [c', e_a] degenerates.
JacobiTensor tensor_from_variation(const GeodesicVariation& V, const ParallelFrame& frame);

/// Variation with init(s) = (c(0) + sum J_a(0) s^a, c'(0) + sum J_a'(0) s^a)
/// where J_a = J e_a.  Spans the frame grid plus one step on each side.
/// NotTransversal if J is not transversal.
GeodesicVariation variation_from_tensor(const JacobiTensor& J, const ParallelFrame& frame);

struct TransversalityReport {
    bool transversal = true;
    /// max |coordinates of J c'| in the frame.
    double kernel_violation = 0.0;
    /// max |c'-coordinate of Im J| in the frame.
    double image_violation = 0.0;
};

TransversalityReport check_transversality(const TensorAlongCurve& J, const ParallelFrame& frame,
                                          double tol = 1e-6);

/// Hypotheses and conclusion of the transversality propagation statement:
/// Phi transversal on the grid and J0, J0p killing c'(0) with images in W
/// imply the Jacobi tensor from (J0, J0p) is transversal.
struct PropagationReport {
    bool phi_transversal = false;
    bool initial_conditions = false;
    TransversalityReport conclusion;
};

PropagationReport check_transversal_propagation(const ParallelFrame& frame, const Eigen::MatrixXd& J0,
                                                const Eigen::MatrixXd& J0p, double tol = 1e-6);

/// Transversal inverse on the grid points in [t_lo, t_hi].  SingularAt
/// listing the times where |det J|_W| <= 1e-10; NotTransversal if J is not.
TensorAlongCurve invert_transversal(const TensorAlongCurve& J, const ParallelFrame& frame, double t_lo, double t_hi);

struct RiccatiResult {
    TensorAlongCurve L;
    /// max frame-matrix entry of nabla L + L^2 + Phi.
    double residual = 0.0;
};

/// L = nabla J o J^{-1} on [t_lo, t_hi] and its Riccati residual.
RiccatiResult riccati_residual(const JacobiTensor& J, const ParallelFrame& frame, double t_lo, double t_hi);

/// K(x, y, X, Y) = (x, Y + N(x, y) X).  OutsideSlashed for y = 0.
BundlePoint connection_map(const Semispray& spray, const BundlePoint& xi);

struct ShapeOperator {
    TensorAlongCurve A;
    /// max entry of nabla A + A^2 + Phi on the window.
    double riccati_residual = 0.0;
    /// max |A c'| on the window.
    double velocity_violation = 0.0;
};

/// A_Z = dZ/dx + N(Z) along c for Z = d_t V, with dZ/dx from the
/// (t, s)-derivatives of V.  NotDiffeo if |det[d_t V, d_s V]| <= 1e-8 on the window.
ShapeOperator shape_operator(const GeodesicVariation& V, double t_lo, double t_hi);

struct LiouvilleResiduals {
    /// max frame-matrix entry of A_Z - nabla J o J^{-1}.
    double j1 = 0.0;
    /// max |d/dt det J - trace A_Z det J|, det J of the transverse block.
    double j2 = 0.0;
};

LiouvilleResiduals check_J1_J2(const GeodesicVariation& V, const JacobiTensor& J, const ParallelFrame& frame,
                               double t_lo, double t_hi);

struct ChartReport {
    GeodesicVariation variation;
    double eps = 0.0;
    double t_lo = 0.0;
    double t_hi = 0.0;
    /// min |det dV| over the sample grid.
    double min_jacobian = 0.0;
    /// min |V(p) - V(q)| / |p - q| over pairs of sample points.
    double min_injectivity = 0.0;
    /// max geodesic residual of the sampled t-lines.
    double tline_residual = 0.0;
};

/// Coordinates (t, s) -> V(t, s) around c on [t_lo, t_hi] from an invertible
/// transversal J.  eps is halved from the variation's admissible width until
/// dV is nonsingular and V injective on a sample grid.  NotEmbeddable if c
/// meets itself, ChartFailed if eps drops below 1e-6.
ChartReport build_chart(const JacobiTensor& J, const ParallelFrame& frame, double t_lo, double t_hi);

/// Times where the transverse determinant of the Jacobi tensor with J(0) = 0,
/// nabla J(0) = transverse identity changes sign (linearly interpolated).
std::vector<double> find_conjugate_points(const ParallelFrame& frame);

}  // namespace jetspray
