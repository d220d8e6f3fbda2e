#include "jetspray/jacobi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "jetspray/rk4.hpp"

namespace jetspray {

namespace {

constexpr double kSingularFrame = 1e12;
constexpr double kSingularDet = 1e-10;
constexpr double kDiffeoDet = 1e-8;

BundlePoint vec_to_point(const Eigen::VectorXd& v, int r = 0) {
    return to_point(static_cast<int>(v.size()) >> r, r, v);
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

Eigen::MatrixXd unflatten(const Eigen::Ref<const Eigen::VectorXd>& v, Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

// Integrates (x, y, extra) with the base geodesic equation for (x, y) and
// d extra/dt = rhs(x, y, extra), on the base grid from its first point.
template <class Rhs>
std::vector<Eigen::VectorXd> integrate_along(const BaseCurve& base, const Eigen::VectorXd& extra0, Rhs&& rhs) {
    const Eigen::Index n = base.spray.n();
    const Eigen::Index m = extra0.size();
    Eigen::VectorXd z0(2 * n + m);
    z0 << base.position(0), base.velocity(0), extra0;
    auto f = [&](const Eigen::VectorXd& z) {
        const Eigen::VectorXd x = z.head(n), y = z.segment(n, n);
        Eigen::VectorXd dz(z.size());
        dz.head(n) = y;
        dz.segment(n, n) = to_vector(lifted_rhs(base.spray, vec_to_point(x), vec_to_point(y)));
        dz.tail(m) = rhs(x, y, Eigen::VectorXd(z.tail(m)));
        return dz;
    };
    const Trajectory traj = integrate_on_grid(z0, base.record.t_grid, f, [](const Eigen::VectorXd&) {
        return std::string();
    });
    if (traj.stopped) throw Error(ErrorKind::TruncatedRecord, "transport along the base stopped: " + traj.reason);
    std::vector<Eigen::VectorXd> out;
    out.reserve(traj.y.size());
    for (const auto& z : traj.y) out.push_back(z.tail(m));
    return out;
}

// First-derivative weights at z for the given nodes (Fornberg's recursion).
std::vector<double> derivative_weights(double z, std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::array<double, 2>> c(n, {0.0, 0.0});
    double c1 = 1.0, c4 = x[0] - z;
    c[0][0] = 1.0;
    for (std::size_t i = 1; i < n; ++i) {
        const int mn = 1;
        double c2 = 1.0;
        const double c5 = c4;
        c4 = x[i] - z;
        for (std::size_t j = 0; j < i; ++j) {
            const double c3 = x[i] - x[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k) {
                    c[i][static_cast<std::size_t>(k)] =
                        c1 * (k * c[i - 1][static_cast<std::size_t>(k - 1)] - c5 * c[i - 1][static_cast<std::size_t>(k)]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for (int k = mn; k >= 1; --k) {
                c[j][static_cast<std::size_t>(k)] =
                    (c4 * c[j][static_cast<std::size_t>(k)] - k * c[j][static_cast<std::size_t>(k - 1)]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = c[i][1];
    return w;
}

// d/dt of sampled values by five-point stencils (one-sided near the ends).
template <class Value>
std::vector<Value> time_derivative(const std::vector<double>& t, const std::vector<Value>& f) {
    const std::size_t m = f.size();
    if (m < 5) throw Error(ErrorKind::GridTooShort, "finite differences need at least 5 samples");
    std::vector<Value> out;
    out.reserve(m);
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t start = std::min(k >= 2 ? k - 2 : 0, m - 5);
        const std::vector<double> w = derivative_weights(t[k], std::span<const double>(t.data() + start, 5));
        Value d = w[0] * f[start];
        for (std::size_t j = 1; j < 5; ++j) d += w[j] * f[start + j];
        out.push_back(d);
    }
    return out;
}

std::vector<double> sample_times(const TensorAlongCurve& T) {
    std::vector<double> t(T.size());
    for (std::size_t k = 0; k < T.size(); ++k) t[k] = T.t(k);
    return t;
}

void require_same_samples(const TensorAlongCurve& a, const TensorAlongCurve& b) {
    if (a.base != b.base || a.offset != b.offset || a.size() != b.size()) {
        throw Error(ErrorKind::InvalidArgument, "tensors are sampled on different points");
    }
}

std::pair<std::size_t, std::size_t> window_indices(const GeodesicRecord& rec, double t_lo, double t_hi) {
    if (!(t_lo <= t_hi)) throw Error(ErrorKind::InvalidArgument, "window must satisfy t_lo <= t_hi");
    std::size_t first = rec.size(), last = 0;
    for (std::size_t k = 0; k < rec.size(); ++k) {
        if (rec.t_grid[k] >= t_lo - 1e-12 && rec.t_grid[k] <= t_hi + 1e-12) {
            first = std::min(first, k);
            last = k;
        }
    }
    if (first == rec.size()) throw Error(ErrorKind::GridTooShort, "window contains no grid points");
    return {first, last + 1};
}

double max_entry(const Eigen::MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// Index of the base grid point at time t, or npos.
std::size_t find_time(const GeodesicRecord& rec, double t) {
    const std::size_t k = rec.index_of(t);
    return std::abs(rec.t_grid[k] - t) <= 1e-9 ? k : static_cast<std::size_t>(-1);
}

std::string format_times(const std::vector<double>& ts) {
    std::ostringstream out;
    out << "t =";
    for (std::size_t i = 0; i < ts.size() && i < 8; ++i) out << (i ? ", " : " ") << ts[i];
    if (ts.size() > 8) out << ", ... (" << ts.size() << " points)";
    return out.str();
}

// Distance between segments [p0, p1] and [q0, q1] in R^n.
double segment_distance(const Eigen::VectorXd& p0, const Eigen::VectorXd& p1, const Eigen::VectorXd& q0,
                        const Eigen::VectorXd& q1) {
    const Eigen::VectorXd d1 = p1 - p0, d2 = q1 - q0, r = p0 - q0;
    const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
    double s = 0.0, t = 0.0;
    if (a == 0.0 && e == 0.0) return r.norm();
    if (a == 0.0) {
        t = std::clamp(f / e, 0.0, 1.0);
    } else {
        const double c = d1.dot(r);
        if (e == 0.0) {
            s = std::clamp(-c / a, 0.0, 1.0);
        } else {
            const double b = d1.dot(d2), denom = a * e - b * b;
            s = denom > 0.0 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
            t = (b * s + f) / e;
            if (t < 0.0) {
                t = 0.0;
                s = std::clamp(-c / a, 0.0, 1.0);
            } else if (t > 1.0) {
                t = 1.0;
                s = std::clamp((b - c) / a, 0.0, 1.0);
            }
        }
    }
    return (r + s * d1 - t * d2).norm();
}

// Smallest distance between segments of the sampled base on [first, last)
// that are separated by more than a short arc, or +inf.
double polyline_self_distance(const BaseCurve& base, std::size_t first, std::size_t last) {
    constexpr std::size_t kBlock = 32;
    constexpr double kMinArc = 1e-5;
    std::vector<Eigen::VectorXd> p;
    std::vector<double> arc{0.0};
    for (std::size_t k = first; k < last; ++k) p.push_back(base.position(k));
    for (std::size_t k = 1; k < p.size(); ++k) arc.push_back(arc.back() + (p[k] - p[k - 1]).norm());
    const std::size_t segs = p.size() < 2 ? 0 : p.size() - 1;
    // bounding balls of consecutive runs of segments
    std::vector<Eigen::VectorXd> centre;
    std::vector<double> radius;
    for (std::size_t b = 0; b < segs; b += kBlock) {
        const std::size_t e = std::min(segs, b + kBlock);
        Eigen::VectorXd c = Eigen::VectorXd::Zero(p[0].size());
        for (std::size_t k = b; k <= e; ++k) c += p[k];
        c /= static_cast<double>(e - b + 1);
        double rad = 0.0;
        for (std::size_t k = b; k <= e; ++k) rad = std::max(rad, (p[k] - c).norm());
        centre.push_back(c);
        radius.push_back(rad);
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t bi = 0; bi < centre.size(); ++bi) {
        for (std::size_t bj = bi; bj < centre.size(); ++bj) {
            if ((centre[bi] - centre[bj]).norm() - radius[bi] - radius[bj] > 1e-6) continue;
            for (std::size_t i = bi * kBlock; i < std::min(segs, (bi + 1) * kBlock); ++i) {
                for (std::size_t j = std::max(i + 2, bj * kBlock); j < std::min(segs, (bj + 1) * kBlock); ++j) {
                    if (arc[j] - arc[i + 1] <= kMinArc) continue;
                    best = std::min(best, segment_distance(p[i], p[i + 1], p[j], p[j + 1]));
                }
            }
        }
    }
    return best;
}

}  // namespace

std::shared_ptr<const BaseCurve> make_base_curve(const Semispray& spray, const GeodesicRecord& record) {
    if (record.r != 0) throw Error(ErrorKind::BadOrder, "tensors live along order-0 geodesics");
    require_complete(record);
    if (record.size() < 2) throw Error(ErrorKind::GridTooShort, "base geodesic needs at least two samples");
    if (record.pos.front().n() != spray.n()) throw Error(ErrorKind::OrderMismatch, "dimension mismatch");
    auto base = std::make_shared<BaseCurve>(BaseCurve{spray, record, {}, {}});
    base->N.reserve(record.size());
    base->Phi.reserve(record.size());
    for (std::size_t k = 0; k < record.size(); ++k) {
        const Eigen::VectorXd x = base->position(k), y = base->velocity(k);
        base->N.push_back(connection(spray, x, y));
        base->Phi.push_back(jacobi_endomorphism(spray, x, y));
    }
    return base;
}

Eigen::MatrixXd ParallelFrame::basis(std::size_t k) const {
    const Eigen::Index n = base->spray.n();
    Eigen::MatrixXd B(n, n);
    B.col(0) = base->velocity(k);
    B.rightCols(n - 1) = e[k];
    return B;
}

Eigen::MatrixXd ParallelFrame::frame_matrix(const Eigen::MatrixXd& T, std::size_t k) const {
    const Eigen::MatrixXd B = basis(k);
    return B.partialPivLu().solve(T * B);
}

Eigen::MatrixXd ParallelFrame::transverse_block(const Eigen::MatrixXd& T, std::size_t k) const {
    const Eigen::Index n = base->spray.n();
    return frame_matrix(T, k).bottomRightCorner(n - 1, n - 1);
}

Eigen::MatrixXd ParallelFrame::transverse_identity(std::size_t k) const {
    const Eigen::Index n = base->spray.n();
    const Eigen::MatrixXd B = basis(k);
    Eigen::MatrixXd D = Eigen::MatrixXd::Identity(n, n);
    D(0, 0) = 0.0;
    return B * D * B.inverse();
}

Eigen::MatrixXd complement_basis(const Eigen::VectorXd& y) {
    const Eigen::Index n = y.size();
    if (n < 2) throw Error(ErrorKind::InvalidArgument, "a transverse frame needs n >= 2");
    if (y.norm() == 0.0) throw Error(ErrorKind::OutsideSlashed, "zero velocity");
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr{Eigen::MatrixXd(y)};
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
    return Q.rightCols(n - 1);
}

ParallelFrame make_parallel_frame(std::shared_ptr<const BaseCurve> base, const Eigen::MatrixXd& W0) {
    const Eigen::Index n = base->spray.n();
    const Eigen::MatrixXd W = W0.size() == 0 ? complement_basis(base->velocity(0)) : W0;
    if (W.rows() != n || W.cols() != n - 1) {
        throw Error(ErrorKind::InvalidArgument, "frame needs n - 1 vectors of length n");
    }
    ParallelFrame frame;
    frame.base = base;
    const auto& spray = base->spray;
    const auto states = integrate_along(*base, flatten(W), [&](const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                                               const Eigen::VectorXd& w) {
        return flatten(-connection(spray, x, y) * unflatten(w, n, n - 1));
    });
    frame.e.reserve(states.size());
    for (const auto& s : states) frame.e.push_back(unflatten(s, n, n - 1));
    frame.condition.reserve(states.size());
    for (std::size_t k = 0; k < states.size(); ++k) {
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(frame.basis(k));
        const auto& sv = svd.singularValues();
        const double cond = sv(n - 1) > 0.0 ? sv(0) / sv(n - 1) : std::numeric_limits<double>::infinity();
        frame.condition.push_back(cond);
    }
    if (!(frame.condition.front() < kSingularFrame)) {
        throw Error(ErrorKind::SingularFrame, "c'(0) lies in the span of the transverse vectors");
    }
    return frame;
}

TensorAlongCurve parallel_transport(std::shared_ptr<const BaseCurve> base, const Eigen::VectorXd& v0) {
    if (v0.size() != base->spray.n()) throw Error(ErrorKind::InvalidArgument, "vector length must equal n");
    const auto& spray = base->spray;
    const auto states = integrate_along(
        *base, v0, [&](const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& v) {
            return Eigen::VectorXd(-connection(spray, x, y) * v);
        });
    TensorAlongCurve out{Valence::Vector, base, 0, {}};
    out.comps.assign(states.begin(), states.end());
    return out;
}

TensorAlongCurve covariant_derivative(const TensorAlongCurve& T) {
    const std::vector<Eigen::MatrixXd> d = time_derivative(sample_times(T), T.comps);
    TensorAlongCurve out{T.valence, T.base, T.offset, {}};
    out.comps.reserve(T.size());
    for (std::size_t k = 0; k < T.size(); ++k) {
        const Eigen::MatrixXd& N = T.base->N[T.offset + k];
        switch (T.valence) {
        case Valence::Vector: out.comps.push_back(d[k] + N * T.comps[k]); break;
        case Valence::Covector: out.comps.push_back(d[k] - N.transpose() * T.comps[k]); break;
        case Valence::Endomorphism: out.comps.push_back(d[k] + N * T.comps[k] - T.comps[k] * N); break;
        }
    }
    return out;
}

TensorAlongCurve compose(const TensorAlongCurve& a, const TensorAlongCurve& b) {
    require_same_samples(a, b);
    if (a.valence != Valence::Endomorphism) throw Error(ErrorKind::InvalidArgument, "left factor must be (1,1)");
    TensorAlongCurve out{b.valence == Valence::Vector ? Valence::Vector : Valence::Endomorphism, a.base, a.offset, {}};
    out.comps.reserve(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) out.comps.push_back(a.comps[k] * b.comps[k]);
    return out;
}

double jacobi_residual(const TensorAlongCurve& J, const TensorAlongCurve& nabla_J) {
    require_same_samples(J, nabla_J);
    const TensorAlongCurve dJ = covariant_derivative(J);
    const TensorAlongCurve dP = covariant_derivative(nabla_J);
    double worst = 0.0;
    for (std::size_t k = 0; k < J.size(); ++k) {
        const Eigen::MatrixXd& Phi = J.base->Phi[J.offset + k];
        worst = std::max(worst, max_entry(dJ.comps[k] - nabla_J.comps[k]));
        worst = std::max(worst, max_entry(dP.comps[k] + Phi * J.comps[k]));
    }
    return worst;
}

JacobiTensor integrate_jacobi_tensor(std::shared_ptr<const BaseCurve> base, const Eigen::MatrixXd& J0,
                                     const Eigen::MatrixXd& J0p) {
    const Eigen::Index n = base->spray.n();
    if (J0.rows() != n || J0.cols() != n || J0p.rows() != n || J0p.cols() != n) {
        throw Error(ErrorKind::InvalidArgument, "initial data must be n x n");
    }
    const auto& spray = base->spray;
    Eigen::VectorXd z0(2 * n * n);
    z0 << flatten(J0), flatten(J0p);
    const auto states = integrate_along(*base, z0, [&](const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                                       const Eigen::VectorXd& z) {
        const Eigen::MatrixXd N = connection(spray, x, y);
        const Eigen::MatrixXd Phi = jacobi_endomorphism(spray, x, y);
        const Eigen::MatrixXd J = unflatten(z.head(n * n), n, n);
        const Eigen::MatrixXd P = unflatten(z.tail(n * n), n, n);
        Eigen::VectorXd dz(z.size());
        dz << flatten(P - N * J + J * N), flatten(-Phi * J - N * P + P * N);
        return dz;
    });
    JacobiTensor out{{Valence::Endomorphism, base, 0, {}}, {Valence::Endomorphism, base, 0, {}}, 0.0};
    for (const auto& z : states) {
        out.J.comps.push_back(unflatten(z.head(n * n), n, n));
        out.nabla_J.comps.push_back(unflatten(z.tail(n * n), n, n));
    }
    out.residual = out.J.size() >= 5 ? jacobi_residual(out.J, out.nabla_J) : 0.0;
    return out;
}

double jacobi_field_equivalence(const TensorAlongCurve& v, const JacobiTensor& J) {
    require_same_samples(v, J.J);
    if (v.valence != Valence::Vector) throw Error(ErrorKind::InvalidArgument, "v must be a vector field");
    const BaseCurve& base = *J.J.base;
    const std::size_t k0 = J.J.offset;
    const Eigen::VectorXd j0 = J.J.comps[0] * v.comps[0];
    const Eigen::VectorXd jdot0 = J.nabla_J.comps[0] * v.comps[0] - base.N[k0] * j0;
    const int n = base.spray.n();
    BundlePoint pos(n, 1), vel(n, 1);
    for (int i = 0; i < n; ++i) {
        pos(0, i) = base.record.pos[k0](0, i);
        pos(1, i) = j0[i];
        vel(0, i) = base.record.vel[k0](0, i);
        vel(1, i) = jdot0[i];
    }
    const std::vector<double> grid(base.record.t_grid.begin() + static_cast<std::ptrdiff_t>(k0),
                                   base.record.t_grid.begin() + static_cast<std::ptrdiff_t>(k0 + v.size()));
    const GeodesicRecord field = integrate_geodesic(base.spray, pos, vel, grid.front(), grid.back(), base.record.step);
    double worst = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        const std::size_t j = find_time(field, grid[k]);
        if (j == static_cast<std::size_t>(-1)) continue;
        const Eigen::VectorXd jv = J.J.comps[k] * v.comps[k];
        for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(field.pos[j](1, i) - jv[i]));
    }
    return worst;
}

JacobiTensor tensor_from_variation(const GeodesicVariation& V, const ParallelFrame& frame) {
    const BaseCurve& base = *frame.base;
    const int n = base.spray.n();
    if (n < 2 || V.k != n - 1) throw Error(ErrorKind::InvalidArgument, "need an (n-1)-parameter variation, n >= 2");
    std::vector<DerivedCurve> fields;
    for (int a = 1; a <= V.k; ++a) {
        const int idx[] = {a};
        fields.push_back(mixed_derivative(V, idx));
    }
    const std::size_t m = base.size();
    if (fields.front().t_grid.size() != m) {
        throw Error(ErrorKind::InvalidArgument, "frame is not built on the base geodesic of the variation");
    }
    JacobiTensor out{{Valence::Endomorphism, frame.base, 0, {}}, {Valence::Endomorphism, frame.base, 0, {}}, 0.0};
    for (std::size_t k = 0; k < m; ++k) {
        if (std::abs(fields.front().t_grid[k] - base.record.t_grid[k]) > 1e-9) {
            throw Error(ErrorKind::InvalidArgument, "frame is not built on the base geodesic of the variation");
        }
        if (!(frame.condition[k] < kSingularFrame)) {
            throw Error(ErrorKind::SingularFrame, "frame degenerates at t = " + std::to_string(base.record.t_grid[k]));
        }
        Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(n, n), dcols = Eigen::MatrixXd::Zero(n, n);
        for (int a = 0; a < V.k; ++a) {
            const auto& f = fields[static_cast<std::size_t>(a)];
            Eigen::VectorXd j(n), jdot(n);
            for (int i = 0; i < n; ++i) {
                j[i] = f.pos[k](1, i);
                jdot[i] = f.vel[k](1, i);
            }
            cols.col(a + 1) = j;
            // e_a is parallel and nabla c' = 0, so (nabla J) e_a = nabla (J e_a)
            dcols.col(a + 1) = jdot + base.N[k] * j;
        }
        const auto lu = frame.basis(k).transpose().partialPivLu();
        out.J.comps.push_back(lu.solve(cols.transpose()).transpose());
        out.nabla_J.comps.push_back(lu.solve(dcols.transpose()).transpose());
    }
    out.residual = jacobi_residual(out.J, out.nabla_J);
    return out;
}

GeodesicVariation variation_from_tensor(const JacobiTensor& J, const ParallelFrame& frame) {
    const TransversalityReport report = check_transversality(J.J, frame);
    if (!report.transversal) {
        throw Error(ErrorKind::NotTransversal, "kernel violation " + std::to_string(report.kernel_violation) +
                                                   ", image violation " + std::to_string(report.image_violation));
    }
    const BaseCurve& base = *frame.base;
    const std::size_t k0 = J.J.offset;
    const int n = base.spray.n();
    const Eigen::VectorXd c0 = base.position(k0), v0 = base.velocity(k0);
    const Eigen::MatrixXd Ja = J.J.comps[0] * frame.e[k0];
    const Eigen::MatrixXd Jdot = J.nabla_J.comps[0] * frame.e[k0] - base.N[k0] * Ja;
    auto init = [c0, v0, Ja, Jdot](std::span<const double> s) {
        const Eigen::Map<const Eigen::VectorXd> sv(s.data(), static_cast<Eigen::Index>(s.size()));
        return InitialCondition{c0 + Ja * sv, v0 + Jdot * sv};
    };
    const double speed = v0.norm();
    auto margin = [speed, Jdot](double eps) {
        double m = speed;
        for (Eigen::Index a = 0; a < Jdot.cols(); ++a) m -= Jdot.col(a).norm() * eps;
        return m;
    };
    const double eps = select_half_width(base.spray, n - 1, init, margin);
    const double step = base.record.step;
    const double t_first = J.J.t(0), t_last = J.J.t(J.J.size() - 1);
    return GeodesicVariation{base.spray, n - 1, eps, init, t_first - step, t_last + step, t_first, step};
}

TransversalityReport check_transversality(const TensorAlongCurve& J, const ParallelFrame& frame, double tol) {
    if (J.valence != Valence::Endomorphism) throw Error(ErrorKind::InvalidArgument, "J must be a (1,1) tensor");
    TransversalityReport report;
    for (std::size_t k = 0; k < J.size(); ++k) {
        const Eigen::MatrixXd F = frame.frame_matrix(J.comps[k], J.offset + k);
        const double kernel = F.col(0).cwiseAbs().maxCoeff();
        const double image = F.row(0).cwiseAbs().maxCoeff();
        report.kernel_violation = std::max(report.kernel_violation, kernel);
        report.image_violation = std::max(report.image_violation, image);
        const double scale = std::max(1.0, max_entry(F));
        if (kernel > tol * scale || image > tol * scale) report.transversal = false;
    }
    return report;
}

PropagationReport check_transversal_propagation(const ParallelFrame& frame, const Eigen::MatrixXd& J0,
                                                const Eigen::MatrixXd& J0p, double tol) {
    auto transverse_at = [&](const Eigen::MatrixXd& T, std::size_t k) {
        const Eigen::MatrixXd F = frame.frame_matrix(T, k);
        const double scale = std::max(1.0, max_entry(F));
        return F.col(0).cwiseAbs().maxCoeff() <= tol * scale && F.row(0).cwiseAbs().maxCoeff() <= tol * scale;
    };
    PropagationReport report;
    report.phi_transversal = true;
    for (std::size_t k = 0; k < frame.base->size(); ++k) {
        if (!transverse_at(frame.base->Phi[k], k)) {
            report.phi_transversal = false;
            break;
        }
    }
    report.initial_conditions = transverse_at(J0, 0) && transverse_at(J0p, 0);
    report.conclusion = check_transversality(integrate_jacobi_tensor(frame.base, J0, J0p).J, frame, tol);
    return report;
}

TensorAlongCurve invert_transversal(const TensorAlongCurve& J, const ParallelFrame& frame, double t_lo, double t_hi) {
    const TransversalityReport report = check_transversality(J, frame);
    if (!report.transversal) throw Error(ErrorKind::NotTransversal, "J is not transversal");
    const BaseCurve& base = *J.base;
    const int n = base.spray.n();
    auto [first, last] = window_indices(base.record, t_lo, t_hi);
    first = std::max(first, J.offset);
    last = std::min(last, J.offset + J.size());
    if (first >= last) throw Error(ErrorKind::GridTooShort, "window lies outside the tensor samples");
    TensorAlongCurve out{Valence::Endomorphism, J.base, first, {}};
    std::vector<double> singular;
    for (std::size_t k = first; k < last; ++k) {
        const Eigen::MatrixXd W = frame.transverse_block(J.comps[k - J.offset], k);
        if (!(std::abs(W.determinant()) > kSingularDet)) {
            singular.push_back(base.record.t_grid[k]);
            continue;
        }
        Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
        D.bottomRightCorner(n - 1, n - 1) = W.inverse();
        const Eigen::MatrixXd B = frame.basis(k);
        out.comps.push_back(B * D * B.inverse());
    }
    if (!singular.empty()) throw Error(ErrorKind::SingularAt, format_times(singular));
    return out;
}

RiccatiResult riccati_residual(const JacobiTensor& J, const ParallelFrame& frame, double t_lo, double t_hi) {
    const TensorAlongCurve Jinv = invert_transversal(J.J, frame, t_lo, t_hi);
    RiccatiResult out{{Valence::Endomorphism, Jinv.base, Jinv.offset, {}}, 0.0};
    for (std::size_t k = 0; k < Jinv.size(); ++k) {
        out.L.comps.push_back(J.nabla_J.comps[Jinv.offset + k - J.nabla_J.offset] * Jinv.comps[k]);
    }
    const TensorAlongCurve dL = covariant_derivative(out.L);
    for (std::size_t k = 0; k < out.L.size(); ++k) {
        const std::size_t g = out.L.offset + k;
        const Eigen::MatrixXd R = dL.comps[k] + out.L.comps[k] * out.L.comps[k] + J.J.base->Phi[g];
        out.residual = std::max(out.residual, max_entry(frame.frame_matrix(R, g)));
    }
    return out;
}

BundlePoint connection_map(const Semispray& spray, const BundlePoint& xi) {
    if (xi.r() != 2) throw Error(ErrorKind::BadOrder, "connection map acts on T^2 M");
    const int n = xi.n();
    auto block = [&](Mask A) { return Eigen::Map<const Eigen::VectorXd>(xi.block(A).data(), n); };
    const Eigen::VectorXd x = block(0), y = block(1), X = block(2), Y = block(3);
    const Eigen::VectorXd w = Y + connection(spray, x, y) * X;
    BundlePoint out(n, 1);
    for (int i = 0; i < n; ++i) {
        out(0, i) = x[i];
        out(1, i) = w[i];
    }
    return out;
}

ShapeOperator shape_operator(const GeodesicVariation& V, double t_lo, double t_hi) {
    const int n = V.spray.n();
    if (n < 2 || V.k != n - 1) throw Error(ErrorKind::InvalidArgument, "need an (n-1)-parameter variation, n >= 2");
    const std::vector<double> zero(static_cast<std::size_t>(V.k), 0.0);
    const auto base = make_base_curve(V.spray, variation_geodesic(V, zero));
    std::vector<DerivedCurve> fields;
    for (int a = 1; a <= V.k; ++a) {
        const int idx[] = {a};
        fields.push_back(mixed_derivative(V, idx));
    }
    const auto [first, last] = window_indices(base->record, t_lo, t_hi);
    ShapeOperator out{{Valence::Endomorphism, base, first, {}}, 0.0, 0.0};
    for (std::size_t k = first; k < last; ++k) {
        const Eigen::VectorXd x = base->position(k), y = base->velocity(k);
        Eigen::MatrixXd jac(n, n), dZ(n, n);
        jac.col(0) = y;
        dZ.col(0) = -2.0 * V.spray.coefficients(x, y);
        for (int a = 0; a < V.k; ++a) {
            for (int i = 0; i < n; ++i) {
                jac(i, a + 1) = fields[static_cast<std::size_t>(a)].pos[k](1, i);
                dZ(i, a + 1) = fields[static_cast<std::size_t>(a)].vel[k](1, i);
            }
        }
        if (!(std::abs(jac.determinant()) > kDiffeoDet)) {
            throw Error(ErrorKind::NotDiffeo, "t = " + std::to_string(base->record.t_grid[k]));
        }
        const Eigen::MatrixXd A = jac.transpose().partialPivLu().solve(dZ.transpose()).transpose() + base->N[k];
        out.A.comps.push_back(A);
        out.velocity_violation = std::max(out.velocity_violation, (A * y).cwiseAbs().maxCoeff());
    }
    const TensorAlongCurve dA = covariant_derivative(out.A);
    for (std::size_t k = 0; k < out.A.size(); ++k) {
        const Eigen::MatrixXd R = dA.comps[k] + out.A.comps[k] * out.A.comps[k] + base->Phi[first + k];
        out.riccati_residual = std::max(out.riccati_residual, max_entry(R));
    }
    return out;
}

LiouvilleResiduals check_J1_J2(const GeodesicVariation& V, const JacobiTensor& J, const ParallelFrame& frame,
                               double t_lo, double t_hi) {
    const ShapeOperator shape = shape_operator(V, t_lo, t_hi);
    const TensorAlongCurve Jinv = invert_transversal(J.J, frame, t_lo, t_hi);
    const GeodesicRecord& rec = frame.base->record;
    LiouvilleResiduals out;
    std::vector<double> times, dets, traces;
    for (std::size_t k = 0; k < shape.A.size(); ++k) {
        const double t = shape.A.t(k);
        const std::size_t g = find_time(rec, t);
        if (g == static_cast<std::size_t>(-1) || g < Jinv.offset || g >= Jinv.offset + Jinv.size()) continue;
        const Eigen::MatrixXd L = J.nabla_J.comps[g - J.nabla_J.offset] * Jinv.comps[g - Jinv.offset];
        out.j1 = std::max(out.j1, max_entry(frame.frame_matrix(shape.A.comps[k] - L, g)));
        times.push_back(t);
        dets.push_back(frame.transverse_block(J.J.comps[g - J.J.offset], g).determinant());
        traces.push_back(shape.A.comps[k].trace());
    }
    const std::vector<double> ddet = time_derivative(times, dets);
    for (std::size_t k = 0; k < times.size(); ++k) {
        out.j2 = std::max(out.j2, std::abs(ddet[k] - traces[k] * dets[k]));
    }
    return out;
}

ChartReport build_chart(const JacobiTensor& J, const ParallelFrame& frame, double t_lo, double t_hi) {
    const BaseCurve& base = *frame.base;
    const int n = base.spray.n();
    const auto [first, last] = window_indices(base.record, t_lo, t_hi);
    if (last - first < 5) throw Error(ErrorKind::GridTooShort, "chart window needs at least 5 grid points");

    if (polyline_self_distance(base, first, last) <= 1e-6) {
        throw Error(ErrorKind::NotEmbeddable, "base geodesic meets itself on the window");
    }
    (void)invert_transversal(J.J, frame, t_lo, t_hi);

    GeodesicVariation V = variation_from_tensor(J, frame);
    ChartReport report{V};
    report.t_lo = base.record.t_grid[first];
    report.t_hi = base.record.t_grid[last - 1];
    V.t_lo = std::min(V.t_init, report.t_lo - V.step);
    V.t_hi = report.t_hi + V.step;

    const int k = n - 1;
    const int per_dim = 5;
    const int s_count = static_cast<int>(std::pow(per_dim, k));
    const int t_count = 11;

    for (double eps = V.eps; eps >= 1e-6; eps /= 2.0) {
        V.eps = eps;
        const double h = 1e-3 * eps;
        // sample parameters s at fractions of eps inside the open cube
        std::vector<std::vector<double>> params;
        for (int code = 0; code < s_count; ++code) {
            std::vector<double> s(static_cast<std::size_t>(k));
            int c = code;
            for (int a = 0; a < k; ++a) {
                s[static_cast<std::size_t>(a)] = 0.4 * eps * (static_cast<double>(c % per_dim) - 2.0);
                c /= per_dim;
            }
            params.push_back(std::move(s));
        }
        std::vector<GeodesicRecord> lines;
        std::vector<std::vector<GeodesicRecord>> plus(params.size()), minus(params.size());
        try {
            for (std::size_t p = 0; p < params.size(); ++p) {
                lines.push_back(variation_geodesic(V, params[p]));
                for (int a = 0; a < k; ++a) {
                    std::vector<double> sp = params[p], sm = params[p];
                    sp[static_cast<std::size_t>(a)] += h;
                    sm[static_cast<std::size_t>(a)] -= h;
                    plus[p].push_back(variation_geodesic(V, sp));
                    minus[p].push_back(variation_geodesic(V, sm));
                }
            }
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::TruncatedVariation) continue;
            throw;
        }
        // sample times on the shared grid of the lines
        const GeodesicRecord& ref = lines.front();
        std::vector<std::size_t> tk;
        for (int i = 0; i < t_count; ++i) {
            const double t = report.t_lo + (report.t_hi - report.t_lo) * i / (t_count - 1);
            tk.push_back(ref.index_of(t));
        }
        double min_det = std::numeric_limits<double>::infinity();
        std::vector<Eigen::VectorXd> coords, images;
        for (std::size_t p = 0; p < params.size(); ++p) {
            for (std::size_t idx : tk) {
                Eigen::MatrixXd D(n, n);
                D.col(0) = to_vector(lines[p].vel[idx]);
                for (int a = 0; a < k; ++a) {
                    D.col(a + 1) = (to_vector(plus[p][static_cast<std::size_t>(a)].pos[idx]) -
                                    to_vector(minus[p][static_cast<std::size_t>(a)].pos[idx])) /
                                   (2.0 * h);
                }
                min_det = std::min(min_det, std::abs(D.determinant()));
                Eigen::VectorXd q(n);
                q[0] = ref.t_grid[idx];
                for (int a = 0; a < k; ++a) q[a + 1] = params[p][static_cast<std::size_t>(a)];
                coords.push_back(q);
                images.push_back(to_vector(lines[p].pos[idx]));
            }
        }
        double min_ratio = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < coords.size(); ++i) {
            for (std::size_t j = i + 1; j < coords.size(); ++j) {
                min_ratio = std::min(min_ratio, (images[i] - images[j]).norm() / (coords[i] - coords[j]).norm());
            }
        }
        if (!(min_det > kDiffeoDet) || !(min_ratio > 1e-6)) continue;

        report.variation = V;
        report.eps = eps;
        report.min_jacobian = min_det;
        report.min_injectivity = min_ratio;
        for (const auto& line : lines) {
            report.tline_residual = std::max(report.tline_residual, geodesic_residual(base.spray, line));
        }
        return report;
    }
    throw Error(ErrorKind::ChartFailed, "no half-width down to 1e-6 gives a chart");
}

std::vector<double> find_conjugate_points(const ParallelFrame& frame) {
    const JacobiTensor J =
        integrate_jacobi_tensor(frame.base, Eigen::MatrixXd::Zero(frame.base->spray.n(), frame.base->spray.n()),
                                frame.transverse_identity(0));
    const std::vector<double>& t = frame.base->record.t_grid;
    std::vector<double> out;
    double prev = 0.0;
    for (std::size_t k = 1; k < J.J.size(); ++k) {
        const double d = frame.transverse_block(J.J.comps[k], k).determinant();
        if (k > 1 && prev != 0.0 && (d == 0.0 || (d > 0.0) != (prev > 0.0))) {
            out.push_back(t[k - 1] + (t[k] - t[k - 1]) * prev / (prev - d));
        }
        prev = d;
    }
    return out;
}

}  // namespace jetspray
