#include "jetspray/variation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <string>

namespace jetspray {

namespace {

BundlePoint vec_to_point(const Eigen::VectorXd& v) {
    return BundlePoint(static_cast<int>(v.size()), 0, std::vector<double>(v.data(), v.data() + v.size()));
}

void check_parameters(const GeodesicVariation& V, std::span<const double> s) {
    if (static_cast<int>(s.size()) != V.k) {
        throw Error(ErrorKind::InvalidArgument,
                    "variation has " + std::to_string(V.k) + " parameters, got " + std::to_string(s.size()));
    }
    for (double v : s) {
        if (!(std::abs(v) < V.eps)) {
            throw Error(ErrorKind::InvalidArgument, "parameter " + std::to_string(v) + " outside (-eps, eps)");
        }
    }
}

// Trajectories of V keyed by parameter vector, so each stencil point integrates once.
class TrajectoryCache {
public:
    explicit TrajectoryCache(const GeodesicVariation& V) : V_(V) {}

    const GeodesicRecord& at(const std::vector<double>& s) {
        auto it = cache_.find(s);
        if (it == cache_.end()) it = cache_.emplace(s, variation_geodesic(V_, s)).first;
        return it->second;
    }

private:
    const GeodesicVariation& V_;
    std::map<std::vector<double>, GeodesicRecord> cache_;
};

// One central-difference pass with parameter step h.
DerivedCurve stencil(const GeodesicVariation& V, std::span<const int> indices, double h, TrajectoryCache& cache) {
    const int r = static_cast<int>(indices.size());
    const int n = V.spray.n();
    const GeodesicRecord& base = cache.at(std::vector<double>(static_cast<std::size_t>(V.k), 0.0));
    const std::size_t m = base.size();

    DerivedCurve out;
    out.r = r;
    out.t_grid = base.t_grid;
    out.pos.assign(m, BundlePoint(n, r));
    out.vel.assign(m, BundlePoint(n, r));

    const Mask blocks = Mask{1} << r;
    for (Mask A = 0; A < blocks; ++A) {
        const int depth = std::popcount(A);
        const double scale = std::pow(2.0 * h, -depth);
        for (Mask signs = 0; signs < (Mask{1} << depth); ++signs) {
            std::vector<double> s(static_cast<std::size_t>(V.k), 0.0);
            double weight = scale;
            int used = 0;
            for (int j = 1; j <= r; ++j) {
                if (!has_bit(A, j)) continue;
                const bool minus = ((signs >> used) & 1u) != 0;
                // bit j moves the parameter s^{i_{r-j+1}}
                s[static_cast<std::size_t>(indices[static_cast<std::size_t>(r - j)] - 1)] += minus ? -h : h;
                if (minus) weight = -weight;
                ++used;
            }
            const GeodesicRecord& g = cache.at(s);
            for (std::size_t t = 0; t < m; ++t) {
                for (int i = 0; i < n; ++i) {
                    out.pos[t](A, i) += weight * g.pos[t](0, i);
                    out.vel[t](A, i) += weight * g.vel[t](0, i);
                }
            }
        }
    }
    return out;
}

double max_curve_diff(const DerivedCurve& a, const GeodesicRecord& b) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.t_grid.size(); ++k) {
        const std::size_t j = b.index_of(a.t_grid[k]);
        if (std::abs(b.t_grid[j] - a.t_grid[k]) > 1e-9) continue;
        worst = std::max(worst, max_abs_diff(a.pos[k], b.pos[j]));
    }
    return worst;
}

}  // namespace

GeodesicRecord variation_geodesic(const GeodesicVariation& V, std::span<const double> s) {
    check_parameters(V, s);
    const InitialCondition ic = V.init(s);
    GeodesicRecord rec = integrate_geodesic_span(V.spray, vec_to_point(ic.x), vec_to_point(ic.v), V.t_lo, V.t_hi,
                                                 V.step, V.t_init);
    if (rec.truncated()) {
        throw Error(ErrorKind::TruncatedVariation, "geodesic at s = (" + [&] {
            std::string txt;
            for (std::size_t i = 0; i < s.size(); ++i) txt += (i ? ", " : "") + std::to_string(s[i]);
            return txt;
        }() + ") stopped: " + rec.exit_reason);
    }
    return rec;
}

Eigen::VectorXd evaluate_variation(const GeodesicVariation& V, double t, std::span<const double> s) {
    check_parameters(V, s);
    if (t < V.t_lo || t > V.t_hi) throw Error(ErrorKind::InvalidArgument, "t outside the variation span");
    const InitialCondition ic = V.init(s);
    const GeodesicRecord rec = integrate_geodesic(V.spray, vec_to_point(ic.x), vec_to_point(ic.v), V.t_init, t, V.step);
    if (rec.truncated()) throw Error(ErrorKind::TruncatedVariation, rec.exit_reason);
    return to_vector(rec.pos.back());
}

DerivedCurve mixed_derivative(const GeodesicVariation& V, std::span<const int> indices, const StencilOptions& options) {
    const int r = static_cast<int>(indices.size());
    if (r > kMaxDerivativeDepth) {
        throw Error(ErrorKind::DepthCap, "finite-difference depth " + std::to_string(r) + " exceeds " +
                                             std::to_string(kMaxDerivativeDepth));
    }
    std::vector<int> multiplicity(static_cast<std::size_t>(V.k), 0);
    for (int i : indices) {
        if (i < 1 || i > V.k) throw Error(ErrorKind::BadIndex, "parameter index " + std::to_string(i));
        ++multiplicity[static_cast<std::size_t>(i - 1)];
    }
    const int worst = r == 0 ? 0 : *std::max_element(multiplicity.begin(), multiplicity.end());
    if (!(options.h_s > 0.0) || worst * options.h_s >= V.eps) {
        throw Error(ErrorKind::InvalidArgument, "parameter step must be positive and keep the stencil inside (-eps, eps)");
    }

    TrajectoryCache cache(V);
    DerivedCurve coarse = stencil(V, indices, options.h_s, cache);
    if (!options.richardson || r == 0) return coarse;
    const DerivedCurve fine = stencil(V, indices, options.h_s / 2.0, cache);
    // the base block is exact in both passes; only the derivative blocks are extrapolated
    for (std::size_t k = 0; k < coarse.t_grid.size(); ++k) {
        for (std::size_t i = static_cast<std::size_t>(V.spray.n()); i < coarse.pos[k].data().size(); ++i) {
            coarse.pos[k].data()[i] = (4.0 * fine.pos[k].data()[i] - coarse.pos[k].data()[i]) / 3.0;
            coarse.vel[k].data()[i] = (4.0 * fine.vel[k].data()[i] - coarse.vel[k].data()[i]) / 3.0;
        }
    }
    return coarse;
}

double verify_variation_theorem_forward(const GeodesicVariation& V, std::span<const int> indices,
                                        const StencilOptions& options) {
    const DerivedCurve d = mixed_derivative(V, indices, options);
    const std::size_t k0 = static_cast<std::size_t>(
        std::lower_bound(d.t_grid.begin(), d.t_grid.end(), V.t_init) - d.t_grid.begin());
    const GeodesicRecord lifted =
        integrate_geodesic_span(V.spray, d.pos[k0], d.vel[k0], V.t_lo, V.t_hi, V.step, V.t_init);
    require_complete(lifted);
    return max_curve_diff(d, lifted);
}

double select_half_width(const Semispray& spray, int k,
                         const std::function<InitialCondition(std::span<const double>)>& init,
                         const std::function<double(double)>& velocity_margin) {
    const int n = spray.n();
    // 5^k sample grid over [-eps, eps]^k; the margin covers the whole cube,
    // which grid sampling alone cannot see.
    auto admissible = [&](double eps) {
        if (velocity_margin(eps) <= kSlashedThreshold) return false;
        const int points = static_cast<int>(std::pow(5, k));
        std::vector<double> s(static_cast<std::size_t>(k));
        for (int code = 0; code < points; ++code) {
            int c = code;
            for (int j = 0; j < k; ++j) {
                s[static_cast<std::size_t>(j)] = eps * (static_cast<double>(c % 5) - 2.0) / 2.0;
                c /= 5;
            }
            const InitialCondition ic = init(s);
            if (ic.v.norm() <= kSlashedThreshold) return false;
            if (!ic.x.allFinite() || !spray.in_domain(std::span<const double>(ic.x.data(), static_cast<std::size_t>(n)))) {
                return false;
            }
        }
        return true;
    };
    double eps = 0.1;
    while (!admissible(eps)) {
        eps /= 2.0;
        if (eps < 1e-8) {
            throw Error(ErrorKind::ShrinkEpsilon, "no admissible half-width down to " + std::to_string(eps));
        }
    }
    return eps;
}

GeodesicRecord restrict_record(const GeodesicRecord& g, double t_lo, double t_hi) {
    GeodesicRecord out = g;
    out.t_grid.clear();
    out.pos.clear();
    out.vel.clear();
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (g.t_grid[k] < t_lo || g.t_grid[k] > t_hi) continue;
        out.t_grid.push_back(g.t_grid[k]);
        out.pos.push_back(g.pos[k]);
        out.vel.push_back(g.vel[k]);
    }
    if (out.t_grid.empty()) throw Error(ErrorKind::GridTooShort, "window contains no grid points");
    return out;
}

Reconstruction variation_from_geodesic(const Semispray& spray, const GeodesicRecord& g) {
    const int r = g.r;
    if (r < 1) throw Error(ErrorKind::BadOrder, "reconstruction needs a geodesic of S^(r), r >= 1");
    if (g.size() < 2) throw Error(ErrorKind::GridTooShort, "record needs at least two grid points");
    const int n = spray.n();
    const RepresentativeMap W_pos = representative_map(g.pos.front());
    const RepresentativeMap W_vel = representative_map(g.vel.front());
    auto init = [W_pos, W_vel, n](std::span<const double> s) {
        const std::vector<double> x = W_pos(s), v = W_vel(s);
        return InitialCondition{Eigen::Map<const Eigen::VectorXd>(x.data(), n),
                                Eigen::Map<const Eigen::VectorXd>(v.data(), n)};
    };

    // |v(s)| >= |v_0| - sum_{A != 0} |v_A| eps^{|A|}
    auto velocity_margin = [&](double eps) {
        const BundlePoint& v = g.vel.front();
        double margin = Eigen::Map<const Eigen::VectorXd>(v.block(0).data(), n).norm();
        for (Mask A = 1; A < v.block_count(); ++A) {
            margin -= Eigen::Map<const Eigen::VectorXd>(v.block(A).data(), n).norm() * std::pow(eps, std::popcount(A));
        }
        return margin;
    };
    const double eps = select_half_width(spray, r, init, velocity_margin);

    Reconstruction out{GeodesicVariation{spray, r, eps, init, g.t_grid.front() - g.step, g.t_grid.back() + g.step,
                                         g.t_grid.front(), g.step},
                       eps};
    return out;
}

double round_trip_residual(const Semispray& spray, const GeodesicRecord& g, const StencilOptions& options) {
    const Reconstruction rec = variation_from_geodesic(spray, g);
    std::vector<int> indices(static_cast<std::size_t>(g.r));
    for (int a = 0; a < g.r; ++a) indices[static_cast<std::size_t>(a)] = a + 1;
    StencilOptions opts = options;
    opts.h_s = std::min(opts.h_s, rec.eps / 2.0);
    const DerivedCurve d = mixed_derivative(rec.variation, indices, opts);
    double worst = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        auto it = std::lower_bound(d.t_grid.begin(), d.t_grid.end(), g.t_grid[k] - 1e-9);
        if (it == d.t_grid.end() || std::abs(*it - g.t_grid[k]) > 1e-9) continue;
        const std::size_t j = static_cast<std::size_t>(it - d.t_grid.begin());
        worst = std::max(worst, max_abs_diff(d.pos[j], g.pos[k]));
    }
    return worst;
}

double projection_identity_check(const GeodesicVariation& V, int r, const StencilOptions& options) {
    if (r < 1 || r > kMaxDerivativeDepth) throw Error(ErrorKind::DepthCap, "projection check needs 1 <= r <= 3");
    if (V.k < r) throw Error(ErrorKind::BadIndex, "variation has fewer than r parameters");
    std::vector<int> indices(static_cast<std::size_t>(r));
    for (int a = 0; a < r; ++a) indices[static_cast<std::size_t>(a)] = a + 1;
    const DerivedCurve full = mixed_derivative(V, indices, options);
    if (r == 1) {
        double worst = 0.0;
        for (std::size_t k = 0; k < full.t_grid.size(); ++k) {
            worst = std::max(worst, max_abs_diff(canonical_projection(full.pos[k], 1), full.pos[k]));
        }
        return worst;
    }
    double worst = 0.0;
    for (int a = 1; a <= r; ++a) {
        const int single[] = {r - a + 1};
        const DerivedCurve first = mixed_derivative(V, single, options);
        for (std::size_t k = 0; k < full.t_grid.size(); ++k) {
            worst = std::max(worst, max_abs_diff(canonical_projection(full.pos[k], a), first.pos[k]));
        }
    }
    return worst;
}

}  // namespace jetspray
