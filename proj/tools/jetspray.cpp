// Command-line front end.  Exit codes: 0 success, 1 input error, 2 a
// residual exceeded its threshold (the output is still written).

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "jetspray/error.hpp"
#include "jetspray/flow.hpp"
#include "jetspray/io.hpp"
#include "jetspray/jacobi.hpp"
#include "jetspray/spray.hpp"
#include "jetspray/variation.hpp"
#include "jetspray/verify.hpp"

using namespace jetspray;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kResidualFailure = 2;

const char* kCsvHelp = R"(CSV columns
  geodesic, variation:  t, pos[mask][i]..., vel[mask][i]...   (masks in bitmask order)
  jacobi tensor:        t, J[a][b]..., P[a][b]...   (frame matrices of J and nabla J)
  jacobi riccati:       t, L[a][b]...               (frame matrix of nabla J o J^-1)
Frame matrices are taken in the basis [c', e_1, ..., e_{n-1}] of the parallel frame.)";

struct Common {
    std::string spray_path;
    std::string out_path;
    std::string format = "csv";
    double t0 = 0.0;
    double t1 = 1.0;
    double step = kDefaultStep;
};

struct Loaded {
    SprayFile file;
    Semispray spray;
};

Loaded load(const std::string& path) {
    SprayFile file = load_spray_config(path);
    Semispray spray = build_spray(file.spray);
    return {std::move(file), std::move(spray)};
}

double threshold_for(const SprayFile& file, const std::string& check) {
    if (const auto it = file.thresholds.find(check); it != file.thresholds.end()) return it->second;
    for (const auto& c : check_catalog()) {
        if (c.name == check) return c.threshold;
    }
    throw Error(ErrorKind::InvalidArgument, "no threshold named " + check);
}

void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path);
    out << text;
}

// Reports a residual on stderr and maps it to an exit code.
int judge(const std::string& name, double residual, double threshold) {
    const bool ok = residual <= threshold;
    std::cerr << (ok ? "PASS " : "FAIL ") << name << " residual=" << format_real(residual)
              << " threshold=" << format_real(threshold) << '\n';
    return ok ? kOk : kResidualFailure;
}

Eigen::VectorXd vector_arg(const std::string& text, int n, const char* what) {
    const std::vector<double> v = parse_real_list(text);
    if (static_cast<int>(v.size()) != n) {
        throw Error(ErrorKind::InvalidArgument, std::string(what) + " needs " + std::to_string(n) + " entries");
    }
    return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

// Base state: --x0/--v0 give the order-0 blocks, --pos/--vel whole BundlePoints.
struct StateArgs {
    std::string x0, v0, pos, vel;
};

std::pair<BundlePoint, BundlePoint> initial_state(const StateArgs& a, int n, int r) {
    BundlePoint pos(n, r), vel(n, r);
    if (!a.pos.empty()) pos = bundle_point_from_json(a.pos);
    if (!a.vel.empty()) vel = bundle_point_from_json(a.vel);
    if (pos.n() != n || pos.r() != r || vel.n() != n || vel.r() != r) {
        throw Error(ErrorKind::InvalidArgument, "--pos/--vel must be points with n = " + std::to_string(n) +
                                                    " and r = " + std::to_string(r));
    }
    if (a.pos.empty() && !a.x0.empty()) {
        const Eigen::VectorXd x = vector_arg(a.x0, n, "--x0");
        for (int i = 0; i < n; ++i) pos(0, i) = x[i];
    }
    if (a.vel.empty()) {
        const Eigen::VectorXd v = a.v0.empty() ? Eigen::VectorXd(Eigen::VectorXd::Unit(n, 0)) : vector_arg(a.v0, n, "--v0");
        for (int i = 0; i < n; ++i) vel(0, i) = v[i];
    }
    return {pos, vel};
}

GeodesicRecord as_record(const DerivedCurve& d, const std::string& label, double step) {
    GeodesicRecord rec;
    rec.spray_label = label;
    rec.r = d.r;
    rec.t_grid = d.t_grid;
    rec.pos = d.pos;
    rec.vel = d.vel;
    rec.step = step;
    return rec;
}

std::string record_text(const GeodesicRecord& rec, const std::string& format) {
    std::ostringstream out;
    if (format == "json") {
        write_trajectory_json(out, rec);
    } else {
        write_trajectory_csv(out, rec);
    }
    return out.str();
}

// CSV of frame matrices, one row per sample inside the window.
std::string frame_csv(const ParallelFrame& frame, const std::vector<std::pair<std::string, const TensorAlongCurve*>>& cols,
                      double lo, double hi) {
    const int n = frame.base->spray.n();
    std::ostringstream out;
    out << 't';
    for (const auto& [name, T] : cols) {
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) out << ',' << name << '[' << a << "][" << b << ']';
        }
    }
    out << '\n';
    const TensorAlongCurve& first = *cols.front().second;
    for (std::size_t k = 0; k < first.size(); ++k) {
        const double t = first.t(k);
        if (t < lo - 1e-12 || t > hi + 1e-12) continue;
        out << format_real(t);
        for (const auto& [name, T] : cols) {
            const Eigen::MatrixXd F = frame.frame_matrix(T->comps[k], T->offset + k);
            for (int a = 0; a < n; ++a) {
                for (int b = 0; b < n; ++b) out << ',' << format_real(F(a, b));
            }
        }
        out << '\n';
    }
    return out.str();
}

void add_common(CLI::App* cmd, Common& c, bool with_format) {
    cmd->add_option("--spray", c.spray_path, "spray configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", c.out_path, "output file (default: stdout)");
    if (with_format) cmd->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
}

void add_span(CLI::App* cmd, Common& c) {
    cmd->add_option("--t0", c.t0, "start time");
    cmd->add_option("--t1", c.t1, "end time");
    cmd->add_option("--step", c.step, "RK4 step")->check(CLI::PositiveNumber);
}

void add_state(CLI::App* cmd, StateArgs& s) {
    cmd->add_option("--x0", s.x0, "base position, comma-separated (default 0)");
    cmd->add_option("--v0", s.v0, "base velocity, comma-separated (default e_1)");
    cmd->add_option("--pos", s.pos, "full position as a BundlePoint JSON object");
    cmd->add_option("--vel", s.vel, "full velocity as a BundlePoint JSON object");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Iterated complete lifts of semisprays, Jacobi fields and Jacobi tensors"};
    app.require_subcommand(1);
    app.footer(kCsvHelp);

    Common common;
    StateArgs state;
    int order = 0;
    int k = 1;
    std::string indices = "1";
    double h_s = 1e-3;
    bool richardson = true;
    std::string geodesic_path;
    std::string J0_text, J0p_text, window_text;
    double t_lift = 0.5;
    std::string direction_text;
    bool timing = false;
    unsigned threads = 0;
    std::string only;

    auto* geo = app.add_subcommand("geodesic", "integrate a geodesic of the r-th complete lift");
    add_common(geo, common, true);
    add_span(geo, common);
    add_state(geo, state);
    geo->add_option("--r", order, "lift order")->check(CLI::Range(0, JETSPRAY_MAX_ORDER - 1));

    auto* lift = app.add_subcommand("lift", "evaluate the lifted spray and check the flow-lift identity");
    add_common(lift, common, false);
    add_state(lift, state);
    lift->add_option("--r", order, "lift order")->check(CLI::Range(0, JETSPRAY_MAX_ORDER - 2));
    lift->add_option("--dir", direction_text,
                     "tangent vector at the state for the flow-lift check, a BundlePoint of order r+1 "
                     "(default: base block equal to the base velocity, others zero)");
    lift->add_option("--t", t_lift, "flow time for the flow-lift check");
    lift->add_option("--step", common.step, "RK4 step")->check(CLI::PositiveNumber);

    auto* var = app.add_subcommand("variation", "mixed derivative of a sample geodesic variation");
    add_common(var, common, true);
    add_span(var, common);
    add_state(var, state);
    var->add_option("--k", k, "number of variation parameters")->check(CLI::Range(1, 3));
    var->add_option("--indices", indices, "parameter indices, e.g. 1,2");
    var->add_option("--hs", h_s, "finite-difference step in s")->check(CLI::PositiveNumber);
    var->add_flag("!--no-richardson", richardson, "disable the Richardson level");

    auto* rec = app.add_subcommand("reconstruct", "rebuild a variation from a lifted geodesic");
    add_common(rec, common, false);
    rec->add_option("--geodesic", geodesic_path, "trajectory file (CSV or .json)")->required()->check(CLI::ExistingFile);

    auto* jac = app.add_subcommand("jacobi", "Jacobi tensors along a geodesic");
    jac->require_subcommand(1);
    std::vector<CLI::App*> jac_cmds;
    for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
             {"tensor", "integrate a Jacobi tensor"},
             {"riccati", "Riccati operator nabla J o J^-1 and its residual"},
             {"chart", "coordinates around the geodesic from an invertible Jacobi tensor"}}) {
        auto* cmd = jac->add_subcommand(name, help);
        add_common(cmd, common, false);
        add_span(cmd, common);
        add_state(cmd, state);
        cmd->add_option("--J0", J0_text, "J(t0), rows ';' entries ',' (default 0)");
        cmd->add_option("--J0p", J0p_text, "nabla J(t0) (default: transverse identity)");
        cmd->add_option("--window", window_text, "a,b");
        jac_cmds.push_back(cmd);
    }

    auto* ver = app.add_subcommand("verify", "run the named property checks");
    add_common(ver, common, false);
    ver->add_option("--format", common.format, "text or json")->check(CLI::IsMember({"text", "json"}));
    ver->add_option("--threads", threads, "worker threads (default JETSPRAY_THREADS or all cores)");
    ver->add_option("--only", only, "comma-separated check names");
    ver->add_flag("--timing", timing, "record per-check wall-clock seconds");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInputError;
    }

    try {
        if (*geo) {
            const Loaded L = load(common.spray_path);
            const auto [pos, vel] = initial_state(state, L.spray.n(), order);
            const GeodesicRecord g = integrate_geodesic(L.spray, pos, vel, common.t0, common.t1, common.step);
            emit(common.out_path, record_text(g, common.format));
            if (g.truncated()) std::cerr << "note: stopped early (" << to_string(g.status) << "): " << g.exit_reason << '\n';
            return kOk;
        }
        if (*lift) {
            const Loaded L = load(common.spray_path);
            const int n = L.spray.n();
            const auto [pos, vel] = initial_state(state, n, order);
            nlohmann::ordered_json out;
            out["acceleration"] = nlohmann::ordered_json::parse(bundle_point_to_json(lifted_rhs(L.spray, pos, vel)));
            BundlePoint direction(n, order + 1);
            if (!direction_text.empty()) {
                direction = bundle_point_from_json(direction_text);
                if (direction.n() != n || direction.r() != order + 1) {
                    throw Error(ErrorKind::InvalidArgument, "--dir must be a point with r = " + std::to_string(order + 1));
                }
            } else {
                for (int i = 0; i < n; ++i) direction(0, i) = vel(0, i);
            }
            const BundlePoint xi = join_top(join_top(pos, vel), direction);
            const double residual = check_flow_lift(L.spray, xi, t_lift, common.step);
            const double threshold = threshold_for(L.file, "flow.flow_lift");
            out["flow_lift_residual"] = residual;
            out["threshold"] = threshold;
            emit(common.out_path, out.dump(2) + "\n");
            return judge("flow.flow_lift", residual, threshold);
        }
        if (*var) {
            const Loaded L = load(common.spray_path);
            const int n = L.spray.n();
            const auto [pos, vel] = initial_state(state, n, 0);
            const Eigen::VectorXd x0 = to_vector(pos), v0 = to_vector(vel);
            const std::vector<int> idx = parse_int_list(indices);
            // parameter a tilts the initial velocity along e_{a mod n} and shifts the start along e_{(a+1) mod n}
            auto init = [x0, v0, n](std::span<const double> s) {
                Eigen::VectorXd x = x0, v = v0;
                for (std::size_t a = 0; a < s.size(); ++a) {
                    v[static_cast<Eigen::Index>(a % static_cast<std::size_t>(n))] += s[a];
                    x[static_cast<Eigen::Index>((a + 1) % static_cast<std::size_t>(n))] += 0.5 * s[a] * s[a];
                }
                return InitialCondition{x, v};
            };
            GeodesicVariation V{L.spray, k, 0.1, init, std::min(common.t0, common.t1),
                                std::max(common.t0, common.t1), common.t0, common.step};
            const StencilOptions opts{h_s, richardson};
            const DerivedCurve d = mixed_derivative(V, idx, opts);
            emit(common.out_path, record_text(as_record(d, L.spray.label(), common.step), common.format));
            const std::string check = idx.size() == 1 ? "variation.forward_r1" : "variation.forward_r2";
            return judge(check, verify_variation_theorem_forward(V, idx, opts), threshold_for(L.file, check));
        }
        if (*rec) {
            const Loaded L = load(common.spray_path);
            const GeodesicRecord g = load_trajectory(geodesic_path);
            const Reconstruction R = variation_from_geodesic(L.spray, g);
            const double residual = round_trip_residual(L.spray, g);
            const double threshold = threshold_for(L.file, "variation.round_trip");
            nlohmann::ordered_json out;
            out["r"] = g.r;
            out["samples"] = g.size();
            out["eps"] = R.eps;
            out["t_lo"] = R.variation.t_lo;
            out["t_hi"] = R.variation.t_hi;
            out["round_trip_residual"] = residual;
            out["threshold"] = threshold;
            emit(common.out_path, out.dump(2) + "\n");
            return judge("variation.round_trip", residual, threshold);
        }
        for (std::size_t c = 0; c < jac_cmds.size(); ++c) {
            if (!*jac_cmds[c]) continue;
            const Loaded L = load(common.spray_path);
            const int n = L.spray.n();
            const auto [pos, vel] = initial_state(state, n, 0);
            GeodesicRecord g = integrate_geodesic(L.spray, pos, vel, common.t0, common.t1, common.step);
            require_complete(g);
            const auto base = make_base_curve(L.spray, g);
            const ParallelFrame frame = make_parallel_frame(base);
            const Eigen::MatrixXd J0 = J0_text.empty() ? Eigen::MatrixXd::Zero(n, n) : parse_matrix(J0_text);
            const Eigen::MatrixXd J0p = J0p_text.empty() ? frame.transverse_identity(0) : parse_matrix(J0p_text);
            double lo = std::min(common.t0, common.t1), hi = std::max(common.t0, common.t1);
            if (!window_text.empty()) {
                const std::vector<double> w = parse_real_list(window_text);
                if (w.size() != 2) throw Error(ErrorKind::InvalidArgument, "--window needs a,b");
                lo = w[0];
                hi = w[1];
            }
            const JacobiTensor J = integrate_jacobi_tensor(base, J0, J0p);
            if (c == 0) {
                emit(common.out_path, frame_csv(frame, {{"J", &J.J}, {"P", &J.nabla_J}}, lo, hi));
                return judge("jacobi.tensor_residual", J.residual, threshold_for(L.file, "jacobi.tensor_residual"));
            }
            if (c == 1) {
                const RiccatiResult R = riccati_residual(J, frame, lo, hi);
                emit(common.out_path, frame_csv(frame, {{"L", &R.L}}, lo, hi));
                return judge("jacobi.riccati", R.residual, threshold_for(L.file, "jacobi.riccati"));
            }
            const ChartReport chart = build_chart(J, frame, lo, hi);
            nlohmann::ordered_json out;
            out["eps"] = chart.eps;
            out["t_lo"] = chart.t_lo;
            out["t_hi"] = chart.t_hi;
            out["min_jacobian"] = chart.min_jacobian;
            out["min_injectivity"] = chart.min_injectivity;
            out["tline_residual"] = chart.tline_residual;
            emit(common.out_path, out.dump(2) + "\n");
            return judge("jacobi.chart_tlines", chart.tline_residual, threshold_for(L.file, "jacobi.chart_tlines"));
        }
        if (*ver) {
            const Loaded L = load(common.spray_path);
            VerifyOptions opts;
            opts.thresholds = L.file.thresholds;
            opts.seed = L.file.seed;
            opts.threads = threads;
            opts.timing = timing;
            if (!only.empty()) {
                std::istringstream in(only);
                for (std::string name; std::getline(in, name, ',');) opts.only.push_back(name);
            }
            const auto results = run_checks(L.spray, opts);
            emit(common.out_path, common.format == "json" ? report_json(results) : report_text(results));
            if (!all_passed(results)) {
                for (const auto& r : results) {
                    if (r.status == CheckStatus::Fail) std::cerr << "failed: " << r.name << '\n';
                }
                return kResidualFailure;
            }
            return kOk;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInputError;
    }
    return kInputError;
}
