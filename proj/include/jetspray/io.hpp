#pragma once

// Spray configuration files, BundlePoint and trajectory serialization, and
// the matrix syntax used on the command line.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "jetspray/bundle.hpp"
#include "jetspray/flow.hpp"
#include "jetspray/spray.hpp"

namespace jetspray {

/// Contents of a spray configuration file.
///
///     {"kind": "constant_curvature", "n": 2, "K": 1.0,
///      "label": "sphere", "seed": 7, "thresholds": {"flow.rk4_order": 8}}
///
/// kind is one of flat, constant_curvature, damped, christoffel.  K is
/// required for constant_curvature, c for damped.  Christoffel tables are
/// lists of {"i", "j", "k", "terms": [{"exponents": [...], "coef": x}]}
/// with 0-based indices.  Unknown keys are rejected.
struct SprayFile {
    SprayConfig spray;
    std::map<std::string, double> thresholds;
    std::uint64_t seed = 20240601;
};

/// ParseError with "line L, column C" for malformed JSON, and the offending
/// key or value for schema violations.
SprayFile parse_spray_config(std::string_view text);
SprayFile load_spray_config(const std::string& path);

/// Shortest decimal string that parses back to the same double.
std::string format_real(double x);

/// {"n": n, "r": r, "blocks": [[...], ...]} with blocks in bitmask order.
std::string bundle_point_to_json(const BundlePoint& p);
BundlePoint bundle_point_from_json(std::string_view text);

/// Header `t,pos[mask][i]...,vel[mask][i]...`, one row per grid point.
void write_trajectory_csv(std::ostream& out, const GeodesicRecord& record);
/// {"spray", "r", "n", "step", "status", "t", "pos", "vel"}; pos and vel are
/// lists of BundlePoint objects.
void write_trajectory_json(std::ostream& out, const GeodesicRecord& record);

/// Inverse of the writers.  The step is taken from the first grid interval
/// and the status is Complete unless the JSON says otherwise.
GeodesicRecord read_trajectory_csv(std::istream& in);
GeodesicRecord read_trajectory_json(std::istream& in);
/// Dispatches on the extension (.json, anything else is CSV).
GeodesicRecord load_trajectory(const std::string& path);

/// Rows separated by ';', entries by ','.  "1,0;0,1" is the 2 x 2 identity.
Eigen::MatrixXd parse_matrix(std::string_view text);
/// Comma-separated reals ("0.3,1.2").
std::vector<double> parse_real_list(std::string_view text);
/// Comma-separated integers ("1,2").
std::vector<int> parse_int_list(std::string_view text);

}  // namespace jetspray
