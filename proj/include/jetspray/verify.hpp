#pragma once

// Named numerical checks of the library's identities for one spray, run
// concurrently and reported in name order.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "jetspray/spray.hpp"

namespace jetspray {

enum class CheckStatus { Pass, Fail, Skip };
std::string_view to_string(CheckStatus status) noexcept;

/// Pass means residual <= threshold (AtMost) or residual >= threshold (AtLeast).
enum class Comparison { AtMost, AtLeast };

struct CheckInfo {
    std::string name;
    std::string description;
    double threshold = 0.0;
    Comparison comparison = Comparison::AtMost;
    /// Skipped unless the spray passes the homogeneity classifier.
    bool spray_only = false;
    /// Skipped below this chart dimension.
    int min_dimension = 1;
};

/// Every check, sorted by name.
const std::vector<CheckInfo>& check_catalog();

struct CheckResult {
    std::string name;
    CheckStatus status = CheckStatus::Skip;
    double residual = 0.0;
    double threshold = 0.0;
    Comparison comparison = Comparison::AtMost;
    double seconds = 0.0;
    std::string note;
};

struct VerifyOptions {
    /// Overrides of catalog thresholds by check name.
    std::map<std::string, double> thresholds;
    std::uint64_t seed = 20240601;
    /// 0 means the JETSPRAY_THREADS environment variable, else the hardware count.
    unsigned threads = 0;
    /// Record wall-clock seconds per check; otherwise seconds stay 0 so that
    /// reports are byte-identical across runs.
    bool timing = false;
    /// Restrict to these check names (all when empty).
    std::vector<std::string> only;
};

/// Number of worker threads for a request (see VerifyOptions::threads).
unsigned worker_count(unsigned requested);

/// InvalidArgument for unknown names in thresholds or only.
std::vector<CheckResult> run_checks(const Semispray& spray, const VerifyOptions& options = {});

bool all_passed(const std::vector<CheckResult>& results);

/// [{"check", "status", "residual", "threshold", "seconds"}, ...]; residual
/// is null for skipped checks.
std::string report_json(const std::vector<CheckResult>& results);
/// One line per check: STATUS name residual threshold [note].
std::string report_text(const std::vector<CheckResult>& results);

}  // namespace jetspray
