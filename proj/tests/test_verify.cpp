#include <doctest.h>

#include <algorithm>
#include <cstdlib>

#include <json.hpp>

#include "jetspray/verify.hpp"

using namespace jetspray;

namespace {

const CheckResult& find(const std::vector<CheckResult>& results, const std::string& name) {
    const auto it = std::find_if(results.begin(), results.end(), [&](const CheckResult& r) { return r.name == name; });
    REQUIRE(it != results.end());
    return *it;
}

VerifyOptions quick(std::vector<std::string> only) {
    VerifyOptions o;
    o.only = std::move(only);
    return o;
}

}  // namespace

TEST_CASE("check catalog") {
    const auto& catalog = check_catalog();
    CHECK(catalog.size() >= 30);
    CHECK(std::is_sorted(catalog.begin(), catalog.end(),
                         [](const CheckInfo& a, const CheckInfo& b) { return a.name < b.name; }));
    for (const char* prefix : {"bundle.", "spray.", "flow.", "variation.", "jacobi."}) {
        CAPTURE(prefix);
        CHECK(std::any_of(catalog.begin(), catalog.end(),
                          [&](const CheckInfo& c) { return c.name.rfind(prefix, 0) == 0; }));
    }
}

TEST_CASE("verify on a semispray skips the spray-only checks") {
    const auto results = run_checks(make_damped(2, 1.0),
                                    quick({"jacobi.riccati", "spray.homogeneity", "flow.determinism",
                                           "variation.forward_r1", "spray.first_lift"}));
    REQUIRE(results.size() == 5);
    CHECK(find(results, "jacobi.riccati").status == CheckStatus::Skip);
    CHECK(find(results, "spray.homogeneity").status == CheckStatus::Skip);
    CHECK(find(results, "flow.determinism").status == CheckStatus::Pass);
    CHECK(find(results, "variation.forward_r1").status == CheckStatus::Pass);
    CHECK(find(results, "spray.first_lift").status == CheckStatus::Pass);
    CHECK(all_passed(results));
    CHECK(report_text(results).find("SKIP  jacobi.riccati") != std::string::npos);
}

TEST_CASE("verify gates on dimension") {
    const auto results = run_checks(make_constant_curvature(1, 1.0), quick({"jacobi.riccati", "jacobi.tensor_residual"}));
    CHECK(find(results, "jacobi.riccati").status == CheckStatus::Skip);
    CHECK(find(results, "jacobi.tensor_residual").status == CheckStatus::Pass);
}

TEST_CASE("threshold overrides") {
    VerifyOptions o = quick({"bundle.representative_map"});
    o.thresholds["bundle.representative_map"] = 1e-15;
    const auto results = run_checks(make_flat(2), o);
    CHECK(results[0].status == CheckStatus::Fail);
    CHECK(results[0].threshold == 1e-15);
    CHECK_FALSE(all_passed(results));

    VerifyOptions bad;
    bad.thresholds["no.such_check"] = 1.0;
    CHECK_THROWS_AS(run_checks(make_flat(2), bad), Error);
    CHECK_THROWS_AS(run_checks(make_flat(2), quick({"no.such_check"})), Error);
}

TEST_CASE("reports are deterministic across thread counts") {
    const std::vector<std::string> names{"bundle.structure_identities", "flow.rk4_order", "spray.connection_fd",
                                         "variation.forward_r1", "jacobi.transversality"};
    VerifyOptions one = quick(names), three = quick(names);
    one.threads = 1;
    three.threads = 3;
    const Semispray S = make_constant_curvature(2, 1.0);
    const std::string a = report_json(run_checks(S, one));
    const std::string b = report_json(run_checks(S, three));
    CHECK(a == b);
    const auto j = nlohmann::json::parse(a);
    REQUIRE(j.is_array());
    REQUIRE(j.size() == names.size());
    for (const auto& entry : j) {
        CHECK(entry.size() == 5);
        for (const char* key : {"check", "status", "residual", "threshold", "seconds"}) CHECK(entry.contains(key));
        CHECK(entry["seconds"] == 0.0);
        CHECK(entry["status"] == "pass");
    }
    std::vector<std::string> order;
    for (const auto& entry : j) order.push_back(entry["check"]);
    CHECK(std::is_sorted(order.begin(), order.end()));
}

TEST_CASE("worker count") {
    CHECK(worker_count(4) == 4);
    ::setenv("JETSPRAY_THREADS", "2", 1);
    CHECK(worker_count(0) == 2);
    ::setenv("JETSPRAY_THREADS", "junk", 1);
    CHECK(worker_count(0) >= 1);
    ::unsetenv("JETSPRAY_THREADS");
}
