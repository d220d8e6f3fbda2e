#include "jetspray/io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "jetspray/error.hpp"

namespace jetspray {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string location(std::string_view text, std::size_t offset) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

// Location of the first occurrence of "key" in the text, for schema errors.
std::string key_location(std::string_view text, const std::string& key) {
    const std::size_t at = text.find("\"" + key + "\"");
    return at == std::string_view::npos ? std::string("unknown location") : location(text, at);
}

json parse_json(std::string_view text) {
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        const std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
        std::string msg = e.what();
        if (const auto cut = msg.find("syntax error"); cut != std::string::npos) msg = msg.substr(cut);
        throw Error(ErrorKind::ParseError, location(text, offset) + ": " + msg);
    }
}

[[noreturn]] void schema_error(std::string_view text, const std::string& key, const std::string& what) {
    throw Error(ErrorKind::ParseError, key_location(text, key) + ": \"" + key + "\" " + what);
}

void reject_unknown(std::string_view text, const json& obj, std::initializer_list<const char*> allowed) {
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : obj.items()) {
        if (!ok.contains(key)) schema_error(text, key, "is not a recognized key");
    }
}

double require_number(std::string_view text, const json& obj, const std::string& key) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw Error(ErrorKind::ParseError, "missing required key \"" + key + "\"");
    if (!it->is_number()) schema_error(text, key, "must be a number");
    return it->get<double>();
}

int require_int(std::string_view text, const json& obj, const std::string& key) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw Error(ErrorKind::ParseError, "missing required key \"" + key + "\"");
    if (!it->is_number_integer()) schema_error(text, key, "must be an integer");
    return it->get<int>();
}

SprayKind parse_kind(std::string_view text, const json& v) {
    if (!v.is_string()) schema_error(text, "kind", "must be a string");
    const std::string s = v.get<std::string>();
    if (s == "flat") return SprayKind::Flat;
    if (s == "constant_curvature") return SprayKind::ConstantCurvature;
    if (s == "damped") return SprayKind::Damped;
    if (s == "christoffel") return SprayKind::Christoffel;
    schema_error(text, "kind", "has unsupported value \"" + s + "\"");
}

std::vector<ChristoffelEntry> parse_christoffel(std::string_view text, const json& table, int n) {
    if (!table.is_array()) schema_error(text, "christoffel", "must be a list of entries");
    std::vector<ChristoffelEntry> out;
    for (const auto& entry : table) {
        if (!entry.is_object()) schema_error(text, "christoffel", "entries must be objects");
        reject_unknown(text, entry, {"i", "j", "k", "terms"});
        ChristoffelEntry e;
        e.i = require_int(text, entry, "i");
        e.j = require_int(text, entry, "j");
        e.k = require_int(text, entry, "k");
        for (int idx : {e.i, e.j, e.k}) {
            if (idx < 0 || idx >= n) schema_error(text, "christoffel", "index out of range 0.." + std::to_string(n - 1));
        }
        const auto terms = entry.find("terms");
        if (terms == entry.end() || !terms->is_array()) schema_error(text, "terms", "must be a list");
        for (const auto& term : *terms) {
            if (!term.is_object()) schema_error(text, "terms", "entries must be objects");
            reject_unknown(text, term, {"exponents", "coef"});
            PolyTerm p;
            p.coef = require_number(text, term, "coef");
            const auto ex = term.find("exponents");
            if (ex == term.end() || !ex->is_array() || ex->size() != static_cast<std::size_t>(n)) {
                schema_error(text, "exponents", "must list n non-negative integers");
            }
            for (const auto& x : *ex) {
                if (!x.is_number_integer() || x.get<int>() < 0) {
                    schema_error(text, "exponents", "must list n non-negative integers");
                }
                p.exponents.push_back(x.get<int>());
            }
            e.terms.push_back(std::move(p));
        }
        out.push_back(std::move(e));
    }
    return out;
}

ordered_json point_json(const BundlePoint& p) {
    ordered_json blocks = ordered_json::array();
    for (Mask A = 0; A < p.block_count(); ++A) {
        ordered_json b = ordered_json::array();
        for (int i = 0; i < p.n(); ++i) b.push_back(p(A, i));
        blocks.push_back(std::move(b));
    }
    return ordered_json{{"n", p.n()}, {"r", p.r()}, {"blocks", std::move(blocks)}};
}

BundlePoint point_from(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::ParseError, "bundle point must be an object");
    for (const auto& [key, value] : j.items()) {
        if (key != "n" && key != "r" && key != "blocks") {
            throw Error(ErrorKind::ParseError, "unknown key \"" + key + "\" in bundle point");
        }
    }
    if (!j.contains("n") || !j.contains("r") || !j.contains("blocks")) {
        throw Error(ErrorKind::ParseError, "bundle point needs n, r and blocks");
    }
    const int n = j.at("n").get<int>(), r = j.at("r").get<int>();
    if (n < 1 || r < 0 || r > JETSPRAY_MAX_ORDER) throw Error(ErrorKind::ParseError, "bad n or r in bundle point");
    const json& blocks = j.at("blocks");
    if (!blocks.is_array() || blocks.size() != (std::size_t{1} << r)) {
        throw Error(ErrorKind::ParseError, "bundle point needs 2^r blocks");
    }
    BundlePoint p(n, r);
    for (Mask A = 0; A < p.block_count(); ++A) {
        const json& b = blocks[A];
        if (!b.is_array() || b.size() != static_cast<std::size_t>(n)) {
            throw Error(ErrorKind::ParseError, "each block needs n reals");
        }
        for (int i = 0; i < n; ++i) {
            if (!b[static_cast<std::size_t>(i)].is_number()) throw Error(ErrorKind::ParseError, "block entries must be numbers");
            p(A, i) = b[static_cast<std::size_t>(i)].get<double>();
        }
    }
    return p;
}

double parse_real(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || end != s.data() + s.size()) {
        throw Error(ErrorKind::ParseError, "not a number: \"" + std::string(s) + "\"");
    }
    return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t at = s.find(sep, start);
        out.push_back(s.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start));
        if (at == std::string_view::npos) break;
        start = at + 1;
    }
    return out;
}

// Column layout implied by n and r.
std::vector<std::string> trajectory_header(int n, int r) {
    std::vector<std::string> cols{"t"};
    for (const char* part : {"pos", "vel"}) {
        for (Mask A = 0; A < (Mask{1} << r); ++A) {
            for (int i = 0; i < n; ++i) {
                cols.push_back(std::string(part) + "[" + std::to_string(A) + "][" + std::to_string(i) + "]");
            }
        }
    }
    return cols;
}

}  // namespace

SprayFile parse_spray_config(std::string_view text) {
    const json root = parse_json(text);
    if (!root.is_object()) throw Error(ErrorKind::ParseError, location(text, 0) + ": top level must be an object");
    reject_unknown(text, root, {"kind", "n", "K", "c", "christoffel", "label", "thresholds", "seed"});
    if (!root.contains("kind")) throw Error(ErrorKind::ParseError, "missing required key \"kind\"");
    SprayFile out;
    SprayConfig& cfg = out.spray;
    cfg.kind = parse_kind(text, root.at("kind"));
    cfg.n = require_int(text, root, "n");
    if (cfg.n < 1) schema_error(text, "n", "must be positive");
    auto only_for = [&](const char* key, SprayKind kind) {
        if (root.contains(key) && cfg.kind != kind) {
            schema_error(text, key, "is only valid for kind \"" + std::string(to_string(kind)) + "\"");
        }
    };
    only_for("K", SprayKind::ConstantCurvature);
    only_for("c", SprayKind::Damped);
    only_for("christoffel", SprayKind::Christoffel);
    switch (cfg.kind) {
    case SprayKind::ConstantCurvature: cfg.K = require_number(text, root, "K"); break;
    case SprayKind::Damped: cfg.c = require_number(text, root, "c"); break;
    case SprayKind::Christoffel:
        if (!root.contains("christoffel")) throw Error(ErrorKind::ParseError, "missing required key \"christoffel\"");
        cfg.christoffel = parse_christoffel(text, root.at("christoffel"), cfg.n);
        break;
    default: break;
    }
    if (root.contains("label")) {
        if (!root.at("label").is_string()) schema_error(text, "label", "must be a string");
        cfg.label = root.at("label").get<std::string>();
    }
    if (root.contains("seed")) {
        if (!root.at("seed").is_number_unsigned()) schema_error(text, "seed", "must be a non-negative integer");
        out.seed = root.at("seed").get<std::uint64_t>();
    }
    if (root.contains("thresholds")) {
        const json& th = root.at("thresholds");
        if (!th.is_object()) schema_error(text, "thresholds", "must be an object");
        for (const auto& [name, value] : th.items()) {
            if (!value.is_number() || !(value.get<double>() > 0.0)) schema_error(text, name, "must be a positive number");
            out.thresholds[name] = value.get<double>();
        }
    }
    return out;
}

SprayFile load_spray_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_spray_config(buf.str());
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + std::string(e.what()).substr(to_string(e.kind()).size() + 2));
    }
}

std::string format_real(double x) {
    char buf[32];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc()) throw Error(ErrorKind::InvalidArgument, "cannot format number");
    return std::string(buf, end);
}

std::string bundle_point_to_json(const BundlePoint& p) { return point_json(p).dump(); }

BundlePoint bundle_point_from_json(std::string_view text) { return point_from(parse_json(text)); }

void write_trajectory_csv(std::ostream& out, const GeodesicRecord& record) {
    if (record.size() == 0) throw Error(ErrorKind::GridTooShort, "empty record");
    const int n = record.pos.front().n(), r = record.r;
    const auto cols = trajectory_header(n, r);
    for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
    out << '\n';
    for (std::size_t k = 0; k < record.size(); ++k) {
        out << format_real(record.t_grid[k]);
        for (const auto* pts : {&record.pos, &record.vel}) {
            const BundlePoint& p = (*pts)[k];
            for (Mask A = 0; A < p.block_count(); ++A) {
                for (int i = 0; i < n; ++i) out << ',' << format_real(p(A, i));
            }
        }
        out << '\n';
    }
}

void write_trajectory_json(std::ostream& out, const GeodesicRecord& record) {
    if (record.size() == 0) throw Error(ErrorKind::GridTooShort, "empty record");
    ordered_json j;
    j["spray"] = record.spray_label;
    j["r"] = record.r;
    j["n"] = record.pos.front().n();
    j["step"] = record.step;
    j["status"] = std::string(to_string(record.status));
    j["t"] = record.t_grid;
    ordered_json pos = ordered_json::array(), vel = ordered_json::array();
    for (std::size_t k = 0; k < record.size(); ++k) {
        pos.push_back(point_json(record.pos[k]));
        vel.push_back(point_json(record.vel[k]));
    }
    j["pos"] = std::move(pos);
    j["vel"] = std::move(vel);
    out << j.dump() << '\n';
}

GeodesicRecord read_trajectory_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "empty trajectory file");
    const auto header = split(line, ',');
    // infer n and r from the column count and the last position column
    const std::size_t cols = header.size();
    int n = 0, r = -1;
    for (int rr = 0; rr <= JETSPRAY_MAX_ORDER && r < 0; ++rr) {
        const std::size_t per = std::size_t{2} << rr;
        if (cols < 1 || (cols - 1) % per != 0) continue;
        const int nn = static_cast<int>((cols - 1) / per);
        const auto expected = trajectory_header(nn, rr);
        bool same = true;
        for (std::size_t c = 0; c < cols && same; ++c) same = header[c] == expected[c];
        if (same) {
            n = nn;
            r = rr;
        }
    }
    if (r < 0 || n < 1) throw Error(ErrorKind::ParseError, "line 1: unrecognized trajectory header");
    GeodesicRecord rec;
    rec.r = r;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != cols) {
            throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                                   std::to_string(cols) + " columns");
        }
        std::size_t c = 0;
        try {
            rec.t_grid.push_back(parse_real(fields[c++]));
            for (auto* pts : {&rec.pos, &rec.vel}) {
                BundlePoint p(n, r);
                for (Mask A = 0; A < p.block_count(); ++A) {
                    for (int i = 0; i < n; ++i) p(A, i) = parse_real(fields[c++]);
                }
                pts->push_back(std::move(p));
            }
        } catch (const Error& e) {
            throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ", column " + std::to_string(c) +
                                                   ": " + std::string(e.what()));
        }
    }
    if (rec.t_grid.empty()) throw Error(ErrorKind::ParseError, "trajectory has no rows");
    if (rec.t_grid.size() > 1) rec.step = std::abs(rec.t_grid[1] - rec.t_grid[0]);
    return rec;
}

GeodesicRecord read_trajectory_json(std::istream& in) {
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const json j = parse_json(text);
    if (!j.is_object()) throw Error(ErrorKind::ParseError, "trajectory must be an object");
    reject_unknown(text, j, {"spray", "r", "n", "step", "status", "t", "pos", "vel"});
    GeodesicRecord rec;
    try {
        rec.spray_label = j.value("spray", std::string());
        rec.r = j.at("r").get<int>();
        rec.step = j.value("step", kDefaultStep);
        rec.t_grid = j.at("t").get<std::vector<double>>();
        for (const auto& p : j.at("pos")) rec.pos.push_back(point_from(p));
        for (const auto& p : j.at("vel")) rec.vel.push_back(point_from(p));
        const std::string status = j.value("status", std::string("complete"));
        bool known = false;
        for (RecordStatus s : {RecordStatus::Complete, RecordStatus::LeftSlashed, RecordStatus::LeftDomain,
                               RecordStatus::NonFinite}) {
            if (to_string(s) == status) {
                rec.status = s;
                known = true;
            }
        }
        if (!known) schema_error(text, "status", "has unknown value \"" + status + "\"");
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("trajectory: ") + e.what());
    }
    if (rec.pos.size() != rec.t_grid.size() || rec.vel.size() != rec.t_grid.size() || rec.t_grid.empty()) {
        throw Error(ErrorKind::ParseError, "t, pos and vel must have the same non-zero length");
    }
    for (std::size_t k = 0; k < rec.size(); ++k) {
        if (rec.pos[k].r() != rec.r || rec.vel[k].r() != rec.r || rec.pos[k].n() != rec.pos[0].n() ||
            rec.vel[k].n() != rec.pos[0].n()) {
            throw Error(ErrorKind::ParseError, "inconsistent point shapes at sample " + std::to_string(k));
        }
    }
    return rec;
}

GeodesicRecord load_trajectory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path);
    const bool is_json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
    return is_json ? read_trajectory_json(in) : read_trajectory_csv(in);
}

Eigen::MatrixXd parse_matrix(std::string_view text) {
    const auto rows = split(text, ';');
    std::vector<std::vector<double>> values;
    for (const auto row : rows) {
        std::vector<double> r;
        for (const auto field : split(row, ',')) r.push_back(parse_real(field));
        values.push_back(std::move(r));
    }
    const std::size_t cols = values.front().size();
    for (const auto& r : values) {
        if (r.size() != cols) throw Error(ErrorKind::ParseError, "matrix rows have different lengths");
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < values.size(); ++i) {
        for (std::size_t j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i][j];
    }
    return m;
}

std::vector<double> parse_real_list(std::string_view text) {
    std::vector<double> out;
    for (const auto field : split(text, ',')) out.push_back(parse_real(field));
    return out;
}

std::vector<int> parse_int_list(std::string_view text) {
    std::vector<int> out;
    for (const auto field : split(text, ',')) {
        const double v = parse_real(field);
        if (v != std::floor(v) || std::abs(v) > 1e9) {
            throw Error(ErrorKind::ParseError, "not an integer: \"" + std::string(field) + "\"");
        }
        out.push_back(static_cast<int>(v));
    }
    return out;
}

}  // namespace jetspray
