#pragma once

// JSON manifests and reports. A manifest declares structures (catalog
// references or inline charts) and an ordered task list; running it produces
// a report with one record per check. See README.md for the schema.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "check.hpp"
#include "cohomology.hpp"
#include "embed.hpp"
#include "errors.hpp"
#include "models.hpp"
#include "parallel.hpp"
#include "reduce.hpp"
#include "symexpr.hpp"

namespace lcs::manifest {

using json = nlohmann::ordered_json;

inline constexpr const char *report_format = "lcs-report/1";
inline constexpr const char *tool_version = "0.1.0";

// Keys that vary between otherwise identical runs.
inline const std::vector<std::string> &timestamp_keys()
{
    static const std::vector<std::string> k{"started_at", "finished_at", "wall_time_s"};
    return k;
}

struct Settings {
    std::uint64_t seed = 0;
    std::optional<double> tol;
    std::optional<std::size_t> samples;
};

struct Task {
    std::string type;
    std::string label;
    json spec;
    std::string path; // "tasks[i]"
};

struct Manifest {
    std::string source;
    Settings settings;
    std::vector<std::pair<std::string, LcsStructure>> structures;
    std::vector<Task> tasks;

    [[nodiscard]] const LcsStructure &structure(const std::string &n, const std::string &path) const
    {
        for (const auto &[k, s] : structures) {
            if (k == n) {
                return s;
            }
        }
        throw InputError(path + ": unknown structure '" + n + "'");
    }
};

// Command-line overrides; they win over the manifest's top-level defaults but
// not over values set on an individual task.
struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::optional<double> tol;
    std::optional<std::size_t> samples;
    bool fail_fast = false;
    std::string only; // run only tasks of this type
    std::string command = "run";
};

namespace detail {

inline std::string line_col(const std::string &text, std::size_t byte)
{
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return std::to_string(line) + ":" + std::to_string(col);
}

inline const json &require(const json &j, const std::string &key, const std::string &path)
{
    if (!j.is_object() || !j.contains(key)) {
        throw InputError(path + ": missing field '" + key + "'");
    }
    return j.at(key);
}

inline void allow_only(const json &j, const std::vector<std::string> &keys, const std::string &path)
{
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(keys.begin(), keys.end(), it.key()) == keys.end()) {
            throw InputError(path + ": unknown field '" + it.key() + "'");
        }
    }
}

inline double number(const json &v, const std::string &path)
{
    if (v.is_number()) {
        return v.get<double>();
    }
    if (v.is_string()) {
        Expr e;
        try {
            e = parse(v.get<std::string>());
        } catch (const Error &err) {
            throw InputError(path + ": " + err.what());
        }
        if (!e.is_constant()) {
            throw InputError(path + ": expected a constant, got '" + v.get<std::string>() + "'");
        }
        return e.value();
    }
    throw InputError(path + ": expected a number");
}

inline long long integer(const json &v, const std::string &path)
{
    const double x = number(v, path);
    if (!std::isfinite(x) || x != std::floor(x) || std::abs(x) > 1e15) {
        throw InputError(path + ": expected an integer");
    }
    return static_cast<long long>(x);
}

inline double get_number(const json &j, const std::string &key, const std::string &path, double dflt)
{
    return j.contains(key) ? number(j.at(key), path + "." + key) : dflt;
}

inline int get_int(const json &j, const std::string &key, const std::string &path, int dflt)
{
    return j.contains(key) ? static_cast<int>(integer(j.at(key), path + "." + key)) : dflt;
}

inline bool get_bool(const json &j, const std::string &key, const std::string &path, bool dflt)
{
    if (!j.contains(key)) {
        return dflt;
    }
    if (!j.at(key).is_boolean()) {
        throw InputError(path + "." + key + ": expected true or false");
    }
    return j.at(key).get<bool>();
}

inline std::string get_string(const json &j, const std::string &key, const std::string &path)
{
    const auto &v = require(j, key, path);
    if (!v.is_string()) {
        throw InputError(path + "." + key + ": expected a string");
    }
    return v.get<std::string>();
}

inline std::vector<double> number_list(const json &v, const std::string &path)
{
    if (!v.is_array()) {
        throw InputError(path + ": expected a list");
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(number(v[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
}

inline std::size_t positive(long long v, const std::string &path)
{
    if (v <= 0) {
        throw InputError(path + ": must be positive");
    }
    return static_cast<std::size_t>(v);
}

// Expression on D: every free variable must be a coordinate.
inline Expr expression(const json &v, const DomainPtr &D, const std::string &path)
{
    if (v.is_number()) {
        return Expr(v.get<double>());
    }
    if (!v.is_string()) {
        throw InputError(path + ": expected an expression string");
    }
    Expr e;
    try {
        e = parse(v.get<std::string>());
    } catch (const Error &err) {
        throw InputError(path + ": " + err.what());
    }
    for (const auto &x : free_variables(e)) {
        if (!D->has(x)) {
            throw InputError(path + ": unknown variable '" + x + "'");
        }
    }
    return e;
}

inline std::string trim(const std::string &t)
{
    const auto a = t.find_first_not_of(" \t");
    const auto b = t.find_last_not_of(" \t");
    return a == std::string::npos ? std::string() : t.substr(a, b - a + 1);
}

// Split at top-level separators, outside parentheses.
inline std::vector<std::string> split(const std::string &s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    for (char c : s) {
        if (c == '(') {
            ++depth;
        } else if (c == ')') {
            --depth;
        }
        if (c == sep && depth == 0) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    for (auto &t : out) {
        t = trim(t);
    }
    return out;
}

// "s^u": {"s^u": "expr", ...}; every key has the same number of factors.
inline DifferentialForm form(const json &v, const DomainPtr &D, int degree, const std::string &path)
{
    if (!v.is_object()) {
        throw InputError(path + ": expected an object mapping basis names to expressions");
    }
    DifferentialForm out(D, degree);
    for (auto it = v.begin(); it != v.end(); ++it) {
        const auto names = split(it.key(), '^');
        if (static_cast<int>(names.size()) != degree) {
            throw InputError(path + "." + it.key() + ": expected a " + std::to_string(degree) + "-form basis element");
        }
        DifferentialForm b(D, degree);
        try {
            b = DifferentialForm::basis(D, names);
        } catch (const InputError &e) {
            throw InputError(path + "." + it.key() + ": " + e.what());
        }
        out += expression(it.value(), D, path + "." + it.key()) * b;
    }
    return out;
}

inline VectorField field(const json &v, const DomainPtr &D, const std::string &path)
{
    if (!v.is_object()) {
        throw InputError(path + ": expected an object mapping coordinates to expressions");
    }
    std::vector<Expr> comps(static_cast<std::size_t>(D->dim()), Expr(0.0));
    for (auto it = v.begin(); it != v.end(); ++it) {
        if (!D->has(it.key())) {
            throw InputError(path + ": unknown coordinate '" + it.key() + "'");
        }
        comps[static_cast<std::size_t>(D->index_of(it.key()))] = expression(it.value(), D, path + "." + it.key());
    }
    return VectorField(D, comps);
}

inline std::vector<Coordinate> coordinates(const json &v, const std::string &path)
{
    if (!v.is_array() || v.empty()) {
        throw InputError(path + ": expected a non-empty list of coordinates");
    }
    std::vector<Coordinate> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string p = path + "[" + std::to_string(i) + "]";
        const auto &c = v[i];
        allow_only(c, {"name", "angular", "min", "max"}, p);
        const auto n = get_string(c, "name", p);
        for (const auto &o : out) {
            if (o.name == n) {
                throw InputError(p + ": duplicate coordinate '" + n + "'");
            }
        }
        if (get_bool(c, "angular", p, false)) {
            out.push_back(Coordinate::angular(n));
        } else {
            const double lo = get_number(c, "min", p, -1.0), hi = get_number(c, "max", p, 1.0);
            if (!(lo < hi)) {
                throw InputError(p + ": need min < max");
            }
            out.push_back(Coordinate::linear(n, lo, hi));
        }
    }
    return out;
}

// name(key=value, ...); values are constant expressions or parenthesized
// tuples of them.
inline LcsStructure catalog(const std::string &ref, const std::string &path)
{
    const auto open = ref.find('(');
    const std::string name = trim(ref.substr(0, open));
    std::map<std::string, std::string> args;
    if (open != std::string::npos) {
        if (ref.back() != ')') {
            throw InputError(path + ": malformed catalog reference '" + ref + "'");
        }
        const std::string inner = trim(ref.substr(open + 1, ref.size() - open - 2));
        for (const auto &kv : inner.empty() ? std::vector<std::string>{} : split(inner, ',')) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                throw InputError(path + ": expected key=value in '" + kv + "'");
            }
            args[trim(kv.substr(0, eq))] = trim(kv.substr(eq + 1));
        }
    }
    auto take = [&](const std::string &k) -> std::optional<std::string> {
        auto it = args.find(k);
        if (it == args.end()) {
            return std::nullopt;
        }
        auto v = it->second;
        args.erase(it);
        return v;
    };
    auto scalar = [&](const std::string &k, std::optional<double> dflt) {
        const auto v = take(k);
        if (!v) {
            if (!dflt) {
                throw InputError(path + ": " + name + " needs " + k);
            }
            return *dflt;
        }
        return number(json(*v), path + "." + k);
    };
    auto whole = [&](const std::string &k, std::optional<double> dflt) {
        const double x = scalar(k, dflt);
        if (x != std::floor(x)) {
            throw InputError(path + "." + k + ": expected an integer");
        }
        return static_cast<int>(x);
    };
    LcsStructure S;
    if (name == "sphere_circle" || name == "sphere_circle_lattice") {
        const int N = whole("N", std::nullopt);
        const double q = scalar("q", name == "sphere_circle" ? std::optional<double>(1.0) : std::nullopt);
        try {
            S = name == "sphere_circle" ? model_sphere_circle(N, q) : model_sphere_circle_lattice(N, q);
        } catch (const InputError &e) {
            throw InputError(path + ": " + e.what());
        }
    } else if (name == "reduction_universal") {
        const int k = whole("k", std::nullopt), N = whole("N", std::nullopt);
        std::vector<double> mu;
        if (const auto v = take("mu")) {
            std::string t = *v;
            if (!t.empty() && t.front() == '(' && t.back() == ')') {
                t = t.substr(1, t.size() - 2);
            }
            for (const auto &x : split(t, ',')) {
                mu.push_back(number(json(x), path + ".mu"));
            }
        } else {
            mu.assign(static_cast<std::size_t>(std::max(k, 0)), 1.0);
        }
        const double box = scalar("box", 1.0);
        try {
            S = model_reduction_universal(k, N, mu, box);
        } catch (const InputError &e) {
            throw InputError(path + ": " + e.what());
        }
    } else {
        throw InputError(path + ": unknown catalog entry '" + name + "'");
    }
    if (!args.empty()) {
        throw InputError(path + ": unknown parameter '" + args.begin()->first + "' for " + name);
    }
    return S;
}

inline LcsChart inline_chart(const json &c, const std::string &p)
{
    allow_only(c, {"name", "coordinates", "phi", "omega", "alpha", "B", "E"}, p);
    const auto name = get_string(c, "name", p);
    const auto D = make_domain(name, coordinates(require(c, "coordinates", p), p + ".coordinates"));
    const auto omega = form(require(c, "omega", p), D, 1, p + ".omega");
    std::optional<DifferentialForm> alpha;
    if (c.contains("alpha")) {
        alpha = form(c.at("alpha"), D, 1, p + ".alpha");
    }
    DifferentialForm phi(D, 2);
    if (c.contains("phi")) {
        phi = form(c.at("phi"), D, 2, p + ".phi");
    } else if (alpha) {
        phi = d_twisted(omega, *alpha);
    } else {
        throw InputError(p + ": give phi, or alpha to derive it");
    }
    LcsChart out{name, D, phi, omega, alpha, std::nullopt, std::nullopt, std::nullopt};
    if (c.contains("B")) {
        out.B = field(c.at("B"), D, p + ".B");
    }
    if (c.contains("E")) {
        out.E = field(c.at("E"), D, p + ".E");
    }
    return out;
}

inline LcsStructure structure(const std::string &name, const json &v, const std::string &path)
{
    if (v.is_string()) {
        return catalog(v.get<std::string>(), path);
    }
    if (!v.is_object()) {
        throw InputError(path + ": expected a catalog reference string or an inline structure");
    }
    if (v.contains("catalog")) {
        allow_only(v, {"catalog"}, path);
        return catalog(get_string(v, "catalog", path), path);
    }
    allow_only(v, {"charts", "kind"}, path);
    const auto &cs = require(v, "charts", path);
    if (!cs.is_array() || cs.empty()) {
        throw InputError(path + ".charts: expected a non-empty list");
    }
    LcsStructure S;
    S.name = name;
    for (std::size_t i = 0; i < cs.size(); ++i) {
        S.charts.push_back(inline_chart(cs[i], path + ".charts[" + std::to_string(i) + "]"));
    }
    bool first = true, exact = true;
    for (const auto &c : S.charts) {
        exact = exact && c.alpha.has_value();
        first = first && c.alpha && c.B && c.E;
    }
    S.kind = first ? LcsKind::FirstKind : exact ? LcsKind::Exact : LcsKind::General;
    if (v.contains("kind")) {
        const auto k = get_string(v, "kind", path);
        if (k == "general") {
            S.kind = LcsKind::General;
        } else if (k == "exact" && exact) {
            S.kind = LcsKind::Exact;
        } else if (k == "first-kind" && first) {
            S.kind = LcsKind::FirstKind;
        } else {
            throw InputError(path + ".kind: '" + k + "' is unknown or lacks the data it needs");
        }
    }
    return S;
}

inline double finite_or_string(const json &v)
{
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf") {
            return std::numeric_limits<double>::infinity();
        }
        if (s == "-inf") {
            return -std::numeric_limits<double>::infinity();
        }
        if (s == "nan") {
            return std::numeric_limits<double>::quiet_NaN();
        }
        throw InputError("report: bad number '" + s + "'");
    }
    return v.get<double>();
}

inline json encode(double x)
{
    if (std::isnan(x)) {
        return "nan";
    }
    if (std::isinf(x)) {
        return x > 0 ? "inf" : "-inf";
    }
    return x;
}

inline std::string utc_now()
{
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Records.

inline json to_json(const Check &c)
{
    json d = json::object();
    for (const auto &[k, v] : c.data) {
        d[k] = detail::encode(v);
    }
    return json{{"name", c.name},     {"anchor", c.anchor}, {"residual", detail::encode(c.residual)},
                {"tolerance", detail::encode(c.tolerance)}, {"passed", c.passed}, {"data", d},
                {"detail", c.detail}};
}

inline Check check_from_json(const json &j)
{
    Check c;
    c.name = j.at("name").get<std::string>();
    c.anchor = j.at("anchor").get<std::string>();
    c.residual = detail::finite_or_string(j.at("residual"));
    c.tolerance = detail::finite_or_string(j.at("tolerance"));
    c.passed = j.at("passed").get<bool>();
    for (auto it = j.at("data").begin(); it != j.at("data").end(); ++it) {
        c.data[it.key()] = detail::finite_or_string(it.value());
    }
    c.detail = j.at("detail").get<std::string>();
    return c;
}

// ---------------------------------------------------------------------------
// Loading.

inline json parse_json(const std::string &text, const std::string &source)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error &e) {
        std::string msg = e.what();
        // drop the library's "[json.exception.parse_error.101] parse error at line L, column C: " prefix
        if (const auto k = msg.find(": syntax error"); k != std::string::npos) {
            msg = msg.substr(k + 2);
        }
        throw InputError(source + ":" + detail::line_col(text, e.byte) + ": " + msg);
    }
}

inline Manifest parse_manifest(const std::string &text, const std::string &source = "manifest")
{
    const json j = parse_json(text, source);
    if (!j.is_object()) {
        throw InputError(source + ": top level must be an object");
    }
    detail::allow_only(j, {"seed", "tolerance", "samples", "structures", "tasks", "description"}, source);
    Manifest M;
    M.source = source;
    const auto &seed = detail::require(j, "seed", source);
    const auto s = detail::integer(seed, source + ".seed");
    if (s < 0) {
        throw InputError(source + ".seed: must be non-negative");
    }
    M.settings.seed = static_cast<std::uint64_t>(s);
    if (j.contains("tolerance")) {
        M.settings.tol = detail::number(j.at("tolerance"), source + ".tolerance");
    }
    if (j.contains("samples")) {
        M.settings.samples = detail::positive(detail::integer(j.at("samples"), source + ".samples"), source + ".samples");
    }
    if (j.contains("structures")) {
        const auto &st = j.at("structures");
        if (!st.is_object()) {
            throw InputError(source + ".structures: expected an object");
        }
        for (auto it = st.begin(); it != st.end(); ++it) {
            M.structures.emplace_back(it.key(),
                                      detail::structure(it.key(), it.value(), "structures." + it.key()));
        }
    }
    if (j.contains("tasks")) {
        const auto &ts = j.at("tasks");
        if (!ts.is_array()) {
            throw InputError(source + ".tasks: expected a list");
        }
        static const std::vector<std::string> types{"verify", "embed", "reduce-chain", "cohomology"};
        for (std::size_t i = 0; i < ts.size(); ++i) {
            const std::string p = "tasks[" + std::to_string(i) + "]";
            const auto type = detail::get_string(ts[i], "type", p);
            if (std::find(types.begin(), types.end(), type) == types.end()) {
                throw InputError(p + ".type: unknown task type '" + type + "'");
            }
            Task t{type, ts[i].contains("label") ? detail::get_string(ts[i], "label", p) : type, ts[i], p};
            if (ts[i].contains("structure")) {
                (void)M.structure(detail::get_string(ts[i], "structure", p), p + ".structure");
            }
            M.tasks.push_back(std::move(t));
        }
    }
    return M;
}

inline std::string read_file(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError(path + ": cannot open");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Manifest load_manifest(const std::string &path) { return parse_manifest(read_file(path), path); }

// ---------------------------------------------------------------------------
// Tasks.

struct TaskOutcome {
    std::vector<Check> checks;
    json info = json::object();
};

namespace detail {

struct Resolved {
    std::uint64_t seed;
    double tol;
    std::size_t samples;
};

inline Resolved resolve(const Task &t, const Manifest &M, const RunOptions &o, double tol0, std::size_t samples0)
{
    Resolved r{o.seed.value_or(M.settings.seed), o.tol.value_or(M.settings.tol.value_or(tol0)),
               o.samples.value_or(M.settings.samples.value_or(samples0))};
    if (t.spec.contains("seed")) {
        const auto s = integer(t.spec.at("seed"), t.path + ".seed");
        if (s < 0) {
            throw InputError(t.path + ".seed: must be non-negative");
        }
        r.seed = static_cast<std::uint64_t>(s);
    }
    r.tol = get_number(t.spec, "tol", t.path, r.tol);
    if (t.spec.contains("samples")) {
        r.samples = positive(integer(t.spec.at("samples"), t.path + ".samples"), t.path + ".samples");
    }
    return r;
}

inline TaskOutcome run_verify(const Task &t, const Manifest &M, const RunOptions &o)
{
    allow_only(t.spec, {"type", "label", "structure", "suite", "overlaps", "overlap_samples", "seed", "tol", "samples"},
               t.path);
    const auto r = resolve(t, M, o, 1e-9, 200);
    const auto &S = M.structure(get_string(t.spec, "structure", t.path), t.path + ".structure");
    std::string suite = S.kind == LcsKind::FirstKind ? "first-kind" : "lcs";
    if (t.spec.contains("suite")) {
        suite = get_string(t.spec, "suite", t.path);
    }
    ValidationOptions v;
    v.samples = r.samples;
    v.seed = r.seed;
    v.tol = r.tol;
    TaskOutcome out;
    if (suite == "first-kind") {
        out.checks = validate_first_kind(S, v);
    } else if (suite == "lcs") {
        out.checks = validate_lcs(S, v);
    } else {
        throw InputError(t.path + ".suite: expected 'lcs' or 'first-kind'");
    }
    if (get_bool(t.spec, "overlaps", t.path, false)) {
        const auto n = positive(get_int(t.spec, "overlap_samples", t.path, 2000), t.path + ".overlap_samples");
        append(out.checks, sphere_overlap_consistency(S, n, r.seed, r.tol), "overlap/");
    }
    out.info["charts"] = S.charts.size();
    out.info["kind"] = to_string(S.kind);
    return out;
}

inline EmbeddingProblem one_form_problem(const Task &t, const Resolved &r)
{
    const int n = get_int(t.spec, "pairs", t.path, 0);
    if (n < 1) {
        throw InputError(t.path + ".pairs: need at least one coordinate pair");
    }
    EmbeddingProblem P;
    P.ambient = make_domain("R" + std::to_string(2 * n), plane_coordinates(n));
    const auto &f = require(t.spec, "f", t.path);
    if (!f.is_array() || static_cast<int>(f.size()) != 2 * n) {
        throw InputError(t.path + ".f: expected " + std::to_string(2 * n) + " coefficients (x1, y1, x2, ...)");
    }
    for (std::size_t i = 0; i < f.size(); ++i) {
        P.f.push_back(expression(f[i], P.ambient, t.path + ".f[" + std::to_string(i) + "]"));
    }
    const auto &cs = require(t.spec, "charts", t.path);
    if (!cs.is_array() || cs.empty()) {
        throw InputError(t.path + ".charts: expected a non-empty list");
    }
    for (std::size_t i = 0; i < cs.size(); ++i) {
        const std::string p = t.path + ".charts[" + std::to_string(i) + "]";
        allow_only(cs[i], {"name", "coordinates", "param"}, p);
        const auto name = get_string(cs[i], "name", p);
        const auto D = make_domain(name, coordinates(require(cs[i], "coordinates", p), p + ".coordinates"));
        const auto &pv = require(cs[i], "param", p);
        if (!pv.is_array() || static_cast<int>(pv.size()) != 2 * n) {
            throw InputError(p + ".param: expected " + std::to_string(2 * n) + " components");
        }
        std::vector<Expr> comps;
        for (std::size_t k = 0; k < pv.size(); ++k) {
            comps.push_back(expression(pv[k], D, p + ".param[" + std::to_string(k) + "]"));
        }
        P.charts.push_back({name, SmoothMap(D, P.ambient, comps)});
    }
    P.samples = r.samples;
    P.seed = r.seed;
    P.tol = r.tol;
    P.rho = get_number(t.spec, "rho", t.path, 1.2);
    P.drop_zero_coefficients = get_bool(t.spec, "drop_zero", t.path, false);
    return P;
}

inline TaskOutcome run_embed(const Task &t, const Manifest &M, const RunOptions &o)
{
    const auto problem = get_string(t.spec, "problem", t.path);
    TaskOutcome out;
    if (problem == "sphere_circle") {
        allow_only(t.spec, {"type", "label", "problem", "n", "N", "seed", "tol", "samples"}, t.path);
        const auto r = resolve(t, M, o, 1e-8, 200);
        auto Q = sphere_circle_embedding_problem(get_int(t.spec, "n", t.path, 2), get_int(t.spec, "N", t.path, 10),
                                                 r.samples, r.seed);
        Q.tol = r.tol;
        const auto E = build_lcs_embedding(Q);
        out.checks = E.sphere.checks;
        for (auto &c : out.checks) {
            c.name = "sphere/" + c.name;
        }
        append(out.checks, E.checks);
        out.info["N"] = E.sphere.pairs;
        out.info["c"] = E.c;
        out.info["strict"] = E.morphism.strict;
        out.info["full"] = E.morphism.full;
        return out;
    }
    if (problem != "one_form") {
        throw InputError(t.path + ".problem: expected 'one_form' or 'sphere_circle'");
    }
    allow_only(t.spec,
               {"type", "label", "problem", "pairs", "f", "charts", "N", "rho", "drop_zero", "literal", "seed", "tol",
                "samples"},
               t.path);
    const auto r = resolve(t, M, o, 1e-9, 1000);
    const auto P = one_form_problem(t, r);
    if (get_bool(t.spec, "literal", t.path, false)) {
        const auto S = build_psi2(P, true);
        out.checks = S.checks;
        out.info["literal"] = true;
        return out;
    }
    const auto S = embed_one_form(P, get_int(t.spec, "N", t.path, 0));
    out.checks = S.checks;
    out.info["N"] = S.pairs;
    out.info["c"] = S.c;
    out.info["pairs_used"] = S.p;
    return out;
}

inline TaskOutcome run_chain(const Task &t, const Manifest &M, const RunOptions &o)
{
    allow_only(t.spec,
               {"type", "label", "structure", "N", "flow_tol", "escape_slack", "seed", "tol", "samples"}, t.path);
    const auto r = resolve(t, M, o, 1e-9, 200);
    const auto &S = M.structure(get_string(t.spec, "structure", t.path), t.path + ".structure");
    ChainOptions c;
    c.samples = r.samples;
    c.seed = r.seed;
    c.tol = r.tol;
    c.flow_tol = get_number(t.spec, "flow_tol", t.path, c.flow_tol);
    c.flow.escape_slack = get_number(t.spec, "escape_slack", t.path, c.flow.escape_slack);
    const auto in = sphere_circle_chain_input(S, get_int(t.spec, "N", t.path, 2 * S.charts.front().domain->dim() + 1));
    const auto R = run_reduction_chain(in, c);
    TaskOutcome out{R.checks, json::object()};
    out.info["universal_dim"] = R.s4.universal.charts[0].domain->dim();
    out.info["rejected"] = R.rejected;
    return out;
}

inline TaskOutcome run_cohomology(const Task &t, const Manifest &M, const RunOptions &o)
{
    allow_only(t.spec, {"type", "label", "mode", "n", "m", "mu", "refine", "expected", "seed", "max_cells"}, t.path);
    const auto r = resolve(t, M, o, 0.0, 1);
    const std::string mode = t.spec.contains("mode") ? get_string(t.spec, "mode", t.path) : "betti";
    const int n = get_int(t.spec, "n", t.path, 2), m = get_int(t.spec, "m", t.path, 8);
    ComplexOptions co;
    co.max_cells = positive(get_int(t.spec, "max_cells", t.path, static_cast<int>(co.max_cells)), t.path + ".max_cells");
    TaskOutcome out;
    if (mode == "betti") {
        std::vector<double> mu(static_cast<std::size_t>(std::max(n, 0)), 0.0);
        if (t.spec.contains("mu")) {
            mu = number_list(t.spec.at("mu"), t.path + ".mu");
        }
        std::vector<int> expected;
        if (t.spec.contains("expected")) {
            for (double x : number_list(t.spec.at("expected"), t.path + ".expected")) {
                expected.push_back(static_cast<int>(x));
            }
        }
        const auto R = cohomology_report(n, m, mu, get_bool(t.spec, "refine", t.path, true), expected, co);
        out.checks = R.checks;
        out.info["betti"] = R.betti.b;
        if (!R.refined.b.empty()) {
            out.info["betti_refined"] = R.refined.b;
        }
    } else if (mode == "obstruction") {
        const auto R = ot_obstruction_check(n, m, co);
        out.checks = R.checks;
        append(out.checks, averaging_checks(n, m, r.seed, co));
        out.info["distance"] = R.distance;
    } else {
        throw InputError(t.path + ".mode: expected 'betti' or 'obstruction'");
    }
    return out;
}

} // namespace detail

inline TaskOutcome run_task(const Task &t, const Manifest &M, const RunOptions &o = {})
{
    if (t.type == "verify") {
        return detail::run_verify(t, M, o);
    }
    if (t.type == "embed") {
        return detail::run_embed(t, M, o);
    }
    if (t.type == "reduce-chain") {
        return detail::run_chain(t, M, o);
    }
    return detail::run_cohomology(t, M, o);
}

// ---------------------------------------------------------------------------
// Reports.

inline json environment_stamp()
{
    json e;
#if defined(__clang__)
    e["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
    e["compiler"] = std::string("gcc ") + __VERSION__;
#else
    e["compiler"] = "unknown";
#endif
    e["cplusplus"] = static_cast<long>(__cplusplus);
    e["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
#if defined(__linux__)
    e["platform"] = "linux";
#elif defined(__APPLE__)
    e["platform"] = "darwin";
#else
    e["platform"] = "other";
#endif
    e["threads"] = default_threads();
    e["tool_version"] = tool_version;
    return e;
}

inline bool report_green(const json &report)
{
    for (const auto &t : report.at("tasks")) {
        if (t.at("status").get<std::string>() != "passed") {
            return false;
        }
    }
    return true;
}

// Runs the tasks in order. Errors inside a task are recorded as a failing
// "error" record; input errors in the manifest itself are thrown before any
// task starts.
inline json run(const Manifest &M, const RunOptions &o = {})
{
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    json rep;
    rep["format"] = report_format;
    rep["command"] = o.command;
    rep["manifest"] = M.source;
    rep["seed"] = o.seed.value_or(M.settings.seed);
    rep["environment"] = environment_stamp();
    rep["started_at"] = detail::utc_now();
    rep["tasks"] = json::array();
    std::size_t records = 0, failed = 0, errors = 0;
    bool stopped = false;
    for (std::size_t i = 0; i < M.tasks.size(); ++i) {
        const auto &t = M.tasks[i];
        if (!o.only.empty() && t.type != o.only) {
            continue;
        }
        const auto ts = clock::now();
        json tj;
        tj["index"] = i;
        tj["type"] = t.type;
        tj["label"] = t.label;
        TaskOutcome res;
        std::string error;
        try {
            res = run_task(t, M, o);
        } catch (const InputError &) {
            throw;
        } catch (const std::exception &e) {
            error = e.what();
            res.checks.push_back(make_flag("error", "task completes", false, error));
            ++errors;
        }
        const bool ok = error.empty() && all_passed(res.checks);
        tj["status"] = ok ? "passed" : (error.empty() ? "failed" : "error");
        if (!error.empty()) {
            tj["error"] = error;
        }
        tj["info"] = res.info;
        tj["records"] = json::array();
        for (const auto &c : res.checks) {
            tj["records"].push_back(to_json(c));
            ++records;
            failed += c.passed ? 0 : 1;
        }
        tj["wall_time_s"] = std::chrono::duration<double>(clock::now() - ts).count();
        rep["tasks"].push_back(std::move(tj));
        if (!ok && o.fail_fast) {
            stopped = i + 1 < M.tasks.size();
            break;
        }
    }
    rep["summary"] = {{"tasks", rep["tasks"].size()},
                      {"records", records},
                      {"failed_records", failed},
                      {"errors", errors},
                      {"stopped_early", stopped}};
    rep["green"] = report_green(rep);
    rep["finished_at"] = detail::utc_now();
    rep["wall_time_s"] = std::chrono::duration<double>(clock::now() - t0).count();
    return rep;
}

inline json strip_timestamps(json j)
{
    if (j.is_object()) {
        for (const auto &k : timestamp_keys()) {
            j.erase(k);
        }
        for (auto &v : j) {
            v = strip_timestamps(std::move(v));
        }
    } else if (j.is_array()) {
        for (auto &v : j) {
            v = strip_timestamps(std::move(v));
        }
    }
    return j;
}

inline std::string dump(const json &report) { return report.dump(2) + "\n"; }

// Write to a sibling temporary and rename over the target.
inline void write_atomic(const std::string &path, const std::string &content)
{
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw InputError(path + ": cannot write");
        }
        out << content;
        out.flush();
        if (!out) {
            throw InputError(path + ": write failed");
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw InputError(path + ": rename failed: " + ec.message());
    }
}

// Human-readable summary of a report.
inline std::string pretty(const json &report)
{
    std::ostringstream os;
    os << "report " << report.value("manifest", std::string("?")) << "  seed " << report.at("seed") << "  "
       << (report.at("green").get<bool>() ? "GREEN" : "NOT GREEN") << "\n";
    for (const auto &t : report.at("tasks")) {
        os << "\n[" << t.at("index") << "] " << t.at("label").get<std::string>() << " (" << t.at("type").get<std::string>()
           << "): " << t.at("status").get<std::string>() << "\n";
        for (const auto &r : t.at("records")) {
            const auto c = check_from_json(r);
            char line[64];
            std::snprintf(line, sizeof line, "%.3e / %.1e", c.residual, c.tolerance);
            os << "  " << (c.passed ? "ok  " : "FAIL") << " " << c.name << "  " << line;
            if (!c.anchor.empty()) {
                os << "  [" << c.anchor << "]";
            }
            if (!c.passed && !c.detail.empty()) {
                os << "  " << c.detail;
            }
            os << "\n";
        }
    }
    const auto &s = report.at("summary");
    os << "\n" << s.at("records") << " records, " << s.at("failed_records") << " failed, " << s.at("errors")
       << " task errors\n";
    return os.str();
}

} // namespace lcs::manifest
