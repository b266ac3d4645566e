#include <cmath>
#include <filesystem>
#include <limits>
#include <string>

#include <gtest/gtest.h>

#include "lcs/manifest.hpp"

using namespace lcs;
using namespace lcs::manifest;

namespace {

// M_{1,0} written out by hand with mu = 1: alpha = du - p dth, omega = ds + dth,
// Phi = d alpha - omega ^ alpha.
const char *universal_inline = R"j({
  "seed": 3,
  "samples": 50,
  "structures": {
    "U": {"charts": [{
      "name": "global",
      "coordinates": [{"name": "s"}, {"name": "u"}, {"name": "th", "angular": true}, {"name": "p"}],
      "omega": {"s": "1", "th": "1"},
      "alpha": {"u": "1", "th": "-p"},
      "B": {"s": "1"},
      "E": {"u": "-1"}
    }]},
    "U_phi": {"charts": [{
      "name": "global",
      "coordinates": [{"name": "s"}, {"name": "u"}, {"name": "th", "angular": true}, {"name": "p"}],
      "omega": {"s": "1", "th": "MU"},
      "phi": {"th^p": "1", "s^u": "-1", "s^th": "p", "u^th": "1"}
    }]}
  },
  "tasks": [
    {"type": "verify", "structure": "U"},
    {"type": "verify", "structure": "U_phi", "suite": "lcs"},
    {"type": "cohomology", "n": 2, "m": 4, "mu": [0, 0], "expected": [1, 2, 1], "refine": false}
  ]
})j";

std::string with_mu(const std::string &mu)
{
    std::string s = universal_inline;
    s.replace(s.find("MU"), 2, mu);
    return s;
}

std::string error_of(const std::string &text)
{
    try {
        (void)parse_manifest(text, "m.json");
    } catch (const InputError &e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST(Manifest, InlineStructuresAndCatalog)
{
    const auto M = parse_manifest(with_mu("1"), "m.json");
    ASSERT_EQ(M.structures.size(), 2u);
    EXPECT_EQ(M.structures[0].second.kind, LcsKind::FirstKind);
    EXPECT_EQ(M.structures[1].second.kind, LcsKind::General);
    EXPECT_EQ(M.settings.seed, 3u);
    const auto rep = run(M);
    EXPECT_TRUE(rep.at("green").get<bool>()) << dump(rep);
    EXPECT_EQ(rep.at("tasks").size(), 3u);
    // phi written out by hand agrees with the derived d_omega alpha
    const auto &a = M.structures[0].second.charts[0], &b = M.structures[1].second.charts[0];
    const auto pts = sample_points(*a.domain, 20, 1);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        const Vec p = pts.row(i).transpose();
        EXPECT_LT((FormEvaluator(a.phi).two_form(p) - FormEvaluator(b.phi).two_form(p)).cwiseAbs().maxCoeff(), 1e-14);
    }

    const auto C = parse_manifest(R"j({"seed": 1, "structures": {
        "a": "sphere_circle(N=2)",
        "b": {"catalog": "sphere_circle_lattice(N = 2, q = sqrt(2))"},
        "c": "reduction_universal(k=2, N=1, mu=(1, sqrt(2)), box=0.5)",
        "d": "reduction_universal(k=1,N=0)"}})j");
    EXPECT_EQ(C.structure("a", "").charts.size(), model_sphere_circle(2).charts.size());
    EXPECT_DOUBLE_EQ(C.structure("c", "").mu[1], std::sqrt(2.0));
    EXPECT_EQ(C.structure("c", "").k, 2);
    EXPECT_DOUBLE_EQ(C.structure("d", "").mu[0], 1.0);
}

TEST(Manifest, WrongLeeFormGivesOneFailingRecord)
{
    const auto rep = run(parse_manifest(with_mu("2"), "m.json"));
    EXPECT_FALSE(rep.at("green").get<bool>());
    int failed = 0;
    for (const auto &t : rep.at("tasks")) {
        for (const auto &r : t.at("records")) {
            if (!r.at("passed").get<bool>()) {
                ++failed;
                EXPECT_EQ(r.at("name"), "global/lee_equation");
                EXPECT_EQ(r.at("anchor"), "dPhi = omega ^ Phi");
            }
        }
    }
    EXPECT_EQ(failed, 1);
    EXPECT_EQ(rep.at("tasks")[1].at("status"), "failed");
    EXPECT_EQ(rep.at("tasks")[2].at("status"), "passed");
}

TEST(Manifest, FailFastAndTaskFilter)
{
    const auto M = parse_manifest(R"j({"seed": 1, "structures": {"U": "reduction_universal(k=1, N=0)"},
        "tasks": [
          {"type": "cohomology", "n": 2, "m": 4, "mu": [1, 0], "expected": [1, 2, 1], "refine": false},
          {"type": "verify", "structure": "U", "samples": 20},
          {"type": "cohomology", "n": 2, "m": 4, "refine": false}]})j");
    RunOptions o;
    o.fail_fast = true;
    const auto a = run(M, o);
    EXPECT_EQ(a.at("tasks").size(), 1u);
    EXPECT_TRUE(a.at("summary").at("stopped_early").get<bool>());
    const auto b = run(M);
    EXPECT_EQ(b.at("tasks").size(), 3u);
    EXPECT_FALSE(b.at("green").get<bool>());
    o = {};
    o.only = "verify";
    const auto c = run(M, o);
    ASSERT_EQ(c.at("tasks").size(), 1u);
    EXPECT_EQ(c.at("tasks")[0].at("index"), 1);
    EXPECT_TRUE(c.at("green").get<bool>());
}

TEST(Manifest, EmptyTaskListIsGreen)
{
    const auto rep = run(parse_manifest(R"j({"seed": 0, "tasks": []})j"));
    EXPECT_TRUE(rep.at("green").get<bool>());
    EXPECT_TRUE(rep.at("tasks").empty());
    EXPECT_EQ(rep.at("summary").at("records"), 0);
}

TEST(Manifest, InputErrorsNameTheirLocation)
{
    EXPECT_NE(error_of("{\n  \"seed\": 1,\n  \"tasks\": [\n    {\"type\": \"verify\" \"structure\": \"x\"}\n  ]\n}")
                  .find("m.json:4:"),
              std::string::npos);
    EXPECT_NE(error_of(R"j({"tasks": []})j").find("seed"), std::string::npos);
    EXPECT_NE(error_of(R"j({"seed": -1})j").find("non-negative"), std::string::npos);
    EXPECT_NE(error_of(R"j({"seed": 1.5})j").find("integer"), std::string::npos);
    EXPECT_NE(error_of(R"j({"seed": 1, "tasks": [{"type": "verify", "structure": "nowhere"}]})j").find("nowhere"),
              std::string::npos);
    EXPECT_NE(error_of(R"j({"seed": 1, "tasks": [{"type": "plot"}]})j").find("tasks[0].type"), std::string::npos);
    EXPECT_NE(error_of(R"j({"seed": 1, "colour": 1})j").find("colour"), std::string::npos);
    EXPECT_NE(error_of(R"j({"seed": 1, "structures": {"a": "hopf(N=2)"}})j").find("unknown catalog"), std::string::npos);
    EXPECT_NE(error_of(R"j({"seed": 1, "structures": {"a": "sphere_circle(N=2, z=1)"}})j").find("'z'"),
              std::string::npos);
    EXPECT_NE(error_of(R"j({"seed": 1, "structures": {"a": "sphere_circle(N=1)"}})j").find("structures.a"),
              std::string::npos);
    EXPECT_NE(error_of(R"j({"seed": 1, "structures": {"a": "reduction_universal(k=2, N=1, mu=(1))"}})j")
                  .find("structures.a"),
              std::string::npos);
    const std::string chart = R"j({"seed": 1, "structures": {"a": {"charts": [{"name": "c",
        "coordinates": [{"name": "x"}, {"name": "y"}], )j";
    EXPECT_NE(error_of(chart + R"j("omega": {"x": "z"}, "phi": {"x^y": "1"}}]}}})j").find("unknown variable 'z'"),
              std::string::npos);
    EXPECT_NE(error_of(chart + R"j("omega": {"x": "1"}, "phi": {"x": "1"}}]}}})j").find("2-form"), std::string::npos);
    EXPECT_NE(error_of(chart + R"j("omega": {"x": "1"}}]}}})j").find("give phi"), std::string::npos);
    EXPECT_NE(error_of(chart + R"j("omega": {"x": "1+"}, "phi": {"x^y": "1"}}]}}})j").find("structures.a.charts[0].omega.x"),
              std::string::npos);
    EXPECT_NE(error_of(chart + R"j("omega": {"x": "1"}, "phi": {"x^y": "1"}}], "kind": "first-kind"}}})j").find("kind"),
              std::string::npos);
}

TEST(Manifest, RecordsRoundTrip)
{
    Check c = make_check("a/b", "dPhi = omega ^ Phi", 1.0 / 3.0, 1e-9, "at x=0.1");
    c.data["rank"] = 4;
    c.data["tiny"] = 5e-324;
    c.data["huge"] = std::numeric_limits<double>::infinity();
    c.data["undefined"] = std::numeric_limits<double>::quiet_NaN();
    const auto back = check_from_json(parse_json(to_json(c).dump(), "r"));
    EXPECT_EQ(back.name, c.name);
    EXPECT_EQ(back.anchor, c.anchor);
    EXPECT_EQ(back.residual, c.residual);
    EXPECT_EQ(back.tolerance, c.tolerance);
    EXPECT_EQ(back.passed, c.passed);
    EXPECT_EQ(back.detail, c.detail);
    EXPECT_EQ(back.data.at("rank"), 4.0);
    EXPECT_EQ(back.data.at("tiny"), 5e-324);
    EXPECT_TRUE(std::isinf(back.data.at("huge")));
    EXPECT_TRUE(std::isnan(back.data.at("undefined")));

    const auto rep = run(parse_manifest(with_mu("2"), "m.json"));
    const auto text = dump(rep);
    EXPECT_EQ(dump(parse_json(text, "r")), text);
    for (const auto &t : rep.at("tasks")) {
        for (const auto &r : t.at("records")) {
            EXPECT_EQ(to_json(check_from_json(r)), r);
        }
    }
}

TEST(Manifest, ReportsAreDeterministic)
{
    const auto M = parse_manifest(with_mu("1"), "m.json");
    const auto a = strip_timestamps(run(M));
    const auto saved = default_threads();
    default_threads() = 1;
    auto b = strip_timestamps(run(M));
    default_threads() = saved;
    // only the recorded thread count differs
    b["environment"]["threads"] = a.at("environment").at("threads");
    EXPECT_EQ(dump(a), dump(b));
    EXPECT_FALSE(a.contains("started_at"));
    EXPECT_FALSE(a.at("tasks")[0].contains("wall_time_s"));
    // a different seed moves the samples
    RunOptions o;
    o.seed = 99;
    EXPECT_NE(dump(strip_timestamps(run(M, o))), dump(a));
}

TEST(Manifest, OverridesAndPrecedence)
{
    const auto M = parse_manifest(R"j({"seed": 1, "tolerance": 1e-3, "structures": {"U": "reduction_universal(k=1, N=0)"},
        "tasks": [{"type": "verify", "structure": "U", "samples": 7},
                  {"type": "verify", "structure": "U", "tol": 1e-5}]})j");
    RunOptions o;
    o.tol = 1e-4;
    o.samples = 9;
    const auto r = run(M, o);
    const auto &t0 = r.at("tasks")[0].at("records")[0], &t1 = r.at("tasks")[1].at("records")[0];
    EXPECT_EQ(t0.at("tolerance"), 1e-4);
    EXPECT_EQ(t1.at("tolerance"), 1e-5);
    EXPECT_EQ(run(M).at("tasks")[0].at("records")[0].at("tolerance"), 1e-3);
}

TEST(Manifest, TaskErrorsAreRecorded)
{
    // an unreachable tolerance makes the sphere maps refuse to certify; the run goes on
    const auto M = parse_manifest(R"j({"seed": 1, "tasks": [
        {"type": "embed", "problem": "one_form", "pairs": 1, "f": ["y1", "0"], "tol": 1e-30, "samples": 50,
         "charts": [{"name": "c", "coordinates": [{"name": "s", "angular": true}],
                     "param": ["cos(2*pi*s)", "sin(2*pi*s)"]}]},
        {"type": "cohomology", "n": 2, "m": 4, "refine": false}]})j");
    const auto r = run(M);
    EXPECT_FALSE(r.at("green").get<bool>());
    ASSERT_EQ(r.at("tasks").size(), 2u);
    EXPECT_EQ(r.at("tasks")[0].at("status"), "error");
    EXPECT_NE(r.at("tasks")[0].at("error").get<std::string>().find("build_psi"), std::string::npos);
    EXPECT_EQ(r.at("tasks")[0].at("records")[0].at("name"), "error");
    EXPECT_EQ(r.at("tasks")[1].at("status"), "passed");
    EXPECT_EQ(r.at("summary").at("errors"), 1);
    // runtime input errors abort the run
    const auto bad = parse_manifest(R"j({"seed": 1, "structures": {"S": "sphere_circle(N=2)"},
        "tasks": [{"type": "reduce-chain", "structure": "S", "N": 3}]})j");
    EXPECT_THROW((void)run(bad), InputError);
}

TEST(Manifest, AtomicWrite)
{
    const auto dir = std::filesystem::temp_directory_path() / "lcs_manifest_test";
    std::filesystem::create_directories(dir);
    const auto p = (dir / "r.json").string();
    write_atomic(p, "first\n");
    write_atomic(p, "second\n");
    EXPECT_EQ(read_file(p), "second\n");
    EXPECT_FALSE(std::filesystem::exists(p + ".tmp"));
    EXPECT_THROW(write_atomic((dir / "missing" / "r.json").string(), "x"), InputError);
    std::filesystem::remove_all(dir);
}

TEST(Manifest, PrettyReport)
{
    const auto rep = run(parse_manifest(with_mu("2"), "m.json"));
    const auto s = pretty(rep);
    EXPECT_NE(s.find("NOT GREEN"), std::string::npos);
    EXPECT_NE(s.find("FAIL global/lee_equation"), std::string::npos);
    EXPECT_NE(s.find("[dPhi = omega ^ Phi]"), std::string::npos);
}
