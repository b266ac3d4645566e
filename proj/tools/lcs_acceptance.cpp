// Acceptance run: one PASS/FAIL line per criterion, exit 0 iff all pass.
//
//   lcs_acceptance [selftest.manifest]

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lcs/lcs.hpp"
#include "lcs/manifest.hpp"

#ifndef LCS_SELFTEST_MANIFEST
#define LCS_SELFTEST_MANIFEST "manifests/selftest.manifest"
#endif

using namespace lcs;

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0)
{
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

struct Outcome {
    bool ok = true;
    std::ostringstream note;

    void require(bool cond, const std::string &what)
    {
        if (!cond) {
            if (!ok) {
                note << "; ";
            }
            ok = false;
            note << what;
        }
    }
};

double worst(const std::vector<Check> &cs, const std::string &suffix)
{
    double w = 0.0;
    for (const auto &c : cs) {
        if (c.name.size() >= suffix.size() && c.name.compare(c.name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            w = std::max(w, c.residual);
        }
    }
    return w;
}

std::string failing(const std::vector<Check> &cs)
{
    std::string s;
    for (const auto &c : cs) {
        if (!c.passed) {
            s += (s.empty() ? "" : ",") + c.name;
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Corpus of embedded manifolds with a 1-form.

EmbeddingProblem circle()
{
    auto A = make_domain("R2", plane_coordinates(1));
    auto C = make_domain("S1", {Coordinate::angular("s")});
    const Expr a = Expr(2 * pi) * var("s");
    EmbeddingProblem P;
    P.ambient = A;
    P.f = {var("y1"), Expr(0.0)};
    P.charts = {{"circle", SmoothMap(C, A, {cos(a), sin(a)})}};
    return P;
}

EmbeddingProblem torus()
{
    auto A = make_domain("R4", plane_coordinates(2));
    auto T = make_domain("T2", {Coordinate::angular("t1"), Coordinate::angular("t2")});
    const Expr a = Expr(2 * pi) * var("t1"), b = Expr(2 * pi) * var("t2");
    EmbeddingProblem P;
    P.ambient = A;
    P.f = {var("y1"), Expr(0.0), var("x1") * var("y2"), Expr(0.3) * var("x2")};
    P.charts = {{"torus", SmoothMap(T, A, {cos(a), sin(a), cos(b), sin(b)})}};
    return P;
}

EmbeddingProblem s3()
{
    auto A = make_domain("R4", plane_coordinates(2));
    auto H = make_domain("hopf", {Coordinate::linear("chi", 0.1, pi / 2 - 0.1), Coordinate::angular("p1"),
                                  Coordinate::angular("p2")});
    const Expr chi = var("chi"), a = Expr(2 * pi) * var("p1"), b = Expr(2 * pi) * var("p2");
    EmbeddingProblem P;
    P.ambient = A;
    P.f = {Expr(0.5) * var("y1"), Expr(-0.5) * var("x1"), Expr(0.5) * var("y2"), Expr(-0.5) * var("x2")};
    P.charts = {{"hopf", SmoothMap(H, A, {cos(chi) * cos(a), cos(chi) * sin(a), sin(chi) * cos(b), sin(chi) * sin(b)})}};
    return P;
}

std::vector<std::pair<std::string, EmbeddingProblem>> corpus()
{
    std::vector<std::pair<std::string, EmbeddingProblem>> out{{"S1", circle()}, {"T2", torus()}, {"S3", s3()}};
    for (auto &[n, P] : out) {
        P.samples = 1000;
        P.seed = 1;
        P.tol = 1e-8;
    }
    return out;
}

// ---------------------------------------------------------------------------

Outcome criterion1()
{
    Outcome o;
    for (const auto &[name, P] : corpus()) {
        const auto t0 = clock_type::now();
        const auto S = embed_one_form(P);
        const double dt = seconds_since(t0);
        const double r = worst(S.checks, "psi3/pullback");
        o.require(all_passed(S.checks), name + " failing " + failing(S.checks));
        o.require(r < 1e-8, name + " residual " + std::to_string(r));
        o.require(dt < 10.0, name + " took " + std::to_string(dt) + " s");
        if (o.ok) {
            std::ostringstream s;
            s << name << " " << r << " (" << dt << " s) ";
            o.note << s.str();
        }
    }
    return o;
}

Outcome criterion2()
{
    Outcome o;
    double largest = 0.0;
    for (const auto &[name, P0] : corpus()) {
        auto P = P0;
        P.tol = 1e-9;
        const auto S = build_psi2(P, true);
        const auto *d = find_check(S.checks, "psi2/literal_defect");
        o.require(d != nullptr && d->passed && d->residual < 1e-9,
                  name + " defect differs from dphi/2 by " + (d ? std::to_string(d->residual) : "?"));
        if (d != nullptr) {
            largest = std::max(largest, d->data.at("defect_max"));
            o.note << name << " |gap-dphi/2| " << d->residual << " |gap| " << d->data.at("defect_max") << " ";
        }
    }
    // phi vanishes for eta_2 on S^3, elsewhere the literal map misses Theta
    o.require(largest > 1e-3, "literal defect vanishes on every case");
    return o;
}

Outcome criterion3()
{
    Outcome o;
    const auto E = build_lcs_embedding(sphere_circle_embedding_problem(2, 10, 200, 1));
    o.require(all_passed(E.checks), "failing " + failing(E.checks));
    for (const std::string id : {"/alpha", "/omega", "/phi"}) {
        const double r = worst(E.checks, id);
        o.require(r < 1e-8, id + " residual " + std::to_string(r));
        o.note << id.substr(1) << " " << r << " ";
    }
    o.require(E.morphism.strict, "not strict");
    o.require(E.morphism.full, "not full");
    o.note << (E.morphism.strict ? "strict" : "") << (E.morphism.full ? "+full" : "");
    return o;
}

Outcome criterion4()
{
    Outcome o;
    const auto t0 = clock_type::now();
    std::vector<LcsStructure> all;
    for (int N = 2; N <= 3; ++N) {
        all.push_back(model_sphere_circle(N));
    }
    const double r2 = std::sqrt(2.0);
    for (const auto &mu : std::vector<std::vector<double>>{{1.0}, {r2}, {1.0, r2}}) {
        for (int N = 0; N <= 3; ++N) {
            all.push_back(model_reduction_universal(static_cast<int>(mu.size()), N, mu));
        }
    }
    const std::vector<std::string> needed{"lee_equation", "potential",   "alpha_flat_B", "flat_E",         "omega_B",
                                          "omega_E",      "lie_B_phi",   "bracket_BE",   "d_omega_squared"};
    ValidationOptions v;
    v.samples = 200;
    v.tol = 1e-9;
    double w = 0.0;
    std::size_t records = 0;
    for (const auto &S : all) {
        const auto cs = validate_first_kind(S, v);
        records += cs.size();
        o.require(all_passed(cs), S.name + " failing " + failing(cs));
        for (const auto &n : needed) {
            o.require(worst(cs, "/" + n) < 1e-9, S.name + " " + n);
            bool present = false;
            for (const auto &c : cs) {
                present = present || c.name.ends_with("/" + n);
            }
            o.require(present, S.name + " lacks " + n);
        }
        for (const auto &c : cs) {
            if (c.tolerance > 0) {
                w = std::max(w, c.residual);
            }
        }
    }
    const double dt = seconds_since(t0);
    o.require(dt < 60.0, "took " + std::to_string(dt) + " s");
    o.note << all.size() << " structures, " << records << " records, max residual " << w << " (" << dt << " s)";
    return o;
}

Outcome criterion5()
{
    Outcome o;
    const auto in = sphere_circle_chain_input(model_sphere_circle(2), 9);
    ChainOptions c;
    c.samples = 200;
    const auto R = run_reduction_chain(in, c);
    o.require(all_passed(R.checks), "failing " + failing(R.checks));
    // every stage certifies strong reducibility
    for (const std::string st : {"step1/reduction/", "step2/reduction/", "step4/reduction/", "composite/"}) {
        bool seen = false;
        for (const auto &ch : R.checks) {
            seen = seen || ch.name.starts_with(st);
        }
        o.require(seen, "no " + st + " checks");
    }
    double pull = 0.0;
    for (const auto &ch : R.checks) {
        if (ch.name.starts_with("composite/pullback_")) {
            pull = std::max(pull, ch.residual);
        }
    }
    double conc = 0.0;
    for (const auto &ch : R.concatenation) {
        conc = std::max(conc, ch.residual);
    }
    o.require(pull < 1e-6, "composite pullback " + std::to_string(pull));
    o.require(conc < 1e-6, "concatenation " + std::to_string(conc));
    o.note << R.checks.size() << " checks, composite pullback " << pull << ", concatenation " << conc;
    return o;
}

int dense_rank(const SpMat &A)
{
    if (A.rows() == 0 || A.cols() == 0) {
        return 0;
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd{Eigen::MatrixXd(A)};
    const auto &s = svd.singularValues();
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        r += s[i] > 1e-10 * s[0] ? 1 : 0;
    }
    return r;
}

std::vector<int> dense_betti(const TwistedCochainComplex &C)
{
    std::vector<int> r, b;
    for (const auto &D : C.D) {
        r.push_back(dense_rank(D));
    }
    for (int k = 0; k <= C.n; ++k) {
        b.push_back(static_cast<int>(C.cells(k)) - (k < C.n ? r[static_cast<std::size_t>(k)] : 0) -
                    (k > 0 ? r[static_cast<std::size_t>(k - 1)] : 0));
    }
    return b;
}

std::string show(const std::vector<int> &b)
{
    std::string s = "(";
    for (std::size_t i = 0; i < b.size(); ++i) {
        s += (i ? "," : "") + std::to_string(b[i]);
    }
    return s + ")";
}

Outcome criterion6()
{
    Outcome o;
    const auto t0 = clock_type::now();
    struct Case {
        int n, m;
        std::vector<double> mu;
        std::vector<int> expected;
    };
    // T^2 refines from m = 8 to 16; T^3 from 4 to 8 (sparse QR cost grows fast in 3D)
    const double r2 = std::sqrt(2.0);
    const std::vector<Case> cases{{2, 8, {0.0, 0.0}, {1, 2, 1}},
                                  {2, 8, {1.0, 0.0}, {0, 0, 0}},
                                  {2, 8, {0.3, -2.0}, {}},
                                  {2, 8, {r2, 0.0}, {}},
                                  {2, 8, {1e-3, 0.0}, {}},
                                  {3, 4, {0.0, 0.0, 0.0}, {1, 3, 3, 1}},
                                  {3, 4, {r2, 0.0, 0.0}, {}}};
    for (const auto &c : cases) {
        const auto R = cohomology_report(c.n, c.m, c.mu, true, c.expected);
        o.require(R.passed(), "failing " + failing(R.checks));
        o.require(R.betti.euler() == 0, "euler " + std::to_string(R.betti.euler()));
        const auto dense = dense_betti(build_torus_complex(c.n, c.m, c.mu));
        o.require(dense == R.betti.b, "dense oracle " + show(dense) + " vs " + show(R.betti.b));
        const bool zero = std::all_of(c.mu.begin(), c.mu.end(), [](double x) { return x == 0.0; });
        if (!zero) {
            o.require(R.betti.b.front() == 0 && R.betti.b.back() == 0, "b0/btop nonzero " + show(R.betti.b));
        }
        if (c.n == 2 && !c.expected.empty()) {
            o.note << "mu=(" << c.mu[0] << "," << c.mu[1] << ") " << show(R.betti.b) << " ";
        }
    }
    const double dt = seconds_since(t0);
    o.require(dt < 60.0, "took " + std::to_string(dt) + " s");
    o.note << cases.size() << " systems, refined to 2m (" << dt << " s)";
    return o;
}

Outcome criterion7()
{
    Outcome o;
    const auto R = ot_obstruction_check(2, 8);
    o.require(R.distance > 0.1, "distance " + std::to_string(R.distance));
    o.require(R.invariant_max == 0.0, "invariant max " + std::to_string(R.invariant_max));
    o.require(R.passed(), "failing " + failing(R.checks));
    const auto A = averaging_checks(2, 8, 1);
    o.require(all_passed(A), "averaging failing " + failing(A));
    o.note << "distance " << R.distance << ", max |D1 a| " << R.invariant_max << ", averaging idempotent "
           << worst(A, "idempotent") << ", chain map " << worst(A, "chain_map");
    return o;
}

Outcome criterion8(const std::string &path)
{
    Outcome o;
    const auto M = manifest::load_manifest(path);
    const auto a = manifest::run(M), b = manifest::run(M);
    const auto sa = manifest::dump(manifest::strip_timestamps(a)), sb = manifest::dump(manifest::strip_timestamps(b));
    o.require(sa == sb, "reports differ");
    o.require(a.at("green").get<bool>(), "self-test not green");
    // round trip through the text form
    const auto back = manifest::parse_json(manifest::dump(a), "report");
    o.require(manifest::dump(back) == manifest::dump(a), "report does not round-trip");
    o.note << a.at("summary").at("records") << " records, " << sa.size() << " bytes identical";
    return o;
}

} // namespace

int main(int argc, char **argv)
{
    const std::string manifest_path = argc > 1 ? argv[1] : LCS_SELFTEST_MANIFEST;
    struct Item {
        const char *title;
        std::function<Outcome()> run;
    };
    const std::vector<Item> items{
        {"one-form embeddings into spheres", criterion1},
        {"literal Psi_2 defect equals dphi/2", criterion2},
        {"S3xS1 into S^{2N-1}xS1", criterion3},
        {"first-kind identity suite", criterion4},
        {"four-stage reduction chain", criterion5},
        {"twisted cohomology of tori", criterion6},
        {"obstruction skeleton and averaging", criterion7},
        {"deterministic self-test reports", [&] { return criterion8(manifest_path); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        Outcome o;
        try {
            o = items[i].run();
        } catch (const std::exception &e) {
            o.ok = false;
            o.note << "exception: " << e.what();
        }
        failed += o.ok ? 0 : 1;
        std::cout << (o.ok ? "PASS" : "FAIL") << " " << (i + 1) << " " << items[i].title << ": " << o.note.str()
                  << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
