#pragma once

// Embeddings of manifolds with a 1-form into odd spheres with the standard
// contact form, and the product embedding of exact l.c.s. manifolds with
// integral Lee class into S^{2N-1} x S^1.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "check.hpp"
#include "errors.hpp"
#include "forms.hpp"
#include "models.hpp"
#include "numeric.hpp"
#include "twisted.hpp"

namespace lcs {

// A chart of M together with its parametrization into the ambient R^{2n}.
struct EmbeddedChart {
    std::string name;
    SmoothMap param;
};

struct EmbeddingProblem {
    DomainPtr ambient;                 // R^{2n}
    std::vector<Expr> f;               // Theta-bar = sum f_i dx_i, one entry per ambient coordinate
    std::vector<EmbeddedChart> charts; // M, already embedded
    std::size_t samples = 1000;        // per chart
    std::uint64_t seed = 1;
    double rho = 1.2;
    double tol = 1e-9;
    // Keep only the coordinates with nonzero coefficient. The result may then
    // fail to be injective; by default every ambient coordinate is kept.
    bool drop_zero_coefficients = false;

    [[nodiscard]] DifferentialForm theta_bar() const
    {
        DifferentialForm t(ambient, 1);
        for (int i = 0; i < ambient->dim(); ++i) {
            t += f[static_cast<std::size_t>(i)] * DifferentialForm::basis(ambient, {ambient->names()[static_cast<std::size_t>(i)]});
        }
        return t;
    }
};

struct EmbeddingSolution {
    SmoothMap psi;    // ambient -> R^{2m}
    int p = 0;        // pairs (x_k, f_k) used
    int pairs = 0;    // m: target is S^{2m-1}(radius)
    double radius = 1.0;
    double r1 = 0.0;
    double r2 = 0.0;
    double c = 1.0;   // psi*(c eta_m) = Theta on M
    Expr phi;         // 1/2 sum f_k x_k
    bool literal = false;
    std::vector<int> active;
    std::vector<Check> checks;
    EmbeddingProblem problem;
};

struct RadiusBound {
    double radius = 0.0;
    double sup = 0.0; // sqrt of the sampled maximum
    double margin = 0.0; // radius^2 - sup^2
};

// rho * sqrt(max over samples of (offset + sum e^2)).
inline RadiusBound radius_bound(const std::vector<Expr> &terms, const DomainPtr &D, const SampleSet &pts, double rho,
                                double offset = 0.0)
{
    if (!(rho > 1.0)) {
        throw InputError("radius_bound: safety factor must exceed 1 (strict inequality)");
    }
    Expr total(offset);
    for (const auto &e : terms) {
        total = total + pow(e, 2);
    }
    Tape tape(std::span<const Expr>(&total, 1), D->names());
    double m = 0.0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        const Vec p = pts.row(i).transpose();
        double v = 0.0;
        tape.evaluate(as_span(p), std::span<double>(&v, 1));
        if (!std::isfinite(v)) {
            throw EvaluationError("radius_bound: non-finite value at " + format_point(*D, p));
        }
        m = std::max(m, v);
    }
    if (!(m > 0.0)) {
        throw InputError("radius_bound: degenerate bound (all terms vanish on the samples)");
    }
    RadiusBound r;
    r.sup = std::sqrt(m);
    r.radius = rho * r.sup;
    r.margin = r.radius * r.radius - m;
    return r;
}

// Overload in the shape of the bound sum (f_k^2 + x_k^2).
inline RadiusBound radius_bound(const std::vector<Expr> &fs, const std::vector<Expr> &coords, const DomainPtr &D,
                                const SampleSet &pts, double rho)
{
    std::vector<Expr> terms = fs;
    terms.insert(terms.end(), coords.begin(), coords.end());
    return radius_bound(terms, D, pts, rho);
}

namespace detail {

inline void validate_problem(const EmbeddingProblem &P)
{
    if (!P.ambient || static_cast<int>(P.f.size()) != P.ambient->dim()) {
        throw InputError("embedding problem: need one coefficient per ambient coordinate");
    }
    if (P.charts.empty()) {
        throw InputError("embedding problem: no charts");
    }
    for (const auto &c : P.charts) {
        require_same_domain(c.param.target(), P.ambient, "embedding chart");
    }
}

inline std::vector<int> active_indices(const EmbeddingProblem &P)
{
    std::vector<int> a;
    for (int i = 0; i < P.ambient->dim(); ++i) {
        if (!P.drop_zero_coefficients || !P.f[static_cast<std::size_t>(i)].is_zero()) {
            a.push_back(i);
        }
    }
    return a;
}

// Chart samples and their ambient images.
struct MSamples {
    std::vector<SampleSet> chart;
    SampleSet ambient;
};

inline MSamples sample_m(const EmbeddingProblem &P)
{
    MSamples s;
    std::vector<Vec> amb;
    for (std::size_t c = 0; c < P.charts.size(); ++c) {
        const auto &ch = P.charts[c];
        s.chart.push_back(sample_points(*ch.param.source(), P.samples, P.seed + c));
        const auto F = numeric(ch.param);
        for (Eigen::Index i = 0; i < s.chart.back().rows(); ++i) {
            amb.push_back(F->value(s.chart.back().row(i).transpose()));
        }
    }
    s.ambient.resize(static_cast<Eigen::Index>(amb.size()), P.ambient->dim());
    for (std::size_t i = 0; i < amb.size(); ++i) {
        s.ambient.row(static_cast<Eigen::Index>(i)) = amb[i].transpose();
    }
    return s;
}

inline DomainPtr sphere_space(int m, double radius)
{
    return make_domain("R" + std::to_string(2 * m), plane_coordinates(m, -(radius + 0.5), radius + 0.5));
}

// max | |psi|^2 - R^2 | over M.
inline Check sphere_check(const std::string &name, const EmbeddingProblem &P, const MSamples &S, const SmoothMap &psi,
                          double radius)
{
    Expr norm2(0.0);
    for (const auto &e : psi.components()) {
        norm2 = norm2 + pow(e, 2);
    }
    const auto r = max_abs(norm2 - Expr(radius * radius), P.ambient, S.ambient);
    return make_check(name, "|Psi(x)|^2 = r^2 on M", r.max, P.tol * std::max(1.0, radius * radius),
                      "worst at " + format_point(*P.ambient, r.worst));
}

// max over charts of |(psi o param)*(c eta) - param*(expected)|.
inline Check pullback_check(const std::string &name, const std::string &anchor, const EmbeddingProblem &P,
                            const MSamples &S, const SmoothMap &psi, double c, const DifferentialForm &expected,
                            double tol)
{
    const int m = psi.target()->dim() / 2;
    const DifferentialForm eta = Expr(c) * eta_form(psi.target(), m);
    double worst = 0.0;
    std::string where;
    for (std::size_t k = 0; k < P.charts.size(); ++k) {
        const auto &ch = P.charts[k];
        const auto G = numeric(compose(psi, ch.param));
        const auto r = pullback_residual(*G, eta, pullback(ch.param, expected), S.chart[k]);
        if (std::isnan(r.max) || r.max > worst) {
            worst = r.max;
            where = ch.name + " " + format_point(*ch.param.source(), r.worst);
        }
    }
    return make_check(name, anchor, worst, tol, where);
}

} // namespace detail

struct Psi1Result {
    SmoothMap psi;
    double r1 = 0.0;
    Expr phi;
    DifferentialForm defect; // d phi on the ambient
    std::vector<Check> checks;
};

// Psi_1 = (x_1, f_1, ..., x_p, f_p, sqrt(r_1^2 - sum(f_k^2 + x_k^2)), 0) into
// S^{2p+1}(r_1); Psi_1*eta = Theta-bar - d phi.
inline Psi1Result build_psi1(const EmbeddingProblem &P)
{
    detail::validate_problem(P);
    const auto S = detail::sample_m(P);
    const auto act = detail::active_indices(P);
    std::vector<Expr> fs, xs, comps;
    Expr phi(0.0);
    for (int i : act) {
        const auto &f = P.f[static_cast<std::size_t>(i)];
        fs.push_back(f);
        xs.push_back(P.ambient->var(i));
        comps.push_back(P.ambient->var(i));
        comps.push_back(f);
        phi = phi + Expr(0.5) * f * P.ambient->var(i);
    }
    const auto rb = radius_bound(fs, xs, P.ambient, S.ambient, P.rho);
    Expr sum_sq(0.0);
    for (std::size_t k = 0; k < fs.size(); ++k) {
        sum_sq = sum_sq + pow(fs[k], 2) + pow(xs[k], 2);
    }
    comps.push_back(sqrt(Expr(rb.radius * rb.radius) - sum_sq));
    comps.push_back(Expr(0.0));
    const int m = static_cast<int>(act.size()) + 1;
    Psi1Result R{SmoothMap(P.ambient, detail::sphere_space(m, rb.radius), comps), rb.radius, phi,
                 d_of(P.ambient, phi), {}};
    auto sc = detail::sphere_check("psi1/sphere", P, S, R.psi, rb.radius);
    sc.data["r1"] = rb.radius;
    sc.data["margin"] = rb.margin;
    R.checks.push_back(sc);
    R.checks.push_back(detail::pullback_check("psi1/pullback", "Psi_1*(eta) = Theta - d phi", P, S, R.psi, 1.0,
                                              P.theta_bar() - R.defect, P.tol));
    if (!R.checks[0].passed) {
        throw CertificationError("build_psi1: sphere constraint violated, " + R.checks[0].detail);
    }
    return R;
}

// Psi_2 = (x_1, f_1, ..., sqrt(r_2^2 - gamma), 0, c_2, 1) into S^{2p+3}(r_2),
// with c_2 = 2 phi so that the last pair contributes exactly d phi. With
// `literal` the last pair is (phi, 1) and the measured defect -phi/2 d is
// reported instead of enforced.
inline EmbeddingSolution build_psi2(const EmbeddingProblem &P, bool literal = false)
{
    detail::validate_problem(P);
    const auto S = detail::sample_m(P);
    const auto act = detail::active_indices(P);
    std::vector<Expr> terms, comps;
    Expr phi(0.0);
    for (int i : act) {
        const auto &f = P.f[static_cast<std::size_t>(i)];
        comps.push_back(P.ambient->var(i));
        comps.push_back(f);
        terms.push_back(f);
        terms.push_back(P.ambient->var(i));
        phi = phi + Expr(0.5) * f * P.ambient->var(i);
    }
    const Expr c2 = literal ? phi : Expr(2.0) * phi;
    terms.push_back(c2);
    const auto rb = radius_bound(terms, P.ambient, S.ambient, P.rho, 1.0);
    Expr gamma(1.0);
    for (const auto &t : terms) {
        gamma = gamma + pow(t, 2);
    }
    comps.push_back(sqrt(Expr(rb.radius * rb.radius) - gamma));
    comps.push_back(Expr(0.0));
    comps.push_back(c2);
    comps.push_back(Expr(1.0));
    const int m = static_cast<int>(act.size()) + 2;

    EmbeddingSolution sol{SmoothMap(P.ambient, detail::sphere_space(m, rb.radius), comps),
                          static_cast<int>(act.size()),
                          m,
                          rb.radius,
                          0.0,
                          rb.radius,
                          1.0,
                          phi,
                          literal,
                          act,
                          {},
                          P};
    sol.r1 = radius_bound(std::vector<Expr>(terms.begin(), terms.end() - 1), P.ambient, S.ambient, P.rho).radius;

    auto sc = detail::sphere_check("psi2/sphere", P, S, sol.psi, rb.radius);
    sc.data["r2"] = rb.radius;
    sc.data["margin"] = rb.margin;
    sol.checks.push_back(sc);
    if (!sc.passed) {
        throw CertificationError("build_psi2: gamma reaches r2^2, " + sc.detail);
    }
    const DifferentialForm theta = P.theta_bar();
    if (!literal) {
        auto pc = detail::pullback_check("psi2/pullback", "Psi_2*(eta) = Theta", P, S, sol.psi, 1.0, theta, P.tol);
        sol.checks.push_back(pc);
        if (!pc.passed) {
            throw CertificationError("build_psi2: pullback residual " + detail::format_double(pc.residual) + " at " +
                                     pc.detail);
        }
    } else {
        const DifferentialForm dphi = d_of(P.ambient, phi);
        auto defect = detail::pullback_check("psi2/literal_defect", "Psi_2*(eta) = Theta - (1/2) d phi", P, S,
                                             sol.psi, 1.0, theta - Expr(0.5) * dphi, P.tol);
        // size of the defect itself, relative to Theta
        const auto size = detail::pullback_check("psi2/literal_gap", "", P, S, sol.psi, 1.0, theta, 0.0);
        defect.data["defect_max"] = size.residual;
        defect.detail = "literal last pair (phi, 1)";
        sol.checks.push_back(defect);
    }
    return sol;
}

// Homothety onto the unit sphere: psi*(r_2^2 eta) = Theta.
inline EmbeddingSolution build_psi3(const EmbeddingSolution &S2)
{
    EmbeddingSolution S = S2;
    std::vector<Expr> comps;
    for (const auto &e : S2.psi.components()) {
        comps.push_back(e / Expr(S2.radius));
    }
    S.psi = SmoothMap(S2.psi.source(), detail::sphere_space(S2.pairs, 1.0), comps);
    S.c = S2.c * S2.radius * S2.radius;
    S.radius = 1.0;
    const auto &P = S.problem;
    const auto M = detail::sample_m(P);
    S.checks.push_back(detail::sphere_check("psi3/sphere", P, M, S.psi, 1.0));
    if (!S.literal) {
        S.checks.push_back(
            detail::pullback_check("psi3/pullback", "Psi*(c eta_N) = Theta", P, M, S.psi, S.c, P.theta_bar(), P.tol));
    }
    return S;
}

// Append zero pairs: image in S^{2N-1}.
inline EmbeddingSolution pad_to_dimension(const EmbeddingSolution &S0, int N)
{
    if (N < S0.pairs) {
        throw InputError("pad_to_dimension: need N >= " + std::to_string(S0.pairs) + ", got " + std::to_string(N));
    }
    EmbeddingSolution S = S0;
    if (N == S0.pairs) {
        return S;
    }
    std::vector<Expr> comps = S0.psi.components();
    comps.resize(static_cast<std::size_t>(2 * N), Expr(0.0));
    S.psi = SmoothMap(S0.psi.source(), detail::sphere_space(N, S0.radius), comps);
    S.pairs = N;
    const auto &P = S.problem;
    const auto M = detail::sample_m(P);
    if (!S.literal) {
        S.checks.push_back(detail::pullback_check("pad/pullback", "Psi*(c eta_N) = Theta", P, M, S.psi, S.c,
                                                  P.theta_bar(), P.tol));
    }
    return S;
}

// Jacobian of psi o param has full rank dim(chart) at every sample; min over
// samples of the smallest singular value reported.
inline Check immersion_check(const std::string &name, const EmbeddingProblem &P, const SmoothMap &psi)
{
    int min_rank = 1 << 20;
    double min_sv = 1e300;
    for (std::size_t k = 0; k < P.charts.size(); ++k) {
        const auto &ch = P.charts[k];
        const auto G = numeric(compose(psi, ch.param));
        const auto pts = sample_points(*ch.param.source(), std::min<std::size_t>(P.samples, 200), P.seed + 17 * k);
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            const Mat J = G->jacobian(pts.row(i).transpose());
            min_rank = std::min(min_rank, numerical_rank(J));
            Eigen::JacobiSVD<Mat> svd(J);
            min_sv = std::min(min_sv, svd.singularValues()(svd.singularValues().size() - 1));
        }
    }
    const int dim = P.charts.front().param.source()->dim();
    auto c = make_flag(name, "rank D Psi = dim M", min_rank == dim);
    c.data["min_rank"] = min_rank;
    c.data["dim"] = dim;
    c.data["min_singular_value"] = min_sv;
    return c;
}

// Injectivity proxy: over seeded pairs of M samples whose ambient images are
// at least delta apart, the smallest image distance.
inline Check injectivity_check(const std::string &name, const EmbeddingProblem &P, const SmoothMap &psi,
                               std::size_t pairs = 10000, double delta = 1e-3)
{
    const auto M = detail::sample_m(P);
    const auto F = numeric(psi);
    const auto n = static_cast<std::size_t>(M.ambient.rows());
    std::vector<Vec> img(n);
    parallel_for(n, [&](std::size_t i) { img[i] = F->value(M.ambient.row(static_cast<Eigen::Index>(i)).transpose()); });
    Rng rng(P.seed + 99);
    double min_dist = 1e300, min_ratio = 1e300;
    std::size_t used = 0;
    for (std::size_t t = 0; t < pairs; ++t) {
        const auto i = static_cast<Eigen::Index>(rng.bits() % n), j = static_cast<Eigen::Index>(rng.bits() % n);
        const double d = (M.ambient.row(i) - M.ambient.row(j)).norm();
        if (d <= delta) {
            continue;
        }
        ++used;
        const double e = (img[static_cast<std::size_t>(i)] - img[static_cast<std::size_t>(j)]).norm();
        min_dist = std::min(min_dist, e);
        min_ratio = std::min(min_ratio, e / d);
    }
    auto c = make_flag(name, "Psi(x) != Psi(y) for sampled x != y", used > 0 && min_dist > 0.0);
    c.data["pairs"] = static_cast<double>(used);
    c.data["min_distance"] = min_dist;
    c.data["min_ratio"] = min_ratio;
    return c;
}

// Psi_2, Psi_3 and padding in sequence; N = 0 keeps the minimal target.
inline EmbeddingSolution embed_one_form(const EmbeddingProblem &P, int N = 0)
{
    auto first = build_psi1(P);
    auto S = build_psi3(build_psi2(P));
    S.checks.insert(S.checks.begin(), first.checks.begin(), first.checks.end());
    if (N > 0) {
        S = pad_to_dimension(S, N);
    }
    S.checks.push_back(immersion_check("immersion", P, S.psi));
    S.checks.push_back(injectivity_check("injectivity", P, S.psi));
    return S;
}

// ---------------------------------------------------------------------------
// Exact l.c.s. structures with integral Lee class into S^{2N-1} x S^1.

struct LcsEmbeddingProblem {
    LcsStructure structure;       // exact, every chart carries alpha
    DomainPtr ambient;            // R^{2n}
    std::vector<Expr> f;          // extension of alpha to the ambient
    std::vector<SmoothMap> whitney; // per chart: chart -> ambient
    std::vector<Expr> tau;        // per chart: circle map, values mod 1
    int N = 0;
    std::string classify_chart;   // chart used for the morphism classification
    std::vector<SmoothMap> source_loops;
    std::size_t samples = 200;
    std::uint64_t seed = 1;
    double rho = 1.2;
    double tol = 1e-8;
};

struct LcsEmbedding {
    EmbeddingSolution sphere;
    std::vector<SmoothMap> maps; // per chart, into R^{2N} x S^1
    DomainPtr target;
    double c = 1.0;
    MorphismReport morphism;
    std::vector<Check> checks;
};

// theta-loop of S^{2N-1} x S^1 through (1, 0, ..., 0).
inline SmoothMap circle_fibre_loop(const DomainPtr &target)
{
    auto L = make_domain("loop", {Coordinate::angular("t")});
    std::vector<Expr> comps;
    for (int i = 0; i < target->dim(); ++i) {
        const auto &n = target->names()[static_cast<std::size_t>(i)];
        comps.push_back(n == "theta" ? var("t") : Expr(i == 0 ? 1.0 : 0.0));
    }
    return SmoothMap(L, target, comps);
}

inline LcsEmbedding build_lcs_embedding(const LcsEmbeddingProblem &Q)
{
    const auto &St = Q.structure;
    const auto nc = St.charts.size();
    if (Q.whitney.size() != nc || Q.tau.size() != nc) {
        throw InputError("build_lcs_embedding: need one Whitney map and one circle map per chart");
    }
    std::vector<Check> pre;
    // hypotheses: tau*(dtheta) = omega, d_omega alpha = Phi, Theta-bar extends alpha
    EmbeddingProblem P{Q.ambient, Q.f, {}, Q.samples, Q.seed, Q.rho, Q.tol * 0.1, false};
    for (std::size_t k = 0; k < nc; ++k) {
        const auto &ch = St.charts[k];
        if (!ch.alpha) {
            throw InputError("build_lcs_embedding: chart " + ch.name + " has no potential alpha");
        }
        require_same_domain(Q.whitney[k].source(), ch.domain, "build_lcs_embedding (Whitney map)");
        P.charts.push_back({ch.name, Q.whitney[k]});
        const auto pts = sample_points(*ch.domain, Q.samples, Q.seed + k);
        const auto rt = max_abs(d_of(ch.domain, Q.tau[k]) - ch.omega, pts);
        if (!rt.below(Q.tol)) {
            throw CertificationError("build_lcs_embedding: tau*(dtheta) - omega residual " +
                                     detail::format_double(rt.max) + " on chart " + ch.name);
        }
        pre.push_back(make_check(ch.name + "/tau", "tau*(dtheta) = omega", rt.max, Q.tol));
        const auto rp = max_abs(d_twisted(ch.omega, *ch.alpha) - ch.phi, pts);
        if (!rp.below(Q.tol)) {
            throw CertificationError("build_lcs_embedding: alpha is not a potential on chart " + ch.name +
                                     " (residual " + detail::format_double(rp.max) + ")");
        }
        pre.push_back(make_check(ch.name + "/potential", "d_omega alpha = Phi", rp.max, Q.tol));
        const auto re = max_abs(pullback(Q.whitney[k], P.theta_bar()) - *ch.alpha, pts);
        pre.push_back(make_check(ch.name + "/extension", "i*(Theta-bar) = alpha", re.max, Q.tol));
    }

    auto sphere = build_psi3(build_psi2(P));
    if (Q.N > 0) {
        sphere = pad_to_dimension(sphere, Q.N);
    }
    LcsEmbedding out{sphere, {}, nullptr, sphere.c, {}, std::move(pre)};
    const int N = out.sphere.pairs;
    out.target = sphere_ambient(N).domain;
    const DifferentialForm eta = eta_form(out.target, N);
    const DifferentialForm dtheta = DifferentialForm::basis(out.target, {"theta"});
    const DifferentialForm phiN = d_twisted(dtheta, eta);

    std::vector<SmoothMap> eq_loops;
    for (std::size_t k = 0; k < nc; ++k) {
        const auto &ch = St.charts[k];
        auto comps = compose(out.sphere.psi, Q.whitney[k]).components();
        comps.push_back(Q.tau[k]);
        out.maps.emplace_back(ch.domain, out.target, comps);
        const auto G = numeric(out.maps.back());
        const auto pts = sample_points(*ch.domain, Q.samples, Q.seed + 31 * k);
        const auto ra = pullback_residual(*G, Expr(out.c) * eta, *ch.alpha, pts);
        const auto rw = pullback_residual(*G, dtheta, ch.omega, pts);
        const auto rf = pullback_residual(*G, Expr(out.c) * phiN, ch.phi, pts);
        out.checks.push_back(make_check(ch.name + "/alpha", "Psi*(c eta_N) = alpha", ra.max, Q.tol));
        out.checks.push_back(make_check(ch.name + "/omega", "Psi*(dtheta) = omega", rw.max, Q.tol));
        out.checks.push_back(make_check(ch.name + "/phi", "Psi*(c Phi_N) = Phi", rf.max, Q.tol));
    }
    out.checks.push_back(immersion_check("immersion", P, out.sphere.psi));
    out.checks.push_back(injectivity_check("injectivity", P, out.sphere.psi));

    // strict and full: on the chart carrying the source loops
    const std::size_t ci = Q.classify_chart.empty() ? 0 : [&] {
        for (std::size_t k = 0; k < nc; ++k) {
            if (St.charts[k].name == Q.classify_chart) {
                return k;
            }
        }
        throw InputError("build_lcs_embedding: unknown chart " + Q.classify_chart);
    }();
    MorphismOptions mo;
    mo.samples = Q.samples;
    mo.seed = Q.seed;
    mo.tol = Q.tol;
    out.morphism = classify_morphism(out.maps[ci], St.charts[ci].omega, dtheta, Q.source_loops,
                                     {circle_fibre_loop(out.target)}, mo);
    auto strict = make_check("morphism/strict", "Psi*(dtheta) = omega", out.morphism.strict_residual, Q.tol);
    out.checks.push_back(strict);
    auto full = make_flag("morphism/full", "Psi* maps the target period lattice onto the source lattice",
                          out.morphism.full);
    full.data["source_rank"] = out.morphism.source.rank;
    full.data["target_rank"] = out.morphism.target.rank;
    out.checks.push_back(full);
    return out;
}

// S^{2n-1} x S^1 with (Phi_n, eta_n, dtheta) placed in R^{2n+2} through
// (x, cos 2 pi theta, sin 2 pi theta), tau = theta.
inline LcsEmbeddingProblem sphere_circle_embedding_problem(int n = 2, int N = 10, std::size_t samples = 200,
                                                           std::uint64_t seed = 1)
{
    LcsEmbeddingProblem Q;
    Q.structure = model_sphere_circle(n, 1.0);
    Q.ambient = make_domain("R" + std::to_string(2 * n + 2), plane_coordinates(n + 1));
    for (int j = 1; j <= n; ++j) {
        Q.f.push_back(Expr(0.5) * var("y" + std::to_string(j)));
        Q.f.push_back(Expr(-0.5) * var("x" + std::to_string(j)));
    }
    Q.f.push_back(Expr(0.0));
    Q.f.push_back(Expr(0.0));
    const auto &amb = Q.structure.ambient;
    std::vector<Expr> e;
    for (int i = 0; i < 2 * n; ++i) {
        e.push_back(amb->var(i));
    }
    e.push_back(cos(Expr(2 * pi) * var("theta")));
    e.push_back(sin(Expr(2 * pi) * var("theta")));
    const SmoothMap E(amb, Q.ambient, e);
    for (const auto &ch : Q.structure.charts) {
        Q.whitney.push_back(compose(E, *ch.param));
        Q.tau.push_back(var("theta"));
    }
    Q.N = N;
    Q.classify_chart = "toroidal";
    // theta loop and the phase loop of the first plane in the toroidal chart
    const auto &tor = Q.structure.chart("toroidal").domain;
    auto L = make_domain("loop", {Coordinate::angular("t")});
    for (const std::string &which : {"theta", "phi1"}) {
        std::vector<Expr> comps;
        for (const auto &nm : tor->names()) {
            if (nm == which) {
                comps.push_back(var("t"));
            } else if (nm.rfind("chi", 0) == 0) {
                comps.push_back(Expr(pi / 4));
            } else {
                comps.push_back(Expr(0.25));
            }
        }
        Q.source_loops.emplace_back(L, tor, comps);
    }
    Q.samples = samples;
    Q.seed = seed;
    return Q;
}

} // namespace lcs
