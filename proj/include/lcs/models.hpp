#pragma once

// Catalog of l.c.s. structures with first-kind data and the validators for
// the first-kind axioms.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "check.hpp"
#include "errors.hpp"
#include "forms.hpp"
#include "numeric.hpp"
#include "twisted.hpp"

namespace lcs {

enum class LcsKind { General, Exact, FirstKind };

inline const char *to_string(LcsKind k)
{
    switch (k) {
    case LcsKind::General:
        return "general";
    case LcsKind::Exact:
        return "exact";
    default:
        return "first-kind";
    }
}

struct LcsChart {
    std::string name;
    DomainPtr domain;
    DifferentialForm phi;
    DifferentialForm omega;
    std::optional<DifferentialForm> alpha;
    std::optional<VectorField> B;
    std::optional<VectorField> E;
    std::optional<SmoothMap> param; // chart -> ambient presentation
};

struct LcsStructure {
    std::string name;
    LcsKind kind = LcsKind::General;
    std::vector<LcsChart> charts;
    DomainPtr ambient; // where param maps land, if any
    // reduction models
    int k = 0;
    int N = 0;
    std::vector<double> mu;

    [[nodiscard]] const LcsChart &chart(const std::string &n) const
    {
        for (const auto &c : charts) {
            if (c.name == n) {
                return c;
            }
        }
        throw InputError("structure " + name + " has no chart " + n);
    }
};

// ---------------------------------------------------------------------------
// Building blocks on R^{2n} with coordinates (x1, y1, ..., xn, yn).

inline std::vector<Coordinate> plane_coordinates(int n, double lo = -1.5, double hi = 1.5)
{
    std::vector<Coordinate> c;
    for (int j = 1; j <= n; ++j) {
        c.push_back(Coordinate::linear("x" + std::to_string(j), lo, hi));
        c.push_back(Coordinate::linear("y" + std::to_string(j), lo, hi));
    }
    return c;
}

// eta_n = 1/2 sum (y_j dx_j - x_j dy_j); the pairs are named x<j>, y<j>, or
// prefixed (e.g. X<j>, Y<j>) when `xs`/`ys` are given.
inline DifferentialForm eta_form(const DomainPtr &D, int n, const std::string &xs = "x", const std::string &ys = "y")
{
    DifferentialForm eta(D, 1);
    for (int j = 1; j <= n; ++j) {
        const std::string x = xs + std::to_string(j), y = ys + std::to_string(j);
        eta += Expr(0.5) * var(y) * DifferentialForm::basis(D, {x});
        eta += Expr(-0.5) * var(x) * DifferentialForm::basis(D, {y});
    }
    return eta;
}

// lambda_n = sum y_j dx_j
inline DifferentialForm liouville_form(const DomainPtr &D, int n)
{
    DifferentialForm l(D, 1);
    for (int j = 1; j <= n; ++j) {
        l += var("y" + std::to_string(j)) * DifferentialForm::basis(D, {"x" + std::to_string(j)});
    }
    return l;
}

// Reeb field of eta_n on the unit sphere: 2 sum (y d/dx - x d/dy).
inline VectorField reeb_field(const DomainPtr &D, int n, const std::string &xs = "x", const std::string &ys = "y")
{
    VectorField R = VectorField::zero(D);
    for (int j = 1; j <= n; ++j) {
        const std::string x = xs + std::to_string(j), y = ys + std::to_string(j);
        R = R + (Expr(2.0) * var(y)) * VectorField::coordinate(D, x);
        R = R + (Expr(-2.0) * var(x)) * VectorField::coordinate(D, y);
    }
    return R;
}

struct Liouville {
    DomainPtr domain;
    DifferentialForm lambda;
    DifferentialForm dlambda;
};

inline Liouville model_liouville(int n)
{
    if (n < 1) {
        throw InputError("liouville: n must be >= 1");
    }
    auto D = make_domain("R" + std::to_string(2 * n), plane_coordinates(n));
    auto l = liouville_form(D, n);
    auto dl = ext_d(l);
    return {D, std::move(l), std::move(dl)};
}

// ---------------------------------------------------------------------------
// S^{2N-1} x S^1.

namespace detail {

inline VectorField push_to_chart(const VectorField &ambient_field, const SmoothMap &param, const DomainPtr &chart)
{
    // valid when the chart coordinates are a subset of the ambient ones
    std::vector<Expr> comps;
    const auto b = param.bindings();
    for (const auto &n : chart->names()) {
        comps.push_back(substitute(ambient_field.component(n), b));
    }
    return VectorField(chart, comps);
}

inline std::string ambient_name(int idx)
{
    return (idx % 2 == 0 ? "x" : "y") + std::to_string(idx / 2 + 1);
}

} // namespace detail

// Graph chart window: the other coordinates lie in [-0.75, 0.75] and their
// squares sum to at most 1 - 1/(4N). Every point of the sphere has a largest
// coordinate |x_i| >= 1/sqrt(2N), so the 4N charts cover.
inline double graph_chart_halfwidth(int) { return 0.75; }
inline double graph_chart_radius2(int N) { return 1.0 - 1.0 / (4.0 * N); }

struct SphereAmbient {
    DomainPtr domain; // (x1, y1, ..., xN, yN, theta)
    DifferentialForm eta;
    DifferentialForm dtheta;
    VectorField reeb;
};

inline SphereAmbient sphere_ambient(int N)
{
    auto coords = plane_coordinates(N);
    coords.push_back(Coordinate::angular("theta"));
    auto D = make_domain("R" + std::to_string(2 * N) + "xS1", coords);
    return {D, eta_form(D, N), DifferentialForm::basis(D, {"theta"}), reeb_field(D, N)};
}

// Graph chart over the coordinate hyperplane of ambient coordinate `idx`
// (0-based in x1, y1, x2, ...), on the side `sign`.
inline std::pair<DomainPtr, SmoothMap> sphere_graph_chart(const SphereAmbient &A, int N, int idx, int sign)
{
    const double w = graph_chart_halfwidth(N);
    std::vector<Coordinate> coords;
    std::vector<Expr> squares;
    BallConstraint ball{{}, graph_chart_radius2(N)};
    for (int i = 0; i < 2 * N; ++i) {
        if (i != idx) {
            ball.indices.push_back(static_cast<int>(coords.size()));
            coords.push_back(Coordinate::linear(detail::ambient_name(i), -w, w));
            squares.push_back(pow(var(detail::ambient_name(i)), 2));
        }
    }
    coords.push_back(Coordinate::angular("theta"));
    const std::string name = detail::ambient_name(idx) + (sign > 0 ? "+" : "-");
    auto D = make_domain("graph:" + name, coords, ball);
    std::vector<Expr> comps;
    for (int i = 0; i < 2 * N; ++i) {
        if (i == idx) {
            comps.push_back(Expr(static_cast<double>(sign)) * sqrt(Expr(1.0) - sum(squares)));
        } else {
            comps.push_back(var(detail::ambient_name(i)));
        }
    }
    comps.push_back(var("theta"));
    return {D, SmoothMap(D, A.domain, comps)};
}

// Toroidal chart: radii from latitude angles chi_1..chi_{N-1}, phases
// phi_1..phi_N (period 1), theta.
inline std::pair<DomainPtr, SmoothMap> sphere_toroidal_chart(const SphereAmbient &A, int N)
{
    std::vector<Coordinate> coords;
    const double margin = 0.15;
    for (int j = 1; j < N; ++j) {
        coords.push_back(Coordinate::linear("chi" + std::to_string(j), margin, pi / 2 - margin));
    }
    for (int j = 1; j <= N; ++j) {
        coords.push_back(Coordinate::angular("phi" + std::to_string(j)));
    }
    coords.push_back(Coordinate::angular("theta"));
    auto D = make_domain("toroidal", coords);
    std::vector<Expr> radii;
    Expr prefix(1.0);
    for (int j = 1; j < N; ++j) {
        const Expr chi = var("chi" + std::to_string(j));
        radii.push_back(prefix * cos(chi));
        prefix = prefix * sin(chi);
    }
    radii.push_back(prefix);
    std::vector<Expr> comps;
    for (int j = 1; j <= N; ++j) {
        const Expr a = Expr(2 * pi) * var("phi" + std::to_string(j));
        comps.push_back(radii[static_cast<std::size_t>(j - 1)] * cos(a));
        comps.push_back(radii[static_cast<std::size_t>(j - 1)] * sin(a));
    }
    comps.push_back(var("theta"));
    return {D, SmoothMap(D, A.domain, comps)};
}

namespace detail {

// Charts of S^{2N-1} x S^1 carrying pullbacks of (alpha, omega) from the
// ambient presentation, with B and E given on the toroidal chart directly.
inline LcsStructure sphere_structure(const std::string &name, int N, const DifferentialForm &alpha_amb,
                                     const DifferentialForm &omega_amb, const VectorField &B_amb,
                                     const VectorField &E_amb, const SphereAmbient &A, double reeb_scale_toroidal,
                                     double b_scale)
{
    LcsStructure S;
    S.name = name;
    S.kind = LcsKind::FirstKind;
    S.ambient = A.domain;
    auto add_chart = [&](const std::string &cname, const DomainPtr &D, const SmoothMap &P,
                         const std::optional<VectorField> &E_override) {
        LcsChart c{cname, D, DifferentialForm(D, 2), pullback(P, omega_amb), pullback(P, alpha_amb), std::nullopt,
                   std::nullopt, P};
        c.phi = d_twisted(c.omega, *c.alpha);
        c.B = Expr(b_scale) * VectorField::coordinate(D, "theta");
        c.E = E_override ? *E_override : push_to_chart(E_amb, P, D);
        S.charts.push_back(std::move(c));
    };
    (void)B_amb;
    for (int idx = 0; idx < 2 * N; ++idx) {
        for (int sign : {1, -1}) {
            auto [D, P] = sphere_graph_chart(A, N, idx, sign);
            add_chart(D->name().substr(6), D, P, std::nullopt);
        }
    }
    auto [T, P] = sphere_toroidal_chart(A, N);
    // R = -(1/pi) sum d/dphi_j in toroidal coordinates
    VectorField E = VectorField::zero(T);
    for (int j = 1; j <= N; ++j) {
        E = E + Expr(reeb_scale_toroidal / pi) * VectorField::coordinate(T, "phi" + std::to_string(j));
    }
    add_chart("toroidal", T, P, E);
    return S;
}

} // namespace detail

// (S^{2N-1} x S^1, q Phi_N, q eta_N, dtheta), B = d/dtheta, E = -R/q.
inline LcsStructure model_sphere_circle(int N, double q = 1.0)
{
    if (N < 2) {
        throw InputError("sphere_circle: N must be >= 2");
    }
    if (!(q > 0)) {
        throw InputError("sphere_circle: q must be positive");
    }
    const auto A = sphere_ambient(N);
    const auto alpha = Expr(q) * A.eta;
    const auto E = Expr(-1.0 / q) * A.reeb;
    auto S = detail::sphere_structure("sphere_circle(N=" + std::to_string(N) + ",q=" + detail::format_double(q) + ")",
                                      N, alpha, A.dtheta, VectorField::coordinate(A.domain, "theta"), E, A, 1.0 / q, 1.0);
    return S;
}

// Lattice q Z variant: (eta_N, q dtheta), B = (1/q) d/dtheta, E = -R.
inline LcsStructure model_sphere_circle_lattice(int N, double q)
{
    if (N < 2) {
        throw InputError("sphere_circle_lattice: N must be >= 2");
    }
    if (!(q > 0)) {
        throw InputError("sphere_circle_lattice: q must be positive");
    }
    const auto A = sphere_ambient(N);
    const auto omega = Expr(q) * A.dtheta;
    const auto E = Expr(-1.0) * A.reeb;
    auto S = detail::sphere_structure("sphere_circle_lattice(N=" + std::to_string(N) +
                                          ",q=" + detail::format_double(q) + ")",
                                      N, A.eta, omega, VectorField::coordinate(A.domain, "theta"), E, A, 1.0, 1.0 / q);
    S.mu = {q};
    return S;
}

// ---------------------------------------------------------------------------
// M_{k,N} = R x J^1(T^k x R^N).

inline std::vector<std::string> universal_names(int k, int N)
{
    std::vector<std::string> n{"s", "u"};
    for (int j = 1; j <= k; ++j) {
        n.push_back("theta" + std::to_string(j));
    }
    for (int i = 1; i <= N; ++i) {
        n.push_back("t" + std::to_string(i));
    }
    for (int j = 1; j <= k; ++j) {
        n.push_back("p_theta" + std::to_string(j));
    }
    for (int i = 1; i <= N; ++i) {
        n.push_back("p_t" + std::to_string(i));
    }
    return n;
}

inline LcsStructure model_reduction_universal(int k, int N, const std::vector<double> &mu, double box = 1.0)
{
    if (k < 0 || N < 0 || k + N < 1) {
        throw InputError("reduction_universal: need k, N >= 0 and k + N >= 1");
    }
    if (static_cast<int>(mu.size()) != k) {
        throw InputError("reduction_universal: mu must have k entries");
    }
    std::vector<Coordinate> coords;
    for (const auto &n : universal_names(k, N)) {
        if (n.rfind("theta", 0) == 0) {
            coords.push_back(Coordinate::angular(n));
        } else {
            coords.push_back(Coordinate::linear(n, -box, box));
        }
    }
    std::string name = "reduction_universal(k=" + std::to_string(k) + ",N=" + std::to_string(N) + ",mu=[";
    for (std::size_t j = 0; j < mu.size(); ++j) {
        name += (j ? "," : "") + detail::format_double(mu[j]);
    }
    name += "])";
    auto D = make_domain("M_{" + std::to_string(k) + "," + std::to_string(N) + "}", coords);
    auto b = [&](const std::string &c) { return DifferentialForm::basis(D, {c}); };
    DifferentialForm alpha = b("u");
    DifferentialForm omega = b("s");
    for (int j = 1; j <= k; ++j) {
        const auto J = std::to_string(j);
        alpha = alpha - var("p_theta" + J) * b("theta" + J);
        omega = omega + Expr(mu[static_cast<std::size_t>(j - 1)]) * b("theta" + J);
    }
    for (int i = 1; i <= N; ++i) {
        const auto I = std::to_string(i);
        alpha = alpha - var("p_t" + I) * b("t" + I);
    }
    LcsChart c{"global", D, d_twisted(omega, alpha), omega, alpha, VectorField::coordinate(D, "s"),
               Expr(-1.0) * VectorField::coordinate(D, "u"), std::nullopt};
    LcsStructure S;
    S.name = name;
    S.kind = LcsKind::FirstKind;
    S.charts.push_back(std::move(c));
    S.k = k;
    S.N = N;
    S.mu = mu;
    return S;
}

// ---------------------------------------------------------------------------
// Validation.

struct ValidationOptions {
    std::size_t samples = 200;
    std::uint64_t seed = 1;
    double tol = 1e-9;
    double rank_tol = 1e-10;
    double top_power_min = 1e-8;
};

namespace detail {

inline Check residual_check(const std::string &name, const std::string &anchor, const Residual &r, double tol,
                            const CoordinateDomain &D)
{
    return make_check(name, anchor, r.max, tol, r.samples ? "worst at " + format_point(D, r.worst) : std::string{});
}

} // namespace detail

// l.c.s. identities (Lee equation, nondegeneracy, potential) on every chart.
inline std::vector<Check> validate_lcs(const LcsStructure &S, const ValidationOptions &o = {})
{
    std::vector<Check> out;
    for (std::size_t ci = 0; ci < S.charts.size(); ++ci) {
        const auto &c = S.charts[ci];
        const auto &D = *c.domain;
        const std::string pre = c.name + "/";
        const auto pts = sample_points(D, o.samples, o.seed + ci);
        out.push_back(detail::residual_check(pre + "lee_equation", "dPhi = omega ^ Phi",
                                             max_abs(ext_d(c.phi) - wedge(c.omega, c.phi), pts), o.tol, D));
        if (c.omega.domain().dim() >= 2) {
            out.push_back(
                detail::residual_check(pre + "omega_closed", "d omega = 0", max_abs(ext_d(c.omega), pts), o.tol, D));
        }
        const auto rank = nondegeneracy_rank(c.phi, pts, o.rank_tol);
        double top = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            top = std::min(top, pfaffian_magnitude(FormEvaluator(c.phi).two_form(pts.row(i).transpose())));
        }
        Check nd = make_flag(pre + "nondegenerate", "Phi^n != 0", rank.min_rank == D.dim() && top > o.top_power_min,
                             "min rank " + std::to_string(rank.min_rank) + " of " + std::to_string(D.dim()));
        nd.data["min_rank"] = rank.min_rank;
        nd.data["dim"] = D.dim();
        nd.data["min_top_power"] = top;
        out.push_back(nd);
        if (c.alpha) {
            out.push_back(detail::residual_check(pre + "potential", "d_omega alpha = Phi",
                                                 max_abs(d_twisted(c.omega, *c.alpha) - c.phi, pts), o.tol, D));
        }
        if (D.dim() > 2) {
            // on the potential when there is one, else on a fixed generic 1-form
            DifferentialForm a(c.domain, 1);
            if (c.alpha) {
                a = *c.alpha;
            } else {
                for (int i = 0; i < D.dim(); ++i) {
                    a.add(bit((i + 1) % D.dim()), sin(D.var(i)));
                }
            }
            out.push_back(detail::residual_check(pre + "d_omega_squared", "d_omega d_omega = 0",
                                                 max_abs(d_twisted(c.omega, d_twisted(c.omega, a)), pts), o.tol, D));
        }
    }
    return out;
}

// First-kind identities, each certified independently.
inline std::vector<Check> validate_first_kind(const LcsStructure &S, const ValidationOptions &o = {})
{
    for (const auto &c : S.charts) {
        if (!c.B) {
            throw InputError("validate_first_kind: chart " + c.name + " of " + S.name + " carries no B");
        }
        if (!c.alpha) {
            throw InputError("validate_first_kind: chart " + c.name + " of " + S.name + " carries no potential");
        }
    }
    auto out = validate_lcs(S, o);
    for (std::size_t ci = 0; ci < S.charts.size(); ++ci) {
        const auto &c = S.charts[ci];
        const auto &D = *c.domain;
        const std::string pre = c.name + "/";
        const auto pts = sample_points(D, o.samples, o.seed + ci);
        const auto &B = *c.B;
        out.push_back(detail::residual_check(pre + "alpha_flat_B", "alpha = -flat(B)",
                                             max_abs(interior(B, c.phi) + *c.alpha, pts), o.tol, D));
        out.push_back(detail::residual_check(pre + "omega_B", "omega(B) = 1",
                                             max_abs(contract(c.omega, B) - Expr(1.0), c.domain, pts), o.tol, D));
        out.push_back(detail::residual_check(pre + "lie_B_phi", "L_B Phi = 0", max_abs(lie_derivative(B, c.phi), pts),
                                             o.tol, D));
        if (c.E) {
            const auto &E = *c.E;
            out.push_back(detail::residual_check(pre + "flat_E", "i_E Phi = -omega",
                                                 max_abs(interior(E, c.phi) + c.omega, pts), o.tol, D));
            out.push_back(detail::residual_check(pre + "omega_E", "omega(E) = 0",
                                                 max_abs(contract(c.omega, E), c.domain, pts), o.tol, D));
            out.push_back(detail::residual_check(pre + "bracket_BE", "[B,E] = 0", max_abs(bracket(B, E), pts), o.tol, D));
            // E against the pointwise solve of flat(E) = -omega
            double worst = 0.0;
            const FieldEvaluator Ev(E);
            const auto neg = Expr(-1.0) * c.omega;
            for (Eigen::Index i = 0; i < pts.rows(); ++i) {
                const Vec p = pts.row(i).transpose();
                worst = std::max(worst, (sharp(c.phi, neg, p) - Ev(p)).lpNorm<Eigen::Infinity>());
            }
            out.push_back(make_check(pre + "E_sharp", "E = -sharp(omega)", worst, o.tol));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Overlap consistency of the graph charts of S^{2N-1}: forms pulled back
// through either chart agree on the overlap.

inline std::vector<Check> sphere_overlap_consistency(const LcsStructure &S, std::size_t samples = 20000,
                                                     std::uint64_t seed = 1, double tol = 1e-9)
{
    std::vector<Check> out;
    if (!S.ambient) {
        throw InputError("sphere_overlap_consistency: structure has no ambient presentation");
    }
    // uniform points on S^{2N-1} x S^1 in ambient coordinates
    const auto &A = *S.ambient;
    const int amb_dim = A.dim();
    Rng rng(seed);
    std::vector<Vec> sphere(samples);
    for (auto &v : sphere) {
        v.resize(amb_dim);
        double norm2 = 0.0;
        for (int i = 0; i + 1 < amb_dim; ++i) {
            const double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
            v[i] = std::sqrt(-2.0 * std::log(u1)) * std::cos(2 * pi * u2);
            norm2 += v[i] * v[i];
        }
        v.head(amb_dim - 1) /= std::sqrt(norm2);
        v[amb_dim - 1] = rng.uniform();
    }
    for (std::size_t a = 0; a < S.charts.size(); ++a) {
        const auto &ca = S.charts[a];
        if (!ca.param || ca.name == "toroidal") {
            continue;
        }
        const auto Pa = numeric(*ca.param);
        std::vector<Vec> local;
        for (const auto &v : sphere) {
            Vec p(ca.domain->dim());
            for (int i = 0; i < ca.domain->dim(); ++i) {
                p[i] = v[A.index_of(ca.domain->coordinate(i).name)];
            }
            if (ca.domain->contains(p, 0.0) && (Pa->value(p) - v).lpNorm<Eigen::Infinity>() < 1e-12) {
                local.push_back(p);
            }
        }
        SampleSet pts(static_cast<Eigen::Index>(local.size()), ca.domain->dim());
        for (std::size_t i = 0; i < local.size(); ++i) {
            pts.row(static_cast<Eigen::Index>(i)) = local[i].transpose();
        }
        for (std::size_t b = 0; b < S.charts.size(); ++b) {
            const auto &cb = S.charts[b];
            if (b == a || !cb.param || cb.name == "toroidal") {
                continue;
            }
            // transition chart a -> chart b: b-coordinates read off the ambient point
            std::vector<Expr> comps;
            const auto amb = ca.param->bindings();
            for (const auto &n : cb.domain->names()) {
                comps.push_back(amb.at(n));
            }
            const SmoothMap T(ca.domain, cb.domain, comps);
            const auto Tn = numeric(T);
            const auto Pb = numeric(*cb.param);
            std::vector<Eigen::Index> inside;
            for (Eigen::Index i = 0; i < pts.rows(); ++i) {
                const Vec p = pts.row(i).transpose();
                const Vec q = Tn->value(p);
                if (!cb.domain->contains(q, 0.0)) {
                    continue;
                }
                if ((Pb->value(q) - Pa->value(p)).lpNorm<Eigen::Infinity>() > 1e-12) {
                    continue; // other sheet
                }
                inside.push_back(i);
            }
            if (inside.empty()) {
                continue;
            }
            SampleSet ov(static_cast<Eigen::Index>(inside.size()), pts.cols());
            for (std::size_t r = 0; r < inside.size(); ++r) {
                ov.row(static_cast<Eigen::Index>(r)) = pts.row(inside[r]);
            }
            const double ra = max_abs(pullback(T, *cb.alpha) - *ca.alpha, ov).max;
            const double rp = max_abs(pullback(T, cb.phi) - ca.phi, ov).max;
            Check c = make_check(ca.name + "|" + cb.name + "/overlap", "chart overlap: alpha, Phi agree",
                                 std::max(ra, rp), tol);
            c.data["points"] = static_cast<double>(inside.size());
            out.push_back(c);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// SL(k, Z) acting on M_{k,N}.

namespace detail {

inline long long int_det(const std::vector<std::vector<long long>> &A)
{
    const auto n = A.size();
    if (n == 0) {
        return 1;
    }
    if (n == 1) {
        return A[0][0];
    }
    long long d = 0;
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<std::vector<long long>> minor;
        for (std::size_t r = 1; r < n; ++r) {
            std::vector<long long> row;
            for (std::size_t c = 0; c < n; ++c) {
                if (c != j) {
                    row.push_back(A[r][c]);
                }
            }
            minor.push_back(row);
        }
        d += ((j % 2) ? -1 : 1) * A[0][j] * int_det(minor);
    }
    return d;
}

// Inverse transpose of a unimodular integer matrix (cofactor matrix / det).
inline std::vector<std::vector<long long>> inverse_transpose(const std::vector<std::vector<long long>> &A)
{
    const auto n = A.size();
    const long long det = int_det(A);
    std::vector<std::vector<long long>> C(n, std::vector<long long>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            std::vector<std::vector<long long>> minor;
            for (std::size_t r = 0; r < n; ++r) {
                if (r == i) {
                    continue;
                }
                std::vector<long long> row;
                for (std::size_t c = 0; c < n; ++c) {
                    if (c != j) {
                        row.push_back(A[r][c]);
                    }
                }
                minor.push_back(row);
            }
            C[i][j] = (((i + j) % 2) ? -1 : 1) * int_det(minor) * det; // det = +-1 so /det = *det
        }
    }
    return C;
}

} // namespace detail

struct SlAction {
    LcsStructure image;
    SmoothMap psi; // original -> image
    std::vector<Check> checks;
};

inline SlAction sl_k_action(const std::vector<std::vector<long long>> &A, const LcsStructure &S,
                            const ValidationOptions &o = {})
{
    const int k = S.k;
    if (static_cast<int>(A.size()) != k) {
        throw InputError("sl_k_action: matrix must be k x k");
    }
    for (const auto &row : A) {
        if (static_cast<int>(row.size()) != k) {
            throw InputError("sl_k_action: matrix must be k x k");
        }
    }
    const long long det = detail::int_det(A);
    if (det != 1 && det != -1) {
        throw InputError("sl_k_action: matrix is not unimodular (det = " + std::to_string(det) + ")");
    }
    const auto AiT = detail::inverse_transpose(A);
    std::vector<double> mu2(static_cast<std::size_t>(k), 0.0);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            mu2[static_cast<std::size_t>(i)] +=
                static_cast<double>(AiT[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) *
                S.mu[static_cast<std::size_t>(j)];
        }
    }
    const auto &src = S.charts.at(0);
    const auto &lin = src.domain->coordinate(0);
    auto image = model_reduction_universal(k, S.N, mu2, lin.hi);
    const auto &D = src.domain;
    std::vector<Expr> comps;
    for (const auto &n : D->names()) {
        if (n.rfind("theta", 0) == 0 || n.rfind("p_theta", 0) == 0) {
            const bool momentum = n[0] == 'p';
            const int i = std::stoi(n.substr(momentum ? 7 : 5)) - 1;
            std::vector<Expr> terms;
            for (int j = 0; j < k; ++j) {
                const long long a = momentum ? AiT[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]
                                             : A[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                if (a != 0) {
                    terms.push_back(Expr(static_cast<double>(a)) *
                                    var((momentum ? "p_theta" : "theta") + std::to_string(j + 1)));
                }
            }
            comps.push_back(sum(std::move(terms)));
        } else {
            comps.push_back(var(n));
        }
    }
    SmoothMap psi(D, image.charts[0].domain, comps);
    const auto &dst = image.charts[0];
    const auto pts = sample_points(*D, o.samples, o.seed);
    std::vector<Check> checks;
    checks.push_back(make_check("sl_action/alpha", "Psi* alpha' = alpha",
                                max_abs(pullback(psi, *dst.alpha) - *src.alpha, pts).max, o.tol));
    checks.push_back(make_check("sl_action/omega", "Psi* omega' = omega",
                                max_abs(pullback(psi, dst.omega) - src.omega, pts).max, o.tol));
    checks.push_back(make_check("sl_action/phi", "Psi* Phi' = Phi", max_abs(pullback(psi, dst.phi) - src.phi, pts).max,
                                o.tol));
    return {std::move(image), std::move(psi), std::move(checks)};
}

// The same chart with coordinates renamed by `names` (old -> new); names not
// listed are kept.
inline LcsChart relabel_chart(const LcsChart &c, const std::map<std::string, std::string> &names)
{
    std::vector<Coordinate> coords = c.domain->coordinates();
    std::unordered_map<std::string, Expr> to_new;
    std::vector<Expr> back;
    for (auto &co : coords) {
        if (const auto it = names.find(co.name); it != names.end()) {
            to_new.emplace(co.name, var(it->second));
            co.name = it->second;
        }
        back.push_back(var(co.name));
    }
    auto D = make_domain(c.domain->name(), coords);
    const SmoothMap R(D, c.domain, back); // new -> old, coordinatewise identity
    auto field = [&](const VectorField &X) {
        return X.map_components([&](const Expr &e) { return substitute(e, to_new); }).components();
    };
    LcsChart out{c.name, D, pullback(R, c.phi), pullback(R, c.omega), std::nullopt, std::nullopt, std::nullopt,
                 std::nullopt};
    if (c.alpha) {
        out.alpha = pullback(R, *c.alpha);
    }
    if (c.B) {
        out.B = VectorField(D, field(*c.B));
    }
    if (c.E) {
        out.E = VectorField(D, field(*c.E));
    }
    if (c.param) {
        out.param = compose(*c.param, R);
    }
    return out;
}

} // namespace lcs
