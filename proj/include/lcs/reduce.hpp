#pragma once

// Reduction of l.c.s. structures of the first kind by strongly reducible
// submanifolds, and the four-stage chain realizing a structure as a reduction
// of the universal model M_{k,N}.
//
// A submanifold is given by a parametrization C: P -> M, possibly redundant
// (rank DC < dim P), together with a quotient map pi: P -> M0. Everything is
// certified at sample points of P.

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "check.hpp"
#include "errors.hpp"
#include "flow.hpp"
#include "forms.hpp"
#include "models.hpp"
#include "numeric.hpp"
#include "parallel.hpp"
#include "twisted.hpp"

namespace lcs {

struct ReducibleData {
    LcsChart ambient; // needs alpha, B, E
    DomainPtr param;
    NumericMapPtr C;  // param -> ambient
    NumericMapPtr pi; // param -> reduced
    LcsChart reduced; // needs alpha; B, E are checked when present
};

struct ReducibilityOptions {
    std::size_t samples = 200;
    std::uint64_t seed = 1;
    double tol = 1e-9;
    double rank_tol = 1e-8; // relative singular value cutoff
};

struct ReducibilityReport {
    std::vector<Check> checks;
    int c_dim = 0;          // rank of DC
    int foliation_rank = 0; // dim of ker omega|C ^ ker alpha|C ^ ker d alpha|C
    int quotient_dim = 0;
    int kerphi_rank = 0;    // dim ker Phi|C, reported only
    bool kerphi_agrees = false;
    std::size_t samples = 0;
    std::size_t rejected = 0; // points dropped because a flow left its window

    [[nodiscard]] bool passed() const { return all_passed(checks); }
};

namespace detail {

// sin of the largest principal angle between the spans of orthonormal A and
// B; 1 when the dimensions differ.
inline double subspace_gap(const Mat &A, const Mat &B)
{
    if (A.cols() != B.cols()) {
        return 1.0;
    }
    if (A.cols() == 0) {
        return 0.0;
    }
    return std::max((B - A * (A.transpose() * B)).norm(), (A - B * (B.transpose() * A)).norm());
}

inline double inf_norm(const Mat &M) { return M.size() ? M.cwiseAbs().maxCoeff() : 0.0; }

struct ReductionSample {
    bool ok = false;
    Vec y;
    int c_dim = 0, fol = 0, kerphi = 0;
    bool kerphi_same = false;
    double tangent_B = 0, tangent_E = 0, kernel_gap = 0, redundancy = 0;
    double r_alpha = 0, r_omega = 0, r_phi = 0, project_B = 0, project_E = 0;
};

} // namespace detail

// B, E tangent to C; the characteristic distribution F has constant rank;
// ker D(pi) = F and D(pi) kills ker DC; alpha, omega and Phi restricted to C
// are pulled back from the reduced structure.
inline ReducibilityReport verify_strong_reducibility(const ReducibleData &D, const ReducibilityOptions &o = {})
{
    const auto &amb = D.ambient;
    const auto &red = D.reduced;
    if (!amb.alpha || !amb.B || !amb.E) {
        throw InputError("verify_strong_reducibility: ambient chart needs alpha, B and E");
    }
    if (!red.alpha) {
        throw InputError("verify_strong_reducibility: reduced chart needs alpha");
    }
    if (D.C->source_dim() != D.param->dim() || D.pi->source_dim() != D.param->dim() ||
        D.C->target_dim() != amb.domain->dim() || D.pi->target_dim() != red.domain->dim()) {
        throw InputError("verify_strong_reducibility: map dimensions do not match the charts");
    }
    if (o.samples == 0) {
        throw InputError("verify_strong_reducibility: need at least one sample");
    }
    const FormEvaluator ea(*amb.alpha), ew(amb.omega), ep(amb.phi), eda(ext_d(*amb.alpha));
    const FormEvaluator ra(*red.alpha), rw(red.omega), rp(red.phi);
    const FieldEvaluator fB(*amb.B), fE(*amb.E);
    std::optional<FieldEvaluator> gB, gE;
    if (red.B) {
        gB.emplace(*red.B);
    }
    if (red.E) {
        gE.emplace(*red.E);
    }

    auto evaluate = [&](detail::ReductionSample &R) {
        Vec x, z;
        Mat Jc, Jp;
        try {
            x = D.C->value(R.y);
            Jc = D.C->jacobian(R.y);
            z = D.pi->value(R.y);
            Jp = D.pi->jacobian(R.y);
        } catch (const EscapeError &) {
            return;
        }
        R.ok = true;
        Eigen::JacobiSVD<Mat> svd(Jc, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Vec s = svd.singularValues();
        int r = 0;
        while (r < s.size() && s[0] > 0 && s[r] > o.rank_tol * s[0]) {
            ++r;
        }
        R.c_dim = r;
        const Mat U = svd.matrixU().leftCols(r);
        const Mat V = svd.matrixV().leftCols(r);
        const Mat Nc = svd.matrixV().rightCols(Jc.cols() - r);
        const Vec b = fB(x), e = fE(x);
        R.tangent_B = (b - U * (U.transpose() * b)).lpNorm<Eigen::Infinity>();
        R.tangent_E = (e - U * (U.transpose() * e)).lpNorm<Eigen::Infinity>();

        const Mat T = Jc * V; // frame of TC
        Mat S(r + 2, r);
        S.row(0) = (T.transpose() * ew.one_form(x)).transpose();
        S.row(1) = (T.transpose() * ea.one_form(x)).transpose();
        S.bottomRows(r) = T.transpose() * eda.two_form(x) * T;
        const Mat F = null_space(S, o.rank_tol);
        R.fol = static_cast<int>(F.cols());
        const Mat KP = null_space(T.transpose() * ep.two_form(x) * T, o.rank_tol);
        R.kerphi = static_cast<int>(KP.cols());
        R.kerphi_same = detail::subspace_gap(F, KP) < 1e-6;
        R.kernel_gap = detail::subspace_gap(F, null_space(Jp * V, o.rank_tol));
        R.redundancy = detail::inf_norm(Jp * Nc);

        R.r_alpha = (Jc.transpose() * ea.one_form(x) - Jp.transpose() * ra.one_form(z)).lpNorm<Eigen::Infinity>();
        R.r_omega = (Jc.transpose() * ew.one_form(x) - Jp.transpose() * rw.one_form(z)).lpNorm<Eigen::Infinity>();
        R.r_phi = detail::inf_norm(Jc.transpose() * ep.two_form(x) * Jc - Jp.transpose() * rp.two_form(z) * Jp);
        // lift B, E through the pseudo-inverse of DC, then push down
        const Mat pinv = V * s.head(r).cwiseInverse().asDiagonal() * U.transpose();
        if (gB) {
            R.project_B = (Jp * (pinv * b) - (*gB)(z)).lpNorm<Eigen::Infinity>();
        }
        if (gE) {
            R.project_E = (Jp * (pinv * e) - (*gE)(z)).lpNorm<Eigen::Infinity>();
        }
    };

    ReducibilityReport rep;
    std::vector<detail::ReductionSample> used;
    for (int round = 0; round < 8 && used.size() < o.samples; ++round) {
        const std::size_t want = o.samples - used.size();
        const SampleSet pts = sample_points(*D.param, round == 0 ? want : 2 * want, o.seed + 1000003ULL * round);
        std::vector<detail::ReductionSample> batch(static_cast<std::size_t>(pts.rows()));
        parallel_for(batch.size(), [&](std::size_t i) {
            batch[i].y = pts.row(static_cast<Eigen::Index>(i)).transpose();
            evaluate(batch[i]);
        });
        for (auto &R : batch) {
            if (!R.ok) {
                ++rep.rejected;
            } else if (used.size() < o.samples) {
                used.push_back(std::move(R));
            }
        }
    }
    rep.samples = used.size();
    if (used.empty()) {
        throw EvaluationError("verify_strong_reducibility: no sample point could be evaluated");
    }
    const auto &first = used.front();
    for (const auto &R : used) {
        if (R.fol != first.fol || R.c_dim != first.c_dim) {
            throw CertificationError("verify_strong_reducibility: characteristic distribution changes rank (" +
                                     std::to_string(first.fol) + " at " + format_point(*D.param, first.y) + ", " +
                                     std::to_string(R.fol) + " at " + format_point(*D.param, R.y) + ")");
        }
    }
    rep.c_dim = first.c_dim;
    rep.foliation_rank = first.fol;
    rep.quotient_dim = rep.c_dim - rep.foliation_rank;
    rep.kerphi_rank = first.kerphi;
    rep.kerphi_agrees = std::all_of(used.begin(), used.end(), [&](const auto &R) {
        return R.kerphi == first.kerphi && R.kerphi_same;
    });

    using RS = detail::ReductionSample;
    auto add = [&](const std::string &name, const std::string &anchor, double RS::*field, double tol) {
        const RS *at = &used.front();
        double m = 0.0;
        for (const auto &R : used) {
            const double v = R.*field;
            if (std::isnan(v) || v > m) {
                m = v;
                at = &R;
                if (std::isnan(v)) {
                    break;
                }
            }
        }
        rep.checks.push_back(make_check(name, anchor, m, tol, "worst at " + format_point(*D.param, at->y)));
    };
    add("tangent_B", "B tangent to C", &RS::tangent_B, o.tol);
    add("tangent_E", "E tangent to C", &RS::tangent_E, o.tol);
    auto fol = make_flag("foliation_rank", "characteristic distribution of constant rank", true);
    fol.data["rank"] = rep.foliation_rank;
    fol.data["c_dim"] = rep.c_dim;
    fol.data["kerphi_rank"] = rep.kerphi_rank;
    fol.data["kerphi_agrees"] = rep.kerphi_agrees ? 1.0 : 0.0;
    rep.checks.push_back(fol);
    auto qd = make_flag("quotient_dimension", "dim C - rank F = dim M0", rep.quotient_dim == red.domain->dim());
    qd.data["quotient_dim"] = rep.quotient_dim;
    qd.data["reduced_dim"] = red.domain->dim();
    rep.checks.push_back(qd);
    add("quotient_kernel", "ker D(pi) = F", &RS::kernel_gap, std::sqrt(o.tol));
    add("quotient_redundancy", "D(pi) kills ker DC", &RS::redundancy, std::sqrt(o.tol));
    add("pullback_alpha", "alpha|C = pi* alpha0", &RS::r_alpha, o.tol);
    add("pullback_omega", "omega|C = pi* omega0", &RS::r_omega, o.tol);
    add("pullback_phi", "Phi|C = pi* Phi0", &RS::r_phi, o.tol);
    if (gB) {
        add("project_B", "pi_* B = B0", &RS::project_B, o.tol);
    }
    if (gE) {
        add("project_E", "pi_* E = E0", &RS::project_E, o.tol);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Chain stages.

// omega = d f0 + sum mu_j d tau_j with tau_j circle valued (period 1).
struct OmegaDecomposition {
    Expr f0 = Expr(0.0);
    std::vector<Expr> tau;
    std::vector<double> mu;
    std::vector<SmoothMap> loops; // integrality test for [d tau_j]
};

struct ChainOptions {
    std::size_t samples = 200;
    std::uint64_t seed = 1;
    double tol = 1e-9;      // symbolic stages
    double flow_tol = 1e-6; // stages through numeric flows
    double rank_tol = 1e-8;
    double flow_rank_tol = 1e-6;
    double window = 1.0; // (s, u) window of the flow stage
    double r_box = 1.0;  // window of the fibre coordinates r_j
    double box = 1.0;    // window of the universal model
    FlowOptions flow{1e-10, 0.05, 1e-10, 200000, 0.0};
};

namespace detail {

inline void require_fresh(const DomainPtr &D, const std::string &n, const char *stage)
{
    if (D->has(n)) {
        throw InputError(std::string(stage) + ": coordinate name '" + n + "' is reserved; relabel the input");
    }
}

// Forms and fields on `small` seen on `big`, whose coordinates include those
// of `small`.
inline DifferentialForm extend(const DifferentialForm &a, const DomainPtr &big)
{
    std::vector<Expr> comps;
    for (const auto &n : a.domain().names()) {
        comps.push_back(big->var(n));
    }
    return pullback(SmoothMap(big, a.domain_ptr(), comps), a);
}

inline VectorField extend(const VectorField &X, const DomainPtr &big)
{
    std::vector<Expr> comps;
    for (const auto &n : big->names()) {
        comps.push_back(X.domain().has(n) ? X.component(n) : Expr(0.0));
    }
    return VectorField(big, comps);
}

inline LcsStructure single_chart(LcsChart c, int k = 0, std::vector<double> mu = {})
{
    LcsStructure S;
    S.name = c.name;
    S.kind = LcsKind::FirstKind;
    S.k = k;
    S.mu = std::move(mu);
    S.charts.push_back(std::move(c));
    return S;
}

inline std::vector<Expr> vars(const DomainPtr &D)
{
    std::vector<Expr> v;
    for (const auto &n : D->names()) {
        v.push_back(var(n));
    }
    return v;
}

} // namespace detail

struct Step1 {
    LcsStructure M1;
    DomainPtr param; // (x, r)
    SmoothMap F;     // (x, r) -> (x, tau(x), r)
    SmoothMap pi;    // (x, r) -> x
    std::vector<Check> checks;
    ReducibilityReport reduction;
};

// M1 = M x T*T^k with coordinates (x, vartheta, r),
// alpha_1 = alpha + sum mu_j r_j (d vartheta_j - d tau_j),
// omega_1 = d f0 + sum mu_j d vartheta_j.
inline Step1 build_step1(const LcsChart &M, const OmegaDecomposition &dec, const ChainOptions &o = {})
{
    if (!M.alpha || !M.B || !M.E) {
        throw InputError("build_step1: chart needs alpha, B and E");
    }
    const auto k = dec.mu.size();
    if (dec.tau.size() != k) {
        throw InputError("build_step1: need one circle map per mu_j");
    }
    const auto &DM = M.domain;
    std::vector<Check> checks;
    std::vector<DifferentialForm> om;
    DifferentialForm total = d_of(DM, dec.f0);
    for (std::size_t j = 0; j < k; ++j) {
        om.push_back(d_of(DM, dec.tau[j]));
        total = total + Expr(dec.mu[j]) * om.back();
    }
    const auto rd = max_abs(M.omega - total, sample_points(*DM, o.samples, o.seed));
    checks.push_back(make_check("decomposition", "omega = d f0 + sum mu_j d tau_j", rd.max, o.tol));
    if (!rd.below(o.tol)) {
        throw CertificationError("build_step1: Lee form decomposition residual " + detail::format_double(rd.max) +
                                 " at " + format_point(*DM, rd.worst));
    }
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t l = 0; l < dec.loops.size(); ++l) {
            const double p = loop_period(om[j], dec.loops[l], 1e-10);
            auto c = make_check("integral/tau" + std::to_string(j + 1) + "/loop" + std::to_string(l + 1),
                                "d tau_j has integral periods", std::abs(p - std::round(p)), 1e-8);
            c.data["period"] = p;
            checks.push_back(c);
        }
    }

    std::vector<Coordinate> coords = DM->coordinates();
    std::vector<Coordinate> pcoords = DM->coordinates();
    for (std::size_t j = 1; j <= k; ++j) {
        const auto J = std::to_string(j);
        detail::require_fresh(DM, "vartheta" + J, "build_step1");
        detail::require_fresh(DM, "r" + J, "build_step1");
        coords.push_back(Coordinate::angular("vartheta" + J));
    }
    for (std::size_t j = 1; j <= k; ++j) {
        const auto r = Coordinate::linear("r" + std::to_string(j), -o.r_box, o.r_box);
        coords.push_back(r);
        pcoords.push_back(r);
    }
    auto D1 = make_domain("M1", coords);
    auto P = make_domain("C1", pcoords);
    DifferentialForm alpha1 = detail::extend(*M.alpha, D1);
    DifferentialForm omega1 = detail::extend(d_of(DM, dec.f0), D1);
    VectorField B1 = detail::extend(*M.B, D1);
    VectorField E1 = detail::extend(*M.E, D1);
    for (std::size_t j = 1; j <= k; ++j) {
        const auto J = std::to_string(j);
        const Expr mu(dec.mu[j - 1]);
        const auto dv = DifferentialForm::basis(D1, {"vartheta" + J});
        alpha1 = alpha1 + (mu * var("r" + J)) * (dv - detail::extend(om[j - 1], D1));
        omega1 = omega1 + mu * dv;
        const auto dj = VectorField::coordinate(D1, "vartheta" + J);
        B1 = B1 + contract(om[j - 1], *M.B) * dj;
        E1 = E1 + contract(om[j - 1], *M.E) * dj;
    }
    LcsChart c1{"M1", D1, d_twisted(omega1, alpha1), omega1, alpha1, B1, E1, std::nullopt};

    std::vector<Expr> fc = detail::vars(DM);
    for (const auto &t : dec.tau) {
        fc.push_back(t);
    }
    for (std::size_t j = 1; j <= k; ++j) {
        fc.push_back(var("r" + std::to_string(j)));
    }
    Step1 st{detail::single_chart(c1, static_cast<int>(k), dec.mu), P, SmoothMap(P, D1, fc),
             SmoothMap(P, DM, detail::vars(DM)), checks, {}};
    ReducibleData rd1{c1, P, numeric(st.F), numeric(st.pi), M};
    st.reduction = verify_strong_reducibility(rd1, {o.samples, o.seed, o.tol, o.rank_tol});
    return st;
}

struct Step2 {
    LcsStructure M2;
    DomainPtr param;  // (s, u, x1)
    SmoothMap G;      // (s, u, x1) -> (s, -u, -alpha_1(x1), x1)
    NumericMapPtr pi; // (s, u, x1) -> psi_u(phi_s(x1))
    std::shared_ptr<const Flow> flow_B, flow_E;
    std::vector<Check> checks;
    ReducibilityReport reduction;
};

namespace detail {

// (s, u, x) -> psi_u(phi_s(x)), Jacobian from the variational equations.
inline NumericMapPtr flow_quotient(std::shared_ptr<const Flow> fb, std::shared_ptr<const Flow> fe)
{
    const int n = fb->domain().dim();
    auto value = [fb, fe](const Vec &p) {
        return fe->run(fb->run(p.tail(p.size() - 2), p[0]).point, p[1]).point;
    };
    auto jac = [fb, fe, n](const Vec &p) {
        const auto a = fb->run(p.tail(p.size() - 2), p[0], true);
        const auto b = fe->run(a.point, p[1], true);
        Mat J(n, n + 2);
        J.col(0) = b.jacobian * fb->field(a.point);
        J.col(1) = fe->field(b.point);
        J.rightCols(n) = b.jacobian * a.jacobian;
        return J;
    };
    return std::make_shared<const FunctionMap>(n + 2, n, value, jac);
}

} // namespace detail

// M2 = R x J^1 M1 with coordinates (s, u, xi, x), omega_2 = ds + omega_1,
// alpha_2 = du - sum xi_n dx_n.
inline Step2 build_step2(const LcsStructure &S1, const ChainOptions &o = {})
{
    const auto &c1 = S1.charts.at(0);
    if (!c1.alpha || !c1.B || !c1.E) {
        throw InputError("build_step2: chart needs alpha, B and E");
    }
    const auto &D1 = c1.domain;
    detail::require_fresh(D1, "s", "build_step2");
    detail::require_fresh(D1, "u", "build_step2");
    std::vector<Coordinate> coords{Coordinate::linear("s", -2 * o.window, 2 * o.window),
                                   Coordinate::linear("u", -2 * o.window, 2 * o.window)};
    for (const auto &n : D1->names()) {
        detail::require_fresh(D1, "xi_" + n, "build_step2");
        coords.push_back(Coordinate::linear("xi_" + n, -2.0, 2.0));
    }
    for (const auto &c : D1->coordinates()) {
        coords.push_back(c);
    }
    auto D2 = make_domain("M2", coords);
    DifferentialForm alpha2 = DifferentialForm::basis(D2, {"u"});
    for (const auto &n : D1->names()) {
        alpha2 = alpha2 - var("xi_" + n) * DifferentialForm::basis(D2, {n});
    }
    const DifferentialForm omega2 = DifferentialForm::basis(D2, {"s"}) + detail::extend(c1.omega, D2);
    LcsChart c2{"M2", D2, d_twisted(omega2, alpha2), omega2, alpha2, VectorField::coordinate(D2, "s"),
                Expr(-1.0) * VectorField::coordinate(D2, "u"), std::nullopt};

    std::vector<Coordinate> pc{Coordinate::linear("s", -o.window, o.window),
                               Coordinate::linear("u", -o.window, o.window)};
    for (const auto &c : D1->coordinates()) {
        pc.push_back(c);
    }
    auto P = make_domain("C2", pc);
    std::vector<Expr> g{var("s"), -var("u")};
    for (const auto &n : D1->names()) {
        g.push_back(-c1.alpha->coefficient(std::vector<std::string>{n}));
    }
    for (const auto &v : detail::vars(D1)) {
        g.push_back(v);
    }
    auto fb = std::make_shared<const Flow>(*c1.B, o.flow);
    auto fe = std::make_shared<const Flow>(*c1.E, o.flow);
    Step2 st{detail::single_chart(c2, S1.k, S1.mu), P, SmoothMap(P, D2, g), detail::flow_quotient(fb, fe), fb, fe,
             {}, {}};

    // the flows of B_1 and E_1 commute
    {
        const auto pts = sample_points(*P, std::min<std::size_t>(o.samples, 50), o.seed + 5);
        double m = 0.0;
        std::size_t used = 0;
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            const Vec p = pts.row(i).transpose();
            const Vec x = p.tail(p.size() - 2);
            try {
                const Vec a = fe->run(fb->run(x, p[0]).point, p[1]).point;
                const Vec b = fb->run(fe->run(x, p[1]).point, p[0]).point;
                m = std::max(m, chart_difference(*D1, a, b).lpNorm<Eigen::Infinity>());
                ++used;
            } catch (const EscapeError &) {
            }
        }
        auto c = make_check("commuting_flows", "phi_s psi_u = psi_u phi_s", m, o.flow_tol);
        c.data["samples"] = static_cast<double>(used);
        st.checks.push_back(c);
    }
    // x -> G(0, 0, x) pulls alpha_2 back to alpha_1
    {
        std::vector<Expr> z;
        for (const auto &e : g) {
            z.push_back(substitute(e, {{"s", Expr(0.0)}, {"u", Expr(0.0)}}));
        }
        const auto pts = sample_points(*D1, o.samples, o.seed + 6);
        st.checks.push_back(make_check("zero_slice", "G(0, 0, .)* alpha_2 = alpha_1",
                                       max_abs(pullback(SmoothMap(D1, D2, z), alpha2) - *c1.alpha, pts).max, o.tol));
    }
    ReducibleData rd{c2, P, numeric(st.G), st.pi, c1};
    st.reduction = verify_strong_reducibility(rd, {o.samples, o.seed, o.flow_tol, o.flow_rank_tol});
    return st;
}

struct Step3 {
    LcsStructure M3;
    SmoothMap H; // M3 -> M2, (s, u, xi, x) -> (s - f0(x), u, xi, x)
    std::vector<Check> checks;
};

inline Step3 build_step3(const LcsStructure &S2, const Expr &f0, const ChainOptions &o = {})
{
    const auto &c2 = S2.charts.at(0);
    const auto &D = c2.domain;
    std::vector<Expr> h = detail::vars(D);
    h[static_cast<std::size_t>(D->index_of("s"))] = var("s") - f0;
    const SmoothMap H(D, D, h);
    LcsChart c3{"M3", D, pullback(H, c2.phi), pullback(H, c2.omega), pullback(H, *c2.alpha), c2.B, c2.E,
                std::nullopt};
    DifferentialForm omega3 = DifferentialForm::basis(D, {"s"});
    for (std::size_t j = 0; j < S2.mu.size(); ++j) {
        omega3 = omega3 + Expr(S2.mu[j]) * DifferentialForm::basis(D, {"vartheta" + std::to_string(j + 1)});
    }
    Step3 st{detail::single_chart(c3, S2.k, S2.mu), H, {}};
    const auto pts = sample_points(*D, o.samples, o.seed + 7);
    const auto rw = max_abs(c3.omega - omega3, pts);
    st.checks.push_back(make_check("omega", "H* omega_2 = ds + sum mu_j d vartheta_j", rw.max, o.tol));
    if (!rw.below(o.tol)) {
        throw CertificationError("build_step3: d f0 is not the exact part of the Lee form (residual " +
                                 detail::format_double(rw.max) + " at " + format_point(*D, rw.worst) + ")");
    }
    st.checks.push_back(make_check("alpha", "H* alpha_2 = alpha_2", max_abs(*c3.alpha - *c2.alpha, pts).max, o.tol));
    st.checks.push_back(make_check("phi", "H* Phi_2 = d_{omega_3} alpha_3",
                                   max_abs(c3.phi - d_twisted(omega3, *c3.alpha), pts).max, o.tol));
    // H only shears s, so it fixes d/ds and d/du and has unit determinant
    const auto JH = numeric(H);
    const int is = D->index_of("s"), iu = D->index_of("u");
    double det = 0.0, push = 0.0;
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(pts.rows(), 50); ++i) {
        const Mat J = JH->jacobian(pts.row(i).transpose());
        det = std::max(det, std::abs(J.determinant() - 1.0));
        push = std::max({push, (J.col(is) - Vec::Unit(D->dim(), is)).lpNorm<Eigen::Infinity>(),
                         (J.col(iu) - Vec::Unit(D->dim(), iu)).lpNorm<Eigen::Infinity>()});
    }
    st.checks.push_back(make_check("jacobian_det", "det DH = 1", det, o.tol));
    st.checks.push_back(make_check("fields", "H_* B_3 = B_2, H_* E_3 = E_2", push, o.tol));
    return st;
}

struct Step4 {
    LcsStructure universal;
    DomainPtr param;  // (s, u, x1, p)
    SmoothMap iprime; // M1 -> T^k x R^N, (x, vartheta, r) -> (vartheta, e(x), r, 0)
    SmoothMap iota;   // param -> M_{k,N}
    SmoothMap q;      // param -> M3, (s, u, x1, p) -> (s, u, Di'^T p, x1)
    std::vector<Check> checks;
    ReducibilityReport reduction;
};

// C4 is the preimage of i'(M1) under M_{k,N} -> T^k x R^N.
inline Step4 build_step4(const LcsStructure &S3, const Step1 &s1, const SmoothMap &e, int N,
                         const ChainOptions &o = {})
{
    const auto &c3 = S3.charts.at(0);
    const auto &D1 = s1.M1.charts.at(0).domain;
    const auto &DM = s1.pi.target();
    const int k = s1.M1.k;
    require_same_domain(e.source(), DM, "build_step4 (embedding of M)");
    const int Ne = e.target()->dim();
    if (N < Ne + k) {
        throw InputError("build_step4: N = " + std::to_string(N) + " is below dim e + k = " + std::to_string(Ne + k));
    }
    if (N < 2 * DM->dim() + k) {
        throw InputError("build_step4: N = " + std::to_string(N) + " is below 4n + k = " +
                         std::to_string(2 * DM->dim() + k));
    }
    auto universal = model_reduction_universal(k, N, s1.M1.mu, o.box);
    const auto &cu = universal.charts.at(0);
    const auto names = universal_names(k, N);

    std::vector<Coordinate> tc;
    for (int a = 2; a < 2 + k + N; ++a) {
        tc.push_back(cu.domain->coordinate(a));
    }
    std::vector<Expr> ic;
    for (int j = 1; j <= k; ++j) {
        ic.push_back(var("vartheta" + std::to_string(j)));
    }
    for (const auto &c : e.components()) {
        ic.push_back(c);
    }
    for (int j = 1; j <= k; ++j) {
        ic.push_back(var("r" + std::to_string(j)));
    }
    ic.resize(static_cast<std::size_t>(k + N), Expr(0.0));
    const SmoothMap ip(D1, make_domain("T^k x R^N", tc), ic);

    const auto Fi = numeric(ip);
    const auto ipts = sample_points(*D1, o.samples, o.seed + 8);
    int mn = D1->dim();
    for (Eigen::Index i = 0; i < ipts.rows(); ++i) {
        mn = std::min(mn, numerical_rank(Fi->jacobian(ipts.row(i).transpose()), o.rank_tol));
    }
    auto imm = make_flag("iprime_immersion", "rank Di' = dim M1", mn == D1->dim());
    imm.data["min_rank"] = mn;
    imm.data["dim"] = D1->dim();
    if (!imm.passed) {
        throw CertificationError("build_step4: i' is not an immersion (rank " + std::to_string(mn) + ")");
    }

    std::vector<Coordinate> pc{Coordinate::linear("s", -o.box, o.box), Coordinate::linear("u", -o.box, o.box)};
    for (const auto &c : D1->coordinates()) {
        pc.push_back(c);
    }
    const std::vector<std::string> pn(names.begin() + 2 + k + N, names.end());
    for (const auto &n : pn) {
        detail::require_fresh(D1, n, "build_step4");
        pc.push_back(Coordinate::linear(n, -o.box, o.box));
    }
    auto P = make_domain("C4", pc);
    std::vector<Expr> uc{var("s"), var("u")};
    uc.insert(uc.end(), ic.begin(), ic.end());
    for (const auto &n : pn) {
        uc.push_back(var(n));
    }
    const auto J = ip.jacobian();
    std::vector<Expr> qc;
    for (const auto &n : c3.domain->names()) {
        if (n.rfind("xi_", 0) == 0) {
            const auto col = static_cast<std::size_t>(D1->index_of(n.substr(3)));
            std::vector<Expr> terms;
            for (std::size_t a = 0; a < J.size(); ++a) {
                if (!J[a][col].is_zero()) {
                    terms.push_back(J[a][col] * var(pn[a]));
                }
            }
            qc.push_back(sum(std::move(terms)));
        } else {
            qc.push_back(var(n));
        }
    }
    Step4 st{universal, P, ip, SmoothMap(P, cu.domain, uc), SmoothMap(P, c3.domain, qc), {imm}, {}};
    ReducibleData rd{cu, P, numeric(st.iota), numeric(st.q), c3};
    st.reduction = verify_strong_reducibility(rd, {o.samples, o.seed, o.tol, o.rank_tol});
    return st;
}

// ---------------------------------------------------------------------------
// The whole chain and the one-stage composite.

struct ChainInput {
    LcsChart M; // first kind, with alpha, B, E
    OmegaDecomposition dec;
    SmoothMap embedding; // M -> R^{Ne}
    int N = 0;
};

struct ChainResult {
    Step1 s1;
    Step2 s2;
    Step3 s3;
    Step4 s4;
    DomainPtr composite_param; // (s_c, u_c, y, z)
    ReducibilityReport composite;
    std::vector<Check> concatenation; // stage by stage agreement on the composite
    std::vector<Check> checks;        // everything, prefixed by stage
    std::size_t rejected = 0;

    [[nodiscard]] bool passed() const { return all_passed(checks); }
};

namespace detail {

// zeta = (s_c, u_c, y, z) -> (s4, u4, x1, p) in C4 with
//   x1 = phi_{-s_c} psi_{-u_c} F(y), s4 = s_c + f0(x1), u4 = -u_c,
//   p = p0(x1) + P(x1) z, p0 the least-norm solution of Di'^T p = -alpha_1(x1)
//   and P the orthogonal projector onto ker Di'^T.
class CompositeLift final : public NumericMap {
public:
    CompositeLift(const Step1 &s1, const Step2 &s2, const Step4 &s4, const Expr &f0)
        : F_(numeric(s1.F)), fb_(s2.flow_B), fe_(s2.flow_E), ip_(numeric(s4.iprime)),
          alpha_(*s1.M1.charts.at(0).alpha), m1_(s1.M1.charts.at(0).domain->dim()), ny_(s1.param->dim()),
          np_(s4.iprime.target()->dim())
    {
        const auto &D1 = s1.M1.charts.at(0).domain;
        std::vector<Expr> g{f0};
        for (const auto &n : D1->names()) {
            g.push_back(diff(f0, n));
        }
        f0_ = Tape(g, D1->names());
    }

    [[nodiscard]] int source_dim() const override { return 2 + ny_ + np_; }
    [[nodiscard]] int target_dim() const override { return 2 + m1_ + np_; }

    [[nodiscard]] Vec value(const Vec &zeta) const override
    {
        Vec x1;
        lift(zeta, x1, nullptr);
        Vec out(target_dim());
        out[0] = zeta[0] + f0(x1)[0];
        out[1] = -zeta[1];
        out.segment(2, m1_) = x1;
        out.tail(np_) = momentum(x1, zeta.tail(np_));
        return out;
    }

    [[nodiscard]] Mat jacobian(const Vec &zeta) const override
    {
        Vec x1;
        Mat Jx;
        lift(zeta, x1, &Jx);
        const Vec z = zeta.tail(np_);
        const int nl = 2 + ny_;
        Mat J = Mat::Zero(target_dim(), source_dim());
        J(0, 0) = 1.0;
        J.row(0).head(nl) += f0(x1).tail(m1_).transpose() * Jx;
        J(1, 1) = -1.0;
        J.block(2, 0, m1_, nl) = Jx;
        // p depends on x1 through Di' and alpha_1: central differences
        Mat Dp(np_, m1_);
        const double h = 1e-6;
        for (int i = 0; i < m1_; ++i) {
            Vec a = x1, b = x1;
            a[i] += h;
            b[i] -= h;
            Dp.col(i) = (momentum(a, z) - momentum(b, z)) / (2 * h);
        }
        J.block(2 + m1_, 0, np_, nl) = Dp * Jx;
        const Mat A = ip_->jacobian(x1);
        J.block(2 + m1_, nl, np_, np_) =
            Mat::Identity(np_, np_) - A * (A.transpose() * A).ldlt().solve(A.transpose());
        return J;
    }

    // x1 and its derivative in (s_c, u_c, y).
    void lift(const Vec &zeta, Vec &x1, Mat *J) const
    {
        const Vec y = zeta.segment(2, ny_);
        const auto a = fe_->run(F_->value(y), -zeta[1], J != nullptr);
        const auto b = fb_->run(a.point, -zeta[0], J != nullptr);
        x1 = b.point;
        if (J) {
            J->resize(m1_, 2 + ny_);
            J->col(0) = -fb_->field(x1);
            J->col(1) = -b.jacobian * fe_->field(a.point);
            J->rightCols(ny_) = b.jacobian * a.jacobian * F_->jacobian(y);
        }
    }

private:
    [[nodiscard]] Vec f0(const Vec &x1) const
    {
        Vec g(m1_ + 1);
        f0_.evaluate(as_span(x1), {g.data(), static_cast<std::size_t>(g.size())});
        return g;
    }

    [[nodiscard]] Vec momentum(const Vec &x1, const Vec &z) const
    {
        const Mat A = ip_->jacobian(x1);
        const Eigen::LDLT<Mat> L(A.transpose() * A);
        const Vec b = -alpha_.one_form(x1);
        return A * L.solve(b) + z - A * L.solve(A.transpose() * z);
    }

    NumericMapPtr F_;
    std::shared_ptr<const Flow> fb_, fe_;
    NumericMapPtr ip_;
    FormEvaluator alpha_;
    Tape f0_;
    int m1_, ny_, np_;
};

// zeta -> (s_c, u_c, x1) in C2.
class CompositeC2 final : public NumericMap {
public:
    CompositeC2(std::shared_ptr<const CompositeLift> L, int m1) : L_(std::move(L)), m1_(m1) {}
    [[nodiscard]] int source_dim() const override { return L_->source_dim(); }
    [[nodiscard]] int target_dim() const override { return 2 + m1_; }
    [[nodiscard]] Vec value(const Vec &zeta) const override
    {
        Vec x1;
        L_->lift(zeta, x1, nullptr);
        Vec out(2 + m1_);
        out << zeta[0], zeta[1], x1;
        return out;
    }
    [[nodiscard]] Mat jacobian(const Vec &zeta) const override
    {
        Vec x1;
        Mat Jx;
        L_->lift(zeta, x1, &Jx);
        Mat J = Mat::Zero(2 + m1_, source_dim());
        J(0, 0) = 1.0;
        J(1, 1) = 1.0;
        J.block(2, 0, m1_, Jx.cols()) = Jx;
        return J;
    }

private:
    std::shared_ptr<const CompositeLift> L_;
    int m1_;
};

} // namespace detail

inline ChainResult run_reduction_chain(const ChainInput &in, const ChainOptions &o = {})
{
    auto s1 = build_step1(in.M, in.dec, o);
    auto s2 = build_step2(s1.M1, o);
    auto s3 = build_step3(s2.M2, in.dec.f0, o);
    auto s4 = build_step4(s3.M3, s1, in.embedding, in.N, o);

    std::vector<Coordinate> zc{Coordinate::linear("s_c", -o.window, o.window),
                               Coordinate::linear("u_c", -o.window, o.window)};
    for (const auto &c : s1.param->coordinates()) {
        zc.push_back(c);
    }
    const int np = s4.iprime.target()->dim();
    for (int a = 1; a <= np; ++a) {
        zc.push_back(Coordinate::linear("z" + std::to_string(a), -o.box, o.box));
    }
    for (std::size_t i = 0; i < zc.size(); ++i) {
        if (i < 2 || i >= zc.size() - static_cast<std::size_t>(np)) {
            detail::require_fresh(s1.param, zc[i].name, "run_reduction_chain");
        }
    }
    auto Z = make_domain("C", zc);
    const int m1 = s1.M1.charts.at(0).domain->dim();
    auto lift = std::make_shared<const detail::CompositeLift>(s1, s2, s4, in.dec.f0);
    auto c2 = std::make_shared<const detail::CompositeC2>(lift, m1);
    const auto iota = compose(numeric(s4.iota), lift);
    const SmoothMap Pi(Z, in.M.domain, detail::vars(in.M.domain));
    const SmoothMap Y(Z, s1.param, detail::vars(s1.param));

    ChainResult R{s1, s2, s3, s4, Z, {}, {}, {}, 0};
    R.composite = verify_strong_reducibility({s4.universal.charts.at(0), Z, iota, numeric(Pi), in.M},
                                             {o.samples, o.seed, o.flow_tol, o.flow_rank_tol});

    // (Phi, alpha, omega) restricted to the composite agree at every stage
    struct Stage {
        std::string name;
        NumericMapPtr map;
        const LcsChart *chart;
    };
    const std::vector<Stage> stages{
        {"universal", iota, &R.s4.universal.charts.at(0)},
        {"M3", compose(numeric(s4.q), lift), &R.s3.M3.charts.at(0)},
        {"M2", compose(numeric(s2.G), c2), &R.s2.M2.charts.at(0)},
        {"M1", compose(s2.pi, c2), &R.s1.M1.charts.at(0)},
        {"M", numeric(Pi), &in.M},
    };
    struct Evs {
        FormEvaluator phi, alpha, omega;
    };
    std::vector<Evs> evs;
    for (const auto &S : stages) {
        evs.push_back({FormEvaluator(S.chart->phi), FormEvaluator(*S.chart->alpha), FormEvaluator(S.chart->omega)});
    }
    const auto H = numeric(s3.H);
    const auto F = numeric(s1.F);
    const auto Yn = numeric(Y);
    const auto pts = sample_points(*Z, o.samples, o.seed + 11);
    std::vector<double> form_gap(stages.size(), 0.0);
    double gap_m2 = 0.0, gap_m1 = 0.0;
    std::size_t used = 0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        const Vec zeta = pts.row(i).transpose();
        try {
            std::vector<Mat> phis;
            std::vector<Vec> alphas, omegas, points;
            for (std::size_t s = 0; s < stages.size(); ++s) {
                const Vec x = stages[s].map->value(zeta);
                const Mat J = stages[s].map->jacobian(zeta);
                points.push_back(x);
                phis.push_back(J.transpose() * evs[s].phi.two_form(x) * J);
                alphas.push_back(J.transpose() * evs[s].alpha.one_form(x));
                omegas.push_back(J.transpose() * evs[s].omega.one_form(x));
            }
            for (std::size_t s = 1; s < stages.size(); ++s) {
                form_gap[s] = std::max({form_gap[s], detail::inf_norm(phis[s] - phis[s - 1]),
                                        (alphas[s] - alphas[s - 1]).lpNorm<Eigen::Infinity>(),
                                        (omegas[s] - omegas[s - 1]).lpNorm<Eigen::Infinity>()});
            }
            gap_m2 = std::max(gap_m2, chart_difference(*R.s2.M2.charts[0].domain, H->value(points[1]), points[2])
                                          .lpNorm<Eigen::Infinity>());
            gap_m1 = std::max(gap_m1, chart_difference(*R.s1.M1.charts[0].domain, points[3], F->value(Yn->value(zeta)))
                                          .lpNorm<Eigen::Infinity>());
            ++used;
        } catch (const EscapeError &) {
            ++R.rejected;
        }
    }
    for (std::size_t s = 1; s < stages.size(); ++s) {
        auto c = make_check("concatenation/" + stages[s - 1].name + "-" + stages[s].name,
                            "restricted (Phi, alpha, omega) agree across stages", form_gap[s], o.flow_tol);
        c.data["samples"] = static_cast<double>(used);
        R.concatenation.push_back(c);
    }
    R.concatenation.push_back(make_check("concatenation/points_M2", "H(q(c)) = G(c2)", gap_m2, o.flow_tol));
    R.concatenation.push_back(make_check("concatenation/points_M1", "pi_2(c2) = F(y)", gap_m1, o.flow_tol));
    if (used == 0) {
        R.concatenation.push_back(make_flag("concatenation/samples", "some composite point evaluates", false));
    }

    append(R.checks, R.s1.checks, "step1/");
    append(R.checks, R.s1.reduction.checks, "step1/reduction/");
    append(R.checks, R.s2.checks, "step2/");
    append(R.checks, R.s2.reduction.checks, "step2/reduction/");
    append(R.checks, R.s3.checks, "step3/");
    append(R.checks, R.s4.checks, "step4/");
    append(R.checks, R.s4.reduction.checks, "step4/reduction/");
    append(R.checks, R.composite.checks, "composite/");
    append(R.checks, R.concatenation);
    R.rejected += R.s2.reduction.rejected + R.composite.rejected;
    return R;
}

// The toroidal chart of a sphere_circle structure: omega = mu d theta,
// tau = theta, embedding (x, cos 2 pi theta, sin 2 pi theta).
inline ChainInput sphere_circle_chain_input(const LcsStructure &S, int N)
{
    const auto &c = S.chart("toroidal");
    if (!c.param) {
        throw InputError("sphere_circle_chain_input: need a sphere_circle structure");
    }
    const Vec p0 = sample_points(*c.domain, 1, 1).row(0).transpose();
    const double mu = FormEvaluator(c.omega).one_form(p0)[c.domain->index_of("theta")];
    std::vector<Expr> e(c.param->components().begin(), c.param->components().end() - 1);
    e.push_back(cos(Expr(2 * pi) * var("theta")));
    e.push_back(sin(Expr(2 * pi) * var("theta")));
    std::vector<Coordinate> ec;
    for (std::size_t i = 1; i <= e.size(); ++i) {
        ec.push_back(Coordinate::linear("e" + std::to_string(i), -1.5, 1.5));
    }
    ChainInput in{c, {}, SmoothMap(c.domain, make_domain("R" + std::to_string(e.size()), ec), e), N};
    in.dec.tau = {var("theta")};
    in.dec.mu = {mu};
    std::vector<Expr> lc;
    for (const auto &n : c.domain->names()) {
        lc.push_back(n == "theta" ? var("t") : (n.rfind("chi", 0) == 0 ? Expr(pi / 4) : Expr(0.25)));
    }
    in.dec.loops = {SmoothMap(make_domain("loop", {Coordinate::angular("t")}), c.domain, lc)};
    return in;
}

} // namespace lcs
