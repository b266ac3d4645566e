#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "lcs/models.hpp"

using namespace lcs;

namespace {

void expect_all_pass(const std::vector<Check> &checks, double tol)
{
    ASSERT_FALSE(checks.empty());
    for (const auto &c : checks) {
        EXPECT_TRUE(c.passed) << c.name << " residual " << c.residual << " " << c.detail;
        EXPECT_LT(c.residual, tol) << c.name;
    }
}

} // namespace

TEST(Models, SphereCircleN2FirstKind)
{
    const auto S = model_sphere_circle(2, 1.0);
    EXPECT_EQ(S.charts.size(), 9u); // 8 graph charts + toroidal
    const auto checks = validate_first_kind(S);
    expect_all_pass(checks, 1e-9);
    for (const auto &c : S.charts) {
        EXPECT_EQ(nondegeneracy_rank(c.phi, 50, 3).min_rank, 4) << c.name;
        // omega(B) = 1 exactly, structurally
        EXPECT_TRUE(contract(c.omega, *c.B).is_constant(1.0)) << c.name;
    }
}

TEST(Models, SphereCircleN3AndScaledQ)
{
    expect_all_pass(validate_first_kind(model_sphere_circle(3, 1.0), {100, 2, 1e-9}), 1e-9);
    expect_all_pass(validate_first_kind(model_sphere_circle(2, 2.5), {100, 3, 1e-9}), 1e-9);
    EXPECT_THROW(model_sphere_circle(1, 1.0), InputError);
}

TEST(Models, SphereCircleLatticeVariant)
{
    const auto S = model_sphere_circle_lattice(2, std::sqrt(2.0));
    expect_all_pass(validate_first_kind(S), 1e-9);
}

// E = -Reeb(eta_2) on S^3 x S^1: residual of flat(E) + dtheta, via the
// pointwise linear solve.
TEST(Models, AntiLeeFieldIsMinusReeb)
{
    const auto S = model_sphere_circle(2, 1.0);
    for (const auto &c : S.charts) {
        const auto pts = sample_points(*c.domain, 50, 5);
        const FieldEvaluator E(*c.E);
        const auto neg = Expr(-1.0) * c.omega;
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            const Vec p = pts.row(i).transpose();
            EXPECT_LT((sharp(c.phi, neg, p) - E(p)).lpNorm<Eigen::Infinity>(), 1e-9) << c.name;
        }
        // eta(R) = 1 on the sphere
        EXPECT_LT(max_abs(contract(*c.alpha, *c.E) + Expr(1.0), c.domain, pts).max, 1e-12);
    }
}

TEST(Models, SphereChartOverlapsAgree)
{
    const auto S = model_sphere_circle(2, 1.0);
    const auto checks = sphere_overlap_consistency(S);
    ASSERT_FALSE(checks.empty());
    double points = 0;
    for (const auto &c : checks) {
        EXPECT_TRUE(c.passed) << c.name << " " << c.residual;
        points += c.data.at("points");
    }
    EXPECT_GT(points, 100);
}

// Every point of S^{2N-1} lies in some graph chart window.
TEST(Models, GraphChartsCoverSphere)
{
    for (int N = 2; N <= 3; ++N) {
        const auto S = model_sphere_circle(N, 1.0);
        Rng rng(11);
        for (int trial = 0; trial < 2000; ++trial) {
            Vec v(2 * N);
            for (int i = 0; i < 2 * N; ++i) {
                v[i] = rng.uniform(-1, 1);
            }
            v /= v.norm();
            bool covered = false;
            for (const auto &c : S.charts) {
                if (c.name == "toroidal") {
                    continue;
                }
                const int idx = (c.name[0] == 'x' ? 0 : 1) + 2 * (std::stoi(c.name.substr(1)) - 1);
                const int sign = c.name.back() == '+' ? 1 : -1;
                Vec p(c.domain->dim());
                for (int i = 0, j = 0; i < 2 * N; ++i) {
                    if (i != idx) {
                        p[j++] = v[i];
                    }
                }
                p[c.domain->dim() - 1] = 0.3;
                covered = covered || (sign * v[idx] > 0 && c.domain->contains(p));
            }
            EXPECT_TRUE(covered) << v.transpose();
        }
    }
}

TEST(Models, ReductionUniversalFirstKind)
{
    for (const auto &mu : std::vector<std::vector<double>>{{1.0}, {0.0}, {std::sqrt(2.0)}}) {
        const auto S = model_reduction_universal(1, 1, mu);
        EXPECT_EQ(S.charts[0].domain->dim(), 6);
        expect_all_pass(validate_first_kind(S), 1e-10);
    }
    expect_all_pass(validate_first_kind(model_reduction_universal(2, 3, {1.0, std::sqrt(2.0)})), 1e-10);
    expect_all_pass(validate_first_kind(model_reduction_universal(0, 2, {})), 1e-10);
    EXPECT_THROW(model_reduction_universal(0, 0, {}), InputError);
    EXPECT_THROW(model_reduction_universal(2, 1, {1.0}), InputError);
}

TEST(Models, ExtractLeeOnUniversalModel)
{
    const double mu = std::sqrt(2.0);
    const auto S = model_reduction_universal(1, 1, {mu});
    const auto &c = S.charts[0];
    const auto lee = extract_lee(c.phi, {DifferentialForm::basis(c.domain, {"s"}), DifferentialForm::basis(c.domain, {"theta1"})});
    EXPECT_NEAR(lee.coefficients[0], 1.0, 1e-10);
    EXPECT_NEAR(lee.coefficients[1], mu, 1e-10);
}

// Dense antisymmetrization oracle for omega ^ Phi on M_{1,1}: hand expansion
// of (ds + mu dth) ^ (dalpha - omega ^ alpha).
TEST(Models, OmegaWedgePhiMatchesHandExpansion)
{
    const double mu = 1.0;
    const auto S = model_reduction_universal(1, 1, {mu});
    const auto &c = S.charts[0];
    const auto w = wedge(c.omega, c.phi);
    // omega ^ Phi = omega ^ dalpha, dalpha = -dp_th ^ dth - dp_t ^ dt
    const auto &D = c.domain;
    auto b = [&](std::initializer_list<std::string> l) { return DifferentialForm::basis(D, l); };
    const auto expected = -1.0 * (b({"s", "p_theta1", "theta1"}) + b({"s", "p_t1", "t1"}) +
                                  Expr(mu) * b({"theta1", "p_t1", "t1"}));
    const auto pts = sample_points(*D, 50, 1);
    EXPECT_LT(max_abs(w - expected, pts).max, 1e-14);
}

TEST(Models, Liouville)
{
    const auto L = model_liouville(1);
    const auto &D = L.domain;
    EXPECT_TRUE(L.lambda.coefficient({"x1"}).id() == var("y1").id() ||
                L.lambda.coefficient({"x1"}).name() == "y1");
    EXPECT_TRUE(L.lambda.coefficient({"y1"}).is_zero());
    for (int n = 1; n <= 3; ++n) {
        const auto Ln = model_liouville(n);
        EXPECT_EQ(nondegeneracy_rank(Ln.dlambda, 20, 1).min_rank, 2 * n);
    }
    // graph of df: lambda pulls back to df
    auto X = make_domain("R1", {Coordinate::linear("a", -1, 1)});
    const Expr f = sin(var("a")) * var("a");
    const SmoothMap graph(X, D, {var("a"), diff(f, "a")});
    const auto pts = sample_points(*X, 100, 2);
    EXPECT_LT(max_abs(pullback(graph, L.lambda) - d_of(X, f), pts).max, 1e-14);
}

TEST(Models, FirstKindValidatorCatchesLiouvilleType)
{
    // symplectic R^4 with Liouville field: omega = 0 so omega(B) = 0
    const auto L = model_liouville(2);
    const auto &D = L.domain;
    VectorField B = VectorField::zero(D);
    for (int j = 1; j <= 2; ++j) {
        B = B + var("y" + std::to_string(j)) * VectorField::coordinate(D, "y" + std::to_string(j));
    }
    LcsStructure S;
    S.name = "liouville-type";
    S.kind = LcsKind::Exact;
    S.charts.push_back(LcsChart{"global", D, L.dlambda, DifferentialForm(D, 1), -1.0 * L.lambda, B, std::nullopt,
                                std::nullopt});
    const auto checks = validate_first_kind(S);
    const auto *c = find_check(checks, "global/omega_B");
    ASSERT_NE(c, nullptr);
    EXPECT_FALSE(c->passed);
    EXPECT_TRUE(find_check(checks, "global/alpha_flat_B")->passed);
    S.charts[0].B.reset();
    EXPECT_THROW((void)validate_first_kind(S), InputError);
}

TEST(Models, FlatSharpRoundTrip)
{
    const auto S = model_sphere_circle(2, 1.0);
    const auto &c = S.chart("toroidal");
    const std::vector<VectorField> fields{*c.B, *c.E,
                                          var("chi1") * VectorField::coordinate(c.domain, "phi2") +
                                              sin(var("theta")) * VectorField::coordinate(c.domain, "chi1")};
    const auto pts = sample_points(*c.domain, 100, 8);
    for (const auto &X : fields) {
        const auto a = flat(c.phi, X);
        const FieldEvaluator Xv(X);
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            const Vec p = pts.row(i).transpose();
            EXPECT_LT((sharp(c.phi, a, p) - Xv(p)).lpNorm<Eigen::Infinity>(), 1e-9);
        }
    }
}

TEST(Models, SlkActionIdentityAndShear)
{
    const auto S = model_reduction_universal(2, 1, {1.0, std::sqrt(2.0)});
    const auto id = sl_k_action({{1, 0}, {0, 1}}, S);
    EXPECT_EQ(id.image.mu, S.mu);
    expect_all_pass(id.checks, 1e-12);
    const auto sh = sl_k_action({{1, 1}, {0, 1}}, S);
    expect_all_pass(sh.checks, 1e-9);
    // mu' = A^{-T} mu = (1, sqrt2 - 1)
    EXPECT_NEAR(sh.image.mu[0], 1.0, 1e-15);
    EXPECT_NEAR(sh.image.mu[1], std::sqrt(2.0) - 1.0, 1e-15);
    expect_all_pass(validate_first_kind(sh.image), 1e-10);
    EXPECT_THROW((void)sl_k_action({{2, 0}, {0, 1}}, S), InputError);
    const auto flip = sl_k_action({{0, 1}, {1, 0}}, S);
    expect_all_pass(flip.checks, 1e-9);
}
