#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "lcs/twisted.hpp"

using namespace lcs;

namespace {

// Chart of M_{1,1}: (s, u, th, t, pth, pt).
struct M11 {
    DomainPtr D;
    DifferentialForm alpha, omega, phi;
};

M11 m11(double mu)
{
    auto D = make_domain("M11", {Coordinate::linear("s", -1, 1), Coordinate::linear("u", -1, 1),
                                 Coordinate::angular("th"), Coordinate::linear("t", -1, 1),
                                 Coordinate::linear("pth", -1, 1), Coordinate::linear("pt", -1, 1)});
    auto b = [&](const char *c) { return DifferentialForm::basis(D, {c}); };
    const auto alpha = b("u") - var("pth") * b("th") - var("pt") * b("t");
    const auto omega = b("s") + Expr(mu) * b("th");
    return {D, alpha, omega, d_twisted(omega, alpha)};
}

DomainPtr r4()
{
    return make_domain("R4", {Coordinate::linear("x", -1, 1), Coordinate::linear("y", -1, 1),
                              Coordinate::linear("s", -1, 1), Coordinate::linear("t", -1, 1)});
}

DomainPtr circle() { return make_domain("S1", {Coordinate::angular("tau")}); }

} // namespace

TEST(Twisted, ZeroTwistIsExteriorDerivative)
{
    auto D = r4();
    const auto a = var("x") * var("y") * DifferentialForm::basis(D, {"s"});
    const auto zero = DifferentialForm(D, 1);
    const auto pts = sample_points(*D, 50, 1);
    EXPECT_EQ(max_abs(d_twisted(zero, a) - ext_d(a), pts).max, 0.0);
}

TEST(Twisted, TwistedDifferentialSquaresToZeroOnM11)
{
    const auto M = m11(std::sqrt(2.0));
    Rng rng(4);
    const auto pts = sample_points(*M.D, 200, 2);
    for (int trial = 0; trial < 5; ++trial) {
        DifferentialForm a(M.D, 1);
        for (int i = 0; i < 6; ++i) {
            a.add(bit(i), Expr(rng.uniform(-1, 1)) * sin(var("s") + Expr(rng.uniform(-1, 1)) * var("t")) +
                              var("pth") * var("u"));
        }
        EXPECT_LT(max_abs(d_twisted(M.omega, d_twisted(M.omega, a)), pts).max, 1e-10);
    }
    EXPECT_LT(max_abs(d_twisted(M.omega, M.phi), pts).max, 1e-10);
}

TEST(Twisted, ConformalRescaleChainMap)
{
    auto D = r4();
    const Expr x = var("x");
    const auto omega = DifferentialForm::basis(D, {"s"}) + Expr(0.5) * DifferentialForm::basis(D, {"t"});
    const auto a = sin(var("y")) * DifferentialForm::basis(D, {"x"}) + var("t") * DifferentialForm::basis(D, {"s"});
    const Expr f = x * x;
    const auto r = conformal_rescale(f, a, omega);
    const auto lhs = exp(f) * d_twisted(omega, a);
    const auto rhs = d_twisted(r.omega, r.form);
    EXPECT_LT(max_abs(lhs - rhs, sample_points(*D, 200, 3)).max, 1e-9);
}

TEST(TwistedProperty, ConformalRescaleIsGroupAction)
{
    auto D = r4();
    const auto pts = sample_points(*D, 200, 4);
    const auto omega = DifferentialForm::basis(D, {"s"});
    const auto a = var("x") * DifferentialForm::basis(D, {"y", "t"});
    const Expr f = var("x") * var("y"), g = sin(var("t"));
    const auto fg1 = conformal_rescale(f, a, omega);
    const auto fg = conformal_rescale(g, fg1.form, fg1.omega);
    const auto sum = conformal_rescale(f + g, a, omega);
    EXPECT_LT(max_abs(fg.form - sum.form, pts).max, 1e-10);
    EXPECT_LT(max_abs(fg.omega - sum.omega, pts).max, 1e-10);
    const auto back = conformal_rescale(-f, fg1.form, fg1.omega);
    EXPECT_LT(max_abs(back.form - a, pts).max, 1e-10);
    EXPECT_LT(max_abs(back.omega - omega, pts).max, 1e-10);
    const auto c = conformal_rescale(Expr(0.7), a, omega);
    EXPECT_LT(max_abs(c.omega - omega, pts).max, 1e-15);
    EXPECT_LT(max_abs(c.form - std::exp(0.7) * a, pts).max, 1e-14);
}

TEST(Twisted, ExtractLeeExponentialExample)
{
    auto D = r4();
    const auto phi = exp(var("s")) * (DifferentialForm::basis(D, {"x", "y"}) + DifferentialForm::basis(D, {"s", "t"}));
    const auto lee = extract_lee(phi);
    // oracle: the pointwise least-squares solutions are the constant covector ds
    Vec expected = Vec::Zero(4);
    expected[2] = 1.0;
    for (Eigen::Index i = 0; i < lee.pointwise.rows(); ++i) {
        EXPECT_LT((lee.pointwise.row(i).transpose() - expected).lpNorm<Eigen::Infinity>(), 1e-10);
    }
    EXPECT_LT(lee.fit_residual, 1e-10);
    EXPECT_LT(lee.closedness_residual, 1e-6);
}

TEST(Twisted, ExtractLeeSymplecticGivesZero)
{
    auto D = r4();
    const auto phi = DifferentialForm::basis(D, {"x", "y"}) + DifferentialForm::basis(D, {"s", "t"});
    const auto lee = extract_lee(phi);
    EXPECT_LT(lee.pointwise.lpNorm<Eigen::Infinity>(), 1e-14);
}

TEST(Twisted, ExtractLeeAnsatzOnM11)
{
    const double mu = std::sqrt(2.0);
    const auto M = m11(mu);
    std::vector<DifferentialForm> ansatz{DifferentialForm::basis(M.D, {"s"}), DifferentialForm::basis(M.D, {"th"})};
    const auto lee = extract_lee(M.phi, ansatz);
    ASSERT_TRUE(lee.omega.has_value());
    EXPECT_NEAR(lee.coefficients[0], 1.0, 1e-10);
    EXPECT_NEAR(lee.coefficients[1], mu, 1e-10);
    EXPECT_LT(max_abs(*lee.omega - M.omega, lee.samples).max, 1e-8);
}

TEST(Twisted, ExtractLeeRejectsNonLcs)
{
    auto D = r4();
    // nu = x/(2+xs) ds pointwise, d nu != 0
    const auto phi = (Expr(2.0) + var("x") * var("s")) * DifferentialForm::basis(D, {"x", "y"}) +
                     DifferentialForm::basis(D, {"s", "t"});
    // pointwise solvable in dimension 4, but the solution is not closed
    EXPECT_THROW((void)extract_lee(phi), CertificationError);
    auto R6 = make_domain("R6", {Coordinate::linear("a", -1, 1), Coordinate::linear("b", -1, 1),
                                 Coordinate::linear("c", -1, 1), Coordinate::linear("d", -1, 1),
                                 Coordinate::linear("e", -1, 1), Coordinate::linear("f", -1, 1)});
    const auto phi6 = DifferentialForm::basis(R6, {"a", "b"}) + DifferentialForm::basis(R6, {"c", "d"}) +
                      (Expr(1.0) + var("a") * var("c")) * DifferentialForm::basis(R6, {"e", "f"});
    EXPECT_THROW((void)extract_lee(phi6), CertificationError);
    auto R2 = make_domain("R2", {Coordinate::linear("x", -1, 1), Coordinate::linear("y", -1, 1)});
    EXPECT_THROW((void)extract_lee(DifferentialForm::basis(R2, {"x", "y"})), InputError);
}

TEST(TwistedProperty, ExtractLeeRoundTrip)
{
    const auto M = m11(0.3);
    Rng rng(17);
    for (int trial = 0; trial < 3; ++trial) {
        const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
        const auto omega = Expr(a) * DifferentialForm::basis(M.D, {"s"}) + Expr(b) * DifferentialForm::basis(M.D, {"th"});
        const auto phi = d_twisted(omega, M.alpha);
        const auto lee = extract_lee(phi, {DifferentialForm::basis(M.D, {"s"}), DifferentialForm::basis(M.D, {"th"}),
                                           DifferentialForm::basis(M.D, {"t"})});
        EXPECT_LT(max_abs(*lee.omega - omega, lee.samples).max, 1e-8);
    }
}

TEST(Twisted, PeriodOfCircleForm)
{
    auto S = circle();
    const auto L = period_lattice(DifferentialForm::basis(S, {"tau"}), {SmoothMap::identity(S)}, 1e-9);
    ASSERT_EQ(L.periods.size(), 1u);
    EXPECT_NEAR(L.periods[0], 1.0, 1e-12);
    EXPECT_EQ(L.rank, 1);
    EXPECT_TRUE(L.integral);
}

TEST(Twisted, LatticeRankFromPeriods)
{
    const auto a = lattice_from_periods({1.0, 2.0, 3.0}, 1e-9);
    EXPECT_EQ(a.rank, 1);
    EXPECT_NEAR(a.basis[0], 1.0, 1e-12);
    EXPECT_TRUE(a.integral);
    const auto b = lattice_from_periods({1.0, std::sqrt(2.0)}, 1e-9);
    EXPECT_EQ(b.rank, 2);
    const auto c = lattice_from_periods({2.0, 3.0}, 1e-9);
    EXPECT_EQ(c.rank, 1);
    EXPECT_NEAR(c.basis[0], 1.0, 1e-12);
    const auto d = lattice_from_periods({std::sqrt(2.0), 2 * std::sqrt(2.0)}, 1e-9);
    EXPECT_EQ(d.rank, 1);
    EXPECT_FALSE(d.integral);
    const auto e = lattice_from_periods({1.0, std::sqrt(2.0), std::sqrt(3.0), 1.0 + std::sqrt(2.0)}, 1e-9);
    EXPECT_EQ(e.rank, 3);
}

TEST(Twisted, OpenCurveIsRejected)
{
    auto S = make_domain("I", {Coordinate::linear("tau", 0, 1)});
    auto P = make_domain("R1", {Coordinate::linear("x", -2, 2)});
    const SmoothMap open(S, P, {var("tau")});
    EXPECT_THROW((void)loop_period(DifferentialForm::basis(P, {"x"}), open, 1e-9), InputError);
}

TEST(Twisted, PeriodOfWindingLoop)
{
    auto S = circle();
    auto T = make_domain("T2", {Coordinate::angular("a"), Coordinate::angular("b")});
    const SmoothMap loop(S, T, {Expr(2.0) * var("tau"), Expr(0.25) + Expr(0.1) * sin(Expr(2 * pi) * var("tau"))});
    const auto omega = DifferentialForm::basis(T, {"a"}) + Expr(std::sqrt(2.0)) * DifferentialForm::basis(T, {"b"});
    EXPECT_NEAR(loop_period(omega, loop, 1e-9), 2.0, 1e-12);
}

TEST(Twisted, IdentityWithExactPerturbationIsConformalNotStrict)
{
    auto T = make_domain("T2", {Coordinate::angular("a"), Coordinate::angular("b")});
    auto S = circle();
    const auto omega = DifferentialForm::basis(T, {"a"});
    const Expr g = Expr(0.3) * sin(Expr(2 * pi) * var("b")) * cos(Expr(2 * pi) * var("a"));
    const auto omega_t = omega + d_of(T, g);
    const std::vector<SmoothMap> loops{SmoothMap(S, T, {var("tau"), Expr(0.2)}), SmoothMap(S, T, {Expr(0.1), var("tau")})};
    const auto R = classify_morphism(SmoothMap::identity(T), omega, omega_t, loops, loops);
    EXPECT_FALSE(R.strict);
    EXPECT_TRUE(R.conformal);
    EXPECT_LT(R.scaling_residual, 1e-8);
    EXPECT_TRUE(R.full);
    // recovered scaling function equals g up to its basepoint value
    Vec base(2), p(2);
    base << 0.5, 0.5;
    p << 0.2, 0.9;
    const auto delta = omega_t - omega;
    const double f = scaling_value(delta, base, p);
    const std::vector<std::string> names{"a", "b"};
    EXPECT_NEAR(f, evaluate(g, names, std::vector<double>{0.2, 0.9}) - evaluate(g, names, std::vector<double>{0.5, 0.5}), 1e-12);
}

TEST(Twisted, NonExactPerturbationIsNotConformal)
{
    auto T = make_domain("T2", {Coordinate::angular("a"), Coordinate::angular("b")});
    auto S = circle();
    const auto omega = DifferentialForm::basis(T, {"a"});
    const auto omega_t = omega + DifferentialForm::basis(T, {"b"});
    const std::vector<SmoothMap> loops{SmoothMap(S, T, {var("tau"), Expr(0.2)}), SmoothMap(S, T, {Expr(0.1), var("tau")})};
    const auto R = classify_morphism(SmoothMap::identity(T), omega, omega_t, loops, loops);
    EXPECT_FALSE(R.conformal);
    EXPECT_EQ(R.source.rank, 1);
    EXPECT_EQ(R.target.rank, 1);
}

TEST(Twisted, ConstantMapStrictOnlyForZeroForm)
{
    auto T = make_domain("T2", {Coordinate::angular("a"), Coordinate::angular("b")});
    auto S = circle();
    const SmoothMap constant(S, T, {Expr(0.3), Expr(0.4)});
    const auto target = DifferentialForm::basis(T, {"a"});
    const auto R0 = classify_morphism(constant, DifferentialForm(S, 1), target, {SmoothMap::identity(S)},
                                      {SmoothMap(S, T, {var("tau"), Expr(0.0)})});
    EXPECT_TRUE(R0.strict);
    EXPECT_EQ(R0.source.rank, 0);
    EXPECT_EQ(R0.rank_decrease, 1);
    EXPECT_TRUE(R0.source_in_target);
    EXPECT_FALSE(R0.full);
    const auto R1 = classify_morphism(constant, DifferentialForm::basis(S, {"tau"}), target, {SmoothMap::identity(S)},
                                      {SmoothMap(S, T, {var("tau"), Expr(0.0)})});
    EXPECT_FALSE(R1.strict);
}

TEST(TwistedProperty, CompositionOfStrictMorphismsIsStrict)
{
    auto S = circle();
    auto T = make_domain("T2", {Coordinate::angular("a"), Coordinate::angular("b")});
    auto U = make_domain("T3", {Coordinate::angular("p"), Coordinate::angular("q"), Coordinate::angular("r")});
    const auto wS = DifferentialForm::basis(S, {"tau"});
    const auto wT = DifferentialForm::basis(T, {"a"});
    const auto wU = DifferentialForm::basis(U, {"p"}) + DifferentialForm::basis(U, {"r"});
    // F: tau -> (tau, sin), G: (a,b) -> (a, b, 0) ; G*wU = da
    const SmoothMap F(S, T, {var("tau"), Expr(0.1) * sin(Expr(2 * pi) * var("tau"))});
    const SmoothMap G(T, U, {var("a"), var("b"), Expr(0.0)});
    const std::vector<SmoothMap> loopS{SmoothMap::identity(S)};
    const std::vector<SmoothMap> loopT{SmoothMap(S, T, {var("tau"), Expr(0.0)}), SmoothMap(S, T, {Expr(0.0), var("tau")})};
    const std::vector<SmoothMap> loopU{SmoothMap(S, U, {var("tau"), Expr(0.0), Expr(0.0)}),
                                       SmoothMap(S, U, {Expr(0.0), var("tau"), Expr(0.0)}),
                                       SmoothMap(S, U, {Expr(0.0), Expr(0.0), var("tau")})};
    const auto RF = classify_morphism(F, wS, wT, loopS, loopT);
    const auto RG = classify_morphism(G, wT, wU, loopT, loopU);
    const auto RGF = classify_morphism(compose(G, F), wS, wU, loopS, loopU);
    EXPECT_TRUE(RF.strict);
    EXPECT_TRUE(RG.strict);
    EXPECT_TRUE(RGF.strict);
    EXPECT_GE(RGF.target.rank, RGF.source.rank);
    EXPECT_TRUE(RGF.source_in_target);
}

TEST(Twisted, TwistedPullbackPreservesClosedness)
{
    auto D = r4();
    auto E = make_domain("R4b", {Coordinate::linear("a", -1, 1), Coordinate::linear("b", -1, 1),
                                 Coordinate::linear("c", -1, 1), Coordinate::linear("e", -1, 1)});
    const auto omega_t = DifferentialForm::basis(D, {"s"});
    // F(a,b,c,e) = (a, b, c + 0.2 sin(a), e): F*ds = dc + 0.2 cos(a) da
    const SmoothMap F(E, D, {var("a"), var("b"), var("c") + Expr(0.2) * sin(var("a")), var("e")});
    const auto omega = DifferentialForm::basis(E, {"c"});
    const Expr f = Expr(0.2) * sin(var("a"));
    // d_{w'}-closed 2-form: d_{w'} beta for any beta
    const auto beta = d_twisted(omega_t, var("x") * var("t") * DifferentialForm::basis(D, {"y"}));
    const auto pb = twisted_pullback(F, f, beta, omega, omega_t);
    const auto pts = sample_points(*E, 200, 9);
    EXPECT_LT(max_abs(d_twisted(omega, pb), pts).max, 1e-9);
    EXPECT_THROW((void)twisted_pullback(F, Expr(0.0), beta, omega, omega_t), CertificationError);
    // constant f is a homothety by e^{-c}
    const auto id = SmoothMap::identity(D);
    const auto h = twisted_pullback(id, Expr(0.0), beta, omega_t, omega_t);
    EXPECT_LT(max_abs(h - beta, pts).max, 1e-15);
}
