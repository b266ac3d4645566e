#pragma once

// Minimal expression kernel: immutable expression DAGs over named coordinates
// with exact symbolic partial derivatives, substitution, a compiled evaluator
// and an infix parser.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace lcs {

enum class Op : std::uint8_t { Constant, Variable, Sum, Product, Power, Sin, Cos, Exp, Negate };

struct Rational {
    long num = 1;
    long den = 1;

    static Rational make(long n, long d)
    {
        if (d == 0) {
            throw InputError("rational exponent with zero denominator");
        }
        if (d < 0) {
            n = -n;
            d = -d;
        }
        const long g = std::gcd(n < 0 ? -n : n, d);
        return g == 0 ? Rational{0, 1} : Rational{n / g, d / g};
    }
    [[nodiscard]] double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    [[nodiscard]] bool is_integer() const { return den == 1; }
    friend bool operator==(const Rational &, const Rational &) = default;
};

class Expr;

namespace detail {
struct Node;
}

class Expr {
public:
    Expr();
    Expr(double c); // NOLINT(google-explicit-constructor): numeric literals read naturally in formulas
    Expr(int c) : Expr(static_cast<double>(c)) {} // NOLINT(google-explicit-constructor)

    static Expr constant(double c);
    static Expr variable(std::string name);

    // Raw node builders; the free functions below apply the local rewrites.
    static Expr make_sum(std::vector<Expr> terms);
    static Expr make_product(std::vector<Expr> factors);
    static Expr make_power(Expr base, Rational exponent);
    static Expr make_unary(Op op, Expr arg);

    [[nodiscard]] Op op() const;
    [[nodiscard]] double value() const;
    [[nodiscard]] const std::string &name() const;
    [[nodiscard]] std::span<const Expr> args() const;
    [[nodiscard]] Rational exponent() const;

    [[nodiscard]] bool is_constant() const { return op() == Op::Constant; }
    [[nodiscard]] bool is_constant(double c) const { return is_constant() && value() == c; }
    [[nodiscard]] bool is_zero() const { return is_constant(0.0); }

    // Identity of the shared node; used for memoisation.
    [[nodiscard]] const detail::Node *id() const { return node_.get(); }

private:
    explicit Expr(std::shared_ptr<const detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const detail::Node> node_;
};

namespace detail {
struct Node {
    Op op = Op::Constant;
    double value = 0.0;
    std::string name;
    std::vector<Expr> args;
    Rational exponent;
};
} // namespace detail

inline Expr::Expr() : Expr(0.0) {}

inline Expr::Expr(double c)
{
    auto n = std::make_shared<detail::Node>();
    n->op = Op::Constant;
    n->value = c;
    node_ = std::move(n);
}

inline Expr Expr::constant(double c) { return Expr(c); }

inline Expr Expr::variable(std::string name)
{
    auto n = std::make_shared<detail::Node>();
    n->op = Op::Variable;
    n->name = std::move(name);
    return Expr(std::shared_ptr<const detail::Node>(std::move(n)));
}

inline Expr Expr::make_sum(std::vector<Expr> terms)
{
    auto n = std::make_shared<detail::Node>();
    n->op = Op::Sum;
    n->args = std::move(terms);
    return Expr(std::shared_ptr<const detail::Node>(std::move(n)));
}

inline Expr Expr::make_product(std::vector<Expr> factors)
{
    auto n = std::make_shared<detail::Node>();
    n->op = Op::Product;
    n->args = std::move(factors);
    return Expr(std::shared_ptr<const detail::Node>(std::move(n)));
}

inline Expr Expr::make_power(Expr base, Rational exponent)
{
    auto n = std::make_shared<detail::Node>();
    n->op = Op::Power;
    n->args = {std::move(base)};
    n->exponent = exponent;
    return Expr(std::shared_ptr<const detail::Node>(std::move(n)));
}

inline Expr Expr::make_unary(Op op, Expr arg)
{
    auto n = std::make_shared<detail::Node>();
    n->op = op;
    n->args = {std::move(arg)};
    return Expr(std::shared_ptr<const detail::Node>(std::move(n)));
}

inline Op Expr::op() const { return node_->op; }
inline double Expr::value() const { return node_->value; }
inline const std::string &Expr::name() const { return node_->name; }
inline std::span<const Expr> Expr::args() const { return node_->args; }
inline Rational Expr::exponent() const { return node_->exponent; }

// ---------------------------------------------------------------------------
// Scalar semantics shared by constant folding and the compiled evaluator.

namespace detail {

inline double checked(double v, const char *what)
{
    if (!std::isfinite(v)) {
        throw EvaluationError(std::string(what) + " produced a non-finite value");
    }
    return v;
}

inline double power_value(double base, Rational r)
{
    if (r.num == 0) {
        return 1.0;
    }
    if (base == 0.0) {
        if (r.num < 0) {
            throw EvaluationError("power: zero base with negative exponent");
        }
        return 0.0;
    }
    if (r.is_integer()) {
        return checked(std::pow(base, static_cast<double>(r.num)), "power");
    }
    if (base < 0.0) {
        if (r.den % 2 == 0) {
            throw EvaluationError("power: negative base " + std::to_string(base) + " with even root");
        }
        const double mag = std::pow(-base, r.value());
        return checked((r.num % 2 == 0) ? mag : -mag, "power");
    }
    return checked(std::pow(base, r.value()), "power");
}

inline double unary_value(Op op, double x)
{
    switch (op) {
    case Op::Sin:
        return std::sin(x);
    case Op::Cos:
        return std::cos(x);
    case Op::Exp:
        return checked(std::exp(x), "exp");
    case Op::Negate:
        return -x;
    default:
        throw Error("unary_value: not a unary op");
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Builders with light local rewrites: constant folding, flattening, neutral
// elements and annihilation by zero. No canonicalisation beyond that.

inline Expr sum(std::vector<Expr> terms)
{
    std::vector<Expr> out;
    out.reserve(terms.size());
    double c = 0.0;
    for (auto &t : terms) {
        if (t.op() == Op::Sum) {
            for (const auto &a : t.args()) {
                if (a.is_constant()) {
                    c += a.value();
                } else {
                    out.push_back(a);
                }
            }
        } else if (t.is_constant()) {
            c += t.value();
        } else {
            out.push_back(std::move(t));
        }
    }
    if (c != 0.0) {
        out.insert(out.begin(), Expr(c));
    }
    if (out.empty()) {
        return Expr(0.0);
    }
    if (out.size() == 1) {
        return out.front();
    }
    return Expr::make_sum(std::move(out));
}

inline Expr product(std::vector<Expr> factors)
{
    std::vector<Expr> out;
    out.reserve(factors.size());
    double c = 1.0;
    auto absorb = [&](const Expr &f) {
        if (f.is_constant()) {
            c *= f.value();
        } else if (f.op() == Op::Negate) {
            c = -c;
            out.push_back(f.args()[0]);
        } else {
            out.push_back(f);
        }
    };
    for (const auto &f : factors) {
        if (f.op() == Op::Product) {
            for (const auto &a : f.args()) {
                absorb(a);
            }
        } else {
            absorb(f);
        }
    }
    if (c == 0.0) {
        return Expr(0.0);
    }
    if (out.empty()) {
        return Expr(c);
    }
    if (c != 1.0) {
        out.insert(out.begin(), Expr(c));
    }
    if (out.size() == 1) {
        return out.front();
    }
    return Expr::make_product(std::move(out));
}

inline Expr negate(const Expr &e)
{
    if (e.is_constant()) {
        return Expr(-e.value());
    }
    if (e.op() == Op::Negate) {
        return e.args()[0];
    }
    if (e.op() == Op::Product && e.args()[0].is_constant()) {
        return product({Expr(-1.0), e});
    }
    return Expr::make_unary(Op::Negate, e);
}

inline Expr pow(const Expr &base, Rational r)
{
    r = Rational::make(r.num, r.den);
    if (r.num == 0) {
        return Expr(1.0);
    }
    if (r == Rational{1, 1}) {
        return base;
    }
    if (base.is_constant()) {
        return Expr(detail::power_value(base.value(), r));
    }
    return Expr::make_power(base, r);
}

inline Expr pow(const Expr &base, long n) { return pow(base, Rational{n, 1}); }

inline Expr sqrt(const Expr &e) { return pow(e, Rational{1, 2}); }

inline Expr sin(const Expr &e)
{
    return e.is_constant() ? Expr(std::sin(e.value())) : Expr::make_unary(Op::Sin, e);
}

inline Expr cos(const Expr &e)
{
    return e.is_constant() ? Expr(std::cos(e.value())) : Expr::make_unary(Op::Cos, e);
}

inline Expr exp(const Expr &e)
{
    return e.is_constant() ? Expr(detail::unary_value(Op::Exp, e.value())) : Expr::make_unary(Op::Exp, e);
}

inline Expr operator+(const Expr &a, const Expr &b) { return sum({a, b}); }
inline Expr operator-(const Expr &a, const Expr &b) { return sum({a, negate(b)}); }
inline Expr operator-(const Expr &a) { return negate(a); }
inline Expr operator*(const Expr &a, const Expr &b) { return product({a, b}); }
inline Expr operator/(const Expr &a, const Expr &b)
{
    if (b.is_constant()) {
        if (b.value() == 0.0) {
            throw EvaluationError("division by constant zero");
        }
        return product({a, Expr(1.0 / b.value())});
    }
    return product({a, pow(b, Rational{-1, 1})});
}
inline Expr &operator+=(Expr &a, const Expr &b) { return a = a + b; }
inline Expr &operator*=(Expr &a, const Expr &b) { return a = a * b; }

inline Expr var(std::string name) { return Expr::variable(std::move(name)); }

inline constexpr double pi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Symbolic differentiation and substitution, memoised on node identity so the
// DAG sharing of the input survives.

class Differentiator {
public:
    explicit Differentiator(std::string variable) : var_(std::move(variable)) {}

    Expr operator()(const Expr &e)
    {
        if (auto it = memo_.find(e.id()); it != memo_.end()) {
            return it->second;
        }
        Expr d = compute(e);
        memo_.emplace(e.id(), d);
        return d;
    }

private:
    Expr compute(const Expr &e)
    {
        switch (e.op()) {
        case Op::Constant:
            return Expr(0.0);
        case Op::Variable:
            return Expr(e.name() == var_ ? 1.0 : 0.0);
        case Op::Sum: {
            std::vector<Expr> terms;
            for (const auto &a : e.args()) {
                terms.push_back((*this)(a));
            }
            return sum(std::move(terms));
        }
        case Op::Product: {
            const auto args = e.args();
            std::vector<Expr> terms;
            for (std::size_t i = 0; i < args.size(); ++i) {
                Expr di = (*this)(args[i]);
                if (di.is_zero()) {
                    continue;
                }
                std::vector<Expr> f;
                f.reserve(args.size());
                for (std::size_t j = 0; j < args.size(); ++j) {
                    f.push_back(j == i ? di : args[j]);
                }
                terms.push_back(product(std::move(f)));
            }
            return sum(std::move(terms));
        }
        case Op::Power: {
            const Expr &b = e.args()[0];
            Expr db = (*this)(b);
            if (db.is_zero()) {
                return Expr(0.0);
            }
            const Rational r = e.exponent();
            return product({Expr(r.value()), pow(b, Rational::make(r.num - r.den, r.den)), db});
        }
        case Op::Sin: {
            Expr da = (*this)(e.args()[0]);
            return da.is_zero() ? Expr(0.0) : product({cos(e.args()[0]), da});
        }
        case Op::Cos: {
            Expr da = (*this)(e.args()[0]);
            return da.is_zero() ? Expr(0.0) : negate(product({sin(e.args()[0]), da}));
        }
        case Op::Exp: {
            Expr da = (*this)(e.args()[0]);
            return da.is_zero() ? Expr(0.0) : product({e, da});
        }
        case Op::Negate:
            return negate((*this)(e.args()[0]));
        }
        throw Error("diff: unknown node");
    }

    std::string var_;
    std::unordered_map<const detail::Node *, Expr> memo_;
};

// Exact partial derivative; no check that `x` is a declared coordinate (see
// the domain-aware overload in domain.hpp).
inline Expr diff(const Expr &e, const std::string &x) { return Differentiator(x)(e); }

class Substituter {
public:
    explicit Substituter(std::unordered_map<std::string, Expr> bindings) : bindings_(std::move(bindings)) {}

    Expr operator()(const Expr &e)
    {
        if (auto it = memo_.find(e.id()); it != memo_.end()) {
            return it->second;
        }
        Expr r = compute(e);
        memo_.emplace(e.id(), r);
        return r;
    }

private:
    Expr compute(const Expr &e)
    {
        switch (e.op()) {
        case Op::Constant:
            return e;
        case Op::Variable: {
            auto it = bindings_.find(e.name());
            return it == bindings_.end() ? e : it->second;
        }
        case Op::Sum:
        case Op::Product: {
            std::vector<Expr> a;
            for (const auto &c : e.args()) {
                a.push_back((*this)(c));
            }
            return e.op() == Op::Sum ? sum(std::move(a)) : product(std::move(a));
        }
        case Op::Power:
            return pow((*this)(e.args()[0]), e.exponent());
        case Op::Sin:
            return sin((*this)(e.args()[0]));
        case Op::Cos:
            return cos((*this)(e.args()[0]));
        case Op::Exp:
            return exp((*this)(e.args()[0]));
        case Op::Negate:
            return negate((*this)(e.args()[0]));
        }
        throw Error("substitute: unknown node");
    }

    std::unordered_map<std::string, Expr> bindings_;
    std::unordered_map<const detail::Node *, Expr> memo_;
};

inline Expr substitute(const Expr &e, std::unordered_map<std::string, Expr> bindings)
{
    return Substituter(std::move(bindings))(e);
}

// ---------------------------------------------------------------------------
// Printing (round-trips through parse()).

namespace detail {
inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void print(const Expr &e, std::ostringstream &os)
{
    switch (e.op()) {
    case Op::Constant:
        if (e.value() < 0) {
            os << '(' << format_double(e.value()) << ')';
        } else {
            os << format_double(e.value());
        }
        return;
    case Op::Variable:
        os << e.name();
        return;
    case Op::Sum:
    case Op::Product: {
        os << '(';
        bool first = true;
        for (const auto &a : e.args()) {
            if (!first) {
                os << (e.op() == Op::Sum ? " + " : " * ");
            }
            first = false;
            print(a, os);
        }
        os << ')';
        return;
    }
    case Op::Power:
        os << '(';
        print(e.args()[0], os);
        os << ")^(" << e.exponent().num << '/' << e.exponent().den << ')';
        return;
    case Op::Sin:
    case Op::Cos:
    case Op::Exp:
        os << (e.op() == Op::Sin ? "sin(" : e.op() == Op::Cos ? "cos(" : "exp(");
        print(e.args()[0], os);
        os << ')';
        return;
    case Op::Negate:
        os << "(-";
        print(e.args()[0], os);
        os << ')';
        return;
    }
}
} // namespace detail

inline std::string to_string(const Expr &e)
{
    std::ostringstream os;
    detail::print(e, os);
    return os.str();
}

// ---------------------------------------------------------------------------
// Compiled evaluator: the DAG of one or more outputs flattened into a tape
// with variables resolved to slots of an ordered coordinate list.

class Tape {
public:
    Tape() = default;

    Tape(std::span<const Expr> outputs, std::span<const std::string> variables)
    {
        std::unordered_map<std::string, std::uint32_t> slots;
        for (std::uint32_t i = 0; i < variables.size(); ++i) {
            slots.emplace(variables[i], i);
        }
        n_vars_ = variables.size();
        std::unordered_map<const detail::Node *, std::uint32_t> seen;
        for (const auto &o : outputs) {
            outputs_.push_back(emit(o, slots, seen));
        }
    }

    [[nodiscard]] std::size_t output_count() const { return outputs_.size(); }
    [[nodiscard]] std::size_t variable_count() const { return n_vars_; }

    // Throws EvaluationError when any intermediate leaves its domain.
    void evaluate(std::span<const double> point, std::span<double> out) const
    {
        if (point.size() != n_vars_ || out.size() != outputs_.size()) {
            throw InputError("Tape::evaluate: size mismatch");
        }
        std::vector<double> w(code_.size());
        for (std::size_t i = 0; i < code_.size(); ++i) {
            const Instr &in = code_[i];
            switch (in.op) {
            case Op::Constant:
                w[i] = in.constant;
                break;
            case Op::Variable:
                w[i] = point[in.first];
                break;
            case Op::Sum: {
                double s = 0.0;
                for (std::uint32_t k = 0; k < in.count; ++k) {
                    s += w[operands_[in.first + k]];
                }
                w[i] = s;
                break;
            }
            case Op::Product: {
                double p = 1.0;
                for (std::uint32_t k = 0; k < in.count; ++k) {
                    p *= w[operands_[in.first + k]];
                }
                w[i] = p;
                break;
            }
            case Op::Power:
                w[i] = detail::power_value(w[in.first], in.exponent);
                break;
            default:
                w[i] = detail::unary_value(in.op, w[in.first]);
                break;
            }
        }
        for (std::size_t k = 0; k < outputs_.size(); ++k) {
            out[k] = w[outputs_[k]];
        }
    }

    [[nodiscard]] std::vector<double> operator()(std::span<const double> point) const
    {
        std::vector<double> out(outputs_.size());
        evaluate(point, out);
        return out;
    }

private:
    struct Instr {
        Op op;
        std::uint32_t first = 0;
        std::uint32_t count = 0;
        double constant = 0.0;
        Rational exponent;
    };

    std::uint32_t emit(const Expr &e, const std::unordered_map<std::string, std::uint32_t> &slots,
                       std::unordered_map<const detail::Node *, std::uint32_t> &seen)
    {
        if (auto it = seen.find(e.id()); it != seen.end()) {
            return it->second;
        }
        Instr in{e.op()};
        switch (e.op()) {
        case Op::Constant:
            in.constant = e.value();
            break;
        case Op::Variable: {
            auto it = slots.find(e.name());
            if (it == slots.end()) {
                throw InputError("unknown coordinate '" + e.name() + "' in expression");
            }
            in.first = it->second;
            break;
        }
        case Op::Sum:
        case Op::Product: {
            std::vector<std::uint32_t> kids;
            for (const auto &a : e.args()) {
                kids.push_back(emit(a, slots, seen));
            }
            in.first = static_cast<std::uint32_t>(operands_.size());
            in.count = static_cast<std::uint32_t>(kids.size());
            operands_.insert(operands_.end(), kids.begin(), kids.end());
            break;
        }
        case Op::Power:
            in.first = emit(e.args()[0], slots, seen);
            in.exponent = e.exponent();
            break;
        default:
            in.first = emit(e.args()[0], slots, seen);
            break;
        }
        code_.push_back(in);
        const auto idx = static_cast<std::uint32_t>(code_.size() - 1);
        seen.emplace(e.id(), idx);
        return idx;
    }

    std::vector<Instr> code_;
    std::vector<std::uint32_t> operands_;
    std::vector<std::uint32_t> outputs_;
    std::size_t n_vars_ = 0;
};

// Single-point convenience evaluation (compiles on every call).
inline double evaluate(const Expr &e, std::span<const std::string> variables, std::span<const double> point)
{
    Tape t(std::span<const Expr>(&e, 1), variables);
    double out = 0.0;
    t.evaluate(point, std::span<double>(&out, 1));
    return out;
}

// ---------------------------------------------------------------------------
// Parser for the infix grammar used by manifests:
//   expr   := term (('+'|'-') term)*
//   term   := unary (('*'|'/') unary)*
//   unary  := '-' unary | power
//   power  := atom ('^' unary)?        exponent must fold to a rational constant
//   atom   := number | name | func '(' expr ')' | '(' expr ')'
// Functions: sin cos exp sqrt. The name `pi` is the constant.

namespace detail {

inline Rational to_rational(double x)
{
    // Continued-fraction expansion; exponents in practice are small rationals.
    long h0 = 0, h1 = 1, k0 = 1, k1 = 0;
    double v = x;
    for (int i = 0; i < 40; ++i) {
        const double a = std::floor(v);
        const long ai = static_cast<long>(a);
        const long h2 = ai * h1 + h0;
        const long k2 = ai * k1 + k0;
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        if (k1 > 1000000) {
            break;
        }
        if (std::abs(static_cast<double>(h1) / static_cast<double>(k1) - x) < 1e-12) {
            return Rational::make(h1, k1);
        }
        const double frac = v - a;
        if (frac < 1e-15) {
            break;
        }
        v = 1.0 / frac;
    }
    if (k1 > 0 && std::abs(static_cast<double>(h1) / static_cast<double>(k1) - x) < 1e-12) {
        return Rational::make(h1, k1);
    }
    throw InputError("exponent " + format_double(x) + " is not a small rational");
}

class Parser {
public:
    explicit Parser(std::string_view text) : s_(text) {}

    Expr parse()
    {
        Expr e = expr();
        skip();
        if (pos_ != s_.size()) {
            fail("unexpected character '" + std::string(1, s_[pos_]) + "'");
        }
        return e;
    }

private:
    [[noreturn]] void fail(const std::string &msg) const
    {
        throw InputError("parse error at column " + std::to_string(pos_ + 1) + ": " + msg + " in \"" +
                         std::string(s_) + "\"");
    }

    void skip()
    {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) {
            ++pos_;
        }
    }

    bool accept(char c)
    {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    Expr expr()
    {
        Expr lhs = term();
        for (;;) {
            if (accept('+')) {
                lhs = lhs + term();
            } else if (accept('-')) {
                lhs = lhs - term();
            } else {
                return lhs;
            }
        }
    }

    Expr term()
    {
        Expr lhs = unary();
        for (;;) {
            if (accept('*')) {
                lhs = lhs * unary();
            } else if (accept('/')) {
                lhs = lhs / unary();
            } else {
                return lhs;
            }
        }
    }

    Expr unary()
    {
        if (accept('-')) {
            return -unary();
        }
        if (accept('+')) {
            return unary();
        }
        return power();
    }

    Expr power()
    {
        Expr base = atom();
        if (accept('^')) {
            Expr ex = unary();
            if (!ex.is_constant()) {
                fail("exponent must be a constant");
            }
            return pow(base, to_rational(ex.value()));
        }
        return base;
    }

    Expr atom()
    {
        skip();
        if (pos_ >= s_.size()) {
            fail("unexpected end of input");
        }
        const char c = s_[pos_];
        if (accept('(')) {
            Expr e = expr();
            if (!accept(')')) {
                fail("expected ')'");
            }
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            return number();
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
                ++pos_;
            }
            const std::string id(s_.substr(start, pos_ - start));
            if (id == "sin" || id == "cos" || id == "exp" || id == "sqrt") {
                if (!accept('(')) {
                    fail("expected '(' after " + id);
                }
                Expr a = expr();
                if (!accept(')')) {
                    fail("expected ')'");
                }
                if (id == "sin") {
                    return sin(a);
                }
                if (id == "cos") {
                    return cos(a);
                }
                if (id == "exp") {
                    return exp(a);
                }
                return sqrt(a);
            }
            if (id == "pi") {
                return Expr(pi);
            }
            return var(id);
        }
        fail("unexpected character '" + std::string(1, c) + "'");
    }

    Expr number()
    {
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) {
            ++pos_;
        }
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            std::size_t p = pos_ + 1;
            if (p < s_.size() && (s_[p] == '+' || s_[p] == '-')) {
                ++p;
            }
            if (p < s_.size() && std::isdigit(static_cast<unsigned char>(s_[p]))) {
                pos_ = p;
                while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                    ++pos_;
                }
            }
        }
        const std::string tok(s_.substr(start, pos_ - start));
        try {
            std::size_t used = 0;
            const double v = std::stod(tok, &used);
            if (used != tok.size()) {
                fail("malformed number '" + tok + "'");
            }
            return Expr(v);
        } catch (const std::logic_error &) {
            fail("malformed number '" + tok + "'");
        }
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline Expr parse(std::string_view text) { return detail::Parser(text).parse(); }

// Free variables, in first-occurrence order.
inline std::vector<std::string> free_variables(const Expr &e)
{
    std::vector<std::string> out;
    std::unordered_map<const detail::Node *, bool> seen;
    std::vector<Expr> stack{e};
    while (!stack.empty()) {
        Expr cur = stack.back();
        stack.pop_back();
        if (!seen.emplace(cur.id(), true).second) {
            continue;
        }
        if (cur.op() == Op::Variable) {
            if (std::find(out.begin(), out.end(), cur.name()) == out.end()) {
                out.push_back(cur.name());
            }
        }
        for (auto it = cur.args().rbegin(); it != cur.args().rend(); ++it) {
            stack.push_back(*it);
        }
    }
    return out;
}

} // namespace lcs
