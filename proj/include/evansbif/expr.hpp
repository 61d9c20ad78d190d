#pragma once

// Scalar expression language used by custom model definitions.
//
//   expr    := term   { ('+' | '-') term }
//   term    := unary  { ('*' | '/') unary }
//   unary   := ('-' | '+') unary | power
//   power   := primary [ '^' unary ]          (right associative)
//   primary := number | variable | constant | func '(' expr ')' | '(' expr ')'
//
// Variables: t, lambda, x1 .. xd.  Constant: pi.
// Functions: tanh cosh sinh exp log sqrt abs arctan sign.

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace evansbif::expr {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& message, std::size_t offset);
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Bindings = std::map<std::string, double, std::less<>>;

class Expression {
public:
    static Expression parse(std::string_view source);

    double evaluate(const Bindings& bindings) const;
    double evaluate(double t, double lambda, std::span<const double> x) const;

    /// Subset of {"t", "lambda", "x1", ...} referenced by the expression.
    std::set<std::string> free_variables() const;
    /// Largest k such that xk appears, 0 if no state variable is used.
    int max_state_index() const noexcept { return max_state_index_; }

    /// Fully parenthesized form; reparses to an equivalent tree.
    std::string to_string() const;
    const std::string& source() const noexcept { return source_; }

private:
    enum class Op : std::uint8_t { Constant, Time, Lambda, State, Neg, Add, Sub, Mul, Div, Pow, Call };
    enum class Func : std::uint8_t { Tanh, Cosh, Sinh, Exp, Log, Sqrt, Abs, Arctan, Sign };

    struct Node {
        Op op = Op::Constant;
        Func func = Func::Tanh;
        double value = 0.0;
        int index = 0;
        int lhs = -1;
        int rhs = -1;
    };

    struct Env {
        double t = 0.0;
        double lambda = 0.0;
        std::span<const double> x;
        const Bindings* named = nullptr;
    };

    friend class Parser;

    double eval_node(int id, const Env& env) const;
    void print_node(int id, std::string& out) const;

    std::vector<Node> nodes_;
    int root_ = -1;
    int max_state_index_ = 0;
    std::string source_;
};

} // namespace evansbif::expr
