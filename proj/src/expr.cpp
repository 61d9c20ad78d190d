#include "evansbif/expr.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <utility>

namespace evansbif::expr {

ParseError::ParseError(const std::string& message, std::size_t offset)
    : std::runtime_error(message + " at offset " + std::to_string(offset)), offset_(offset) {}

namespace {

struct FuncName {
    std::string_view name;
    int id;
};

constexpr std::array<FuncName, 9> kFunctions{{
    {"tanh", 0}, {"cosh", 1}, {"sinh", 2}, {"exp", 3}, {"log", 4},
    {"sqrt", 5}, {"abs", 6}, {"arctan", 7}, {"sign", 8},
}};

constexpr std::array<std::string_view, 9> kFunctionSpelling{
    "tanh", "cosh", "sinh", "exp", "log", "sqrt", "abs", "arctan", "sign"};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

double checked(double v, const char* what) {
    if (!std::isfinite(v)) throw EvalError(std::string("non-finite result in ") + what);
    return v;
}

} // namespace

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) {}

    Expression run() {
        out_.source_ = std::string(src_);
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError("empty expression", pos_);
        out_.root_ = parse_expr();
        skip_ws();
        if (pos_ < src_.size()) throw ParseError(std::string("unexpected character '") + src_[pos_] + "'", pos_);
        return std::move(out_);
    }

private:
    using Op = Expression::Op;
    using Node = Expression::Node;

    int add(Node n) {
        out_.nodes_.push_back(n);
        return static_cast<int>(out_.nodes_.size()) - 1;
    }

    int binary(Op op, int lhs, int rhs) {
        Node n;
        n.op = op;
        n.lhs = lhs;
        n.rhs = rhs;
        return add(n);
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    int parse_expr() {
        int lhs = parse_term();
        for (;;) {
            if (accept('+')) lhs = binary(Op::Add, lhs, parse_term());
            else if (accept('-')) lhs = binary(Op::Sub, lhs, parse_term());
            else return lhs;
        }
    }

    int parse_term() {
        int lhs = parse_unary();
        for (;;) {
            if (accept('*')) lhs = binary(Op::Mul, lhs, parse_unary());
            else if (accept('/')) lhs = binary(Op::Div, lhs, parse_unary());
            else return lhs;
        }
    }

    int parse_unary() {
        if (accept('-')) {
            Node n;
            n.op = Op::Neg;
            n.lhs = parse_unary();
            return add(n);
        }
        if (accept('+')) return parse_unary();
        return parse_power();
    }

    int parse_power() {
        int base = parse_primary();
        if (accept('^')) return binary(Op::Pow, base, parse_unary());
        return base;
    }

    int parse_primary() {
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError("unexpected end of expression", pos_);
        const char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            int inner = parse_expr();
            if (!accept(')')) throw ParseError("expected ')'", pos_);
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (is_ident_start(c)) return parse_identifier();
        throw ParseError(std::string("unexpected character '") + c + "'", pos_);
    }

    int parse_number() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) ++pos_;
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t look = pos_ + 1;
            if (look < src_.size() && (src_[look] == '+' || src_[look] == '-')) ++look;
            if (look < src_.size() && std::isdigit(static_cast<unsigned char>(src_[look]))) {
                pos_ = look;
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            }
        }
        double value = 0.0;
        const char* first = src_.data() + start;
        const char* last = src_.data() + pos_;
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc() || ptr != last) throw ParseError("malformed number", start);
        Node n;
        n.op = Op::Constant;
        n.value = value;
        return add(n);
    }

    int parse_identifier() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && is_ident_char(src_[pos_])) ++pos_;
        const std::string_view name = src_.substr(start, pos_ - start);

        for (const auto& f : kFunctions) {
            if (f.name != name) continue;
            if (!accept('(')) throw ParseError("function '" + std::string(name) + "' requires an argument list", pos_);
            if (accept(')')) throw ParseError("function '" + std::string(name) + "' expects 1 argument, got 0", pos_);
            int arg = parse_expr();
            std::size_t extra = 0;
            while (accept(',')) {
                parse_expr();
                ++extra;
            }
            if (extra > 0)
                throw ParseError("function '" + std::string(name) + "' expects 1 argument, got " + std::to_string(extra + 1), start);
            if (!accept(')')) throw ParseError("expected ')'", pos_);
            Node n;
            n.op = Op::Call;
            n.func = static_cast<Expression::Func>(f.id);
            n.lhs = arg;
            return add(n);
        }

        Node n;
        if (name == "t") {
            n.op = Op::Time;
        } else if (name == "lambda") {
            n.op = Op::Lambda;
        } else if (name == "pi") {
            n.op = Op::Constant;
            n.value = std::numbers::pi;
        } else if (name.size() > 1 && name[0] == 'x' && name[1] != '0') {
            int k = 0;
            auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), k);
            if (ec != std::errc() || ptr != name.data() + name.size() || k < 1)
                throw ParseError("unknown identifier '" + std::string(name) + "'", start);
            n.op = Op::State;
            n.index = k;
            out_.max_state_index_ = std::max(out_.max_state_index_, k);
        } else {
            throw ParseError("unknown identifier '" + std::string(name) + "'", start);
        }
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == '(')
            throw ParseError("'" + std::string(name) + "' is not a function", pos_);
        return add(n);
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    Expression out_;
};

Expression Expression::parse(std::string_view source) {
    return Parser(source).run();
}

double Expression::evaluate(const Bindings& bindings) const {
    Env env;
    env.named = &bindings;
    return eval_node(root_, env);
}

double Expression::evaluate(double t, double lambda, std::span<const double> x) const {
    if (static_cast<std::size_t>(max_state_index_) > x.size())
        throw EvalError("expression references x" + std::to_string(max_state_index_) + " but only " +
                        std::to_string(x.size()) + " state components are bound");
    Env env;
    env.t = t;
    env.lambda = lambda;
    env.x = x;
    return eval_node(root_, env);
}

double Expression::eval_node(int id, const Env& env) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    auto lookup = [&](const std::string& name) {
        auto it = env.named->find(name);
        if (it == env.named->end()) throw EvalError("unbound variable '" + name + "'");
        return it->second;
    };
    switch (n.op) {
    case Op::Constant:
        return n.value;
    case Op::Time:
        return env.named ? lookup("t") : env.t;
    case Op::Lambda:
        return env.named ? lookup("lambda") : env.lambda;
    case Op::State:
        return env.named ? lookup("x" + std::to_string(n.index)) : env.x[static_cast<std::size_t>(n.index - 1)];
    case Op::Neg:
        return -eval_node(n.lhs, env);
    case Op::Add:
        return checked(eval_node(n.lhs, env) + eval_node(n.rhs, env), "addition");
    case Op::Sub:
        return checked(eval_node(n.lhs, env) - eval_node(n.rhs, env), "subtraction");
    case Op::Mul:
        return checked(eval_node(n.lhs, env) * eval_node(n.rhs, env), "multiplication");
    case Op::Div: {
        const double num = eval_node(n.lhs, env);
        const double den = eval_node(n.rhs, env);
        if (den == 0.0) throw EvalError("division by zero");
        return checked(num / den, "division");
    }
    case Op::Pow: {
        const double base = eval_node(n.lhs, env);
        const double ex = eval_node(n.rhs, env);
        if (base < 0.0 && std::trunc(ex) != ex) throw EvalError("negative base with non-integer exponent");
        if (base == 0.0 && ex < 0.0) throw EvalError("zero raised to a negative power");
        return checked(std::pow(base, ex), "power");
    }
    case Op::Call: {
        const double a = eval_node(n.lhs, env);
        switch (n.func) {
        case Func::Tanh: return std::tanh(a);
        case Func::Cosh: return checked(std::cosh(a), "cosh");
        case Func::Sinh: return checked(std::sinh(a), "sinh");
        case Func::Exp: return checked(std::exp(a), "exp");
        case Func::Log:
            if (a <= 0.0) throw EvalError("log of nonpositive argument");
            return std::log(a);
        case Func::Sqrt:
            if (a < 0.0) throw EvalError("sqrt of negative argument");
            return std::sqrt(a);
        case Func::Abs: return std::fabs(a);
        case Func::Arctan: return std::atan(a);
        case Func::Sign: return a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0);
        }
    }
    }
    throw EvalError("corrupt expression tree");
}

std::set<std::string> Expression::free_variables() const {
    std::set<std::string> vars;
    for (const auto& n : nodes_) {
        if (n.op == Op::Time) vars.insert("t");
        else if (n.op == Op::Lambda) vars.insert("lambda");
        else if (n.op == Op::State) vars.insert("x" + std::to_string(n.index));
    }
    return vars;
}

std::string Expression::to_string() const {
    std::string out;
    print_node(root_, out);
    return out;
}

void Expression::print_node(int id, std::string& out) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    auto infix = [&](char op) {
        out += '(';
        print_node(n.lhs, out);
        out += ' ';
        out += op;
        out += ' ';
        print_node(n.rhs, out);
        out += ')';
    };
    switch (n.op) {
    case Op::Constant: {
        std::array<char, 64> buf{};
        auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), n.value);
        out.append(buf.data(), ptr);
        return;
    }
    case Op::Time: out += 't'; return;
    case Op::Lambda: out += "lambda"; return;
    case Op::State: out += 'x' + std::to_string(n.index); return;
    case Op::Neg:
        out += "(-";
        print_node(n.lhs, out);
        out += ')';
        return;
    case Op::Add: infix('+'); return;
    case Op::Sub: infix('-'); return;
    case Op::Mul: infix('*'); return;
    case Op::Div: infix('/'); return;
    case Op::Pow: infix('^'); return;
    case Op::Call:
        out += kFunctionSpelling[static_cast<std::size_t>(n.func)];
        out += '(';
        print_node(n.lhs, out);
        out += ')';
        return;
    }
}

} // namespace evansbif::expr
