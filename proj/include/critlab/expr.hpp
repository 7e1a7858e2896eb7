#pragma once

// Field expression language for experiment configs. Grammar (whitespace
// insignificant):
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := base ('^' number)?
//   base   := number | ident | ident '(' args ')' | '(' expr ')' | '-' base
//   ident  in { r, x1..xn, pi, const, cos, sin, exp, abs, min, max }
// r is the geodesic distance to the base point (pole / torus origin);
// x1..xn are torus coordinates.

#include <cctype>
#include <memory>
#include <string>
#include <vector>

#include "critlab/manifold.hpp"

namespace critlab {

struct SyntaxError : ConfigError {
    std::size_t position;
    std::string expected;
    SyntaxError(std::size_t pos, const std::string& what)
        : ConfigError("syntax error at position " + std::to_string(pos) + ": expected " + what),
          position(pos), expected(what) {}
};

struct UnknownIdentifier : ConfigError {
    explicit UnknownIdentifier(const std::string& name)
        : ConfigError("unknown identifier '" + name + "'") {}
};

namespace expr {

struct Node;
using NodePtr = std::unique_ptr<Node>;

enum class Op { Number, Var, Add, Sub, Mul, Div, Pow, Neg, Call };

struct Node {
    Op op = Op::Number;
    double number = 0.0;
    int var_index = -1;  // -1 => r
    std::string name;    // call name
    std::vector<NodePtr> args;
    NodePtr lhs, rhs;
};

class Parser {
  public:
    Parser(std::string src, int dim) : src_(std::move(src)), dim_(dim) {}

    NodePtr parse() {
        NodePtr e = parse_expr();
        skip_ws();
        if (pos_ != src_.size()) throw SyntaxError(pos_, "end of input");
        return e;
    }

  private:
    std::string src_;
    std::size_t pos_ = 0;
    int dim_;

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }
    bool peek(char c) {
        skip_ws();
        return pos_ < src_.size() && src_[pos_] == c;
    }
    bool accept(char c) {
        if (peek(c)) {
            ++pos_;
            return true;
        }
        return false;
    }
    void expect(char c) {
        if (!accept(c)) throw SyntaxError(pos_, std::string("'") + c + "'");
    }

    NodePtr parse_expr() {
        NodePtr lhs = parse_term();
        for (;;) {
            if (accept('+')) {
                NodePtr n = std::make_unique<Node>();
                n->op = Op::Add;
                n->lhs = std::move(lhs);
                n->rhs = parse_term();
                lhs = std::move(n);
            } else if (accept('-')) {
                NodePtr n = std::make_unique<Node>();
                n->op = Op::Sub;
                n->lhs = std::move(lhs);
                n->rhs = parse_term();
                lhs = std::move(n);
            } else {
                return lhs;
            }
        }
    }

    NodePtr parse_term() {
        NodePtr lhs = parse_factor();
        for (;;) {
            if (accept('*')) {
                NodePtr n = std::make_unique<Node>();
                n->op = Op::Mul;
                n->lhs = std::move(lhs);
                n->rhs = parse_factor();
                lhs = std::move(n);
            } else if (accept('/')) {
                NodePtr n = std::make_unique<Node>();
                n->op = Op::Div;
                n->lhs = std::move(lhs);
                n->rhs = parse_factor();
                lhs = std::move(n);
            } else {
                return lhs;
            }
        }
    }

    NodePtr parse_factor() {
        NodePtr b = parse_base();
        if (accept('^')) {
            NodePtr n = std::make_unique<Node>();
            n->op = Op::Pow;
            n->lhs = std::move(b);
            n->rhs = parse_number();
            return n;
        }
        return b;
    }

    NodePtr parse_number() {
        skip_ws();
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.' ||
                src_[pos_] == 'e' || src_[pos_] == 'E' ||
                ((src_[pos_] == '+' || src_[pos_] == '-') && pos_ > start &&
                 (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E'))))
            ++pos_;
        if (pos_ == start) throw SyntaxError(pos_, "number");
        NodePtr n = std::make_unique<Node>();
        n->op = Op::Number;
        try {
            n->number = std::stod(src_.substr(start, pos_ - start));
        } catch (...) {
            throw SyntaxError(start, "number");
        }
        return n;
    }

    NodePtr parse_base() {
        skip_ws();
        if (pos_ >= src_.size()) throw SyntaxError(pos_, "expression");
        const char c = src_[pos_];
        if (c == '-') {
            ++pos_;
            NodePtr n = std::make_unique<Node>();
            n->op = Op::Neg;
            n->lhs = parse_base();
            return n;
        }
        if (c == '(') {
            ++pos_;
            NodePtr e = parse_expr();
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c))) return parse_ident();
        throw SyntaxError(pos_, "expression");
    }

    NodePtr parse_ident() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        const std::string name = src_.substr(start, pos_ - start);
        if (name == "pi") {
            NodePtr n = std::make_unique<Node>();
            n->op = Op::Number;
            n->number = kPi;
            return n;
        }
        if (name == "r") {
            NodePtr n = std::make_unique<Node>();
            n->op = Op::Var;
            n->var_index = -1;
            return n;
        }
        if (name.size() >= 2 && name[0] == 'x') {
            bool digits = true;
            for (std::size_t i = 1; i < name.size(); ++i)
                if (!std::isdigit(static_cast<unsigned char>(name[i]))) digits = false;
            if (digits) {
                const int idx = std::atoi(name.c_str() + 1);
                if (idx < 1 || idx > dim_) throw UnknownIdentifier(name);
                NodePtr n = std::make_unique<Node>();
                n->op = Op::Var;
                n->var_index = idx - 1;
                return n;
            }
        }
        static const std::vector<std::string> fns = {"const", "cos", "sin",
                                                     "exp",   "abs", "min", "max"};
        bool known = false;
        for (const auto& f : fns) known = known || f == name;
        if (!known) throw UnknownIdentifier(name);
        NodePtr n = std::make_unique<Node>();
        n->op = Op::Call;
        n->name = name;
        expect('(');
        if (!peek(')')) {
            n->args.push_back(parse_expr());
            while (accept(',')) n->args.push_back(parse_expr());
        }
        expect(')');
        const std::size_t want = (name == "min" || name == "max") ? 2 : 1;
        if (n->args.size() != want)
            throw SyntaxError(pos_, name + " with " + std::to_string(want) + " argument(s)");
        return n;
    }
};

struct EvalContext {
    double r = 0.0;
    const std::vector<double>* x = nullptr;  // torus coords, when present
};

inline double eval(const Node& n, const EvalContext& ctx) {
    switch (n.op) {
        case Op::Number: return n.number;
        case Op::Var:
            if (n.var_index < 0) return ctx.r;
            if (!ctx.x) throw UnknownIdentifier("x" + std::to_string(n.var_index + 1));
            return (*ctx.x)[n.var_index];
        case Op::Add: return eval(*n.lhs, ctx) + eval(*n.rhs, ctx);
        case Op::Sub: return eval(*n.lhs, ctx) - eval(*n.rhs, ctx);
        case Op::Mul: return eval(*n.lhs, ctx) * eval(*n.rhs, ctx);
        case Op::Div: return eval(*n.lhs, ctx) / eval(*n.rhs, ctx);
        case Op::Pow: return std::pow(eval(*n.lhs, ctx), n.rhs->number);
        case Op::Neg: return -eval(*n.lhs, ctx);
        case Op::Call: {
            if (n.name == "const") return eval(*n.args[0], ctx);
            if (n.name == "cos") return std::cos(eval(*n.args[0], ctx));
            if (n.name == "sin") return std::sin(eval(*n.args[0], ctx));
            if (n.name == "exp") return std::exp(eval(*n.args[0], ctx));
            if (n.name == "abs") return std::abs(eval(*n.args[0], ctx));
            if (n.name == "min") return std::min(eval(*n.args[0], ctx), eval(*n.args[1], ctx));
            if (n.name == "max") return std::max(eval(*n.args[0], ctx), eval(*n.args[1], ctx));
            throw UnknownIdentifier(n.name);
        }
    }
    throw ConfigError("expr: bad node");
}

}  // namespace expr

/// Parse and sample a field expression over the manifold grid.
inline Field parse_field_expr(const std::string& src, const ManifoldPtr& m) {
    expr::Parser parser(src, m->dim);
    expr::NodePtr root = parser.parse();
    Field f = make_field(m);
    if (m->is_radial()) {
        expr::EvalContext ctx;
        for (std::size_t i = 0; i < f.size(); ++i) {
            ctx.r = m->r_at(i);
            f.v[i] = expr::eval(*root, ctx);
        }
        f.sym = Symmetry::Radial;
    } else {
        std::vector<double> x;
        std::vector<double> origin(m->dim, 0.0);
        expr::EvalContext ctx;
        for (std::size_t i = 0; i < f.size(); ++i) {
            m->coords_of(i, x);
            ctx.x = &x;
            ctx.r = m->torus_distance(x, origin);
            f.v[i] = expr::eval(*root, ctx);
        }
    }
    return f;
}

}  // namespace critlab
