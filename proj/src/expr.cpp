#include "carnot/expr.hpp"

#include <cctype>
#include <cmath>
#include <functional>
#include <vector>

namespace carnot {

struct Expression::Node {
    enum class Kind { Const, Time, Coord, Unary, Binary } kind;
    double value = 0.0;
    int coord = 0;
    char op = 0;                       // + - * / ^ for Binary, function id for Unary
    std::string func;
    std::shared_ptr<const Node> a, b;

    double eval(double t, const Point& x) const {
        switch (kind) {
            case Kind::Const: return value;
            case Kind::Time: return t;
            case Kind::Coord: return x[coord];
            case Kind::Unary: {
                double v = a->eval(t, x);
                if (func == "-") return -v;
                if (func == "sin") return std::sin(v);
                if (func == "cos") return std::cos(v);
                if (func == "tan") return std::tan(v);
                if (func == "exp") return std::exp(v);
                if (func == "log") return std::log(v);
                if (func == "sqrt") return std::sqrt(v);
                if (func == "abs") return std::abs(v);
                if (func == "tanh") return std::tanh(v);
                throw ExprError("unknown function " + func);
            }
            case Kind::Binary: {
                double u = a->eval(t, x), v = b->eval(t, x);
                switch (op) {
                    case '+': return u + v;
                    case '-': return u - v;
                    case '*': return u * v;
                    case '/': return u / v;
                    case '^': return std::pow(u, v);
                }
                throw ExprError("bad operator");
            }
        }
        throw ExprError("corrupt node");
    }
};

namespace {

struct Parser {
    const std::string& s;
    std::size_t pos = 0;
    int dim;

    using NodePtr = std::shared_ptr<const Expression::Node>;
    using Node = Expression::Node;

    void skip() {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool eat(char c) {
        skip();
        if (pos < s.size() && s[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }
    char peek() {
        skip();
        return pos < s.size() ? s[pos] : '\0';
    }

    NodePtr make_const(double v) {
        auto n = std::make_shared<Node>();
        n->kind = Node::Kind::Const;
        n->value = v;
        return n;
    }

    NodePtr expr() {
        NodePtr lhs = term();
        for (;;) {
            char c = peek();
            if (c != '+' && c != '-') return lhs;
            ++pos;
            NodePtr rhs = term();
            auto n = std::make_shared<Node>();
            n->kind = Node::Kind::Binary;
            n->op = c;
            n->a = lhs;
            n->b = rhs;
            lhs = n;
        }
    }

    NodePtr term() {
        NodePtr lhs = unary();
        for (;;) {
            char c = peek();
            if (c != '*' && c != '/') return lhs;
            ++pos;
            NodePtr rhs = unary();
            auto n = std::make_shared<Node>();
            n->kind = Node::Kind::Binary;
            n->op = c;
            n->a = lhs;
            n->b = rhs;
            lhs = n;
        }
    }

    NodePtr unary() {
        if (eat('-')) {
            auto n = std::make_shared<Node>();
            n->kind = Node::Kind::Unary;
            n->func = "-";
            n->a = unary();
            return n;
        }
        return power();
    }

    NodePtr power() {
        NodePtr base = atom();
        if (peek() == '^') {
            ++pos;
            NodePtr e = unary();  // right-associative
            auto n = std::make_shared<Node>();
            n->kind = Node::Kind::Binary;
            n->op = '^';
            n->a = base;
            n->b = e;
            return n;
        }
        return base;
    }

    NodePtr atom() {
        skip();
        if (pos >= s.size()) throw ExprError("unexpected end of input");
        char c = s[pos];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t used = 0;
            double v = std::stod(s.substr(pos), &used);
            pos += used;
            return make_const(v);
        }
        if (c == '(') {
            ++pos;
            NodePtr inner = expr();
            if (!eat(')')) throw ExprError("missing ')'");
            return inner;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t start = pos;
            while (pos < s.size() &&
                   (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
                ++pos;
            std::string word = s.substr(start, pos - start);
            if (word == "pi") return make_const(3.14159265358979323846);
            if (word == "t") {
                auto n = std::make_shared<Node>();
                n->kind = Node::Kind::Time;
                return n;
            }
            if (word.size() >= 2 && word[0] == 'x') {
                bool digits = true;
                for (std::size_t i = 1; i < word.size(); ++i)
                    if (!std::isdigit(static_cast<unsigned char>(word[i]))) digits = false;
                if (digits) {
                    int idx = std::stoi(word.substr(1));
                    if (idx < 1 || idx > dim)
                        throw ExprError("coordinate " + word + " outside x1..x" +
                                        std::to_string(dim));
                    auto n = std::make_shared<Node>();
                    n->kind = Node::Kind::Coord;
                    n->coord = idx - 1;
                    return n;
                }
            }
            // function call
            if (!eat('(')) throw ExprError("unknown identifier '" + word + "'");
            NodePtr inner = expr();
            if (!eat(')')) throw ExprError("missing ')' after " + word);
            auto n = std::make_shared<Node>();
            n->kind = Node::Kind::Unary;
            n->func = word;
            n->a = inner;
            // validate the function name eagerly
            static const char* ok[] = {"sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh"};
            bool found = false;
            for (const char* f : ok)
                if (word == f) found = true;
            if (!found) throw ExprError("unknown function '" + word + "'");
            return n;
        }
        throw ExprError(std::string("unexpected character '") + c + "'");
    }
};

}  // namespace

Expression Expression::parse(const std::string& text, int dim) {
    Parser p{text, 0, dim};
    auto root = p.expr();
    p.skip();
    if (p.pos != text.size()) throw ExprError("trailing input at position " + std::to_string(p.pos));
    return ExprParserAccess::make(root, text);
}

Expression::Expression(std::shared_ptr<const Node> root, std::string text)
    : root_(std::move(root)), text_(std::move(text)) {}

double Expression::eval(double t, const Point& x) const { return root_->eval(t, x); }

Expression::Expression(Expression&&) noexcept = default;
Expression& Expression::operator=(Expression&&) noexcept = default;
Expression::Expression(const Expression&) = default;
Expression& Expression::operator=(const Expression&) = default;
Expression::~Expression() = default;

}  // namespace carnot
