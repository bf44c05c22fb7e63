#ifndef CARNOT_EXPR_HPP
#define CARNOT_EXPR_HPP

#include <memory>
#include <string>

#include "carnot/group.hpp"

namespace carnot {

// Small arithmetic expression language for data specs:
//   expr   := term (('+'|'-') term)*
//   term   := unary (('*'|'/') unary)*
//   unary  := '-' unary | power
//   power  := atom ('^' unary)?
//   atom   := number | 'pi' | 't' | 'x1'..'xN'
//           | func '(' expr ')' | '(' expr ')'
//   func   := sin | cos | tan | exp | log | sqrt | abs | tanh
// Variables: coordinates x1..xN and time t.
class Expression {
public:
    static Expression parse(const std::string& text, int dim);

    double eval(double t, const Point& x) const;
    const std::string& text() const { return text_; }

    Expression(Expression&&) noexcept;
    Expression& operator=(Expression&&) noexcept;
    Expression(const Expression&);
    Expression& operator=(const Expression&);
    ~Expression();

    struct Node;  // exposed for the parser implementation

private:
    explicit Expression(std::shared_ptr<const Node> root, std::string text);
    std::shared_ptr<const Node> root_;
    std::string text_;

    friend struct ExprParserAccess;
};

// implementation hook: constructs expressions from parsed trees
struct ExprParserAccess {
    static Expression make(std::shared_ptr<const Expression::Node> root, std::string text) {
        return Expression(std::move(root), std::move(text));
    }
};

struct ExprError : Error {
    explicit ExprError(const std::string& msg) : Error("expr: " + msg) {}
};

}  // namespace carnot

#endif
