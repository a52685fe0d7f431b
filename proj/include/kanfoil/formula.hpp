#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace kanfoil {

/// Pointwise functions available to symbolic fits, in library order
/// (simpler first; lower index wins ties).
enum class UnaryFn { identity, square, cube, sqrt, exp, log, sin, cos, tanh, abs, reciprocal };

inline constexpr std::size_t kUnaryFnCount = 11;

std::string_view unary_name(UnaryFn f) noexcept;
UnaryFn parse_unary(std::string_view name);
/// The domain guard: false where f(u) is undefined.
bool unary_defined(UnaryFn f, double u) noexcept;
double apply_unary(UnaryFn f, double u) noexcept;

struct FormulaNode;
using Formula = std::shared_ptr<const FormulaNode>;

/// Expression tree. Affine(a, b, x) means a * x + b. Product only appears in
/// derivatives.
struct FormulaNode {
    enum class Kind { constant, variable, affine, unary, sum, product };

    Kind kind = Kind::constant;
    double value = 0.0; ///< constant
    double a = 1.0;     ///< affine slope
    double b = 0.0;     ///< affine offset
    std::string name;   ///< variable name
    UnaryFn fn = UnaryFn::identity;
    std::vector<Formula> args;
};

Formula make_const(double v);
Formula make_var(std::string name);
Formula make_affine(double a, double b, Formula x);
Formula make_unary(UnaryFn f, Formula x);
Formula make_sum(std::vector<Formula> terms);
Formula make_product(std::vector<Formula> factors);

using Bindings = std::map<std::string, double, std::less<>>;

/// Exact recursive evaluation. Throws UnboundVariable, or EvalDomainError
/// naming the offending subtree when a guard fails.
double eval_formula(const Formula& f, const Bindings& vars);

/// Affine folding only: composes nested affines, distributes affines over sums,
/// drops identity functions and merges constants. No algebraic rewriting.
Formula fold(const Formula& f);

/// d f / d var by sum, product and chain rules, then fold().
Formula derivative(const Formula& f, std::string_view var);

/// Infix text with coefficients at `precision` decimal places.
std::string render(const Formula& f, int precision = 2);
/// Same layout with LaTeX function names.
std::string render_latex(const Formula& f, int precision = 2);
/// Operator/function layout with every number replaced by '#'.
std::string skeleton(const Formula& f);

/// Lossless canonical JSON: {"node": kind, ..., "args": [...]}.
nlohmann::json to_json(const Formula& f);
Formula formula_from_json(const nlohmann::json& j);

bool structurally_equal(const Formula& x, const Formula& y);

std::vector<std::string> variables(const Formula& f);

/// True for the shape const + const * f(sum of terms): either
/// Affine(a, b, Unary(f, Sum)) or Sum[Const, Affine(a, 0, Unary(f, Sum))].
bool has_outer_unary_of_sum(const Formula& f);

} // namespace kanfoil
