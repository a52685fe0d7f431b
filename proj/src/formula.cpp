#include "kanfoil/formula.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <set>

#include "kanfoil/error.hpp"

namespace kanfoil {

namespace {

constexpr std::array<std::string_view, kUnaryFnCount> kUnaryNames = {
    "identity", "square", "cube", "sqrt", "exp", "log", "sin", "cos", "tanh", "abs", "reciprocal"};

// exp overflows double beyond this
constexpr double kExpMaxArg = 700.0;

std::shared_ptr<FormulaNode> node(FormulaNode::Kind k) {
    auto n = std::make_shared<FormulaNode>();
    n->kind = k;
    return n;
}

bool is_const(const Formula& f) { return f->kind == FormulaNode::Kind::constant; }

} // namespace

std::string_view unary_name(UnaryFn f) noexcept { return kUnaryNames[static_cast<std::size_t>(f)]; }

UnaryFn parse_unary(std::string_view name) {
    for (std::size_t i = 0; i < kUnaryNames.size(); ++i)
        if (kUnaryNames[i] == name) return static_cast<UnaryFn>(i);
    throw FormatError("unknown function '" + std::string(name) + "'");
}

bool unary_defined(UnaryFn f, double u) noexcept {
    if (!std::isfinite(u)) return false;
    switch (f) {
    case UnaryFn::sqrt: return u >= 0.0;
    case UnaryFn::log: return u > 0.0;
    case UnaryFn::reciprocal: return u != 0.0;
    case UnaryFn::exp: return u <= kExpMaxArg;
    default: return true;
    }
}

double apply_unary(UnaryFn f, double u) noexcept {
    switch (f) {
    case UnaryFn::identity: return u;
    case UnaryFn::square: return u * u;
    case UnaryFn::cube: return u * u * u;
    case UnaryFn::sqrt: return std::sqrt(u);
    case UnaryFn::exp: return std::exp(u);
    case UnaryFn::log: return std::log(u);
    case UnaryFn::sin: return std::sin(u);
    case UnaryFn::cos: return std::cos(u);
    case UnaryFn::tanh: return std::tanh(u);
    case UnaryFn::abs: return std::abs(u);
    case UnaryFn::reciprocal: return 1.0 / u;
    }
    return NAN;
}

// construction ---------------------------------------------------------------

Formula make_const(double v) {
    auto n = node(FormulaNode::Kind::constant);
    n->value = v;
    return n;
}

Formula make_var(std::string name) {
    auto n = node(FormulaNode::Kind::variable);
    n->name = std::move(name);
    return n;
}

Formula make_affine(double a, double b, Formula x) {
    auto n = node(FormulaNode::Kind::affine);
    n->a = a;
    n->b = b;
    n->args.push_back(std::move(x));
    return n;
}

Formula make_unary(UnaryFn f, Formula x) {
    auto n = node(FormulaNode::Kind::unary);
    n->fn = f;
    n->args.push_back(std::move(x));
    return n;
}

Formula make_sum(std::vector<Formula> terms) {
    auto n = node(FormulaNode::Kind::sum);
    n->args = std::move(terms);
    return n;
}

Formula make_product(std::vector<Formula> factors) {
    auto n = node(FormulaNode::Kind::product);
    n->args = std::move(factors);
    return n;
}

// evaluation -----------------------------------------------------------------

double eval_formula(const Formula& f, const Bindings& vars) {
    using K = FormulaNode::Kind;
    switch (f->kind) {
    case K::constant: return f->value;
    case K::variable: {
        auto it = vars.find(f->name);
        if (it == vars.end()) throw UnboundVariable(f->name);
        return it->second;
    }
    case K::affine: return f->a * eval_formula(f->args[0], vars) + f->b;
    case K::unary: {
        const double u = eval_formula(f->args[0], vars);
        if (!unary_defined(f->fn, u)) throw EvalDomainError(render(f, 6));
        return apply_unary(f->fn, u);
    }
    case K::sum: {
        double acc = 0.0;
        for (const auto& t : f->args) acc += eval_formula(t, vars);
        return acc;
    }
    case K::product: {
        double acc = 1.0;
        for (const auto& t : f->args) acc *= eval_formula(t, vars);
        return acc;
    }
    }
    return NAN;
}

// folding --------------------------------------------------------------------

namespace {

Formula fold_sum(std::vector<Formula> terms) {
    using K = FormulaNode::Kind;
    std::vector<Formula> flat;
    double constant = 0.0;
    std::vector<Formula> pending(terms.rbegin(), terms.rend());
    while (!pending.empty()) {
        auto t = pending.back();
        pending.pop_back();
        if (t->kind == K::sum) {
            for (auto it = t->args.rbegin(); it != t->args.rend(); ++it) pending.push_back(*it);
        } else if (t->kind == K::constant) {
            constant += t->value;
        } else if (t->kind == K::affine && t->b != 0.0) {
            constant += t->b;
            flat.push_back(t->a == 1.0 ? t->args[0] : make_affine(t->a, 0.0, t->args[0]));
        } else {
            flat.push_back(t);
        }
    }
    if (flat.empty()) return make_const(constant);
    if (flat.size() == 1) {
        if (constant == 0.0) return flat[0];
        const auto& t = flat[0];
        if (t->kind == K::affine) return make_affine(t->a, constant, t->args[0]);
        return make_affine(1.0, constant, t);
    }
    if (constant != 0.0) flat.push_back(make_const(constant));
    return make_sum(std::move(flat));
}

Formula fold_affine(double a, double b, const Formula& x) {
    using K = FormulaNode::Kind;
    if (a == 0.0) return make_const(b);
    switch (x->kind) {
    case K::constant: return make_const(a * x->value + b);
    case K::affine: return fold_affine(a * x->a, a * x->b + b, x->args[0]);
    case K::sum: {
        std::vector<Formula> terms;
        for (const auto& t : x->args) terms.push_back(fold_affine(a, 0.0, t));
        if (b != 0.0) terms.push_back(make_const(b));
        return fold_sum(std::move(terms));
    }
    default:
        if (a == 1.0 && b == 0.0) return x;
        return make_affine(a, b, x);
    }
}

Formula fold_product(std::vector<Formula> factors) {
    using K = FormulaNode::Kind;
    double scale = 1.0;
    std::vector<Formula> rest;
    for (const auto& f : factors) {
        if (f->kind == K::constant) {
            scale *= f->value;
        } else if (f->kind == K::affine && f->b == 0.0) {
            scale *= f->a;
            rest.push_back(f->args[0]);
        } else if (f->kind == K::product) {
            for (const auto& g : f->args) rest.push_back(g);
        } else {
            rest.push_back(f);
        }
    }
    if (scale == 0.0 || rest.empty()) return make_const(rest.empty() ? scale : 0.0);
    Formula core = rest.size() == 1 ? rest[0] : make_product(std::move(rest));
    return fold_affine(scale, 0.0, core);
}

} // namespace

Formula fold(const Formula& f) {
    using K = FormulaNode::Kind;
    switch (f->kind) {
    case K::constant:
    case K::variable: return f;
    case K::affine: return fold_affine(f->a, f->b, fold(f->args[0]));
    case K::unary: {
        auto x = fold(f->args[0]);
        if (f->fn == UnaryFn::identity) return x;
        if (is_const(x) && unary_defined(f->fn, x->value)) return make_const(apply_unary(f->fn, x->value));
        return make_unary(f->fn, x);
    }
    case K::sum: {
        std::vector<Formula> terms;
        for (const auto& t : f->args) terms.push_back(fold(t));
        return fold_sum(std::move(terms));
    }
    case K::product: {
        std::vector<Formula> fs;
        for (const auto& t : f->args) fs.push_back(fold(t));
        return fold_product(std::move(fs));
    }
    }
    return f;
}

// differentiation ------------------------------------------------------------

namespace {

// f'(x) as a formula in x
Formula unary_derivative(UnaryFn fn, const Formula& x) {
    switch (fn) {
    case UnaryFn::identity: return make_const(1.0);
    case UnaryFn::square: return make_affine(2.0, 0.0, x);
    case UnaryFn::cube: return make_affine(3.0, 0.0, make_unary(UnaryFn::square, x));
    case UnaryFn::sqrt: return make_affine(0.5, 0.0, make_unary(UnaryFn::reciprocal, make_unary(UnaryFn::sqrt, x)));
    case UnaryFn::exp: return make_unary(UnaryFn::exp, x);
    case UnaryFn::log: return make_unary(UnaryFn::reciprocal, x);
    case UnaryFn::sin: return make_unary(UnaryFn::cos, x);
    case UnaryFn::cos: return make_affine(-1.0, 0.0, make_unary(UnaryFn::sin, x));
    case UnaryFn::tanh: return make_affine(-1.0, 1.0, make_unary(UnaryFn::square, make_unary(UnaryFn::tanh, x)));
    case UnaryFn::abs: return make_product({x, make_unary(UnaryFn::reciprocal, make_unary(UnaryFn::abs, x))});
    case UnaryFn::reciprocal:
        return make_affine(-1.0, 0.0, make_unary(UnaryFn::reciprocal, make_unary(UnaryFn::square, x)));
    }
    return make_const(NAN);
}

Formula raw_derivative(const Formula& f, std::string_view var) {
    using K = FormulaNode::Kind;
    switch (f->kind) {
    case K::constant: return make_const(0.0);
    case K::variable: return make_const(f->name == var ? 1.0 : 0.0);
    case K::affine: return make_affine(f->a, 0.0, raw_derivative(f->args[0], var));
    case K::unary: return make_product({unary_derivative(f->fn, f->args[0]), raw_derivative(f->args[0], var)});
    case K::sum: {
        std::vector<Formula> terms;
        for (const auto& t : f->args) terms.push_back(raw_derivative(t, var));
        return make_sum(std::move(terms));
    }
    case K::product: {
        std::vector<Formula> terms;
        for (std::size_t i = 0; i < f->args.size(); ++i) {
            std::vector<Formula> factors = f->args;
            factors[i] = raw_derivative(f->args[i], var);
            terms.push_back(make_product(std::move(factors)));
        }
        return make_sum(std::move(terms));
    }
    }
    return make_const(NAN);
}

} // namespace

Formula derivative(const Formula& f, std::string_view var) { return fold(raw_derivative(fold(f), var)); }

// rendering ------------------------------------------------------------------

namespace {

struct Style {
    int precision = 2;
    bool latex = false;
    bool hash_numbers = false;
};

std::string number(double v, const Style& st) {
    if (st.hash_numbers) return "#";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", st.precision, v);
    std::string s = buf;
    // "-0.00" -> "0.00"
    if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

bool atomic(const Formula& f) {
    return f->kind == FormulaNode::Kind::variable || f->kind == FormulaNode::Kind::constant;
}

std::string render_node(const Formula& f, const Style& st);

std::string wrap(const Formula& f, const Style& st) {
    const auto inner = render_node(f, st);
    if (atomic(f) || f->kind == FormulaNode::Kind::unary) return inner;
    return st.latex ? "\\left(" + inner + "\\right)" : "(" + inner + ")";
}

std::string times(const Style& st) { return st.latex ? " \\cdot " : " * "; }

// "x" / "-x" / "a * x" with the sign kept on the front
std::string scaled(double a, const Formula& x, const Style& st) {
    if (!st.hash_numbers && a == 1.0) return wrap(x, st);
    if (!st.hash_numbers && a == -1.0) return "-" + wrap(x, st);
    return number(a, st) + times(st) + wrap(x, st);
}

std::string join_signed(const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto& p = parts[i];
        if (i == 0)
            out = p;
        else if (!p.empty() && p.front() == '-')
            out += " - " + p.substr(1);
        else
            out += " + " + p;
    }
    return out;
}

std::string render_unary(UnaryFn fn, const Formula& x, const Style& st) {
    const auto arg = render_node(x, st);
    const bool plain = atomic(x);
    if (st.latex) {
        switch (fn) {
        case UnaryFn::identity: return arg;
        case UnaryFn::square: return (plain ? arg : "\\left(" + arg + "\\right)") + "^{2}";
        case UnaryFn::cube: return (plain ? arg : "\\left(" + arg + "\\right)") + "^{3}";
        case UnaryFn::sqrt: return "\\sqrt{" + arg + "}";
        case UnaryFn::abs: return "\\left|" + arg + "\\right|";
        case UnaryFn::reciprocal: return "\\frac{1}{" + arg + "}";
        default: return "\\" + std::string(unary_name(fn)) + "\\left(" + arg + "\\right)";
        }
    }
    switch (fn) {
    case UnaryFn::identity: return arg;
    case UnaryFn::square: return (plain ? arg : "(" + arg + ")") + "^2";
    case UnaryFn::cube: return (plain ? arg : "(" + arg + ")") + "^3";
    case UnaryFn::reciprocal: return "1 / " + (plain ? arg : "(" + arg + ")");
    default: return std::string(unary_name(fn)) + "(" + arg + ")";
    }
}

std::string render_node(const Formula& f, const Style& st) {
    using K = FormulaNode::Kind;
    switch (f->kind) {
    case K::constant: return number(f->value, st);
    case K::variable: return f->name;
    case K::affine: {
        const auto& x = f->args[0];
        const bool drop_b = !st.hash_numbers && f->b == 0.0;
        const auto lin = scaled(f->a, x, st);
        if (drop_b) return lin;
        const auto off = number(f->b, st);
        // a * var + b reads like an argument; b + a * g(..) like an outer term
        if (atomic(x)) return join_signed({lin, off});
        return join_signed({off, lin});
    }
    case K::unary: return render_unary(f->fn, f->args[0], st);
    case K::sum: {
        std::vector<std::string> parts;
        for (const auto& t : f->args) parts.push_back(render_node(t, st));
        return join_signed(parts);
    }
    case K::product: {
        std::string out;
        for (std::size_t i = 0; i < f->args.size(); ++i) out += (i ? times(st) : std::string{}) + wrap(f->args[i], st);
        return out;
    }
    }
    return {};
}

} // namespace

std::string render(const Formula& f, int precision) { return render_node(f, Style{precision, false, false}); }

std::string render_latex(const Formula& f, int precision) { return render_node(f, Style{precision, true, false}); }

std::string skeleton(const Formula& f) { return render_node(f, Style{2, false, true}); }

// JSON -----------------------------------------------------------------------

nlohmann::json to_json(const Formula& f) {
    using K = FormulaNode::Kind;
    nlohmann::json args = nlohmann::json::array();
    for (const auto& a : f->args) args.push_back(to_json(a));
    switch (f->kind) {
    case K::constant: return {{"node", "const"}, {"value", f->value}};
    case K::variable: return {{"node", "var"}, {"name", f->name}};
    case K::affine: return {{"node", "affine"}, {"a", f->a}, {"b", f->b}, {"args", std::move(args)}};
    case K::unary: return {{"node", "unary"}, {"fn", unary_name(f->fn)}, {"args", std::move(args)}};
    case K::sum: return {{"node", "sum"}, {"args", std::move(args)}};
    case K::product: return {{"node", "product"}, {"args", std::move(args)}};
    }
    return nullptr;
}

Formula formula_from_json(const nlohmann::json& j) {
    try {
        const auto kind = j.at("node").get<std::string>();
        std::vector<Formula> args;
        if (j.contains("args"))
            for (const auto& a : j.at("args")) args.push_back(formula_from_json(a));
        auto one_arg = [&]() {
            if (args.size() != 1) throw FormatError("'" + kind + "' node needs exactly one argument");
            return args[0];
        };
        if (kind == "const") return make_const(j.at("value").get<double>());
        if (kind == "var") return make_var(j.at("name").get<std::string>());
        if (kind == "affine") return make_affine(j.at("a").get<double>(), j.at("b").get<double>(), one_arg());
        if (kind == "unary") return make_unary(parse_unary(j.at("fn").get<std::string>()), one_arg());
        if (kind == "sum") return make_sum(std::move(args));
        if (kind == "product") return make_product(std::move(args));
        throw FormatError("unknown formula node '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed formula JSON: ") + e.what());
    }
}

bool structurally_equal(const Formula& x, const Formula& y) {
    if (x->kind != y->kind || x->args.size() != y->args.size()) return false;
    using K = FormulaNode::Kind;
    switch (x->kind) {
    case K::constant:
        if (x->value != y->value) return false;
        break;
    case K::variable:
        if (x->name != y->name) return false;
        break;
    case K::affine:
        if (x->a != y->a || x->b != y->b) return false;
        break;
    case K::unary:
        if (x->fn != y->fn) return false;
        break;
    default: break;
    }
    for (std::size_t i = 0; i < x->args.size(); ++i)
        if (!structurally_equal(x->args[i], y->args[i])) return false;
    return true;
}

std::vector<std::string> variables(const Formula& f) {
    std::set<std::string> names;
    std::vector<Formula> stack{f};
    while (!stack.empty()) {
        auto n = stack.back();
        stack.pop_back();
        if (n->kind == FormulaNode::Kind::variable) names.insert(n->name);
        for (const auto& a : n->args) stack.push_back(a);
    }
    return {names.begin(), names.end()};
}

bool has_outer_unary_of_sum(const Formula& f) {
    using K = FormulaNode::Kind;
    auto unary_of_sum = [](const Formula& g) {
        return g->kind == K::unary && g->fn != UnaryFn::identity && g->args[0]->kind == K::sum;
    };
    if (f->kind == K::affine) return unary_of_sum(f->args[0]);
    if (f->kind == K::sum && f->args.size() == 2) {
        const auto& c = f->args[0]->kind == K::constant ? f->args[0] : f->args[1];
        const auto& t = f->args[0]->kind == K::constant ? f->args[1] : f->args[0];
        if (c->kind != K::constant) return false;
        if (t->kind == K::affine && t->b == 0.0) return unary_of_sum(t->args[0]);
        return unary_of_sum(t);
    }
    return false;
}

} // namespace kanfoil
