#include "kanfoil/symbolic.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "kanfoil/error.hpp"

namespace kanfoil {

std::vector<UnaryFn> default_library() {
    std::vector<UnaryFn> lib;
    for (std::size_t i = 0; i < kUnaryFnCount; ++i) lib.push_back(static_cast<UnaryFn>(i));
    return lib;
}

std::vector<UnaryFn> parse_library(const std::string& comma_separated) {
    std::vector<UnaryFn> lib;
    std::size_t start = 0;
    while (start <= comma_separated.size()) {
        auto end = comma_separated.find(',', start);
        if (end == std::string::npos) end = comma_separated.size();
        auto item = comma_separated.substr(start, end - start);
        item.erase(0, item.find_first_not_of(' '));
        item.erase(item.find_last_not_of(' ') + 1);
        if (!item.empty()) lib.push_back(parse_unary(item));
        start = end + 1;
    }
    if (lib.empty()) throw InvalidConfig("symbolic library is empty");
    // keep library order canonical so tie-breaks do not depend on spelling order
    std::sort(lib.begin(), lib.end());
    lib.erase(std::unique(lib.begin(), lib.end()), lib.end());
    return lib;
}

nlohmann::json AffineFit::to_json() const {
    return {{"function", unary_name(fn)},
            {"a", a},
            {"b", b},
            {"c", c},
            {"d", d},
            {"r2", std::isfinite(r2) ? nlohmann::json(r2) : nlohmann::json(nullptr)}};
}

std::string EdgeAddress::str() const {
    return "(" + std::to_string(layer) + "," + std::to_string(from) + "," + std::to_string(to) + ")";
}

namespace {

// Sample with (c, d) eliminated: residual sum of squares of y on [f(a x + b), 1].
class ProfiledFit {
public:
    ProfiledFit(std::span<const double> xs, std::span<const double> ys, UnaryFn f) : xs_(xs), ys_(ys), fn_(f) {
        double m = 0.0;
        for (double y : ys_) m += y;
        y_mean_ = m / static_cast<double>(ys_.size());
        for (double y : ys_) syy_ += (y - y_mean_) * (y - y_mean_);
        fx_.resize(xs_.size());
    }

    double syy() const noexcept { return syy_; }

    /// +inf when the guard fails.
    double ssr(double a, double b, double* c_out = nullptr, double* d_out = nullptr) {
        double fm = 0.0;
        for (std::size_t i = 0; i < xs_.size(); ++i) {
            const double u = a * xs_[i] + b;
            if (!unary_defined(fn_, u)) return INFINITY;
            const double v = apply_unary(fn_, u);
            if (!std::isfinite(v)) return INFINITY;
            fx_[i] = v;
            fm += v;
        }
        fm /= static_cast<double>(xs_.size());
        double sff = 0.0, sfy = 0.0;
        for (std::size_t i = 0; i < xs_.size(); ++i) {
            const double df = fx_[i] - fm;
            sff += df * df;
            sfy += df * (ys_[i] - y_mean_);
        }
        if (!std::isfinite(sff) || !std::isfinite(sfy)) return INFINITY;
        double c = 0.0;
        if (sff > 0.0) c = sfy / sff;
        const double d = y_mean_ - c * fm;
        if (c_out) *c_out = c;
        if (d_out) *d_out = d;
        double s = 0.0;
        for (std::size_t i = 0; i < xs_.size(); ++i) {
            const double r = ys_[i] - c * fx_[i] - d;
            s += r * r;
        }
        return std::isfinite(s) ? s : INFINITY;
    }

private:
    std::span<const double> xs_, ys_;
    UnaryFn fn_;
    double y_mean_ = 0.0;
    double syy_ = 0.0;
    std::vector<double> fx_;
};

// Nelder-Mead over (a, b) from `start`; returns the best point found.
std::array<double, 2> nelder_mead(ProfiledFit& pf, std::array<double, 2> start, double step, double& best_f) {
    std::array<std::array<double, 2>, 3> p = {start, start, start};
    p[1][0] += step;
    p[2][1] += step;
    std::array<double, 3> f = {pf.ssr(p[0][0], p[0][1]), pf.ssr(p[1][0], p[1][1]), pf.ssr(p[2][0], p[2][1])};
    auto eval = [&](const std::array<double, 2>& q) { return pf.ssr(q[0], q[1]); };
    const double scale_tol = 1e-15 * std::max(pf.syy(), 1e-300);
    for (int iter = 0; iter < 400; ++iter) {
        std::array<int, 3> o = {0, 1, 2};
        std::sort(o.begin(), o.end(), [&](int x, int y) { return f[x] < f[y]; });
        const auto best = p[o[0]], mid = p[o[1]], worst = p[o[2]];
        const double fb = f[o[0]], fm = f[o[1]], fw = f[o[2]];
        if (std::isfinite(fw) && fw - fb <= scale_tol) break;
        const std::array<double, 2> cen = {(best[0] + mid[0]) / 2, (best[1] + mid[1]) / 2};
        auto along = [&](double t) { return std::array<double, 2>{cen[0] + t * (worst[0] - cen[0]), cen[1] + t * (worst[1] - cen[1])}; };
        const auto xr = along(-1.0);
        const double fr = eval(xr);
        if (fr < fb) {
            const auto xe = along(-2.0);
            const double fe = eval(xe);
            if (fe < fr) {
                p[o[2]] = xe;
                f[o[2]] = fe;
            } else {
                p[o[2]] = xr;
                f[o[2]] = fr;
            }
        } else if (fr < fm) {
            p[o[2]] = xr;
            f[o[2]] = fr;
        } else {
            const auto xc = fr < fw ? along(-0.5) : along(0.5);
            const double fc = eval(xc);
            if (fc < std::min(fr, fw)) {
                p[o[2]] = xc;
                f[o[2]] = fc;
            } else {
                for (int k : {o[1], o[2]}) {
                    p[k] = {best[0] + 0.5 * (p[k][0] - best[0]), best[1] + 0.5 * (p[k][1] - best[1])};
                    f[k] = eval(p[k]);
                }
            }
        }
    }
    const int ib = static_cast<int>(std::min_element(f.begin(), f.end()) - f.begin());
    best_f = f[ib];
    return p[ib];
}

double fit_r2(std::span<const double> xs, std::span<const double> ys, const AffineFit& fit) {
    double mean = 0.0;
    for (double y : ys) mean += y;
    mean /= static_cast<double>(ys.size());
    double ss_tot = 0.0, ss_res = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double u = fit.a * xs[i] + fit.b;
        if (!unary_defined(fit.fn, u)) return -INFINITY;
        const double r = ys[i] - fit(xs[i]);
        if (!std::isfinite(r)) return -INFINITY;
        ss_res += r * r;
        ss_tot += (ys[i] - mean) * (ys[i] - mean);
    }
    if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : -INFINITY;
    return 1.0 - ss_res / ss_tot;
}

} // namespace

AffineFit fit_candidate(std::span<const double> xs, std::span<const double> ys, UnaryFn f, const FitOptions& opt) {
    if (xs.size() != ys.size()) throw DimensionMismatch(xs.size(), ys.size());
    if (xs.size() < 10) throw InvalidConfig("fit_candidate needs at least 10 samples");
    const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
    if (*mn == *mx) throw DegenerateInput("DegenerateInput: xs is constant");
    if (opt.grid_points < 2 || opt.levels < 1) throw InvalidConfig("bad fit grid options");

    std::vector<double> sx, sy;
    std::span<const double> fx = xs, fy = ys;
    if (opt.max_samples > 0 && xs.size() > opt.max_samples) {
        const std::size_t stride = (xs.size() + opt.max_samples - 1) / opt.max_samples;
        for (std::size_t i = 0; i < xs.size(); i += stride) {
            sx.push_back(xs[i]);
            sy.push_back(ys[i]);
        }
        fx = sx;
        fy = sy;
    }

    ProfiledFit pf(fx, fy, f);
    double best_f = INFINITY;
    std::array<double, 2> best = {1.0, 0.0};
    std::array<double, 2> centre = {0.0, 0.0};
    double half = opt.box;
    double spacing = 2.0 * half / (opt.grid_points - 1);
    for (int level = 0; level < opt.levels; ++level) {
        spacing = 2.0 * half / (opt.grid_points - 1);
        for (int ia = 0; ia < opt.grid_points; ++ia)
            for (int ib = 0; ib < opt.grid_points; ++ib) {
                const double a = centre[0] - half + ia * spacing;
                const double b = centre[1] - half + ib * spacing;
                const double s = pf.ssr(a, b);
                if (s < best_f) {
                    best_f = s;
                    best = {a, b};
                }
            }
        if (!std::isfinite(best_f)) break;
        centre = best;
        half = spacing;
    }

    AffineFit fit;
    fit.fn = f;
    if (!std::isfinite(best_f)) return fit; // guard failed everywhere

    if (opt.polish) {
        double polished_f = INFINITY;
        const auto p = nelder_mead(pf, best, spacing, polished_f);
        if (polished_f < best_f) {
            best = p;
            best_f = polished_f;
        }
    }
    fit.a = best[0];
    fit.b = best[1];
    pf.ssr(fit.a, fit.b, &fit.c, &fit.d);
    fit.r2 = fit_r2(xs, ys, fit);
    return fit;
}

AffineFit best_fit(std::span<const double> xs, std::span<const double> ys, const std::vector<UnaryFn>& library,
                   const FitOptions& opt) {
    std::vector<AffineFit> fits;
    double top = -INFINITY;
    for (auto f : library) {
        fits.push_back(fit_candidate(xs, ys, f, opt));
        top = std::max(top, fits.back().r2);
    }
    if (!std::isfinite(top)) return fits.empty() ? AffineFit{} : fits.front();
    for (const auto& fit : fits)
        if (fit.r2 >= top - opt.tie_tolerance) return fit;
    return fits.front();
}

namespace {

void edge_samples(const KanNetwork& net, const EdgeAddress& e, const RegressionSet& scaled, std::vector<double>& xs,
                  std::vector<double>& ys) {
    const auto& layer = net.layer(e.layer);
    ForwardCache cache;
    xs.resize(scaled.rows());
    ys.resize(scaled.rows());
    for (std::size_t s = 0; s < scaled.rows(); ++s) {
        net.forward(scaled.row(s), cache);
        xs[s] = cache.nodes[e.layer][e.from];
        ys[s] = layer.edge(e.from, e.to)(xs[s]);
    }
}

} // namespace

AffineFit symbolify_edge(const KanNetwork& net, const EdgeAddress& e, const RegressionSet& scaled,
                         const std::vector<UnaryFn>& library, const FitOptions& opt) {
    if (e.layer >= net.depth() || e.from >= net.layer(e.layer).in_dim() || e.to >= net.layer(e.layer).out_dim())
        throw InvalidConfig("edge address out of range: " + e.str());
    if (!net.layer(e.layer).edge(e.from, e.to).active) throw InvalidConfig("edge " + e.str() + " is pruned");
    if (scaled.empty()) throw InvalidConfig("scoring data is empty");
    std::vector<double> xs, ys;
    edge_samples(net, e, scaled, xs, ys);
    const auto fit = best_fit(xs, ys, library, opt);
    if (!std::isfinite(fit.r2)) throw NoValidFit("NoValidFit at edge " + e.str());
    return fit;
}

SymbolicResult symbolify_network(const KanNetwork& net, const RegressionSet& scaled, const std::vector<UnaryFn>& library,
                                 const FitOptions& opt) {
    if (scaled.empty()) throw InvalidConfig("scoring data is empty");
    if (scaled.dim() != net.input_dim()) throw DimensionMismatch(net.input_dim(), scaled.dim());

    // collect every node value once
    const std::size_t depth = net.depth();
    std::vector<std::vector<std::vector<double>>> node_vals(depth);
    for (std::size_t l = 0; l < depth; ++l) node_vals[l].assign(net.width()[l], std::vector<double>(scaled.rows()));
    ForwardCache cache;
    for (std::size_t s = 0; s < scaled.rows(); ++s) {
        net.forward(scaled.row(s), cache);
        for (std::size_t l = 0; l < depth; ++l)
            for (std::size_t i = 0; i < net.width()[l]; ++i) node_vals[l][i][s] = cache.nodes[l][i];
    }

    SymbolicResult res;
    std::vector<Formula> current;
    for (std::size_t i = 0; i < net.input_dim(); ++i) {
        Formula v = make_var(net.feature_names()[i]);
        if (net.scaler()) {
            const auto [slope, offset] = net.scaler()->affine(i);
            v = make_affine(slope, offset, v);
        }
        current.push_back(fold(v));
    }

    std::vector<double> ys(scaled.rows());
    for (std::size_t l = 0; l < depth; ++l) {
        const auto& layer = net.layer(l);
        std::vector<std::vector<Formula>> incoming(layer.out_dim());
        for (std::size_t i = 0; i < layer.in_dim(); ++i)
            for (std::size_t j = 0; j < layer.out_dim(); ++j) {
                const auto& edge = layer.edge(i, j);
                if (!edge.active) continue;
                const EdgeAddress addr{l, i, j};
                const auto& xs = node_vals[l][i];
                for (std::size_t s = 0; s < xs.size(); ++s) ys[s] = edge(xs[s]);
                const auto fit = best_fit(xs, ys, library, opt);
                if (!std::isfinite(fit.r2)) throw NoValidFit("NoValidFit at edge " + addr.str());
                res.edges.push_back({addr, fit});
                res.min_edge_r2 = std::min(res.min_edge_r2, fit.r2);
                incoming[j].push_back(
                    make_affine(fit.c, fit.d, make_unary(fit.fn, make_affine(fit.a, fit.b, current[i]))));
            }
        std::vector<Formula> next;
        for (auto& terms : incoming) next.push_back(terms.empty() ? make_const(0.0) : fold(make_sum(std::move(terms))));
        current = std::move(next);
    }
    res.formula = current.at(0);
    return res;
}

std::vector<double> predict_formula(const Formula& f, const RegressionSet& raw) {
    std::vector<double> out(raw.rows());
    Bindings vars;
    for (std::size_t s = 0; s < raw.rows(); ++s) {
        const auto r = raw.row(s);
        for (std::size_t i = 0; i < raw.dim(); ++i) vars[raw.feature_names[i]] = r[i];
        out[s] = eval_formula(f, vars);
    }
    return out;
}

} // namespace kanfoil
