// Property-based acceptance suite. Prints one [PASS]/[FAIL] line per
// criterion; exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "kanfoil/baselines.hpp"
#include "kanfoil/prune.hpp"
#include "kanfoil/rng.hpp"
#include "kanfoil/symbolic.hpp"
#include "oracles/finite_diff.hpp"
#include "oracles/lift_reference.hpp"
#include "support/lift_formula.hpp"
#include "support/synthetic.hpp"

using namespace kanfoil;

namespace {

struct Verdict {
    bool pass;
    std::string detail;
};

int failures = 0;

void report(int n, const char* what, const std::function<Verdict()>& check) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        v = check();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!v.pass) ++failures;
    std::printf("[%s] %d %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", n, what, v.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

struct ThreadsEnv {
    explicit ThreadsEnv(const char* n) { ::setenv("KANFOIL_THREADS", n, 1); }
    ~ThreadsEnv() { ::unsetenv("KANFOIL_THREADS"); }
};

RegressionSet uniform_inputs(std::size_t dim, std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < dim; ++i) names.push_back("x" + std::to_string(i + 1));
    RegressionSet d(names, {}, {});
    std::vector<double> x(dim);
    for (std::size_t s = 0; s < n; ++s) {
        for (auto& v : x) v = rng.uniform(lo, hi);
        d.push_back(x, rng.normal());
    }
    return d;
}

KanNetwork randomised(const std::vector<std::size_t>& width, int g, std::uint64_t seed) {
    auto net = KanNetwork::init(width, g, 2, seed);
    Rng rng(seed ^ 0xabcdefULL);
    auto p = net.parameters();
    for (auto& v : p) v = rng.uniform(-1, 1);
    net.set_parameters(p);
    return net;
}

// --- 1 ----------------------------------------------------------------------
Verdict partition_of_unity() {
    Rng rng(1);
    double worst = 0.0, most_negative = 0.0;
    for (int s = 0; s < 1000; ++s) {
        const int g = 1 + static_cast<int>(rng.below(12));
        const int k = 1 + static_cast<int>(rng.below(4));
        const double lo = rng.uniform(-3, 1), hi = lo + rng.uniform(0.1, 4);
        const KnotGrid grid(g, k, lo, hi);
        const double x = rng.uniform(lo, hi);
        double sum = 0.0;
        for (double b : basis(grid, x)) {
            sum += b;
            most_negative = std::min(most_negative, b);
        }
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    return {worst < 1e-9 && most_negative >= 0.0, fmt("max |sum - 1| %.2e, min basis %.2e", worst, most_negative)};
}

// --- 2 ----------------------------------------------------------------------
Verdict gradient_oracle() {
    Rng rng(2);
    double kan_worst = 0.0;
    for (int s = 0; s < 20; ++s) {
        const int g = 4 + static_cast<int>(rng.below(3));
        const auto net = randomised({2, 3, 1}, g, 100 + static_cast<std::uint64_t>(s));
        const auto data = uniform_inputs(2, 16, rng);
        ParamVector grad;
        gradients(net, data, {}, grad);
        const auto fd = oracle::central_gradient(
            [&](std::span<const double> p) {
                auto c = net;
                c.set_parameters(p);
                return loss(c, data, {}).total;
            },
            net.parameters());
        kan_worst = std::max(kan_worst, oracle::max_relative_error(grad, fd));
    }
    auto mlp = MlpModel::init({2, 3, 1}, 7);
    const auto data = uniform_inputs(2, 32, rng);
    std::vector<double> grad;
    mlp_huber_gradients(mlp, data, 0.1, grad);
    const auto fd = oracle::central_gradient(
        [&](std::span<const double> p) {
            auto c = mlp;
            c.set_parameters(p);
            return mlp_huber_loss(c, data, 0.1);
        },
        mlp.parameters());
    const double mlp_worst = oracle::max_relative_error(grad, fd);
    return {kan_worst < 1e-4 && mlp_worst < 1e-4,
            fmt("max rel. error KAN %.2e over 20 nets, MLP %.2e", kan_worst, mlp_worst)};
}

// --- 3 ----------------------------------------------------------------------
RegressionSet planted(std::size_t n, Rng& rng) {
    RegressionSet d({"x1", "x2"}, {}, {});
    for (std::size_t i = 0; i < n; ++i) {
        const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
        d.push_back(std::vector<double>{a, b}, std::sin(a) + b * b);
    }
    return d;
}

Verdict planted_training() {
    ThreadsEnv one("1");
    Rng rng(3);
    const auto train_all = planted(1000, rng);
    const auto test = planted(500, rng);
    const auto [fit, val] = split(train_all, SplitSpec{0.9, 3});
    const auto t0 = std::chrono::steady_clock::now();
    auto net = KanNetwork::init({2, 3, 1}, 6, 2, 2024);
    train(net, fit, val, TrainConfig{});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double r2_test = net.evaluate(test).r2;
    return {r2_test > 0.99 && secs < 60.0, fmt("test R2 %.6f in %.1f s on one thread", r2_test, secs)};
}

// --- 4 ----------------------------------------------------------------------
Verdict symbolic_recovery() {
    Rng rng(4);
    std::vector<double> xs(1000), ys(1000);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        xs[i] = rng.uniform(-3, 3);
        ys[i] = 2.5 * std::sin(1.3 * xs[i] + 0.4) - 0.7;
    }
    const auto best = best_fit(xs, ys, default_library());
    double ss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) ss += (best(xs[i]) - ys[i]) * (best(xs[i]) - ys[i]);
    const double rms = std::sqrt(ss / static_cast<double>(xs.size()));
    const bool ok = best.fn == UnaryFn::sin && best.r2 > 0.999 && rms < 1e-3;
    return {ok, std::string("selected ") + std::string(unary_name(best.fn)) + fmt(", R2 %.12f, RMS %.2e", best.r2, rms)};
}

// --- 5 ----------------------------------------------------------------------
void shape_edge(Edge& e, const std::function<double(double)>& target) {
    e.w_base = 0.0;
    e.w_spline = 1.0;
    std::vector<double> xs, ys;
    for (int i = 0; i <= 800; ++i) {
        xs.push_back(e.grid.lo + (e.grid.hi - e.grid.lo) * i / 800.0);
        ys.push_back(target(xs.back()));
    }
    e.coeffs = fit_spline_coeffs(e.grid, xs, ys);
}

Verdict pipeline_consistency() {
    // [2,2,1] whose edges are spline images of library functions
    auto net = KanNetwork::init({2, 2, 1}, 24, 3, 5);
    shape_edge(net.layer(0).edge(0, 0), [](double x) { return std::sin(2.0 * x); });
    shape_edge(net.layer(0).edge(1, 0), [](double x) { return 0.5 * x; });
    shape_edge(net.layer(0).edge(0, 1), [](double x) { return x * x; });
    shape_edge(net.layer(0).edge(1, 1), [](double x) { return std::exp(0.5 * x); });
    net.layer(1).edge(0, 0).grid = KnotGrid(24, 3, -1.5, 1.5);
    net.layer(1).edge(1, 0).grid = KnotGrid(24, 3, 0.5, 2.7);
    shape_edge(net.layer(1).edge(0, 0), [](double x) { return std::cos(x); });
    shape_edge(net.layer(1).edge(1, 0), [](double x) { return std::tanh(x); });

    Rng rng(5);
    const auto fit_set = uniform_inputs(2, 1000, rng);
    const auto held = uniform_inputs(2, 1000, rng);
    const auto pr = prune(net, score(net, fit_set), 0.0);
    const auto sym = symbolify_network(pr.network, fit_set);
    const double r2v = r2(predict_formula(sym.formula, held), pr.network.predict(held));
    std::string fns;
    for (const auto& e : sym.edges) fns += std::string(fns.empty() ? "" : ",") + std::string(unary_name(e.fit.fn));
    return {pr.surviving_edges == 6 && r2v > 0.999, fmt("formula vs net R2 %.9f on held-out points, edges ", r2v) + fns};
}

// --- 6 ----------------------------------------------------------------------
Verdict prune_exactness() {
    Rng rng(6);
    double worst = 0.0;
    std::size_t removed_total = 0;
    // one layer: output minus removed edge contributions, end to end
    {
        const auto net = randomised({6, 1}, 5, 60);
        const auto data = uniform_inputs(6, 200, rng);
        const auto pr = prune(net, score(net, data), 50.0);
        ForwardCache cache;
        for (std::size_t s = 0; s < data.rows(); ++s) {
            double y = net.forward(data.row(s), cache);
            for (std::size_t e = 0; e < 6; ++e)
                if (pr.removed[0][e]) y -= cache.edge_out[0][e];
            worst = std::max(worst, std::abs(pr.network.forward(data.row(s)) - y));
        }
        for (bool r : pr.removed[0]) removed_total += r;
    }
    // deeper nets: the same identity at every node given the node's inputs
    for (std::uint64_t seed : {61ULL, 62ULL, 63ULL}) {
        const auto net = randomised({9, 9, 1}, 6, seed);
        const auto data = uniform_inputs(9, 200, rng);
        PruneResult pr;
        try {
            pr = prune(net, score(net, data), 30.0);
        } catch (const EmptyModel&) {
            continue;
        }
        ForwardCache cache;
        for (std::size_t s = 0; s < data.rows(); ++s) {
            pr.network.forward(data.row(s), cache);
            for (std::size_t l = 0; l < net.depth(); ++l) {
                const auto& layer = net.layer(l);
                for (std::size_t j = 0; j < layer.out_dim(); ++j) {
                    double full = 0.0, removed = 0.0;
                    for (std::size_t i = 0; i < layer.in_dim(); ++i) {
                        const double phi = layer.edge(i, j)(cache.nodes[l][i]);
                        full += phi;
                        if (pr.removed[l][i * layer.out_dim() + j]) removed += phi;
                    }
                    worst = std::max(worst, std::abs(cache.nodes[l + 1][j] - (full - removed)));
                }
            }
        }
        for (const auto& layer : pr.removed)
            for (bool r : layer) removed_total += r;
    }
    return {worst < 1e-12 && removed_total > 0,
            fmt("max deviation %.2e, %g edges removed across 4 nets", worst, static_cast<double>(removed_total))};
}

// --- 7 ----------------------------------------------------------------------
Verdict lift_oracle() {
    const auto f = support::lift_formula();
    Rng rng(7);
    double worst = 0.0;
    for (int s = 0; s < 10; ++s) {
        Bindings b;
        std::array<std::string, 9> text;
        for (int i = 0; i < 9; ++i) {
            const double v = i < 8 ? rng.uniform(-0.5, 0.5) : rng.uniform(kAoaMinDeg, kAoaMaxDeg);
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", v);
            text[static_cast<std::size_t>(i)] = buf;
            b[i < 8 ? "c" + std::to_string(i + 1) : std::string("aoa")] = v;
        }
        const double ref = static_cast<double>(oracle::lift_reference(text));
        worst = std::max(worst, std::abs(eval_formula(f, b) - ref));
    }
    return {worst < 1e-12, fmt("max |double - 50-digit| %.2e over 10 points", worst)};
}

// --- 8 ----------------------------------------------------------------------
std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

Verdict determinism() {
    support::TempDir dir("accept");
    const auto raw = dir.path() / "raw.csv";
    write_csv(support::synthetic_airfoil(600, 8), raw);
    std::string models[2];
    const char* threads[2] = {"1", "4"};
    for (int r = 0; r < 2; ++r) {
        ThreadsEnv env(threads[r]);
        const auto base = dir.path() / ("run" + std::to_string(r));
        std::ostringstream out, err;
        const std::vector<std::string> common{"--seed", "2024", "--data", (base / "data").string(), "--out",
                                              (base / "out").string()};
        auto args = common;
        args.insert(args.end(), {"prep", "--input", raw.string()});
        if (cli::run(args, out, err) != 0) return {false, "prep failed: " + err.str()};
        args = common;
        args.insert(args.end(), {"train", "--model", "kan"});
        if (cli::run(args, out, err) != 0) return {false, "train failed: " + err.str()};
        models[r] = slurp(base / "out" / "model_kan.json");
    }
    const bool same = !models[0].empty() && models[0] == models[1];
    return {same, fmt("model_kan.json %g bytes, identical with 1 and 4 threads: ", static_cast<double>(models[0].size())) +
                      (same ? "yes" : "no")};
}

} // namespace

int main() {
    report(1, "spline partition of unity", partition_of_unity);
    report(2, "gradient oracle", gradient_oracle);
    report(3, "planted-function training", planted_training);
    report(4, "symbolic recovery", symbolic_recovery);
    report(5, "pipeline self-consistency", pipeline_consistency);
    report(6, "prune exactness", prune_exactness);
    report(7, "lift formula oracle", lift_oracle);
    report(8, "determinism", determinism);
    std::printf("%d of 8 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
