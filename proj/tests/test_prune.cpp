#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "kanfoil/error.hpp"
#include "kanfoil/prune.hpp"
#include "kanfoil/rng.hpp"

using namespace kanfoil;

namespace {

RegressionSet uniform_inputs(std::size_t dim, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < dim; ++i) names.push_back("x" + std::to_string(i + 1));
    RegressionSet d(names, {}, {});
    std::vector<double> x(dim);
    for (std::size_t s = 0; s < n; ++s) {
        for (auto& v : x) v = rng.uniform(-1, 1);
        d.push_back(x, 0.0);
    }
    return d;
}

KanNetwork randomised(const std::vector<std::size_t>& width, std::uint64_t seed) {
    auto net = KanNetwork::init(width, 5, 2, seed);
    Rng rng(seed + 100);
    auto p = net.parameters();
    for (auto& v : p) v = rng.uniform(-1, 1);
    net.set_parameters(p);
    return net;
}

void set_constant(Edge& e, double v) {
    e.w_base = 0.0;
    std::fill(e.coeffs.begin(), e.coeffs.end(), v);
}

} // namespace

TEST_CASE("edge scores") {
    SUBCASE("identically zero activation scores 0") {
        auto net = KanNetwork::init({2, 1}, 4, 2, 1);
        set_constant(net.layer(0).edge(0, 0), 0.0);
        const auto rep = score(net, uniform_inputs(2, 30, 1));
        CHECK(rep.edge(net, 0, 0, 0) == 0.0);
        CHECK(rep.edge(net, 0, 1, 0) > 0.0);
    }
    SUBCASE("constant activation scores its magnitude") {
        auto net = KanNetwork::init({1, 1}, 4, 2, 1);
        set_constant(net.layer(0).edge(0, 0), 2.0);
        CHECK(score(net, uniform_inputs(1, 10, 1)).edge(net, 0, 0, 0) == doctest::Approx(2.0));
        CHECK(score(net, uniform_inputs(1, 77, 2)).edge(net, 0, 0, 0) == doctest::Approx(2.0));
    }
    SUBCASE("brute-force recomputation from per-sample caches") {
        const auto net = randomised({2, 2, 1}, 3);
        const auto data = uniform_inputs(2, 50, 4);
        const auto rep = score(net, data, "probe");
        CHECK(rep.scoring_n == 50);
        CHECK(rep.scoring_set == "probe");
        std::vector<std::vector<double>> sums{std::vector<double>(4, 0.0), std::vector<double>(2, 0.0)};
        ForwardCache cache;
        for (std::size_t s = 0; s < data.rows(); ++s) {
            net.forward(data.row(s), cache);
            for (std::size_t l = 0; l < 2; ++l)
                for (std::size_t e = 0; e < sums[l].size(); ++e) sums[l][e] += std::abs(cache.edge_out[l][e]);
        }
        for (std::size_t l = 0; l < 2; ++l)
            for (std::size_t e = 0; e < sums[l].size(); ++e)
                CHECK(rep.edge_scores[l][e] == doctest::Approx(sums[l][e] / 50.0).epsilon(1e-12));
        // node scores
        const auto& es = rep.edge_scores;
        CHECK(rep.node_scores[0][0] == std::max(es[0][0], es[0][1]));
        CHECK(rep.node_scores[0][1] == std::max(es[0][2], es[0][3]));
        CHECK(rep.node_scores[1][0] == std::min(std::max(es[0][0], es[0][2]), es[1][0]));
        CHECK(rep.node_scores[1][1] == std::min(std::max(es[0][1], es[0][3]), es[1][1]));
        CHECK(std::isinf(rep.node_scores[2][0]));
    }
    SUBCASE("invariant under row order") {
        const auto net = randomised({3, 2, 1}, 8);
        const auto data = uniform_inputs(3, 40, 9);
        std::vector<std::size_t> rev(40);
        for (std::size_t i = 0; i < 40; ++i) rev[i] = 39 - i;
        const auto a = score(net, data), b = score(net, data.subset(rev));
        for (std::size_t l = 0; l < 2; ++l)
            for (std::size_t e = 0; e < a.edge_scores[l].size(); ++e)
                CHECK(a.edge_scores[l][e] == doctest::Approx(b.edge_scores[l][e]).epsilon(1e-13));
    }
}

TEST_CASE("nearest-rank percentile") {
    const std::vector<double> v{5, 1, 4, 2, 3};
    CHECK(std::isinf(nearest_rank_percentile(v, 0)));
    CHECK(nearest_rank_percentile(v, 20) == 1);
    CHECK(nearest_rank_percentile(v, 21) == 2);
    CHECK(nearest_rank_percentile(v, 50) == 3);
    CHECK(nearest_rank_percentile(v, 75) == 4);
    CHECK(nearest_rank_percentile(v, 100) == 5);
}

TEST_CASE("percentile 0 changes nothing") {
    const auto net = randomised({9, 9, 1}, 2024);
    const auto rep = score(net, uniform_inputs(9, 60, 1));
    const auto pr = prune(net, rep, 0.0);
    CHECK(pr.surviving_nodes == 19);
    CHECK(pr.surviving_edges == 90);
    CHECK(pr.network.parameters() == net.parameters());
    for (std::size_t l = 0; l < 2; ++l)
        for (std::size_t e = 0; e < net.layer(l).edges().size(); ++e)
            CHECK(pr.network.layer(l).edges()[e].active);
}

TEST_CASE("the weak hidden unit goes at percentile 50") {
    // [2,2,1]: hidden unit 0 carries almost all of the activation mass
    auto net = KanNetwork::init({2, 2, 1}, 4, 2, 1);
    set_constant(net.layer(0).edge(0, 0), 3.0);
    set_constant(net.layer(0).edge(1, 0), 2.0);
    set_constant(net.layer(0).edge(0, 1), 0.01);
    set_constant(net.layer(0).edge(1, 1), 0.02);
    set_constant(net.layer(1).edge(0, 0), 4.0);
    set_constant(net.layer(1).edge(1, 0), 0.015);
    const auto rep = score(net, uniform_inputs(2, 20, 3));
    const auto pr = prune(net, rep, 50.0);
    CHECK(pr.network.layer(0).edge(0, 0).active);
    CHECK(pr.network.layer(0).edge(1, 0).active);
    CHECK(pr.network.layer(1).edge(0, 0).active);
    CHECK_FALSE(pr.network.layer(0).edge(0, 1).active);
    CHECK_FALSE(pr.network.layer(0).edge(1, 1).active);
    CHECK_FALSE(pr.network.layer(1).edge(1, 0).active);
    CHECK(pr.surviving_edges == 3);
    CHECK(pr.surviving_nodes == 4);
}

TEST_CASE("orphaned hidden nodes are cleaned up") {
    auto net = KanNetwork::init({2, 2, 1}, 4, 2, 1);
    set_constant(net.layer(0).edge(0, 0), 1.0);
    set_constant(net.layer(0).edge(1, 0), 1.0);
    set_constant(net.layer(0).edge(0, 1), 1.0);
    set_constant(net.layer(0).edge(1, 1), 1.0);
    set_constant(net.layer(1).edge(0, 0), 1.0);
    set_constant(net.layer(1).edge(1, 0), 0.001); // hidden 1 loses its only way out
    const auto pr = prune(net, score(net, uniform_inputs(2, 10, 1)), 10.0);
    CHECK_FALSE(pr.network.layer(1).edge(1, 0).active);
    CHECK_FALSE(pr.network.layer(0).edge(0, 1).active);
    CHECK_FALSE(pr.network.layer(0).edge(1, 1).active);
    CHECK(pr.surviving_nodes == 4);
}

TEST_CASE("raising the percentile never adds edges") {
    const auto net = randomised({4, 5, 1}, 31);
    const auto rep = score(net, uniform_inputs(4, 80, 2));
    std::size_t last = net.edge_count();
    for (double p = 0; p <= 90; p += 5) {
        std::size_t now = 0;
        try {
            now = prune(net, rep, p).surviving_edges;
        } catch (const EmptyModel&) {
            now = 0;
        }
        CHECK(now <= last);
        last = now;
    }
}

TEST_CASE("percentile 100 empties the model and leaves the input alone") {
    const auto net = randomised({3, 3, 1}, 4);
    const auto before = net.parameters();
    CHECK_THROWS_AS(prune(net, score(net, uniform_inputs(3, 20, 1)), 100.0), EmptyModel);
    CHECK(net.parameters() == before);
    CHECK(net.active_edge_count() == 12);
}

TEST_CASE("pruned output equals full output minus removed contributions") {
    SUBCASE("single edge layer") {
        const auto net = randomised({6, 1}, 12);
        const auto data = uniform_inputs(6, 100, 5);
        const auto pr = prune(net, score(net, data), 50.0);
        ForwardCache cache;
        double worst = 0.0;
        for (std::size_t s = 0; s < data.rows(); ++s) {
            double y = net.forward(data.row(s), cache);
            for (std::size_t e = 0; e < 6; ++e)
                if (pr.removed[0][e]) y -= cache.edge_out[0][e];
            worst = std::max(worst, std::abs(pr.network.forward(data.row(s)) - y));
        }
        CHECK(worst < 1e-12);
    }
    SUBCASE("layer by layer in a deeper net") {
        const auto net = randomised({4, 4, 1}, 13);
        const auto data = uniform_inputs(4, 100, 6);
        const auto pr = prune(net, score(net, data), 20.0);
        REQUIRE(pr.surviving_edges < net.edge_count());
        ForwardCache pruned_cache;
        double worst = 0.0;
        for (std::size_t s = 0; s < data.rows(); ++s) {
            pr.network.forward(data.row(s), pruned_cache);
            for (std::size_t l = 0; l < net.depth(); ++l) {
                const auto& layer = net.layer(l);
                for (std::size_t j = 0; j < layer.out_dim(); ++j) {
                    double full = 0.0, removed = 0.0;
                    for (std::size_t i = 0; i < layer.in_dim(); ++i) {
                        const double phi = layer.edge(i, j)(pruned_cache.nodes[l][i]);
                        full += phi;
                        if (pr.removed[l][i * layer.out_dim() + j]) removed += phi;
                    }
                    worst = std::max(worst, std::abs(pruned_cache.nodes[l + 1][j] - (full - removed)));
                }
            }
        }
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("feature importance") {
    SUBCASE("feature with only inactive edges scores 0") {
        auto net = randomised({3, 2, 1}, 14);
        net.layer(0).edge(0, 0).active = false;
        net.layer(0).edge(0, 1).active = false;
        const auto imp = feature_importance(net, score(net, uniform_inputs(3, 30, 1)));
        CHECK(imp[0] == 0.0);
        CHECK(imp[1] + imp[2] == doctest::Approx(1.0));
    }
    SUBCASE("symmetric features share equally") {
        auto net = KanNetwork::init({2, 1}, 4, 2, 1);
        set_constant(net.layer(0).edge(0, 0), 0.7);
        set_constant(net.layer(0).edge(1, 0), 0.7);
        const auto imp = feature_importance(net, score(net, uniform_inputs(2, 10, 1)));
        CHECK(imp[0] == doctest::Approx(0.5));
        CHECK(imp[1] == doctest::Approx(0.5));
    }
}

TEST_CASE("reports serialise") {
    const auto net = randomised({2, 2, 1}, 15);
    const auto rep = score(net, uniform_inputs(2, 25, 1));
    const auto j = rep.to_json();
    CHECK(j["scoring_n"] == 25);
    CHECK(j["edge_scores"].size() == 2);
    const auto pr = prune(net, rep, 25.0);
    const auto pj = pr.to_json();
    CHECK(pj["surviving_edges"] == pr.surviving_edges);
    CHECK(pj["percentile"] == 25.0);
    const auto dot = to_dot(pr.network, rep);
    CHECK(dot.find("digraph") != std::string::npos);
    CHECK(dot.find("rankdir=BT") != std::string::npos);
    CHECK(dot.find("penwidth") != std::string::npos);
}
