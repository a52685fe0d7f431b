#include "kanfoil/prune.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "kanfoil/error.hpp"

namespace kanfoil {

namespace {

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

bool has_active_in(const KanNetwork& net, std::size_t l, std::size_t node) {
    // node lives in layer l (l >= 1); incoming edges are in net.layer(l - 1)
    const auto& prev = net.layer(l - 1);
    for (std::size_t i = 0; i < prev.in_dim(); ++i)
        if (prev.edge(i, node).active) return true;
    return false;
}

bool has_active_out(const KanNetwork& net, std::size_t l, std::size_t node) {
    const auto& next = net.layer(l);
    for (std::size_t j = 0; j < next.out_dim(); ++j)
        if (next.edge(node, j).active) return true;
    return false;
}

void deactivate_node(KanNetwork& net, std::size_t l, std::size_t node) {
    auto& prev = net.layer(l - 1);
    for (std::size_t i = 0; i < prev.in_dim(); ++i) prev.edge(i, node).active = false;
    auto& next = net.layer(l);
    for (std::size_t j = 0; j < next.out_dim(); ++j) next.edge(node, j).active = false;
}

} // namespace

nlohmann::json ImportanceReport::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& layer : node_scores) {
        nlohmann::json row = nlohmann::json::array();
        for (double v : layer) row.push_back(finite_or_null(v));
        nodes.push_back(std::move(row));
    }
    return {{"edge_scores", edge_scores},
            {"node_scores", std::move(nodes)},
            {"scoring_n", scoring_n},
            {"scoring_set", scoring_set},
            {"edge_score", "mean |phi| over the scoring set"},
            {"node_score", "input: max outgoing; hidden: min(max incoming, max outgoing); output: never pruned"}};
}

ImportanceReport score(const KanNetwork& net, const RegressionSet& scaled, std::string scoring_set) {
    if (scaled.empty()) throw InvalidConfig("scoring set is empty");
    if (scaled.dim() != net.input_dim()) throw DimensionMismatch(net.input_dim(), scaled.dim());
    ImportanceReport rep;
    rep.scoring_n = scaled.rows();
    rep.scoring_set = std::move(scoring_set);
    rep.edge_scores.resize(net.depth());
    for (std::size_t l = 0; l < net.depth(); ++l) rep.edge_scores[l].assign(net.layer(l).edges().size(), 0.0);

    ForwardCache cache;
    for (std::size_t s = 0; s < scaled.rows(); ++s) {
        net.forward(scaled.row(s), cache);
        for (std::size_t l = 0; l < net.depth(); ++l)
            for (std::size_t e = 0; e < rep.edge_scores[l].size(); ++e) rep.edge_scores[l][e] += std::abs(cache.edge_out[l][e]);
    }
    for (auto& layer : rep.edge_scores)
        for (auto& v : layer) v /= static_cast<double>(scaled.rows());

    const auto& width = net.width();
    rep.node_scores.resize(width.size());
    for (std::size_t l = 0; l < width.size(); ++l) {
        rep.node_scores[l].assign(width[l], 0.0);
        for (std::size_t n = 0; n < width[l]; ++n) {
            if (l + 1 == width.size()) {
                rep.node_scores[l][n] = std::numeric_limits<double>::infinity();
                continue;
            }
            double max_out = 0.0;
            for (std::size_t j = 0; j < width[l + 1]; ++j) max_out = std::max(max_out, rep.edge(net, l, n, j));
            if (l == 0) {
                rep.node_scores[l][n] = max_out;
                continue;
            }
            double max_in = 0.0;
            for (std::size_t i = 0; i < width[l - 1]; ++i) max_in = std::max(max_in, rep.edge(net, l - 1, i, n));
            rep.node_scores[l][n] = std::min(max_in, max_out);
        }
    }
    return rep;
}

double nearest_rank_percentile(std::vector<double> values, double percentile) {
    if (values.empty()) return -std::numeric_limits<double>::infinity();
    if (!(percentile >= 0.0 && percentile <= 100.0)) throw InvalidConfig("percentile must be in [0, 100]");
    std::sort(values.begin(), values.end());
    const auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * static_cast<double>(values.size()) - 1e-9));
    if (rank == 0) return -std::numeric_limits<double>::infinity();
    return values[std::min(rank, values.size()) - 1];
}

PruneResult prune(const KanNetwork& net, const ImportanceReport& report, double percentile) {
    if (report.edge_scores.size() != net.depth()) throw InvalidConfig("importance report does not match network");
    const auto& width = net.width();

    std::vector<double> pooled_edges;
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const auto edges = net.layer(l).edges();
        for (std::size_t e = 0; e < edges.size(); ++e)
            if (edges[e].active) pooled_edges.push_back(report.edge_scores[l][e]);
    }
    std::vector<double> pooled_nodes;
    for (std::size_t l = 0; l + 1 < width.size(); ++l)
        for (double v : report.node_scores[l]) pooled_nodes.push_back(v);

    PruneResult res;
    res.percentile = percentile;
    res.edge_threshold = nearest_rank_percentile(pooled_edges, percentile);
    res.node_threshold = nearest_rank_percentile(pooled_nodes, percentile);
    res.network = net;
    KanNetwork& out = res.network;

    for (std::size_t l = 0; l < out.depth(); ++l) {
        auto edges = out.layer(l).edges();
        for (std::size_t e = 0; e < edges.size(); ++e)
            if (report.edge_scores[l][e] <= res.edge_threshold) edges[e].active = false;
    }
    for (std::size_t l = 1; l + 1 < width.size(); ++l)
        for (std::size_t n = 0; n < width[l]; ++n)
            if (report.node_scores[l][n] <= res.node_threshold) deactivate_node(out, l, n);

    // orphan cleanup until nothing changes
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t l = 1; l + 1 < width.size(); ++l)
            for (std::size_t n = 0; n < width[l]; ++n) {
                const bool in = has_active_in(out, l, n);
                const bool outgoing = has_active_out(out, l, n);
                if (in != outgoing) {
                    deactivate_node(out, l, n);
                    changed = true;
                }
            }
    }

    if (!has_active_in(out, width.size() - 1, 0)) throw EmptyModel();

    res.removed.resize(out.depth());
    for (std::size_t l = 0; l < out.depth(); ++l) {
        const auto before = net.layer(l).edges();
        const auto after = out.layer(l).edges();
        res.removed[l].resize(before.size());
        for (std::size_t e = 0; e < before.size(); ++e) res.removed[l][e] = before[e].active && !after[e].active;
    }
    res.surviving_edges = out.active_edge_count();
    res.surviving_nodes = out.active_node_count();
    return res;
}

nlohmann::json PruneResult::to_json() const {
    return {{"percentile", percentile},
            {"percentile_definition", "nearest-rank over scores pooled across layers"},
            {"edge_threshold", finite_or_null(edge_threshold)},
            {"node_threshold", finite_or_null(node_threshold)},
            {"surviving_nodes", surviving_nodes},
            {"surviving_edges", surviving_edges},
            {"total_nodes", network.node_count()},
            {"total_edges", network.edge_count()}};
}

std::vector<double> feature_importance(const KanNetwork& net, const ImportanceReport& report) {
    if (report.edge_scores.empty()) throw InvalidConfig("importance report has no layer 0");
    const auto& layer = net.layer(0);
    std::vector<double> imp(layer.in_dim(), 0.0);
    for (std::size_t i = 0; i < layer.in_dim(); ++i)
        for (std::size_t j = 0; j < layer.out_dim(); ++j)
            if (layer.edge(i, j).active) imp[i] += report.edge(net, 0, i, j);
    double total = 0.0;
    for (double v : imp) total += v;
    if (total > 0.0)
        for (auto& v : imp) v /= total;
    return imp;
}

std::string to_dot(const KanNetwork& net, const ImportanceReport& report) {
    double max_score = 0.0;
    for (const auto& layer : report.edge_scores)
        for (double v : layer) max_score = std::max(max_score, v);
    const auto& width = net.width();
    std::ostringstream os;
    os << "digraph kan {\n  rankdir=BT;\n  node [shape=circle, fontsize=10];\n";
    for (std::size_t l = 0; l < width.size(); ++l) {
        os << "  { rank=same;";
        for (std::size_t n = 0; n < width[l]; ++n) {
            os << " n" << l << '_' << n;
            if (l == 0) os << " [label=\"" << net.feature_names()[n] << "\", shape=box]";
            os << ';';
        }
        os << " }\n";
    }
    char buf[64];
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const auto& layer = net.layer(l);
        for (std::size_t i = 0; i < layer.in_dim(); ++i)
            for (std::size_t j = 0; j < layer.out_dim(); ++j) {
                if (!layer.edge(i, j).active) continue;
                const double s = report.edge(net, l, i, j);
                const double pen = max_score > 0.0 ? 0.3 + 5.0 * s / max_score : 1.0;
                std::snprintf(buf, sizeof buf, "%.3f", pen);
                os << "  n" << l << '_' << i << " -> n" << l + 1 << '_' << j << " [penwidth=" << buf;
                std::snprintf(buf, sizeof buf, "%.4g", s);
                os << ", label=\"" << buf << "\"];\n";
            }
    }
    os << "}\n";
    return os.str();
}

} // namespace kanfoil
