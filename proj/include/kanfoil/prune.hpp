#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "kanfoil/kan.hpp"

namespace kanfoil {

/// Importance scores from one forward sweep over a scoring set.
///  - edge score: mean |phi| over the samples
///  - input node: max outgoing edge score
///  - hidden node: min(max incoming, max outgoing)
///  - output node: +inf, never pruned
struct ImportanceReport {
    std::vector<std::vector<double>> edge_scores; ///< edge_scores[l][i * out + j]
    std::vector<std::vector<double>> node_scores; ///< node_scores[l] has width[l] entries
    std::size_t scoring_n = 0;
    std::string scoring_set;

    double edge(const KanNetwork& net, std::size_t l, std::size_t i, std::size_t j) const {
        return edge_scores[l][i * net.layer(l).out_dim() + j];
    }

    nlohmann::json to_json() const;
};

/// `scaled` holds inputs already mapped to the grid domain.
ImportanceReport score(const KanNetwork& net, const RegressionSet& scaled, std::string scoring_set = "train");

struct PruneResult {
    KanNetwork network;
    double edge_threshold = 0.0;
    double node_threshold = 0.0;
    double percentile = 75.0;
    std::size_t surviving_nodes = 0;
    std::size_t surviving_edges = 0;
    std::vector<std::vector<bool>> removed; ///< removed[l][edge]: active before, inactive after

    nlohmann::json to_json() const;
};

/// Nearest-rank percentile: the value at 1-based rank ceil(p/100 * N) of the
/// sorted scores; -inf for rank 0 so that p = 0 selects nothing.
double nearest_rank_percentile(std::vector<double> values, double percentile);

/// Deactivates edges with score <= the pooled edge percentile and hidden nodes
/// with score <= the pooled node percentile, then removes hidden nodes left
/// without an active incoming or outgoing edge. Throws EmptyModel (leaving
/// `net` untouched) if no input-to-output path survives.
PruneResult prune(const KanNetwork& net, const ImportanceReport& report, double percentile = 75.0);

/// importance(i) = sum_j edge_score(0, i, j), normalised to sum 1. Inactive
/// edges contribute nothing.
std::vector<double> feature_importance(const KanNetwork& net, const ImportanceReport& report);

/// Graphviz rendering of the active topology, inputs at the bottom, pen width
/// proportional to edge score.
std::string to_dot(const KanNetwork& net, const ImportanceReport& report);

} // namespace kanfoil
