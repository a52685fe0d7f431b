#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kanfoil/dataio.hpp"
#include "kanfoil/metrics.hpp"
#include "kanfoil/spline.hpp"
#include "kanfoil/table.hpp"

namespace kanfoil {

double silu(double x) noexcept;
double silu_derivative(double x) noexcept;

/// One learnable activation: phi(x) = w_base * silu(x) + w_spline * spline(x).
struct Edge {
    KnotGrid grid;
    std::vector<double> coeffs;
    double w_base = 1.0;
    double w_spline = 1.0;
    bool active = true;

    double spline(double x) const noexcept;
    /// phi(x); an inactive edge still evaluates, the network just skips it.
    double operator()(double x) const noexcept;
    /// d phi / d x. The spline term is flat outside the grid (inputs clamp).
    double derivative(double x) const noexcept;
};

/// Dense in_dim x out_dim edge matrix; node j sums phi_{i->j}(input_i) over
/// active edges.
class KanLayer {
public:
    KanLayer() = default;
    KanLayer(std::size_t in_dim, std::size_t out_dim, const KnotGrid& grid);

    std::size_t in_dim() const noexcept { return in_; }
    std::size_t out_dim() const noexcept { return out_; }
    Edge& edge(std::size_t i, std::size_t j) noexcept { return edges_[i * out_ + j]; }
    const Edge& edge(std::size_t i, std::size_t j) const noexcept { return edges_[i * out_ + j]; }
    std::span<Edge> edges() noexcept { return edges_; }
    std::span<const Edge> edges() const noexcept { return edges_; }

private:
    std::size_t in_ = 0;
    std::size_t out_ = 0;
    std::vector<Edge> edges_;
};

/// Per-sample record of every node value and every edge output.
struct ForwardCache {
    std::vector<std::vector<double>> nodes;     ///< nodes[l] has width[l] values; nodes[0] is the input
    std::vector<std::vector<double>> edge_out;  ///< edge_out[l][i * out + j] = phi(nodes[l][i]), 0 if inactive
};

/// Flat parameter / gradient layout: layer by layer, edge (i, j) in row-major
/// order, each edge contributing [coeffs..., w_base, w_spline].
using ParamVector = std::vector<double>;

class KanNetwork {
public:
    static constexpr int kSchemaVersion = 1;

    KanNetwork() = default;

    /// Fully connected network; spline coefficients ~ N(0, (0.1/sqrt(g+k))^2),
    /// w_base = w_spline = 1, drawn from Rng(seed) in parameter order.
    static KanNetwork init(const std::vector<std::size_t>& width, int grid, int degree, std::uint64_t seed,
                           double lo = -1.0, double hi = 1.0);

    const std::vector<std::size_t>& width() const noexcept { return width_; }
    std::size_t depth() const noexcept { return layers_.size(); }
    KanLayer& layer(std::size_t l) noexcept { return layers_[l]; }
    const KanLayer& layer(std::size_t l) const noexcept { return layers_[l]; }
    std::uint64_t seed() const noexcept { return seed_; }

    std::size_t input_dim() const noexcept { return width_.front(); }

    /// Names of the input features, used by importance reports and formulas.
    const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
    void set_feature_names(std::vector<std::string> names);

    const std::optional<FeatureScaler>& scaler() const noexcept { return scaler_; }
    void set_scaler(FeatureScaler s);

    /// Output for one already-scaled input vector.
    double forward(std::span<const double> x) const;
    double forward(std::span<const double> x, ForwardCache& cache) const;

    /// Applies the attached scaler (if any), then forward().
    std::vector<double> predict(const RegressionSet& raw) const;
    MetricsReport evaluate(const RegressionSet& raw) const;
    RegressionSet scale_inputs(const RegressionSet& raw) const;

    std::size_t node_count() const noexcept;
    std::size_t edge_count() const noexcept;
    /// Nodes with at least one active incident edge, plus the output node.
    std::size_t active_node_count() const noexcept;
    std::size_t active_edge_count() const noexcept;
    std::size_t spline_coeff_count() const noexcept;

    std::size_t param_count() const noexcept;
    ParamVector parameters() const;
    void set_parameters(std::span<const double> p);

    nlohmann::json to_json() const;
    static KanNetwork from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static KanNetwork load(const std::filesystem::path& path);

private:
    std::vector<std::size_t> width_;
    std::vector<KanLayer> layers_;
    std::uint64_t seed_ = 0;
    std::vector<std::string> feature_names_;
    std::optional<FeatureScaler> scaler_;
};

struct Regularization {
    double lambda_l1 = 0.0;
    double lambda_entropy = 0.0;
    bool enabled() const noexcept { return lambda_l1 != 0.0 || lambda_entropy != 0.0; }
};

struct LossBreakdown {
    double mse = 0.0;
    double l1 = 0.0;       ///< sum over active edges of mean |phi|
    double entropy = 0.0;  ///< sum over layers of the entropy of normalised mean |phi|
    double total = 0.0;
    std::size_t clamped_inputs = 0;
};

/// Network outputs for every row of an already-scaled table. Rows are split
/// into fixed chunks that may run on several threads (KANFOIL_THREADS).
std::vector<double> forward_batch(const KanNetwork& net, const RegressionSet& scaled);

/// MSE + lambda_l1 * l1 + lambda_entropy * entropy on already-scaled data.
LossBreakdown loss(const KanNetwork& net, const RegressionSet& scaled, const Regularization& reg = {});

/// Loss and its gradient with respect to parameters() on already-scaled data.
/// Inactive edges get exactly zero gradient.
LossBreakdown gradients(const KanNetwork& net, const RegressionSet& scaled, const Regularization& reg,
                        ParamVector& grad);

enum class OptimizerKind { adam, lbfgs };

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::adam;
    double learning_rate = 0.01;
    std::size_t steps = 2000;
    std::size_t batch_size = 0; ///< 0 = full batch
    Regularization reg;
    std::uint64_t seed = 2024;
    std::size_t patience = 200; ///< early stop after this many steps without val R^2 gain; 0 disables
    std::size_t lbfgs_history = 10;
    bool restore_best = true; ///< false keeps the final parameters (validation is only logged)

    void validate() const;
};

struct HistoryEntry {
    std::size_t step = 0;
    double train_loss = 0.0;
    double val_r2 = 0.0; ///< NaN when no validation data
};

struct TrainResult {
    std::vector<HistoryEntry> history;
    std::size_t steps_run = 0;
    std::size_t best_step = 0;
    double best_val_r2 = 0.0;
    std::size_t clamped_inputs = 0;   ///< out-of-grid edge inputs in the last training pass
    std::size_t edge_evaluations = 0; ///< total edge inputs in that pass
};

/// Trains in place on raw-unit data (the network's scaler is applied). With a
/// non-empty validation set the best-val-R^2 parameters are restored at the
/// end. On a non-finite loss the last good parameters are restored and
/// DivergenceDetected is thrown.
TrainResult train(KanNetwork& net, const RegressionSet& train, const RegressionSet& val, const TrainConfig& cfg);

void write_history_jsonl(const std::vector<HistoryEntry>& history, const std::filesystem::path& path);

/// Moves every edge's grid onto the [lo_pct, hi_pct] percentile range of the
/// inputs it sees on `scaled`, refitting coefficients by least squares so the
/// spline keeps its shape over the samples.
void refit_grids(KanNetwork& net, const RegressionSet& scaled, double lo_pct = 1.0, double hi_pct = 99.0);

} // namespace kanfoil
