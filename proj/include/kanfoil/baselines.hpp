#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kanfoil/dataio.hpp"
#include "kanfoil/kan.hpp"
#include "kanfoil/metrics.hpp"
#include "kanfoil/table.hpp"

namespace kanfoil {

/// Ordinary least squares on a subset of the feature columns, in raw units.
struct LinearModel {
    std::vector<std::string> all_features;     ///< column layout the model expects
    std::vector<std::size_t> retained;         ///< indices into all_features
    std::vector<double> weights;               ///< one per retained feature
    double intercept = 0.0;

    double predict_row(std::span<const double> x) const;
    std::vector<double> predict(const RegressionSet& raw) const;
    MetricsReport evaluate(const RegressionSet& raw) const;

    nlohmann::json to_json() const;
    static LinearModel from_json(const nlohmann::json& j);
};

/// Column-pivoted Householder QR; throws RankDeficient when the design matrix
/// (with intercept column) is not of full column rank.
LinearModel fit_ols(const RegressionSet& train, const std::vector<std::size_t>& retained);

/// Leaky-rectifier MLP with a linear output node.
class MlpModel {
public:
    static constexpr double kNegativeSlope = 0.01;

    MlpModel() = default;
    /// Weights and biases uniform in +-1/sqrt(fan_in).
    static MlpModel init(const std::vector<std::size_t>& dims, std::uint64_t seed);

    const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    std::size_t param_count() const noexcept;
    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> p);

    /// Weight (out, in) of layer l, row-major out x in.
    std::vector<double>& weights(std::size_t l) noexcept { return w_[l]; }
    std::vector<double>& biases(std::size_t l) noexcept { return b_[l]; }

    double forward(std::span<const double> scaled_x) const;

    const std::optional<FeatureScaler>& scaler() const noexcept { return scaler_; }
    void set_scaler(FeatureScaler s) { scaler_ = std::move(s); }
    std::vector<std::string> feature_names;

    std::vector<double> predict(const RegressionSet& raw) const;
    MetricsReport evaluate(const RegressionSet& raw) const;

    nlohmann::json to_json() const;
    static MlpModel from_json(const nlohmann::json& j);

private:
    std::vector<std::size_t> dims_;
    std::vector<std::vector<double>> w_;
    std::vector<std::vector<double>> b_;
    std::optional<FeatureScaler> scaler_;
};

/// Mean Huber loss over already-scaled data and its gradient w.r.t. parameters().
double mlp_huber_gradients(const MlpModel& m, const RegressionSet& scaled, double delta, std::vector<double>& grad);
double mlp_huber_loss(const MlpModel& m, const RegressionSet& scaled, double delta);

struct MlpConfig {
    std::vector<std::size_t> dims{9, 9, 6, 3, 2, 1};
    double learning_rate = 0.001;
    double huber_delta = 0.1;
    std::size_t batch_size = 256;
    std::size_t max_epochs = 500;
    std::size_t patience = 20; ///< epochs without val R^2 gain
    std::uint64_t seed = 2024;
};

struct MlpTrainResult {
    MlpModel model;
    std::vector<HistoryEntry> history; ///< one entry per epoch
    std::size_t best_epoch = 0;
};

/// Minibatch Adam on Huber loss, inputs scaled by a scaler fitted on `train`,
/// target raw. The best-validation-R^2 epoch is returned.
MlpTrainResult train_mlp(const RegressionSet& train, const RegressionSet& val, const MlpConfig& cfg = {});

/// Writes {"schema_version", "model_type", ...} envelopes shared with the KAN
/// model files.
void save_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json load_json(const std::filesystem::path& path);

} // namespace kanfoil
