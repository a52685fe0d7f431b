#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "kanfoil/baselines.hpp"
#include "kanfoil/dataio.hpp"

namespace kanfoil::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

struct KanSettings {
    std::vector<std::size_t> width{9, 9, 1};
    int grid = 6;
    int k = 2;
    std::string optimizer = "adam";
    double learning_rate = 0.01;
    std::size_t steps = 2000;
    std::size_t patience = 200;
    std::size_t batch_size = 0;
    std::size_t sparsify_steps = 300;
    double lambda_l1 = 1e-3;
    double lambda_entropy = 1e-3;
};

/// Everything a run depends on. Serialised into run.json next to the outputs.
struct RunConfig {
    std::string input;                 ///< raw CSV for prep
    std::string data_dir = "prepared"; ///< prep output, train/prune/symbolify input
    std::string out_dir = "run";
    ColumnMap columns;
    std::vector<std::string> dedup_key{"c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8", "cl"};
    double train_fraction = 0.75;
    double val_fraction = 0.1; ///< carved from train for early stopping
    std::uint64_t seed = 2024;
    KanSettings kan;
    MlpConfig mlp;
    double lr_threshold = 0.5;
    double prune_percentile = 75.0;
    std::size_t finetune_steps = 200;
    std::string library; ///< comma list; empty = full default library
    int precision = 2;

    nlohmann::json to_json() const;
    /// Missing keys keep their defaults; unknown keys throw InvalidConfig.
    static RunConfig from_json(const nlohmann::json& j);
};

/// Full command line entry point. Never throws; returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace kanfoil::cli
