#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kanfoil/table.hpp"

namespace kanfoil {

/// Column roles of the airfoil table. The first nine are model inputs.
enum class Role : int { c1 = 0, c2, c3, c4, c5, c6, c7, c8, aoa, cl };

inline constexpr std::size_t kFeatureCount = 9;
inline constexpr std::size_t kRoleCount = 10;
inline constexpr double kAoaMinDeg = -4.0;
inline constexpr double kAoaMaxDeg = 8.0;

std::string_view role_name(Role r) noexcept;
Role parse_role(std::string_view name);
std::vector<Role> feature_roles();
std::vector<Role> default_dedup_key();

struct AirfoilSample {
    std::array<double, 8> c{};
    double aoa = 0.0;
    double cl = 0.0;

    double get(Role r) const noexcept;
    void set(Role r, double v) noexcept;
    std::array<double, kFeatureCount> features() const noexcept;

    friend bool operator==(const AirfoilSample&, const AirfoilSample&) = default;
};

struct Dataset {
    std::vector<AirfoilSample> samples;
    std::string source;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
};

/// Non-fatal findings (out-of-range aoa, degenerate features). When a caller
/// passes no sink, warnings go to stderr.
struct Diagnostics {
    std::vector<std::string> warnings;
};

void warn(Diagnostics* diag, std::string message);

/// role -> CSV header name. Defaults to the role names themselves.
class ColumnMap {
public:
    ColumnMap();

    /// Parses "c1=CST1,aoa=alpha,..." overriding individual roles.
    static ColumnMap parse(std::string_view spec);
    static ColumnMap from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    const std::string& column(Role r) const { return names_.at(r); }
    void set(Role r, std::string name) { names_[r] = std::move(name); }

private:
    std::map<Role, std::string> names_;
};

/// Loads an RFC-4180 CSV with a header row. Unmapped columns are ignored.
/// Row indices in ParseError are 1-based data rows (the header is row 0).
Dataset load_csv(const std::filesystem::path& path, const ColumnMap& columns = {}, Diagnostics* diag = nullptr);

/// Writes the canonical layout (c1..c8,aoa,cl) with round-trip precision.
void write_csv(const Dataset& d, const std::filesystem::path& path);

/// Keeps the first occurrence of each key tuple, compared by exact value.
Dataset dedup(const Dataset& d, const std::vector<Role>& key_roles = default_dedup_key());

struct SplitSpec {
    double train_fraction = 0.75;
    std::uint64_t seed = 2024;
};

/// Seeded Fisher-Yates shuffle of row indices, then a prefix split with
/// |train| = round(train_fraction * N).
std::pair<Dataset, Dataset> split(const Dataset& d, const SplitSpec& spec = {});

/// Same shuffle-and-prefix rule on a generic table.
std::pair<RegressionSet, RegressionSet> split(const RegressionSet& d, const SplitSpec& spec);

RegressionSet to_regression_set(const Dataset& d, const std::vector<Role>& features = feature_roles());

/// Per-feature affine map fitted on training data: train min -> -1, max -> +1.
/// Degenerate features (min == max) map to 0. Values outside the training
/// range are extrapolated, not clamped.
class FeatureScaler {
public:
    FeatureScaler() = default;
    FeatureScaler(std::vector<std::string> names, std::vector<double> lo, std::vector<double> hi);

    static FeatureScaler fit(const RegressionSet& train);
    static FeatureScaler fit(const Dataset& train);

    std::size_t dim() const noexcept { return lo_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    const std::vector<double>& lo() const noexcept { return lo_; }
    const std::vector<double>& hi() const noexcept { return hi_; }

    double scale(std::size_t feature, double v) const noexcept;
    double unscale(std::size_t feature, double z) const noexcept;
    /// The map as z = slope * v + offset.
    std::pair<double, double> affine(std::size_t feature) const noexcept;

    RegressionSet apply(const RegressionSet& d) const;
    RegressionSet invert(const RegressionSet& d) const;
    /// Scales the nine feature roles; cl passes through.
    Dataset apply(const Dataset& d) const;
    Dataset invert(const Dataset& d) const;

    nlohmann::json to_json() const;
    static FeatureScaler from_json(const nlohmann::json& j);

private:
    std::vector<std::string> names_;
    std::vector<double> lo_;
    std::vector<double> hi_;
};

/// Pearson-correlation filter over feature columns. Pairs are scanned in index
/// order; for any pair of still-retained features with |r| > threshold the
/// higher-indexed one is dropped. Zero-variance features are skipped (always
/// retained) with a warning. Returns retained column indices, ascending.
std::vector<std::size_t> correlation_filter(const RegressionSet& train, double threshold = 0.5,
                                            Diagnostics* diag = nullptr);
std::vector<Role> correlation_filter(const Dataset& train, double threshold = 0.5, Diagnostics* diag = nullptr);

/// Pearson correlation of two columns; NaN when either has zero variance.
double pearson(const RegressionSet& d, std::size_t a, std::size_t b);

} // namespace kanfoil
