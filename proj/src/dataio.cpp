#include "kanfoil/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "kanfoil/error.hpp"
#include "kanfoil/rng.hpp"

namespace kanfoil {

namespace {

constexpr std::array<std::string_view, kRoleCount> kRoleNames = {"c1", "c2", "c3", "c4", "c5",
                                                                  "c6", "c7", "c8", "aoa", "cl"};

// One RFC-4180 record; handles quoted fields, doubled quotes, CRLF and
// newlines embedded in quotes. Returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
    fields.clear();
    if (in.peek() == std::char_traits<char>::eof()) return false;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (int ch = in.get(); ch != std::char_traits<char>::eof(); ch = in.get()) {
        any = true;
        const char c = static_cast<char>(ch);
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    field.push_back('"');
                    in.get();
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            fields.push_back(std::move(field));
            return true;
        } else if (c == '\r') {
            if (in.peek() == '\n') in.get();
            fields.push_back(std::move(field));
            return true;
        } else {
            field.push_back(c);
        }
    }
    if (any) fields.push_back(std::move(field));
    return any;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view text, double& out) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    if (text.empty()) return false;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size() && std::isfinite(out);
}

bool blank_record(const std::vector<std::string>& fields) {
    return std::all_of(fields.begin(), fields.end(), [](const std::string& f) { return trim(f).empty(); });
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(idx));
    return idx;
}

std::size_t train_count(std::size_t n, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidConfig("train_fraction must be in (0, 1)");
    return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

} // namespace

std::string_view role_name(Role r) noexcept { return kRoleNames[static_cast<std::size_t>(r)]; }

Role parse_role(std::string_view name) {
    for (std::size_t i = 0; i < kRoleNames.size(); ++i)
        if (kRoleNames[i] == name) return static_cast<Role>(i);
    throw InvalidConfig("unknown column role '" + std::string(name) + "'");
}

std::vector<Role> feature_roles() {
    std::vector<Role> out;
    for (std::size_t i = 0; i < kFeatureCount; ++i) out.push_back(static_cast<Role>(i));
    return out;
}

std::vector<Role> default_dedup_key() {
    std::vector<Role> key;
    for (int i = 0; i < 8; ++i) key.push_back(static_cast<Role>(i));
    key.push_back(Role::cl);
    return key;
}

double AirfoilSample::get(Role r) const noexcept {
    switch (r) {
    case Role::aoa: return aoa;
    case Role::cl: return cl;
    default: return c[static_cast<std::size_t>(r)];
    }
}

void AirfoilSample::set(Role r, double v) noexcept {
    switch (r) {
    case Role::aoa: aoa = v; break;
    case Role::cl: cl = v; break;
    default: c[static_cast<std::size_t>(r)] = v; break;
    }
}

std::array<double, kFeatureCount> AirfoilSample::features() const noexcept {
    std::array<double, kFeatureCount> f{};
    std::copy(c.begin(), c.end(), f.begin());
    f[8] = aoa;
    return f;
}

void warn(Diagnostics* diag, std::string message) {
    if (diag)
        diag->warnings.push_back(std::move(message));
    else
        std::cerr << "warning: " << message << '\n';
}

// ColumnMap ------------------------------------------------------------------

ColumnMap::ColumnMap() {
    for (std::size_t i = 0; i < kRoleCount; ++i) names_[static_cast<Role>(i)] = std::string(kRoleNames[i]);
}

ColumnMap ColumnMap::parse(std::string_view spec) {
    ColumnMap map;
    while (!spec.empty()) {
        const auto comma = spec.find(',');
        const auto item = trim(spec.substr(0, comma));
        spec = comma == std::string_view::npos ? std::string_view{} : spec.substr(comma + 1);
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string_view::npos) throw InvalidConfig("column mapping needs role=name, got '" + std::string(item) + "'");
        map.set(parse_role(trim(item.substr(0, eq))), std::string(trim(item.substr(eq + 1))));
    }
    return map;
}

ColumnMap ColumnMap::from_json(const nlohmann::json& j) {
    ColumnMap map;
    for (const auto& [role, name] : j.items()) map.set(parse_role(role), name.get<std::string>());
    return map;
}

nlohmann::json ColumnMap::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [role, name] : names_) j[std::string(role_name(role))] = name;
    return j;
}

// CSV ------------------------------------------------------------------------

Dataset load_csv(const std::filesystem::path& path, const ColumnMap& columns, Diagnostics* diag) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFile(path.string());

    std::vector<std::string> header;
    if (!read_record(in, header) || blank_record(header)) throw EmptyFile(path.string());
    if (header.size() == 1 && header[0].empty()) throw EmptyFile(path.string());
    // UTF-8 byte order mark on the first header cell
    if (header[0].size() >= 3 && header[0].compare(0, 3, "\xEF\xBB\xBF") == 0) header[0].erase(0, 3);

    std::array<std::size_t, kRoleCount> col{};
    for (std::size_t r = 0; r < kRoleCount; ++r) {
        const auto& wanted = columns.column(static_cast<Role>(r));
        auto it = std::find_if(header.begin(), header.end(),
                               [&](const std::string& h) { return trim(h) == wanted; });
        if (it == header.end()) throw MissingColumn(wanted);
        col[r] = static_cast<std::size_t>(it - header.begin());
    }

    Dataset d;
    d.source = path.string();
    std::vector<std::string> fields;
    std::size_t row = 0;
    std::size_t out_of_range = 0;
    while (read_record(in, fields)) {
        if (blank_record(fields)) continue;
        ++row;
        if (fields.size() != header.size())
            throw ParseError(row, "<record>", "expected " + std::to_string(header.size()) + " fields, got " +
                                                  std::to_string(fields.size()));
        AirfoilSample s;
        for (std::size_t r = 0; r < kRoleCount; ++r) {
            double v = 0.0;
            if (!parse_double(fields[col[r]], v)) throw ParseError(row, header[col[r]], "'" + fields[col[r]] + "'");
            s.set(static_cast<Role>(r), v);
        }
        if (s.aoa < kAoaMinDeg || s.aoa > kAoaMaxDeg) ++out_of_range;
        d.samples.push_back(s);
    }
    if (d.samples.empty()) throw EmptyFile(path.string());
    if (out_of_range > 0)
        warn(diag, std::to_string(out_of_range) + " rows have aoa outside [-4, 8] degrees");
    return d;
}

void write_csv(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    for (std::size_t r = 0; r < kRoleCount; ++r) out << (r ? "," : "") << kRoleNames[r];
    out << '\n';
    for (const auto& s : d.samples) {
        for (std::size_t r = 0; r < kRoleCount; ++r) out << (r ? "," : "") << format_double(s.get(static_cast<Role>(r)));
        out << '\n';
    }
}

// dedup / split --------------------------------------------------------------

Dataset dedup(const Dataset& d, const std::vector<Role>& key_roles) {
    if (key_roles.empty()) throw InvalidConfig("dedup key must name at least one role");
    std::set<std::vector<double>> seen;
    Dataset out;
    out.source = d.source;
    std::vector<double> key(key_roles.size());
    for (const auto& s : d.samples) {
        for (std::size_t i = 0; i < key_roles.size(); ++i) {
            const double v = s.get(key_roles[i]);
            key[i] = v == 0.0 ? 0.0 : v; // -0 and +0 compare equal
        }
        if (seen.insert(key).second) out.samples.push_back(s);
    }
    return out;
}

std::pair<Dataset, Dataset> split(const Dataset& d, const SplitSpec& spec) {
    if (d.empty()) throw InvalidConfig("cannot split an empty dataset");
    const auto idx = shuffled_indices(d.size(), spec.seed);
    const auto n_train = train_count(d.size(), spec.train_fraction);
    Dataset train, test;
    train.source = test.source = d.source;
    for (std::size_t i = 0; i < idx.size(); ++i) (i < n_train ? train : test).samples.push_back(d.samples[idx[i]]);
    return {std::move(train), std::move(test)};
}

std::pair<RegressionSet, RegressionSet> split(const RegressionSet& d, const SplitSpec& spec) {
    if (d.empty()) throw InvalidConfig("cannot split an empty dataset");
    const auto idx = shuffled_indices(d.rows(), spec.seed);
    const auto n_train = train_count(d.rows(), spec.train_fraction);
    std::span<const std::size_t> all(idx);
    return {d.subset(all.first(n_train)), d.subset(all.subspan(n_train))};
}

RegressionSet to_regression_set(const Dataset& d, const std::vector<Role>& features) {
    RegressionSet out;
    for (auto r : features) out.feature_names.emplace_back(role_name(r));
    out.x.reserve(d.size() * features.size());
    out.y.reserve(d.size());
    for (const auto& s : d.samples) {
        for (auto r : features) out.x.push_back(s.get(r));
        out.y.push_back(s.cl);
    }
    return out;
}

// FeatureScaler --------------------------------------------------------------

FeatureScaler::FeatureScaler(std::vector<std::string> names, std::vector<double> lo, std::vector<double> hi)
    : names_(std::move(names)), lo_(std::move(lo)), hi_(std::move(hi)) {
    if (lo_.size() != hi_.size() || names_.size() != lo_.size()) throw DimensionMismatch(lo_.size(), hi_.size());
}

FeatureScaler FeatureScaler::fit(const RegressionSet& train) {
    if (train.empty()) throw InvalidConfig("scaler needs a non-empty training set");
    std::vector<double> lo(train.dim(), INFINITY), hi(train.dim(), -INFINITY);
    for (std::size_t i = 0; i < train.rows(); ++i) {
        auto r = train.row(i);
        for (std::size_t f = 0; f < train.dim(); ++f) {
            lo[f] = std::min(lo[f], r[f]);
            hi[f] = std::max(hi[f], r[f]);
        }
    }
    return FeatureScaler(train.feature_names, std::move(lo), std::move(hi));
}

FeatureScaler FeatureScaler::fit(const Dataset& train) { return fit(to_regression_set(train)); }

double FeatureScaler::scale(std::size_t f, double v) const noexcept {
    if (hi_[f] == lo_[f]) return 0.0;
    return 2.0 * (v - lo_[f]) / (hi_[f] - lo_[f]) - 1.0;
}

double FeatureScaler::unscale(std::size_t f, double z) const noexcept {
    if (hi_[f] == lo_[f]) return lo_[f];
    return (z + 1.0) * 0.5 * (hi_[f] - lo_[f]) + lo_[f];
}

std::pair<double, double> FeatureScaler::affine(std::size_t f) const noexcept {
    if (hi_[f] == lo_[f]) return {0.0, 0.0};
    const double slope = 2.0 / (hi_[f] - lo_[f]);
    return {slope, -1.0 - slope * lo_[f]};
}

RegressionSet FeatureScaler::apply(const RegressionSet& d) const {
    if (d.dim() != dim()) throw DimensionMismatch(dim(), d.dim());
    RegressionSet out = d;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t f = 0; f < dim(); ++f) r[f] = scale(f, r[f]);
    }
    return out;
}

RegressionSet FeatureScaler::invert(const RegressionSet& d) const {
    if (d.dim() != dim()) throw DimensionMismatch(dim(), d.dim());
    RegressionSet out = d;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t f = 0; f < dim(); ++f) r[f] = unscale(f, r[f]);
    }
    return out;
}

Dataset FeatureScaler::apply(const Dataset& d) const {
    if (dim() != kFeatureCount) throw DimensionMismatch(kFeatureCount, dim());
    Dataset out = d;
    for (auto& s : out.samples)
        for (std::size_t f = 0; f < kFeatureCount; ++f) s.set(static_cast<Role>(f), scale(f, s.get(static_cast<Role>(f))));
    return out;
}

Dataset FeatureScaler::invert(const Dataset& d) const {
    if (dim() != kFeatureCount) throw DimensionMismatch(kFeatureCount, dim());
    Dataset out = d;
    for (auto& s : out.samples)
        for (std::size_t f = 0; f < kFeatureCount; ++f)
            s.set(static_cast<Role>(f), unscale(f, s.get(static_cast<Role>(f))));
    return out;
}

nlohmann::json FeatureScaler::to_json() const {
    return {{"features", names_}, {"min", lo_}, {"max", hi_}, {"target", "[-1, 1]"}};
}

FeatureScaler FeatureScaler::from_json(const nlohmann::json& j) {
    return FeatureScaler(j.at("features").get<std::vector<std::string>>(), j.at("min").get<std::vector<double>>(),
                         j.at("max").get<std::vector<double>>());
}

// correlation filter ---------------------------------------------------------

double pearson(const RegressionSet& d, std::size_t a, std::size_t b) {
    const double n = static_cast<double>(d.rows());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < d.rows(); ++i) {
        ma += d.row(i)[a];
        mb += d.row(i)[b];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < d.rows(); ++i) {
        const double da = d.row(i)[a] - ma;
        const double db = d.row(i)[b] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return NAN;
    return sab / std::sqrt(saa * sbb);
}

std::vector<std::size_t> correlation_filter(const RegressionSet& train, double threshold, Diagnostics* diag) {
    if (train.rows() < 2) throw InvalidConfig("correlation filter needs at least 2 samples");
    const std::size_t p = train.dim();
    std::vector<bool> retained(p, true);
    std::vector<bool> degenerate(p, false);
    for (std::size_t f = 0; f < p; ++f) {
        const double first = train.row(0)[f];
        bool constant = true;
        for (std::size_t i = 1; i < train.rows() && constant; ++i) constant = train.row(i)[f] == first;
        if (constant) {
            degenerate[f] = true;
            warn(diag, "DegenerateFeature: '" + train.feature_names[f] + "' has zero variance; kept, excluded from correlation");
        }
    }
    for (std::size_t a = 0; a < p; ++a) {
        for (std::size_t b = a + 1; b < p; ++b) {
            if (!retained[a] || !retained[b] || degenerate[a] || degenerate[b]) continue;
            if (std::abs(pearson(train, a, b)) > threshold) retained[b] = false;
        }
    }
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < p; ++f)
        if (retained[f]) out.push_back(f);
    return out;
}

std::vector<Role> correlation_filter(const Dataset& train, double threshold, Diagnostics* diag) {
    const auto kept = correlation_filter(to_regression_set(train), threshold, diag);
    std::vector<Role> out;
    for (auto f : kept) out.push_back(static_cast<Role>(f));
    return out;
}

} // namespace kanfoil
