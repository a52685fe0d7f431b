#include "kanfoil/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Dense>

#include "kanfoil/error.hpp"
#include "kanfoil/optim.hpp"
#include "kanfoil/rng.hpp"

namespace kanfoil {

// JSON files -----------------------------------------------------------------

void save_json(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(1) << '\n';
}

nlohmann::json load_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFile(path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

// OLS ------------------------------------------------------------------------

double LinearModel::predict_row(std::span<const double> x) const {
    if (x.size() != all_features.size()) throw DimensionMismatch(all_features.size(), x.size());
    double y = intercept;
    for (std::size_t k = 0; k < retained.size(); ++k) y += weights[k] * x[retained[k]];
    return y;
}

std::vector<double> LinearModel::predict(const RegressionSet& raw) const {
    std::vector<double> out(raw.rows());
    for (std::size_t i = 0; i < raw.rows(); ++i) out[i] = predict_row(raw.row(i));
    return out;
}

MetricsReport LinearModel::evaluate(const RegressionSet& raw) const { return evaluate_predictions(predict(raw), raw.y); }

nlohmann::json LinearModel::to_json() const {
    std::vector<std::string> names;
    for (auto i : retained) names.push_back(all_features[i]);
    return {{"schema_version", 1},
            {"model_type", "lr"},
            {"features", all_features},
            {"retained", names},
            {"weights", weights},
            {"intercept", intercept}};
}

LinearModel LinearModel::from_json(const nlohmann::json& j) {
    if (j.value("model_type", "") != "lr") throw FormatError("not a linear model file");
    LinearModel m;
    m.all_features = j.at("features").get<std::vector<std::string>>();
    for (const auto& name : j.at("retained").get<std::vector<std::string>>()) {
        auto it = std::find(m.all_features.begin(), m.all_features.end(), name);
        if (it == m.all_features.end()) throw FormatError("retained feature '" + name + "' not in feature list");
        m.retained.push_back(static_cast<std::size_t>(it - m.all_features.begin()));
    }
    m.weights = j.at("weights").get<std::vector<double>>();
    m.intercept = j.at("intercept").get<double>();
    if (m.weights.size() != m.retained.size()) throw FormatError("weight count does not match retained features");
    return m;
}

LinearModel fit_ols(const RegressionSet& train, const std::vector<std::size_t>& retained) {
    const std::size_t p = retained.size() + 1;
    if (train.rows() < p) throw RankDeficient("RankDeficient: need at least " + std::to_string(p) + " samples");
    for (auto f : retained)
        if (f >= train.dim()) throw DimensionMismatch(train.dim(), f);
    Eigen::MatrixXd a(train.rows(), p);
    Eigen::VectorXd y(train.rows());
    for (std::size_t i = 0; i < train.rows(); ++i) {
        const auto r = train.row(i);
        for (std::size_t k = 0; k < retained.size(); ++k) a(i, k) = r[retained[k]];
        a(i, p - 1) = 1.0;
        y[i] = train.y[i];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < static_cast<Eigen::Index>(p)) throw RankDeficient("RankDeficient: design matrix rank " +
                                                                      std::to_string(qr.rank()) + " < " + std::to_string(p));
    const Eigen::VectorXd beta = qr.solve(y);
    LinearModel m;
    m.all_features = train.feature_names;
    m.retained = retained;
    m.weights.assign(beta.data(), beta.data() + retained.size());
    m.intercept = beta[p - 1];
    return m;
}

// MLP ------------------------------------------------------------------------

namespace {

double leaky(double x) noexcept { return x > 0.0 ? x : MlpModel::kNegativeSlope * x; }
double leaky_grad(double x) noexcept { return x > 0.0 ? 1.0 : MlpModel::kNegativeSlope; }

} // namespace

MlpModel MlpModel::init(const std::vector<std::size_t>& dims, std::uint64_t seed) {
    if (dims.size() < 2 || dims.back() != 1) throw InvalidWidth("InvalidWidth: MLP needs >= 2 layers and one output");
    for (auto d : dims)
        if (d == 0) throw InvalidWidth("InvalidWidth: zero-width MLP layer");
    MlpModel m;
    m.dims_ = dims;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
        m.w_.emplace_back(dims[l] * dims[l + 1]);
        m.b_.emplace_back(dims[l + 1]);
        for (auto& v : m.w_.back()) v = rng.uniform(-bound, bound);
        for (auto& v : m.b_.back()) v = rng.uniform(-bound, bound);
    }
    for (std::size_t i = 0; i < dims.front(); ++i) m.feature_names.push_back("x" + std::to_string(i + 1));
    return m;
}

std::size_t MlpModel::param_count() const noexcept {
    std::size_t n = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) n += w_[l].size() + b_[l].size();
    return n;
}

std::vector<double> MlpModel::parameters() const {
    std::vector<double> p;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        p.insert(p.end(), w_[l].begin(), w_[l].end());
        p.insert(p.end(), b_[l].begin(), b_[l].end());
    }
    return p;
}

void MlpModel::set_parameters(std::span<const double> p) {
    if (p.size() != param_count()) throw DimensionMismatch(param_count(), p.size());
    std::size_t k = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        for (auto& v : w_[l]) v = p[k++];
        for (auto& v : b_[l]) v = p[k++];
    }
}

double MlpModel::forward(std::span<const double> x) const {
    if (x.size() != dims_.front()) throw DimensionMismatch(dims_.front(), x.size());
    std::vector<double> in(x.begin(), x.end()), out;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        const std::size_t n_in = dims_[l], n_out = dims_[l + 1];
        out.assign(n_out, 0.0);
        for (std::size_t o = 0; o < n_out; ++o) {
            double z = b_[l][o];
            for (std::size_t i = 0; i < n_in; ++i) z += w_[l][o * n_in + i] * in[i];
            out[o] = l + 1 < w_.size() ? leaky(z) : z;
        }
        in.swap(out);
    }
    return in[0];
}

std::vector<double> MlpModel::predict(const RegressionSet& raw) const {
    const auto scaled = scaler_ ? scaler_->apply(raw) : raw;
    std::vector<double> out(scaled.rows());
    for (std::size_t i = 0; i < scaled.rows(); ++i) out[i] = forward(scaled.row(i));
    return out;
}

MetricsReport MlpModel::evaluate(const RegressionSet& raw) const { return evaluate_predictions(predict(raw), raw.y); }

nlohmann::json MlpModel::to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < w_.size(); ++l) layers.push_back({{"weights", w_[l]}, {"biases", b_[l]}});
    return {{"schema_version", 1},
            {"model_type", "mlp"},
            {"dims", dims_},
            {"activation", "leaky_relu(0.01)"},
            {"feature_names", feature_names},
            {"scaler", scaler_ ? scaler_->to_json() : nlohmann::json(nullptr)},
            {"layers", std::move(layers)}};
}

MlpModel MlpModel::from_json(const nlohmann::json& j) {
    if (j.value("model_type", "") != "mlp") throw FormatError("not an MLP model file");
    MlpModel m;
    m.dims_ = j.at("dims").get<std::vector<std::size_t>>();
    const auto& layers = j.at("layers");
    if (layers.size() + 1 != m.dims_.size()) throw FormatError("layer count does not match dims");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        m.w_.push_back(layers[l].at("weights").get<std::vector<double>>());
        m.b_.push_back(layers[l].at("biases").get<std::vector<double>>());
        if (m.w_.back().size() != m.dims_[l] * m.dims_[l + 1] || m.b_.back().size() != m.dims_[l + 1])
            throw FormatError("MLP layer shape mismatch");
    }
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    if (!j.at("scaler").is_null()) m.scaler_ = FeatureScaler::from_json(j.at("scaler"));
    return m;
}

double mlp_huber_gradients(const MlpModel& m, const RegressionSet& scaled, double delta, std::vector<double>& grad) {
    if (scaled.empty()) throw InvalidConfig("empty batch");
    const auto& dims = m.dims();
    const std::size_t depth = dims.size() - 1;
    const auto params = m.parameters();
    std::vector<std::size_t> offset(depth);
    for (std::size_t l = 0, k = 0; l < depth; ++l) {
        offset[l] = k;
        k += dims[l] * dims[l + 1] + dims[l + 1];
    }
    grad.assign(params.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(scaled.rows());

    std::vector<std::vector<double>> z(depth), act(depth + 1);
    std::vector<double> delta_out, delta_in;
    double total = 0.0;
    for (std::size_t s = 0; s < scaled.rows(); ++s) {
        const auto x = scaled.row(s);
        act[0].assign(x.begin(), x.end());
        for (std::size_t l = 0; l < depth; ++l) {
            const double* w = params.data() + offset[l];
            const double* b = w + dims[l] * dims[l + 1];
            z[l].assign(dims[l + 1], 0.0);
            act[l + 1].assign(dims[l + 1], 0.0);
            for (std::size_t o = 0; o < dims[l + 1]; ++o) {
                double v = b[o];
                for (std::size_t i = 0; i < dims[l]; ++i) v += w[o * dims[l] + i] * act[l][i];
                z[l][o] = v;
                act[l + 1][o] = l + 1 < depth ? leaky(v) : v;
            }
        }
        const double r = act[depth][0] - scaled.y[s];
        total += huber(r, delta);
        delta_out.assign(1, huber_derivative(r, delta) * inv_n);
        for (std::size_t l = depth; l-- > 0;) {
            const double* w = params.data() + offset[l];
            double* gw = grad.data() + offset[l];
            double* gb = gw + dims[l] * dims[l + 1];
            delta_in.assign(dims[l], 0.0);
            for (std::size_t o = 0; o < dims[l + 1]; ++o) {
                const double d = delta_out[o];
                gb[o] += d;
                for (std::size_t i = 0; i < dims[l]; ++i) {
                    gw[o * dims[l] + i] += d * act[l][i];
                    delta_in[i] += d * w[o * dims[l] + i];
                }
            }
            if (l > 0)
                for (std::size_t i = 0; i < dims[l]; ++i) delta_in[i] *= leaky_grad(z[l - 1][i]);
            delta_out.swap(delta_in);
        }
    }
    return total * inv_n;
}

double mlp_huber_loss(const MlpModel& m, const RegressionSet& scaled, double delta) {
    double total = 0.0;
    for (std::size_t s = 0; s < scaled.rows(); ++s) total += huber(m.forward(scaled.row(s)) - scaled.y[s], delta);
    return total / static_cast<double>(scaled.rows());
}

MlpTrainResult train_mlp(const RegressionSet& train, const RegressionSet& val, const MlpConfig& cfg) {
    if (train.empty()) throw InvalidConfig("training set is empty");
    if (cfg.dims.empty() || cfg.dims.front() != train.dim()) throw DimensionMismatch(cfg.dims.empty() ? 0 : cfg.dims.front(), train.dim());
    if (!(cfg.learning_rate > 0.0) || cfg.max_epochs == 0 || cfg.batch_size == 0)
        throw InvalidConfig("InvalidConfig: MLP learning rate, epochs and batch size must be positive");

    MlpTrainResult res;
    res.model = MlpModel::init(cfg.dims, cfg.seed);
    res.model.feature_names = train.feature_names;
    res.model.set_scaler(FeatureScaler::fit(train));
    const auto tr = res.model.scaler()->apply(train);
    const auto va = val.empty() ? RegressionSet{} : res.model.scaler()->apply(val);
    const bool has_val = va.rows() >= 2;

    auto params = res.model.parameters();
    auto best = params;
    double best_r2 = -INFINITY;
    std::size_t since_best = 0;
    Adam adam(params.size(), cfg.learning_rate);
    Rng rng(cfg.seed ^ 0x6d6c70ULL);
    std::vector<std::size_t> order(tr.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> grad;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto len = std::min(cfg.batch_size, order.size() - start);
            const auto batch = tr.subset(std::span<const std::size_t>(order).subspan(start, len));
            res.model.set_parameters(params);
            const double l = mlp_huber_gradients(res.model, batch, cfg.huber_delta, grad);
            if (!std::isfinite(l)) {
                res.model.set_parameters(best);
                throw DivergenceDetected(epoch);
            }
            epoch_loss += l;
            ++batches;
            adam.step(params, grad);
        }
        res.model.set_parameters(params);
        double val_r2 = NAN;
        if (has_val) {
            std::vector<double> pred(va.rows());
            for (std::size_t i = 0; i < va.rows(); ++i) pred[i] = res.model.forward(va.row(i));
            try {
                val_r2 = r2(pred, va.y);
            } catch (const ZeroVariance&) {
            }
        }
        res.history.push_back({epoch, epoch_loss / static_cast<double>(batches), val_r2});
        if (!has_val) {
            best = params;
            res.best_epoch = epoch;
            continue;
        }
        if (val_r2 > best_r2) {
            best_r2 = val_r2;
            best = params;
            res.best_epoch = epoch;
            since_best = 0;
        } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
            break;
        }
    }
    res.model.set_parameters(best);
    return res;
}

} // namespace kanfoil
