#include "kanfoil/kan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <thread>

#include "kanfoil/error.hpp"
#include "kanfoil/optim.hpp"
#include "kanfoil/rng.hpp"

namespace kanfoil {

double silu(double x) noexcept { return x / (1.0 + std::exp(-x)); }

double silu_derivative(double x) noexcept {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

// Edge -----------------------------------------------------------------------

double Edge::spline(double x) const noexcept {
    const auto lb = local_basis(grid, x);
    double acc = 0.0;
    for (int q = 0; q < lb.count; ++q) acc += coeffs[lb.first + q] * lb.value[q];
    return acc;
}

double Edge::operator()(double x) const noexcept { return w_base * silu(x) + w_spline * spline(x); }

double Edge::derivative(double x) const noexcept {
    const auto lb = local_basis(grid, x);
    double ds = 0.0;
    if (!lb.clamped)
        for (int q = 0; q < lb.count; ++q) ds += coeffs[lb.first + q] * lb.slope[q];
    return w_base * silu_derivative(x) + w_spline * ds;
}

KanLayer::KanLayer(std::size_t in_dim, std::size_t out_dim, const KnotGrid& grid)
    : in_(in_dim), out_(out_dim), edges_(in_dim * out_dim) {
    for (auto& e : edges_) {
        e.grid = grid;
        e.coeffs.assign(grid.basis_count(), 0.0);
    }
}

// KanNetwork -----------------------------------------------------------------

KanNetwork KanNetwork::init(const std::vector<std::size_t>& width, int grid, int degree, std::uint64_t seed,
                            double lo, double hi) {
    if (width.size() < 2) throw InvalidWidth("InvalidWidth: need at least an input and an output layer");
    if (std::any_of(width.begin(), width.end(), [](std::size_t w) { return w == 0; }))
        throw InvalidWidth("InvalidWidth: every layer needs at least one node");
    if (width.back() != 1) throw InvalidWidth("InvalidWidth: the output layer must have exactly one node");

    const KnotGrid kg(grid, degree, lo, hi);
    KanNetwork net;
    net.width_ = width;
    net.seed_ = seed;
    for (std::size_t l = 0; l + 1 < width.size(); ++l) net.layers_.emplace_back(width[l], width[l + 1], kg);
    for (std::size_t i = 0; i < width.front(); ++i) net.feature_names_.push_back("x" + std::to_string(i + 1));

    Rng rng(seed);
    const double sigma = 0.1 / std::sqrt(static_cast<double>(kg.basis_count()));
    for (auto& layer : net.layers_)
        for (auto& e : layer.edges())
            for (auto& c : e.coeffs) c = sigma * rng.normal();
    return net;
}

void KanNetwork::set_feature_names(std::vector<std::string> names) {
    if (names.size() != input_dim()) throw DimensionMismatch(input_dim(), names.size());
    feature_names_ = std::move(names);
}

void KanNetwork::set_scaler(FeatureScaler s) {
    if (s.dim() != input_dim()) throw DimensionMismatch(input_dim(), s.dim());
    scaler_ = std::move(s);
}

double KanNetwork::forward(std::span<const double> x) const {
    if (x.size() != input_dim()) throw DimensionMismatch(input_dim(), x.size());
    std::vector<double> in(x.begin(), x.end()), out;
    for (const auto& layer : layers_) {
        out.assign(layer.out_dim(), 0.0);
        for (std::size_t i = 0; i < layer.in_dim(); ++i)
            for (std::size_t j = 0; j < layer.out_dim(); ++j) {
                const auto& e = layer.edge(i, j);
                if (e.active) out[j] += e(in[i]);
            }
        in.swap(out);
    }
    return in[0];
}

double KanNetwork::forward(std::span<const double> x, ForwardCache& cache) const {
    if (x.size() != input_dim()) throw DimensionMismatch(input_dim(), x.size());
    cache.nodes.resize(width_.size());
    cache.edge_out.resize(layers_.size());
    cache.nodes[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        auto& out = cache.nodes[l + 1];
        auto& eo = cache.edge_out[l];
        out.assign(layer.out_dim(), 0.0);
        eo.assign(layer.in_dim() * layer.out_dim(), 0.0);
        for (std::size_t i = 0; i < layer.in_dim(); ++i)
            for (std::size_t j = 0; j < layer.out_dim(); ++j) {
                const auto& e = layer.edge(i, j);
                if (!e.active) continue;
                const double phi = e(cache.nodes[l][i]);
                eo[i * layer.out_dim() + j] = phi;
                out[j] += phi;
            }
    }
    return cache.nodes.back()[0];
}

RegressionSet KanNetwork::scale_inputs(const RegressionSet& raw) const {
    if (raw.dim() != input_dim()) throw DimensionMismatch(input_dim(), raw.dim());
    return scaler_ ? scaler_->apply(raw) : raw;
}

std::vector<double> KanNetwork::predict(const RegressionSet& raw) const {
    return forward_batch(*this, scale_inputs(raw));
}

MetricsReport KanNetwork::evaluate(const RegressionSet& raw) const {
    const auto pred = predict(raw);
    return evaluate_predictions(pred, raw.y);
}

std::size_t KanNetwork::node_count() const noexcept { return std::accumulate(width_.begin(), width_.end(), std::size_t{0}); }

std::size_t KanNetwork::edge_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.in_dim() * l.out_dim();
    return n;
}

std::size_t KanNetwork::active_edge_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_)
        for (const auto& e : l.edges()) n += e.active ? 1 : 0;
    return n;
}

std::size_t KanNetwork::active_node_count() const noexcept {
    std::size_t n = width_.back();
    for (std::size_t l = 0; l + 1 < width_.size(); ++l) {
        for (std::size_t node = 0; node < width_[l]; ++node) {
            bool used = false;
            const auto& next = layers_[l];
            for (std::size_t j = 0; j < next.out_dim() && !used; ++j) used = next.edge(node, j).active;
            if (!used && l > 0) {
                const auto& prev = layers_[l - 1];
                for (std::size_t i = 0; i < prev.in_dim() && !used; ++i) used = prev.edge(i, node).active;
            }
            n += used ? 1 : 0;
        }
    }
    return n;
}

std::size_t KanNetwork::spline_coeff_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_)
        for (const auto& e : l.edges()) n += e.coeffs.size();
    return n;
}

std::size_t KanNetwork::param_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_)
        for (const auto& e : l.edges()) n += e.coeffs.size() + 2;
    return n;
}

ParamVector KanNetwork::parameters() const {
    ParamVector p;
    p.reserve(param_count());
    for (const auto& l : layers_)
        for (const auto& e : l.edges()) {
            p.insert(p.end(), e.coeffs.begin(), e.coeffs.end());
            p.push_back(e.w_base);
            p.push_back(e.w_spline);
        }
    return p;
}

void KanNetwork::set_parameters(std::span<const double> p) {
    if (p.size() != param_count()) throw DimensionMismatch(param_count(), p.size());
    std::size_t k = 0;
    for (auto& l : layers_)
        for (auto& e : l.edges()) {
            for (auto& c : e.coeffs) c = p[k++];
            e.w_base = p[k++];
            e.w_spline = p[k++];
        }
}

nlohmann::json KanNetwork::to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : layers_) {
        nlohmann::json edges = nlohmann::json::array();
        for (std::size_t i = 0; i < l.in_dim(); ++i)
            for (std::size_t j = 0; j < l.out_dim(); ++j) {
                const auto& e = l.edge(i, j);
                edges.push_back({{"from", i},
                                 {"to", j},
                                 {"domain", {e.grid.lo, e.grid.hi}},
                                 {"g", e.grid.intervals},
                                 {"k", e.grid.degree},
                                 {"coeffs", e.coeffs},
                                 {"w_base", e.w_base},
                                 {"w_spline", e.w_spline},
                                 {"active", e.active}});
            }
        layers.push_back({{"in_dim", l.in_dim()}, {"out_dim", l.out_dim()}, {"edges", std::move(edges)}});
    }
    return {{"schema_version", kSchemaVersion},
            {"model_type", "kan"},
            {"prng", Rng::kIdentifier},
            {"seed", seed_},
            {"width", width_},
            {"spline_convention", "k is the polynomial degree; g + k basis functions per edge"},
            {"base_function", "silu"},
            {"feature_names", feature_names_},
            {"scaler", scaler_ ? scaler_->to_json() : nlohmann::json(nullptr)},
            {"layers", std::move(layers)}};
}

KanNetwork KanNetwork::from_json(const nlohmann::json& j) {
    if (j.value("model_type", "") != "kan") throw FormatError("not a KAN model file");
    if (j.at("schema_version").get<int>() != kSchemaVersion) throw FormatError("unsupported KAN schema_version");
    KanNetwork net;
    net.width_ = j.at("width").get<std::vector<std::size_t>>();
    net.seed_ = j.at("seed").get<std::uint64_t>();
    if (net.width_.size() < 2) throw InvalidWidth("InvalidWidth in model file");
    const auto& layers = j.at("layers");
    if (layers.size() + 1 != net.width_.size()) throw FormatError("layer count does not match width");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& lj = layers[l];
        KanLayer layer(net.width_[l], net.width_[l + 1], KnotGrid{});
        const auto& edges = lj.at("edges");
        if (edges.size() != layer.in_dim() * layer.out_dim()) throw FormatError("edge count does not match width");
        for (const auto& ej : edges) {
            const auto i = ej.at("from").get<std::size_t>();
            const auto t = ej.at("to").get<std::size_t>();
            if (i >= layer.in_dim() || t >= layer.out_dim()) throw FormatError("edge index out of range");
            auto& e = layer.edge(i, t);
            const auto dom = ej.at("domain").get<std::vector<double>>();
            if (dom.size() != 2) throw FormatError("edge domain must be [lo, hi]");
            e.grid = KnotGrid(ej.at("g").get<int>(), ej.at("k").get<int>(), dom[0], dom[1]);
            e.coeffs = ej.at("coeffs").get<std::vector<double>>();
            if (e.coeffs.size() != static_cast<std::size_t>(e.grid.basis_count()))
                throw FormatError("coefficient count does not match grid");
            e.w_base = ej.at("w_base").get<double>();
            e.w_spline = ej.at("w_spline").get<double>();
            e.active = ej.at("active").get<bool>();
        }
        net.layers_.push_back(std::move(layer));
    }
    net.feature_names_ = j.at("feature_names").get<std::vector<std::string>>();
    if (net.feature_names_.size() != net.input_dim()) throw FormatError("feature_names does not match width");
    if (!j.at("scaler").is_null()) net.scaler_ = FeatureScaler::from_json(j.at("scaler"));
    return net;
}

void KanNetwork::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << to_json().dump(1) << '\n';
}

KanNetwork KanNetwork::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFile(path.string());
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

// loss and gradients ---------------------------------------------------------

namespace {

constexpr std::size_t kChunkRows = 256;

std::size_t worker_count() {
    if (const char* env = std::getenv("KANFOIL_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return static_cast<std::size_t>(n);
    }
    const auto hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : std::min<std::size_t>(hw, 16);
}

// Runs fn(chunk, begin, end) over fixed row chunks. Chunk boundaries do not
// depend on the thread count, so per-chunk results are reproducible.
template <typename Fn>
void for_each_chunk(std::size_t rows, Fn&& fn) {
    const std::size_t chunks = (rows + kChunkRows - 1) / kChunkRows;
    const std::size_t workers = std::min(worker_count(), chunks);
    auto run = [&](std::size_t w) {
        for (std::size_t c = w; c < chunks; c += workers) fn(c, c * kChunkRows, std::min(rows, (c + 1) * kChunkRows));
    };
    if (workers <= 1) {
        run(0);
        return;
    }
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run, w);
    run(0);
    for (auto& t : pool) t.join();
}

std::size_t chunk_count(std::size_t rows) { return (rows + kChunkRows - 1) / kChunkRows; }

// Pairwise tree reduction of per-chunk vectors into parts[0].
void reduce_pairwise(std::vector<std::vector<double>>& parts) {
    for (std::size_t stride = 1; stride < parts.size(); stride *= 2)
        for (std::size_t i = 0; i + stride < parts.size(); i += 2 * stride)
            for (std::size_t k = 0; k < parts[i].size(); ++k) parts[i][k] += parts[i + stride][k];
}

double reduce_pairwise(std::vector<double> parts) {
    if (parts.empty()) return 0.0;
    for (std::size_t stride = 1; stride < parts.size(); stride *= 2)
        for (std::size_t i = 0; i + stride < parts.size(); i += 2 * stride) parts[i] += parts[i + stride];
    return parts[0];
}

struct EdgeScratch {
    const LocalBasis* basis = nullptr;
    LocalBasis own;
    double silu = 0.0;
    double spline = 0.0;
    double phi = 0.0;
};

// Forward state for one sample. Edges leaving the same node on an identical
// grid share one basis evaluation.
class SampleWorkspace {
public:
    explicit SampleWorkspace(const KanNetwork& net) : net_(net) {
        const std::size_t depth = net.depth();
        nodes_.resize(depth + 1);
        node_basis_.resize(depth);
        node_silu_.resize(depth);
        edges_.resize(depth);
        for (std::size_t l = 0; l < depth; ++l) {
            nodes_[l].resize(net.width()[l]);
            node_basis_[l].resize(net.width()[l]);
            node_silu_[l].resize(net.width()[l]);
            edges_[l].resize(net.layer(l).edges().size());
        }
        nodes_[depth].resize(1);
    }

    double forward(std::span<const double> x, std::size_t& clamped) {
        std::copy(x.begin(), x.end(), nodes_[0].begin());
        for (std::size_t l = 0; l < net_.depth(); ++l) {
            const auto& layer = net_.layer(l);
            auto& out = nodes_[l + 1];
            std::fill(out.begin(), out.end(), 0.0);
            for (std::size_t i = 0; i < layer.in_dim(); ++i) {
                const double xi = nodes_[l][i];
                const KnotGrid& shared = layer.edge(i, 0).grid;
                node_basis_[l][i] = local_basis(shared, xi);
                node_silu_[l][i] = silu(xi);
                for (std::size_t j = 0; j < layer.out_dim(); ++j) {
                    const auto& e = layer.edge(i, j);
                    if (!e.active) continue;
                    auto& sc = edges_[l][i * layer.out_dim() + j];
                    if (e.grid == shared) {
                        sc.basis = &node_basis_[l][i];
                    } else {
                        sc.own = local_basis(e.grid, xi);
                        sc.basis = &sc.own;
                    }
                    if (sc.basis->clamped) ++clamped;
                    sc.silu = node_silu_[l][i];
                    double sp = 0.0;
                    const double* c = e.coeffs.data() + sc.basis->first;
                    for (int q = 0; q < sc.basis->count; ++q) sp += c[q] * sc.basis->value[q];
                    sc.spline = sp;
                    sc.phi = e.w_base * sc.silu + e.w_spline * sp;
                    out[j] += sc.phi;
                }
            }
        }
        return nodes_.back()[0];
    }

    // Accumulates d loss / d params for this sample given d loss / d output and
    // the per-edge regulariser weights (empty when off).
    void backward(double d_out, double inv_n, const std::vector<std::vector<double>>& reg_w,
                  const std::vector<std::size_t>& layer_offset, double* grad) {
        delta_.assign(1, d_out);
        for (std::size_t l = net_.depth(); l-- > 0;) {
            const auto& layer = net_.layer(l);
            delta_in_.assign(layer.in_dim(), 0.0);
            std::size_t off = layer_offset[l];
            for (std::size_t i = 0; i < layer.in_dim(); ++i) {
                const double xi = nodes_[l][i];
                for (std::size_t j = 0; j < layer.out_dim(); ++j) {
                    const std::size_t eidx = i * layer.out_dim() + j;
                    const auto& e = layer.edge(i, j);
                    const std::size_t nc = e.coeffs.size();
                    if (e.active) {
                        const auto& sc = edges_[l][eidx];
                        const LocalBasis& lb = *sc.basis;
                        double up = delta_[j];
                        if (!reg_w.empty() && sc.phi != 0.0) up += reg_w[l][eidx] * inv_n * (sc.phi > 0.0 ? 1.0 : -1.0);
                        const double ws = up * e.w_spline;
                        double* g = grad + off + lb.first;
                        for (int q = 0; q < lb.count; ++q) g[q] += ws * lb.value[q];
                        grad[off + nc] += up * sc.silu;
                        grad[off + nc + 1] += up * sc.spline;
                        if (l > 0) {
                            double ds = 0.0;
                            if (!lb.clamped) {
                                const double* c = e.coeffs.data() + lb.first;
                                for (int q = 0; q < lb.count; ++q) ds += c[q] * lb.slope[q];
                            }
                            delta_in_[i] += up * (e.w_base * silu_derivative(xi) + e.w_spline * ds);
                        }
                    }
                    off += nc + 2;
                }
            }
            delta_.swap(delta_in_);
        }
    }

    const EdgeScratch& edge(std::size_t l, std::size_t e) const { return edges_[l][e]; }

private:
    const KanNetwork& net_;
    std::vector<std::vector<double>> nodes_;
    std::vector<std::vector<LocalBasis>> node_basis_;
    std::vector<std::vector<double>> node_silu_;
    std::vector<std::vector<EdgeScratch>> edges_;
    std::vector<double> delta_, delta_in_;
};

// Per-edge mean |phi| over the data for every layer.
std::vector<std::vector<double>> mean_abs_activation(const KanNetwork& net, const RegressionSet& data) {
    std::size_t flat = 0;
    for (std::size_t l = 0; l < net.depth(); ++l) flat += net.layer(l).edges().size();
    std::vector<std::vector<double>> parts(chunk_count(data.rows()), std::vector<double>(flat, 0.0));
    for_each_chunk(data.rows(), [&](std::size_t c, std::size_t begin, std::size_t end) {
        SampleWorkspace ws(net);
        std::size_t clamped = 0;
        auto& acc = parts[c];
        for (std::size_t s = begin; s < end; ++s) {
            ws.forward(data.row(s), clamped);
            std::size_t k = 0;
            for (std::size_t l = 0; l < net.depth(); ++l) {
                const auto edges = net.layer(l).edges();
                for (std::size_t e = 0; e < edges.size(); ++e, ++k)
                    if (edges[e].active) acc[k] += std::abs(ws.edge(l, e).phi);
            }
        }
    });
    reduce_pairwise(parts);
    std::vector<std::vector<double>> a(net.depth());
    std::size_t k = 0;
    for (std::size_t l = 0; l < net.depth(); ++l) {
        a[l].resize(net.layer(l).edges().size());
        for (auto& v : a[l]) v = parts[0][k++] / static_cast<double>(data.rows());
    }
    return a;
}

double layer_entropy(std::span<const double> a) {
    const double total = std::accumulate(a.begin(), a.end(), 0.0);
    if (total <= 0.0) return 0.0;
    double h = 0.0;
    for (double v : a)
        if (v > 0.0) {
            const double p = v / total;
            h -= p * std::log(p);
        }
    return h;
}

// d(loss)/d(mean|phi_e|) for every edge, and the regulariser value.
std::vector<std::vector<double>> regulariser_weights(const KanNetwork& net, const std::vector<std::vector<double>>& a,
                                                     const Regularization& reg, LossBreakdown& out) {
    std::vector<std::vector<double>> w(a.size());
    for (std::size_t l = 0; l < a.size(); ++l) {
        const auto edges = net.layer(l).edges();
        w[l].assign(a[l].size(), 0.0);
        double total = 0.0;
        for (std::size_t e = 0; e < a[l].size(); ++e)
            if (edges[e].active) {
                out.l1 += a[l][e];
                total += a[l][e];
            }
        const double h = layer_entropy(a[l]);
        out.entropy += h;
        for (std::size_t e = 0; e < a[l].size(); ++e) {
            if (!edges[e].active) continue;
            double dh = 0.0;
            if (total > 0.0 && a[l][e] > 0.0) dh = -(std::log(a[l][e] / total) + h) / total;
            w[l][e] = reg.lambda_l1 + reg.lambda_entropy * dh;
        }
    }
    return w;
}

std::vector<std::size_t> layer_offsets(const KanNetwork& net) {
    std::vector<std::size_t> off(net.depth());
    std::size_t k = 0;
    for (std::size_t l = 0; l < net.depth(); ++l) {
        off[l] = k;
        for (const auto& e : net.layer(l).edges()) k += e.coeffs.size() + 2;
    }
    return off;
}

void check_batch(const KanNetwork& net, const RegressionSet& scaled) {
    if (scaled.empty()) throw InvalidConfig("batch is empty");
    if (scaled.dim() != net.input_dim()) throw DimensionMismatch(net.input_dim(), scaled.dim());
}

} // namespace

std::vector<double> forward_batch(const KanNetwork& net, const RegressionSet& scaled) {
    if (scaled.dim() != net.input_dim()) throw DimensionMismatch(net.input_dim(), scaled.dim());
    std::vector<double> out(scaled.rows());
    for_each_chunk(scaled.rows(), [&](std::size_t, std::size_t begin, std::size_t end) {
        SampleWorkspace ws(net);
        std::size_t clamped = 0;
        for (std::size_t s = begin; s < end; ++s) out[s] = ws.forward(scaled.row(s), clamped);
    });
    return out;
}

LossBreakdown loss(const KanNetwork& net, const RegressionSet& scaled, const Regularization& reg) {
    check_batch(net, scaled);
    LossBreakdown out;
    const auto pred = forward_batch(net, scaled);
    std::vector<double> parts(chunk_count(scaled.rows()), 0.0);
    for (std::size_t s = 0; s < scaled.rows(); ++s) {
        const double r = pred[s] - scaled.y[s];
        parts[s / kChunkRows] += r * r;
    }
    out.mse = reduce_pairwise(std::move(parts)) / static_cast<double>(scaled.rows());
    if (reg.enabled()) regulariser_weights(net, mean_abs_activation(net, scaled), reg, out);
    out.total = out.mse + reg.lambda_l1 * out.l1 + reg.lambda_entropy * out.entropy;
    return out;
}

LossBreakdown gradients(const KanNetwork& net, const RegressionSet& scaled, const Regularization& reg,
                        ParamVector& grad) {
    check_batch(net, scaled);
    LossBreakdown out;
    const double inv_n = 1.0 / static_cast<double>(scaled.rows());

    std::vector<std::vector<double>> reg_w;
    if (reg.enabled()) reg_w = regulariser_weights(net, mean_abs_activation(net, scaled), reg, out);
    const auto offsets = layer_offsets(net);
    const std::size_t np = net.param_count();

    const std::size_t chunks = chunk_count(scaled.rows());
    std::vector<std::vector<double>> parts(chunks, std::vector<double>(np + 2, 0.0));
    for_each_chunk(scaled.rows(), [&](std::size_t c, std::size_t begin, std::size_t end) {
        SampleWorkspace ws(net);
        auto& acc = parts[c];
        std::size_t clamped = 0;
        double sse = 0.0;
        for (std::size_t s = begin; s < end; ++s) {
            const double residual = ws.forward(scaled.row(s), clamped) - scaled.y[s];
            sse += residual * residual;
            ws.backward(2.0 * residual * inv_n, inv_n, reg_w, offsets, acc.data());
        }
        acc[np] = sse;
        acc[np + 1] = static_cast<double>(clamped);
    });
    reduce_pairwise(parts);
    grad.assign(parts[0].begin(), parts[0].begin() + static_cast<std::ptrdiff_t>(np));
    out.mse = parts[0][np] * inv_n;
    out.clamped_inputs = static_cast<std::size_t>(parts[0][np + 1]);
    out.total = out.mse + reg.lambda_l1 * out.l1 + reg.lambda_entropy * out.entropy;
    return out;
}

// training -------------------------------------------------------------------

void TrainConfig::validate() const {
    if (steps < 1) throw InvalidConfig("InvalidConfig: steps must be >= 1");
    if (!(learning_rate > 0.0)) throw InvalidConfig("InvalidConfig: learning_rate must be > 0");
    if (reg.lambda_l1 < 0.0 || reg.lambda_entropy < 0.0) throw InvalidConfig("InvalidConfig: lambdas must be >= 0");
}

namespace {

double safe_r2(const KanNetwork& net, const RegressionSet& scaled) {
    if (scaled.rows() < 2) return NAN;
    const auto pred = forward_batch(net, scaled);
    try {
        return r2(pred, scaled.y);
    } catch (const ZeroVariance&) {
        return NAN;
    }
}

} // namespace

TrainResult train(KanNetwork& net, const RegressionSet& train_raw, const RegressionSet& val_raw, const TrainConfig& cfg) {
    cfg.validate();
    if (train_raw.empty()) throw InvalidConfig("training set is empty");
    const auto train_set = net.scale_inputs(train_raw);
    const auto val_set = val_raw.empty() ? RegressionSet{} : net.scale_inputs(val_raw);
    const bool has_val = val_set.rows() >= 2;

    TrainResult result;
    ParamVector params = net.parameters();
    ParamVector best = params;
    ParamVector grad;
    double best_r2 = -INFINITY;
    std::size_t since_best = 0;

    const bool minibatch = cfg.batch_size > 0 && cfg.batch_size < train_set.rows();
    std::vector<std::size_t> order(train_set.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.seed);
    std::size_t cursor = order.size();
    RegressionSet batch;

    auto objective = [&](std::span<const double> p, std::vector<double>& g) {
        net.set_parameters(p);
        return gradients(net, train_set, cfg.reg, g).total;
    };
    Adam adam(params.size(), cfg.learning_rate);
    Lbfgs lbfgs(cfg.lbfgs_history, cfg.learning_rate);
    double lbfgs_f = 0.0;
    ParamVector lbfgs_g;
    if (cfg.optimizer == OptimizerKind::lbfgs) lbfgs_f = objective(params, lbfgs_g);

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        net.set_parameters(params);
        double train_loss = 0.0;
        if (cfg.optimizer == OptimizerKind::adam) {
            const RegressionSet* data = &train_set;
            if (minibatch) {
                if (cursor + cfg.batch_size > order.size()) {
                    rng.shuffle(std::span<std::size_t>(order));
                    cursor = 0;
                }
                batch = train_set.subset(std::span<const std::size_t>(order).subspan(cursor, cfg.batch_size));
                cursor += cfg.batch_size;
                data = &batch;
            }
            const auto lb = gradients(net, *data, cfg.reg, grad);
            train_loss = lb.total;
            result.clamped_inputs = lb.clamped_inputs;
            result.edge_evaluations = data->rows() * net.active_edge_count();
        } else {
            train_loss = lbfgs_f;
        }

        if (!std::isfinite(train_loss)) {
            net.set_parameters(best);
            throw DivergenceDetected(step);
        }

        const double val_r2 = has_val ? safe_r2(net, val_set) : NAN;
        result.history.push_back({step, train_loss, val_r2});
        result.steps_run = step + 1;

        if (has_val && cfg.restore_best) {
            if (val_r2 > best_r2) {
                best_r2 = val_r2;
                best = params;
                result.best_step = step;
                since_best = 0;
            } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
                break;
            }
        } else {
            best = params;
            result.best_step = step;
        }

        if (cfg.optimizer == OptimizerKind::adam) {
            adam.step(params, grad);
        } else {
            if (!lbfgs.step(objective, params, lbfgs_f, lbfgs_g)) break;
        }
    }

    if (!has_val || !cfg.restore_best) {
        // the last update has not been scored yet; keep it if it is finite
        net.set_parameters(params);
        const double f = loss(net, train_set, cfg.reg).total;
        if (std::isfinite(f)) best = params;
    }
    net.set_parameters(best);
    result.best_val_r2 = has_val && cfg.restore_best ? best_r2 : NAN;
    if (cfg.optimizer == OptimizerKind::lbfgs) {
        const auto lb = gradients(net, train_set, cfg.reg, grad);
        result.clamped_inputs = lb.clamped_inputs;
        result.edge_evaluations = train_set.rows() * net.active_edge_count();
    }
    return result;
}

void write_history_jsonl(const std::vector<HistoryEntry>& history, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& h : history) {
        nlohmann::json j = {{"step", h.step}, {"train_loss", h.train_loss}};
        j["val_r2"] = std::isfinite(h.val_r2) ? nlohmann::json(h.val_r2) : nlohmann::json(nullptr);
        out << j.dump() << '\n';
    }
}

// grid refit -----------------------------------------------------------------

void refit_grids(KanNetwork& net, const RegressionSet& scaled, double lo_pct, double hi_pct) {
    if (scaled.empty()) throw InvalidConfig("grid refit needs samples");
    if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 100.0)) throw InvalidConfig("bad percentile range");
    std::vector<std::vector<double>> inputs(net.depth());
    ForwardCache cache;
    // node values per layer, collected before any grid moves
    std::vector<std::vector<std::vector<double>>> node_samples(net.depth());
    for (std::size_t l = 0; l < net.depth(); ++l) node_samples[l].resize(net.width()[l]);
    for (std::size_t s = 0; s < scaled.rows(); ++s) {
        net.forward(scaled.row(s), cache);
        for (std::size_t l = 0; l < net.depth(); ++l)
            for (std::size_t i = 0; i < net.width()[l]; ++i) node_samples[l][i].push_back(cache.nodes[l][i]);
    }
    auto pct = [](std::vector<double> v, double p) {
        std::sort(v.begin(), v.end());
        const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    for (std::size_t l = 0; l < net.depth(); ++l) {
        auto& layer = net.layer(l);
        for (std::size_t i = 0; i < layer.in_dim(); ++i) {
            const auto& xs = node_samples[l][i];
            double lo = pct(xs, lo_pct);
            double hi = pct(xs, hi_pct);
            if (!(hi > lo)) {
                lo -= 0.5;
                hi += 0.5;
            }
            for (std::size_t j = 0; j < layer.out_dim(); ++j) {
                auto& e = layer.edge(i, j);
                std::vector<double> ys(xs.size());
                for (std::size_t s = 0; s < xs.size(); ++s) ys[s] = e.spline(xs[s]);
                KnotGrid g(e.grid.intervals, e.grid.degree, lo, hi);
                e.coeffs = fit_spline_coeffs(g, xs, ys);
                e.grid = g;
            }
        }
    }
}

} // namespace kanfoil
