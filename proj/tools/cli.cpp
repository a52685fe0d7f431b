#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "kanfoil/error.hpp"
#include "kanfoil/formula.hpp"
#include "kanfoil/kan.hpp"
#include "kanfoil/prune.hpp"
#include "kanfoil/rng.hpp"
#include "kanfoil/symbolic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace kanfoil::cli {

// config ---------------------------------------------------------------------

json RunConfig::to_json() const {
    json j;
    j["input"] = input;
    j["data_dir"] = data_dir;
    j["out_dir"] = out_dir;
    j["columns"] = columns.to_json();
    j["dedup_key"] = dedup_key;
    j["train_fraction"] = train_fraction;
    j["val_fraction"] = val_fraction;
    j["seed"] = seed;
    j["kan"] = {{"width", kan.width},
                {"grid", kan.grid},
                {"k", kan.k},
                {"optimizer", kan.optimizer},
                {"learning_rate", kan.learning_rate},
                {"steps", kan.steps},
                {"patience", kan.patience},
                {"batch_size", kan.batch_size},
                {"sparsify_steps", kan.sparsify_steps},
                {"lambda_l1", kan.lambda_l1},
                {"lambda_entropy", kan.lambda_entropy}};
    j["mlp"] = {{"dims", mlp.dims},
                {"learning_rate", mlp.learning_rate},
                {"huber_delta", mlp.huber_delta},
                {"batch_size", mlp.batch_size},
                {"max_epochs", mlp.max_epochs},
                {"patience", mlp.patience}};
    j["lr"] = {{"correlation_threshold", lr_threshold}};
    j["prune"] = {{"percentile", prune_percentile}, {"finetune_steps", finetune_steps}};
    j["symbolic"] = {{"library", library}, {"precision", precision}};
    return j;
}

namespace {

void reject_unknown(const json& defaults, const json& given, const std::string& path) {
    if (!given.is_object()) return;
    for (const auto& [key, value] : given.items()) {
        if (!defaults.contains(key)) throw InvalidConfig("InvalidConfig: unknown key " + path + key);
        if (defaults[key].is_object() && key != "columns") reject_unknown(defaults[key], value, path + key + ".");
    }
}

} // namespace

RunConfig RunConfig::from_json(const json& j) {
    if (!j.is_object()) throw InvalidConfig("InvalidConfig: config must be a JSON object");
    const RunConfig def;
    reject_unknown(def.to_json(), j, "");
    json m = def.to_json();
    m.merge_patch(j);
    try {
        RunConfig c;
        c.input = m["input"].get<std::string>();
        c.data_dir = m["data_dir"].get<std::string>();
        c.out_dir = m["out_dir"].get<std::string>();
        c.columns = ColumnMap::from_json(m["columns"]);
        c.dedup_key = m["dedup_key"].get<std::vector<std::string>>();
        c.train_fraction = m["train_fraction"].get<double>();
        c.val_fraction = m["val_fraction"].get<double>();
        c.seed = m["seed"].get<std::uint64_t>();
        const auto& k = m["kan"];
        c.kan.width = k["width"].get<std::vector<std::size_t>>();
        c.kan.grid = k["grid"].get<int>();
        c.kan.k = k["k"].get<int>();
        c.kan.optimizer = k["optimizer"].get<std::string>();
        c.kan.learning_rate = k["learning_rate"].get<double>();
        c.kan.steps = k["steps"].get<std::size_t>();
        c.kan.patience = k["patience"].get<std::size_t>();
        c.kan.batch_size = k["batch_size"].get<std::size_t>();
        c.kan.sparsify_steps = k["sparsify_steps"].get<std::size_t>();
        c.kan.lambda_l1 = k["lambda_l1"].get<double>();
        c.kan.lambda_entropy = k["lambda_entropy"].get<double>();
        const auto& p = m["mlp"];
        c.mlp.dims = p["dims"].get<std::vector<std::size_t>>();
        c.mlp.learning_rate = p["learning_rate"].get<double>();
        c.mlp.huber_delta = p["huber_delta"].get<double>();
        c.mlp.batch_size = p["batch_size"].get<std::size_t>();
        c.mlp.max_epochs = p["max_epochs"].get<std::size_t>();
        c.mlp.patience = p["patience"].get<std::size_t>();
        c.lr_threshold = m["lr"]["correlation_threshold"].get<double>();
        c.prune_percentile = m["prune"]["percentile"].get<double>();
        c.finetune_steps = m["prune"]["finetune_steps"].get<std::size_t>();
        c.library = m["symbolic"]["library"].get<std::string>();
        c.precision = m["symbolic"]["precision"].get<int>();
        c.mlp.seed = c.seed;
        if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0))
            throw InvalidConfig("InvalidConfig: train_fraction must lie in (0, 1)");
        if (!(c.val_fraction >= 0.0 && c.val_fraction < 1.0))
            throw InvalidConfig("InvalidConfig: val_fraction must lie in [0, 1)");
        if (c.kan.optimizer != "adam" && c.kan.optimizer != "lbfgs")
            throw InvalidConfig("InvalidConfig: kan.optimizer must be adam or lbfgs");
        if (!(c.prune_percentile >= 0.0 && c.prune_percentile <= 100.0))
            throw InvalidConfig("InvalidConfig: prune.percentile must lie in [0, 100]");
        return c;
    } catch (const json::exception& e) {
        throw InvalidConfig(std::string("InvalidConfig: ") + e.what());
    }
}

// helpers --------------------------------------------------------------------

namespace {

struct Io {
    std::ostream& out;
    std::ostream& err;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + path.string());
    f << text;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create directory " + dir.string() + ": " + ec.message());
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json metrics_json(const MetricsReport& m) { return {{"mse", m.mse}, {"r2", nullable(m.r2)}, {"n", m.n}}; }

/// run.json keeps one entry per command so later steps do not erase earlier ones.
void record_run(const fs::path& dir, const std::string& command, const RunConfig& cfg, const json& args) {
    ensure_dir(dir);
    const auto path = dir / "run.json";
    json j = json::object();
    if (fs::exists(path)) {
        std::ifstream in(path);
        j = json::parse(in, nullptr, false);
        if (j.is_discarded() || !j.is_object()) j = json::object();
    }
    j["schema_version"] = 1;
    j["prng"] = Rng::kIdentifier;
    j["commands"][command] = {{"config", cfg.to_json()}, {"args", args}};
    save_json(j, path);
}

RegressionSet load_split(const RunConfig& cfg, const std::string& name) {
    return to_regression_set(load_csv(fs::path(cfg.data_dir) / (name + ".csv")));
}

/// Train split minus a seeded validation slice used only for early stopping.
std::pair<RegressionSet, RegressionSet> carve_validation(const RegressionSet& train, const RunConfig& cfg) {
    if (cfg.val_fraction <= 0.0 || train.rows() < 20) return {train, RegressionSet{}};
    return split(train, SplitSpec{1.0 - cfg.val_fraction, cfg.seed ^ 0x76616cULL});
}

std::vector<Role> roles_from_names(const std::vector<std::string>& names) {
    std::vector<Role> roles;
    for (const auto& n : names) roles.push_back(parse_role(n));
    if (roles.empty()) throw InvalidConfig("InvalidConfig: dedup_key is empty");
    return roles;
}

std::string fixed(double v, int digits) {
    if (!std::isfinite(v)) return "n/a";
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

std::string model_path_or(const std::string& given, const RunConfig& cfg, const char* fallback) {
    return given.empty() ? (fs::path(cfg.out_dir) / fallback).string() : given;
}

struct LoadedModel {
    std::string type;
    json raw;
};

LoadedModel load_model_file(const fs::path& path) {
    LoadedModel m;
    m.raw = load_json(path);
    if (!m.raw.is_object() || !m.raw.contains("model_type")) throw FormatError("FormatError: no model_type in " + path.string());
    m.type = m.raw["model_type"].get<std::string>();
    return m;
}

MetricsReport evaluate_model(const LoadedModel& m, const RegressionSet& raw) {
    if (m.type == "kan") return KanNetwork::from_json(m.raw).evaluate(raw);
    if (m.type == "lr") return LinearModel::from_json(m.raw).evaluate(raw);
    if (m.type == "mlp") return MlpModel::from_json(m.raw).evaluate(raw);
    throw FormatError("FormatError: unknown model_type " + m.type);
}

TrainConfig kan_train_config(const RunConfig& cfg) {
    TrainConfig t;
    t.optimizer = cfg.kan.optimizer == "lbfgs" ? OptimizerKind::lbfgs : OptimizerKind::adam;
    t.learning_rate = cfg.kan.learning_rate;
    t.steps = cfg.kan.steps;
    t.patience = cfg.kan.patience;
    t.batch_size = cfg.kan.batch_size;
    t.seed = cfg.seed;
    return t;
}

// prep -------------------------------------------------------------------------

void cmd_prep(const RunConfig& cfg, Io io) {
    if (cfg.input.empty()) throw InvalidConfig("InvalidConfig: prep needs --input");
    Diagnostics diag;
    const Dataset raw = load_csv(cfg.input, cfg.columns, &diag);
    const auto key = roles_from_names(cfg.dedup_key);
    const Dataset unique = dedup(raw, key);
    const auto [train, test] = split(unique, SplitSpec{cfg.train_fraction, cfg.seed});
    if (train.empty()) throw InvalidConfig("InvalidConfig: training split is empty");

    const fs::path dir = cfg.data_dir;
    ensure_dir(dir);
    write_csv(train, dir / "train.csv");
    write_csv(test, dir / "test.csv");

    const auto scaler = FeatureScaler::fit(train);
    json side;
    side["schema_version"] = 1;
    side["prng"] = Rng::kIdentifier;
    side["seed"] = cfg.seed;
    side["train_fraction"] = cfg.train_fraction;
    side["dedup_key"] = cfg.dedup_key;
    side["columns"] = cfg.columns.to_json();
    side["counts"] = {{"loaded", raw.size()}, {"deduplicated", unique.size()}, {"train", train.size()}, {"test", test.size()}};
    side["scaler"] = scaler.to_json();
    save_json(side, dir / "prep.json");
    record_run(dir, "prep", cfg, json::object());

    const std::size_t shown = std::min<std::size_t>(diag.warnings.size(), 5);
    for (std::size_t i = 0; i < shown; ++i) io.err << "warning: " << diag.warnings[i] << '\n';
    if (diag.warnings.size() > shown) io.err << "warning: ... " << diag.warnings.size() - shown << " more\n";

    io.out << "loaded " << raw.size() << '\n'
           << "deduplicated " << unique.size() << '\n'
           << "split " << train.size() << " / " << test.size() << '\n';
}

// train ------------------------------------------------------------------------

struct TrainOutcome {
    json model;
    std::vector<HistoryEntry> history;
    json metrics;
};

TrainOutcome train_kan(const RunConfig& cfg, const RegressionSet& train, const RegressionSet& test, Io io) {
    auto net = KanNetwork::init(cfg.kan.width, cfg.kan.grid, cfg.kan.k, cfg.seed);
    std::vector<std::string> names;
    for (auto r : feature_roles()) names.emplace_back(role_name(r));
    net.set_feature_names(names);
    net.set_scaler(FeatureScaler::fit(train));

    const auto [fit, val] = carve_validation(train, cfg);
    auto tc = kan_train_config(cfg);
    auto res = kanfoil::train(net, fit, val, tc);
    auto history = res.history;
    std::size_t steps_total = res.steps_run;
    io.err << "kan fit: " << res.steps_run << " steps, best step " << res.best_step << ", val r2 "
           << fixed(res.best_val_r2, 6) << '\n';

    std::size_t sparsify_run = 0;
    if (cfg.kan.sparsify_steps > 0) {
        TrainConfig sc = tc;
        sc.steps = cfg.kan.sparsify_steps;
        sc.reg = {cfg.kan.lambda_l1, cfg.kan.lambda_entropy};
        sc.patience = 0;
        sc.restore_best = false;
        auto sres = kanfoil::train(net, fit, val, sc);
        for (auto h : sres.history) {
            h.step += steps_total;
            history.push_back(h);
        }
        sparsify_run = sres.steps_run;
        steps_total += sres.steps_run;
        res.clamped_inputs = sres.clamped_inputs;
        res.edge_evaluations = sres.edge_evaluations;
    }

    json m;
    m["model_type"] = "kan";
    m["train"] = metrics_json(net.evaluate(train));
    m["test"] = metrics_json(net.evaluate(test));
    m["steps"] = {{"fit", res.steps_run}, {"sparsify", sparsify_run}};
    m["clamped_inputs"] = res.clamped_inputs;
    m["edge_evaluations"] = res.edge_evaluations;
    m["nodes"] = net.active_node_count();
    m["edges"] = net.active_edge_count();
    return {net.to_json(), history, m};
}

TrainOutcome train_lr(const RunConfig& cfg, const RegressionSet& train, const RegressionSet& test, Io io) {
    Diagnostics diag;
    const auto retained = correlation_filter(train, cfg.lr_threshold, &diag);
    for (const auto& w : diag.warnings) io.err << "warning: " << w << '\n';
    const auto model = fit_ols(train, retained);
    const auto tr = model.evaluate(train);
    json m;
    m["model_type"] = "lr";
    m["train"] = metrics_json(tr);
    m["test"] = metrics_json(model.evaluate(test));
    json kept = json::array(), dropped = json::array();
    for (std::size_t i = 0; i < train.dim(); ++i)
        (std::find(retained.begin(), retained.end(), i) != retained.end() ? kept : dropped).push_back(train.feature_names[i]);
    m["retained"] = kept;
    m["dropped"] = dropped;
    return {model.to_json(), {{0, tr.mse, NAN}}, m};
}

TrainOutcome train_mlp_model(const RunConfig& cfg, const RegressionSet& train, const RegressionSet& test, Io io) {
    const auto [fit, val] = carve_validation(train, cfg);
    MlpConfig mc = cfg.mlp;
    mc.seed = cfg.seed;
    auto res = train_mlp(fit, val, mc);
    io.err << "mlp: " << res.history.size() << " epochs, best epoch " << res.best_epoch << '\n';
    json m;
    m["model_type"] = "mlp";
    m["train"] = metrics_json(res.model.evaluate(train));
    m["test"] = metrics_json(res.model.evaluate(test));
    m["epochs"] = res.history.size();
    m["best_epoch"] = res.best_epoch;
    m["inputs"] = "scaled to [-1, 1] on the training split";
    return {res.model.to_json(), res.history, m};
}

void cmd_train(const RunConfig& cfg, const std::string& model, Io io) {
    const auto train = load_split(cfg, "train");
    const auto test = load_split(cfg, "test");
    const auto t0 = std::chrono::steady_clock::now();
    TrainOutcome o;
    if (model == "kan")
        o = train_kan(cfg, train, test, io);
    else if (model == "lr")
        o = train_lr(cfg, train, test, io);
    else
        o = train_mlp_model(cfg, train, test, io);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const fs::path dir = cfg.out_dir;
    ensure_dir(dir);
    save_json(o.model, dir / ("model_" + model + ".json"));
    write_history_jsonl(o.history, dir / ("history_" + model + ".jsonl"));
    o.metrics["schema_version"] = 1;
    save_json(o.metrics, dir / ("metrics_" + model + ".json"));
    record_run(dir, "train." + model, cfg, {{"model", model}});

    io.err << model << ": " << fixed(secs, 1) << " s\n";
    io.out << model << " train r2 " << fixed(o.metrics["train"]["r2"].get<double>(), 6) << " mse "
           << o.metrics["train"]["mse"].get<double>() << '\n'
           << model << " test r2 " << fixed(o.metrics["test"]["r2"].get<double>(), 6) << " mse "
           << o.metrics["test"]["mse"].get<double>() << '\n';
}

// evaluate -----------------------------------------------------------------------

void cmd_evaluate(const RunConfig& cfg, const std::string& model_file, const std::string& data, Io io) {
    const auto m = load_model_file(model_path_or(model_file, cfg, "model_kan.json"));
    fs::path path = data.empty() ? fs::path(cfg.data_dir) / "test.csv" : fs::path(data);
    if (fs::is_directory(path)) path /= "test.csv";
    const auto set = to_regression_set(load_csv(path));
    json j = metrics_json(evaluate_model(m, set));
    j["model_type"] = m.type;
    io.out << j.dump(1) << '\n';
}

// prune / importance -------------------------------------------------------------

json importance_json(const KanNetwork& net, const ImportanceReport& rep) {
    json j = rep.to_json();
    const auto imp = feature_importance(net, rep);
    json fi = json::object();
    std::vector<std::size_t> order(imp.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return imp[a] > imp[b]; });
    json ranking = json::array();
    for (std::size_t i = 0; i < imp.size(); ++i) fi[net.feature_names()[i]] = imp[i];
    for (auto i : order) ranking.push_back(net.feature_names()[i]);
    j["feature_importance"] = fi;
    j["ranking"] = ranking;
    return j;
}

void cmd_importance(const RunConfig& cfg, const std::string& model_file, Io io) {
    const auto net = KanNetwork::load(model_path_or(model_file, cfg, "model_kan.json"));
    const auto train = load_split(cfg, "train");
    const auto rep = score(net, net.scale_inputs(train), "train");
    const json j = importance_json(net, rep);
    const fs::path dir = cfg.out_dir;
    ensure_dir(dir);
    save_json(j, dir / "importance.json");
    write_text(dir / "graph.dot", to_dot(net, rep));
    record_run(dir, "importance", cfg, {{"model_file", model_file}});
    for (const auto& name : j["ranking"])
        io.out << name.get<std::string>() << ' ' << fixed(j["feature_importance"][name.get<std::string>()].get<double>(), 4)
               << '\n';
}

void cmd_prune(const RunConfig& cfg, const std::string& model_file, Io io) {
    const auto net = KanNetwork::load(model_path_or(model_file, cfg, "model_kan.json"));
    const auto train = load_split(cfg, "train");
    const auto test = load_split(cfg, "test");
    const auto rep = score(net, net.scale_inputs(train), "train");
    auto pr = prune(net, rep, cfg.prune_percentile); // EmptyModel leaves nothing on disk

    const auto before = net.evaluate(test);
    const auto after_prune = pr.network.evaluate(test);
    std::size_t removed = 0;
    for (const auto& l : pr.removed) removed += static_cast<std::size_t>(std::count(l.begin(), l.end(), true));

    std::size_t tuned = 0;
    if (removed > 0 && cfg.finetune_steps > 0) {
        const auto [fit, val] = carve_validation(train, cfg);
        auto tc = kan_train_config(cfg);
        tc.steps = cfg.finetune_steps;
        tc.patience = 0;
        tuned = kanfoil::train(pr.network, fit, val, tc).steps_run;
    }
    const auto after = pr.network.evaluate(test);

    const fs::path dir = cfg.out_dir;
    ensure_dir(dir);
    pr.network.save(dir / "model_kan_pruned.json");
    json j = pr.to_json();
    j["schema_version"] = 1;
    j["removed_edges"] = removed;
    j["finetune_steps"] = tuned;
    j["test"] = {{"unpruned", metrics_json(before)}, {"pruned", metrics_json(after_prune)}, {"final", metrics_json(after)}};
    j["train"] = metrics_json(pr.network.evaluate(train));
    save_json(j, dir / "prune.json");
    save_json(importance_json(net, rep), dir / "importance.json");
    write_text(dir / "pruned.dot", to_dot(pr.network, rep));
    record_run(dir, "prune", cfg, {{"model_file", model_file}});

    io.out << "percentile " << cfg.prune_percentile << " edge threshold " << pr.edge_threshold << " node threshold "
           << pr.node_threshold << '\n'
           << "surviving nodes " << pr.surviving_nodes << " edges " << pr.surviving_edges << " (of " << net.node_count()
           << " / " << net.edge_count() << ")\n"
           << "test r2 unpruned " << fixed(before.r2, 6) << " pruned " << fixed(after_prune.r2, 6) << " final "
           << fixed(after.r2, 6) << '\n';
}

// symbolify ----------------------------------------------------------------------

std::vector<double> centroid(const RegressionSet& raw) {
    std::vector<double> c(raw.dim(), 0.0);
    for (std::size_t s = 0; s < raw.rows(); ++s)
        for (std::size_t i = 0; i < raw.dim(); ++i) c[i] += raw.row(s)[i];
    for (auto& v : c) v /= static_cast<double>(raw.rows());
    return c;
}

void cmd_symbolify(const RunConfig& cfg, const std::string& model_file, Io io) {
    const auto net = KanNetwork::load(model_path_or(model_file, cfg, "model_kan_pruned.json"));
    const auto train = load_split(cfg, "train");
    const auto test = load_split(cfg, "test");
    const auto library = cfg.library.empty() ? default_library() : parse_library(cfg.library);
    const auto res = symbolify_network(net, net.scale_inputs(train), library);

    json rep;
    rep["schema_version"] = 1;
    rep["min_edge_r2"] = res.min_edge_r2;
    json edges = json::array();
    for (const auto& e : res.edges) {
        json je = e.fit.to_json();
        je["edge"] = e.edge.str();
        edges.push_back(je);
    }
    rep["edges"] = edges;
    const auto net_pred = net.predict(test);
    rep["net_test_r2"] = nullable(r2(net_pred, test.y));
    try {
        const auto f_pred = predict_formula(res.formula, test);
        rep["formula_test_r2"] = nullable(r2(f_pred, test.y));
        rep["formula_vs_net_r2"] = nullable(r2(f_pred, net_pred));
        rep["formula_train_r2"] = nullable(r2(predict_formula(res.formula, train), train.y));
    } catch (const EvalDomainError& e) {
        rep["formula_test_r2"] = nullptr;
        rep["eval_error"] = e.what();
    }
    rep["skeleton"] = skeleton(res.formula);
    rep["outer_unary_of_sum"] = has_outer_unary_of_sum(res.formula);

    const auto vars = variables(res.formula);
    if (std::find(vars.begin(), vars.end(), "aoa") != vars.end()) {
        const auto d = derivative(res.formula, "aoa");
        const auto c = centroid(train);
        Bindings at;
        json jc = json::object();
        for (std::size_t i = 0; i < train.dim(); ++i) {
            at[train.feature_names[i]] = c[i];
            jc[train.feature_names[i]] = c[i];
        }
        rep["dcl_daoa"] = {{"formula", render(d, cfg.precision)}, {"centroid", jc}};
        try {
            rep["dcl_daoa"]["at_centroid"] = eval_formula(d, at);
        } catch (const Error& e) {
            rep["dcl_daoa"]["at_centroid"] = nullptr;
            rep["dcl_daoa"]["error"] = e.what();
        }
    }

    const fs::path dir = cfg.out_dir;
    ensure_dir(dir);
    write_text(dir / "formula.txt", "cl = " + render(res.formula, cfg.precision) + "\n");
    write_text(dir / "formula.tex", "C_L = " + render_latex(res.formula, cfg.precision) + "\n");
    json fj;
    fj["schema_version"] = 1;
    fj["target"] = "cl";
    fj["units"] = "raw";
    fj["feature_names"] = net.feature_names();
    fj["scaler"] = net.scaler() ? net.scaler()->to_json() : json(nullptr);
    fj["formula"] = to_json(res.formula);
    save_json(fj, dir / "formula.json");
    save_json(rep, dir / "symbolic_report.json");
    record_run(dir, "symbolify", cfg, {{"model_file", model_file}});

    io.out << "cl = " << render(res.formula, cfg.precision) << '\n';
    for (const auto& e : res.edges)
        io.out << "  " << e.edge.str() << ' ' << unary_name(e.fit.fn) << " r2 " << fixed(e.fit.r2, 6) << '\n';
    io.out << "formula test r2 "
           << (rep["formula_test_r2"].is_number() ? fixed(rep["formula_test_r2"].get<double>(), 6) : std::string("n/a"))
           << " net test r2 " << fixed(rep["net_test_r2"].is_number() ? rep["net_test_r2"].get<double>() : NAN, 6)
           << " min edge r2 " << fixed(res.min_edge_r2, 6) << '\n';
    if (rep.contains("dcl_daoa") && rep["dcl_daoa"]["at_centroid"].is_number())
        io.out << "dcl/daoa at centroid " << rep["dcl_daoa"]["at_centroid"].get<double>() << '\n';
}

// formula ------------------------------------------------------------------------

Formula read_formula_file(const std::string& path) {
    const json j = load_json(path);
    return formula_from_json(j.contains("formula") ? j["formula"] : j);
}

void cmd_formula_eval(const std::string& file, const std::string& at, Io io) {
    const auto f = read_formula_file(file);
    const json point = json::parse(at, nullptr, false);
    if (point.is_discarded() || !point.is_object()) throw InvalidConfig("InvalidConfig: --at must be a JSON object");
    Bindings vars;
    for (const auto& [k, v] : point.items()) {
        if (!v.is_number()) throw InvalidConfig("InvalidConfig: --at value for " + k + " is not a number");
        vars[k] = v.get<double>();
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", eval_formula(f, vars));
    io.out << buf << '\n';
}

void cmd_formula_render(const std::string& file, int precision, bool latex, Io io) {
    const auto f = read_formula_file(file);
    io.out << (latex ? render_latex(f, precision) : render(f, precision)) << '\n';
}

void cmd_formula_derive(const std::string& file, const std::string& var, int precision, Io io) {
    io.out << render(derivative(read_formula_file(file), var), precision) << '\n';
}

void cmd_formula_diff(const std::string& a, const std::string& b, Io io) {
    const auto fa = read_formula_file(a);
    const auto fb = read_formula_file(b);
    if (structurally_equal(fa, fb)) {
        io.out << "identical\n";
        return;
    }
    const auto sa = skeleton(fa), sb = skeleton(fb);
    io.out << (sa == sb ? "same skeleton, different coefficients\n" : "different skeleton\n") << "< " << sa << '\n'
           << "> " << sb << '\n';
}

// report -------------------------------------------------------------------------

struct TableRow {
    const char* model;
    const char* key; ///< metrics model_type, or nullptr for quoted-only rows
    double ref_train;
    double ref_test;
};

// Published train/test R^2 (%) of the comparison table, in its row order.
constexpr TableRow kReference[] = {
    {"KAN", "kan", 96.14, 96.17}, {"MLP", "mlp", 95.88, 96.00},        {"ANN (Baseline)", nullptr, 95.60, 95.66},
    {"ABR", nullptr, 95.11, 95.35}, {"RFR", nullptr, 96.04, 95.07}, {"LR", "lr", 93.83, 94.13},
    {"DTR", nullptr, 96.26, 93.91},
};

void cmd_report(const RunConfig& cfg, std::vector<std::string> files, Io io) {
    if (files.empty())
        for (const char* m : {"kan", "mlp", "lr"}) {
            const auto p = fs::path(cfg.out_dir) / (std::string("metrics_") + m + ".json");
            if (fs::exists(p)) files.push_back(p.string());
        }
    std::map<std::string, json> measured;
    for (const auto& f : files) {
        const json j = load_json(f);
        if (!j.contains("model_type")) throw FormatError("FormatError: no model_type in " + f);
        measured[j["model_type"].get<std::string>()] = j;
    }
    if (measured.empty()) io.err << "warning: no metrics files; the table holds quoted rows only\n";

    auto pct = [](const json& m, const char* split) {
        const auto& r = m[split]["r2"];
        return r.is_number() ? 100.0 * r.get<double>() : NAN;
    };
    json rows = json::array();
    std::ostringstream md;
    md << "| Model | Source | Train R2 (%) | Test R2 (%) | Reference train (%) | Reference test (%) |\n"
       << "|---|---|---|---|---|---|\n";
    for (const auto& r : kReference) {
        if (r.key && measured.count(r.key)) {
            const auto& m = measured[r.key];
            const double tr = pct(m, "train"), te = pct(m, "test");
            rows.push_back({{"model", r.model},
                            {"source", "measured"},
                            {"train_r2_pct", nullable(tr)},
                            {"test_r2_pct", nullable(te)},
                            {"reference_train_r2_pct", r.ref_train},
                            {"reference_test_r2_pct", r.ref_test}});
            md << "| **" << r.model << "** | measured | " << fixed(tr, 2) << " | " << fixed(te, 2) << " | "
               << fixed(r.ref_train, 2) << " | " << fixed(r.ref_test, 2) << " |\n";
        } else if (!r.key) {
            rows.push_back({{"model", r.model},
                            {"source", "quoted"},
                            {"citation", "literature value, not reproduced here"},
                            {"train_r2_pct", r.ref_train},
                            {"test_r2_pct", r.ref_test}});
            md << "| " << r.model << " | *quoted* | *" << fixed(r.ref_train, 2) << "* | *" << fixed(r.ref_test, 2)
               << "* | | |\n";
        }
    }
    md << "\nMeasured rows are computed locally; *quoted* rows are literature values for models this tool does not "
          "implement.\n";
    if (measured.count("mlp")) md << "MLP inputs are scaled to [-1, 1] on the training split.\n";

    json j = {{"schema_version", 1}, {"rows", rows}};
    const fs::path dir = cfg.out_dir;
    ensure_dir(dir);
    write_text(dir / "report.md", md.str());
    save_json(j, dir / "report.json");
    io.out << md.str();
}

// command line -------------------------------------------------------------------

/// Records an explicitly given flag into the config patch (flags win over the config file).
template <typename T>
CLI::Option* flag(CLI::App* app, json& patch, const std::string& name, const std::string& pointer,
                  const std::string& help) {
    return app->add_option_function<T>(
        name, [&patch, pointer](const T& v) { patch[json::json_pointer(pointer)] = v; }, help);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(item);
    return out;
}

RunConfig resolve_config(const std::string& config_path, const json& patch) {
    json merged = RunConfig{}.to_json();
    if (!config_path.empty()) {
        const json file = load_json(config_path);
        RunConfig::from_json(file); // validates keys
        merged.merge_patch(file);
    }
    if (const char* env = std::getenv("KANFOIL_SEED")) {
        char* end = nullptr;
        const auto v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0') throw InvalidConfig("InvalidConfig: KANFOIL_SEED is not an unsigned integer");
        merged["seed"] = v;
    }
    merged.merge_patch(patch);
    return RunConfig::from_json(merged);
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"kanfoil: spline-edge network regression, pruning and symbolic distillation"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    json patch = json::object();
    app.add_option("--config", config_path, "JSON run configuration (flags override it)");
    flag<std::uint64_t>(&app, patch, "--seed", "/seed", "seed for splits, initialisation and shuffling");
    flag<std::string>(&app, patch, "--data", "/data_dir", "directory with train.csv and test.csv");
    flag<std::string>(&app, patch, "--out", "/out_dir", "output directory");

    auto* prep = app.add_subcommand("prep", "load, deduplicate and split a raw CSV");
    flag<std::string>(prep, patch, "--input", "/input", "raw CSV with a header row");
    prep->add_option_function<std::string>(
        "--columns", [&](const std::string& s) { patch["columns"] = ColumnMap::parse(s).to_json(); },
        "role=header overrides, e.g. aoa=alpha,cl=CL");
    prep->add_option_function<std::string>(
        "--dedup-key", [&](const std::string& s) { patch["dedup_key"] = split_list(s); }, "comma list of roles");
    flag<double>(prep, patch, "--train-fraction", "/train_fraction", "share of rows in the training split");

    std::string model = "kan";
    auto* trn = app.add_subcommand("train", "train a model on the prepared splits");
    trn->add_option("--model", model, "kan, lr or mlp")->check(CLI::IsMember({"kan", "lr", "mlp"}));
    trn->add_option_function<std::string>(
        "--width", [&](const std::string& s) {
            json w = json::array();
            for (const auto& p : split_list(s)) w.push_back(std::stoul(p));
            patch["kan"]["width"] = w;
        },
        "KAN layer widths, e.g. 9,9,1");
    flag<int>(trn, patch, "--grid", "/kan/grid", "spline intervals");
    flag<int>(trn, patch, "--k", "/kan/k", "spline degree");
    flag<std::string>(trn, patch, "--optimizer", "/kan/optimizer", "adam or lbfgs")
        ->check(CLI::IsMember({"adam", "lbfgs"}));
    flag<double>(trn, patch, "--lr", "/kan/learning_rate", "KAN learning rate");
    flag<std::size_t>(trn, patch, "--steps", "/kan/steps", "KAN optimisation steps");
    flag<std::size_t>(trn, patch, "--patience", "/kan/patience", "early stop patience (steps)");
    flag<std::size_t>(trn, patch, "--sparsify-steps", "/kan/sparsify_steps", "steps of the regularised phase");
    flag<double>(trn, patch, "--lambda-l1", "/kan/lambda_l1", "L1 weight in the sparsify phase");
    flag<double>(trn, patch, "--lambda-entropy", "/kan/lambda_entropy", "entropy weight in the sparsify phase");
    flag<std::size_t>(trn, patch, "--epochs", "/mlp/max_epochs", "MLP epoch limit");
    flag<double>(trn, patch, "--val-fraction", "/val_fraction", "validation share carved from train");

    std::string model_file, data_file;
    auto* eval = app.add_subcommand("evaluate", "metrics of a saved model on a CSV");
    eval->add_option("--model-file", model_file, "model JSON (default <out>/model_kan.json)");
    eval->add_option("--csv", data_file, "CSV or prepared directory (default <data>/test.csv)");

    auto* prn = app.add_subcommand("prune", "score, prune and fine-tune a KAN");
    prn->add_option("--model-file", model_file, "KAN model JSON (default <out>/model_kan.json)");
    flag<double>(prn, patch, "--percentile", "/prune/percentile", "pruning percentile in [0, 100]");
    flag<std::size_t>(prn, patch, "--finetune-steps", "/prune/finetune_steps", "steps after pruning (0 disables)");

    auto* imp = app.add_subcommand("importance", "edge/node scores, feature importance and a DOT graph");
    imp->add_option("--model-file", model_file, "KAN model JSON (default <out>/model_kan.json)");

    auto* sym = app.add_subcommand("symbolify", "replace edges by library functions and export a formula");
    sym->add_option("--model-file", model_file, "KAN model JSON (default <out>/model_kan_pruned.json)");
    flag<std::string>(sym, patch, "--library", "/symbolic/library", "comma list of candidate functions");
    flag<int>(sym, patch, "--precision", "/symbolic/precision", "decimals in rendered text");

    auto* fml = app.add_subcommand("formula", "work with exported formula files");
    fml->require_subcommand(1);
    std::string ffile, ffile2, at, var = "aoa";
    int fprec = 2;
    bool latex = false;
    auto* f_eval = fml->add_subcommand("eval", "evaluate at a point");
    f_eval->add_option("file", ffile, "formula JSON")->required();
    f_eval->add_option("--at", at, R"(point, e.g. {"c1":0,"aoa":2})")->required();
    auto* f_render = fml->add_subcommand("render", "print as text or LaTeX");
    f_render->add_option("file", ffile, "formula JSON")->required();
    f_render->add_option("--precision", fprec, "decimals");
    f_render->add_flag("--latex", latex, "LaTeX output");
    auto* f_diff = fml->add_subcommand("diff", "compare two formulas");
    f_diff->add_option("file", ffile, "first formula JSON")->required();
    f_diff->add_option("other", ffile2, "second formula JSON")->required();
    auto* f_der = fml->add_subcommand("derive", "symbolic derivative");
    f_der->add_option("file", ffile, "formula JSON")->required();
    f_der->add_option("--var", var, "variable");
    f_der->add_option("--precision", fprec, "decimals");

    std::vector<std::string> metrics_files;
    auto* rpt = app.add_subcommand("report", "comparison table from metrics files");
    rpt->add_option("--metrics", metrics_files, "metrics JSON files (default: those in <out>)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    Io io{out, err};
    try {
        const RunConfig cfg = resolve_config(config_path, patch);
        if (prep->parsed())
            cmd_prep(cfg, io);
        else if (trn->parsed())
            cmd_train(cfg, model, io);
        else if (eval->parsed())
            cmd_evaluate(cfg, model_file, data_file, io);
        else if (prn->parsed())
            cmd_prune(cfg, model_file, io);
        else if (imp->parsed())
            cmd_importance(cfg, model_file, io);
        else if (sym->parsed())
            cmd_symbolify(cfg, model_file, io);
        else if (f_eval->parsed())
            cmd_formula_eval(ffile, at, io);
        else if (f_render->parsed())
            cmd_formula_render(ffile, fprec, latex, io);
        else if (f_diff->parsed())
            cmd_formula_diff(ffile, ffile2, io);
        else if (f_der->parsed())
            cmd_formula_derive(ffile, var, fprec, io);
        else if (rpt->parsed())
            cmd_report(cfg, metrics_files, io);
        return kExitOk;
    } catch (const InvalidConfig& e) {
        err << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"kanfoil"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace kanfoil::cli
