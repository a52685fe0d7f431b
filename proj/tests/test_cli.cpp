#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "kanfoil/formula.hpp"
#include "oracles/lift_reference.hpp"
#include "support/synthetic.hpp"

using kanfoil::cli::run;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

// raw CSV with a few exact duplicates appended
fs::path raw_csv(const support::TempDir& dir, std::size_t n, std::uint64_t seed = 1) {
    auto d = support::synthetic_airfoil(n, seed);
    for (std::size_t i = 0; i < 10; ++i) d.samples.push_back(d.samples[i]);
    const auto p = dir.path() / "raw.csv";
    kanfoil::write_csv(d, p);
    return p;
}

// prepared data plus a quick KAN in <dir>/run
void quick_kan(const support::TempDir& dir, std::size_t n = 300) {
    const auto raw = raw_csv(dir, n);
    REQUIRE(cli({"--data", dir.str("data"), "prep", "--input", raw.string()}).code == 0);
    const auto r = cli({"--data", dir.str("data"), "--out", dir.str("run"), "train", "--model", "kan", "--width", "9,3,1",
                        "--grid", "4", "--steps", "40", "--sparsify-steps", "10"});
    REQUIRE(r.code == 0);
}

} // namespace

TEST_CASE("prep counts, writes splits and is reproducible") {
    support::TempDir dir("cli");
    const auto raw = raw_csv(dir, 200);
    const auto a = cli({"--data", dir.str("a"), "prep", "--input", raw.string()});
    REQUIRE(a.code == 0);
    CHECK(a.out == "loaded 210\ndeduplicated 200\nsplit 150 / 50\n");
    const auto side = read_json(dir.path() / "a" / "prep.json");
    CHECK(side["counts"]["train"] == 150);
    CHECK(side["prng"] == kanfoil::Rng::kIdentifier);
    REQUIRE(cli({"--data", dir.str("b"), "prep", "--input", raw.string()}).code == 0);
    CHECK(slurp(dir.path() / "a" / "train.csv") == slurp(dir.path() / "b" / "train.csv"));
    CHECK(slurp(dir.path() / "a" / "test.csv") == slurp(dir.path() / "b" / "test.csv"));
    REQUIRE(cli({"--seed", "7", "--data", dir.str("c"), "prep", "--input", raw.string()}).code == 0);
    CHECK(slurp(dir.path() / "a" / "train.csv") != slurp(dir.path() / "c" / "train.csv"));
}

TEST_CASE("exit codes") {
    support::TempDir dir("cli");
    const auto missing = cli({"--data", dir.str("d"), "prep", "--input", dir.str("absent.csv")});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("MissingFile") != std::string::npos);
    CHECK(cli({"train", "--model", "forest"}).code == 2);
    CHECK(cli({}).code == 2);
    CHECK(cli({"--help"}).code == 0);

    const auto cfg = dir.path() / "bad.json";
    std::ofstream(cfg) << R"({"seed": 1, "colour": "blue"})";
    const auto bad = cli({"--config", cfg.string(), "--data", dir.str("d"), "prep", "--input", dir.str("x.csv")});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("colour") != std::string::npos);
}

TEST_CASE("seed precedence: flag over environment over config file") {
    support::TempDir dir("cli");
    const auto raw = raw_csv(dir, 60);
    const auto cfg = dir.path() / "cfg.json";
    std::ofstream(cfg) << R"({"seed": 11})";
    auto seed_of = [&](const std::string& sub, std::vector<std::string> extra) {
        std::vector<std::string> args{"--config", cfg.string(), "--data", dir.str(sub)};
        args.insert(args.end(), extra.begin(), extra.end());
        args.insert(args.end(), {"prep", "--input", raw.string()});
        REQUIRE(cli(args).code == 0);
        return read_json(dir.path() / sub / "prep.json")["seed"].get<std::uint64_t>();
    };
    unsetenv("KANFOIL_SEED");
    CHECK(seed_of("p1", {}) == 11);
    setenv("KANFOIL_SEED", "12", 1);
    CHECK(seed_of("p2", {}) == 12);
    CHECK(seed_of("p3", {"--seed", "13"}) == 13);
    setenv("KANFOIL_SEED", "twelve", 1);
    CHECK(cli({"--data", dir.str("p4"), "prep", "--input", raw.string()}).code == 2);
    unsetenv("KANFOIL_SEED");

    const auto run_json = read_json(dir.path() / "p3" / "run.json");
    CHECK(run_json["commands"]["prep"]["config"]["seed"] == 13);
}

TEST_CASE("train, evaluate, prune and symbolify") {
    support::TempDir dir("cli");
    quick_kan(dir);
    const auto run_dir = dir.path() / "run";
    const auto metrics = read_json(run_dir / "metrics_kan.json");
    CHECK(metrics["model_type"] == "kan");
    CHECK(metrics["nodes"] == 13);
    CHECK(metrics["edges"] == 30);

    const auto ev = cli({"--data", dir.str("data"), "--out", run_dir.string(), "evaluate"});
    REQUIRE(ev.code == 0);
    CHECK(json::parse(ev.out)["r2"] == metrics["test"]["r2"]);

    SUBCASE("percentile 0 keeps everything") {
        const auto r = cli({"--data", dir.str("data"), "--out", run_dir.string(), "prune", "--percentile", "0"});
        REQUIRE(r.code == 0);
        const auto pj = read_json(run_dir / "prune.json");
        CHECK(pj["surviving_nodes"] == 13);
        CHECK(pj["surviving_edges"] == 30);
        CHECK(pj["test"]["pruned"] == pj["test"]["unpruned"]);
        CHECK(pj["test"]["final"] == pj["test"]["unpruned"]);
    }
    SUBCASE("percentile 100 fails and writes nothing") {
        const auto r = cli({"--data", dir.str("data"), "--out", run_dir.string(), "prune", "--percentile", "100"});
        CHECK(r.code == 1);
        CHECK(r.err.find("EmptyModel") != std::string::npos);
        CHECK_FALSE(fs::exists(run_dir / "model_kan_pruned.json"));
        CHECK_FALSE(fs::exists(run_dir / "prune.json"));
    }
    SUBCASE("prune then symbolify") {
        const auto p = cli({"--data", dir.str("data"), "--out", run_dir.string(), "prune", "--percentile", "30",
                            "--finetune-steps", "10"});
        INFO(p.err);
        REQUIRE(p.code == 0);
        const auto s = cli({"--data", dir.str("data"), "--out", run_dir.string(), "symbolify"});
        REQUIRE(s.code == 0);
        CHECK(slurp(run_dir / "formula.txt").rfind("cl = ", 0) == 0);
        const auto fj = read_json(run_dir / "formula.json");
        CHECK(fj["units"] == "raw");
        const auto rep = read_json(run_dir / "symbolic_report.json");
        CHECK(rep.contains("formula_vs_net_r2"));
        const auto d = cli({"formula", "diff", (run_dir / "formula.json").string(), (run_dir / "formula.json").string()});
        CHECK(d.out == "identical\n");
        const auto imp = cli({"--data", dir.str("data"), "--out", run_dir.string(), "importance"});
        CHECK(imp.code == 0);
        CHECK(fs::exists(run_dir / "graph.dot"));
    }
}

TEST_CASE("report") {
    support::TempDir dir("cli");
    SUBCASE("no metrics still prints the quoted rows") {
        const auto r = cli({"--out", dir.str("empty"), "report"});
        REQUIRE(r.code == 0);
        CHECK(r.err.find("no metrics") != std::string::npos);
        const auto j = read_json(dir.path() / "empty" / "report.json");
        CHECK(j["rows"].size() == 4);
    }
    SUBCASE("three measured models fill seven rows in table order") {
        const auto out = dir.path() / "m";
        fs::create_directories(out);
        for (const char* m : {"kan", "mlp", "lr"})
            std::ofstream(out / (std::string("metrics_") + m + ".json"))
                << json{{"model_type", m}, {"train", {{"r2", 0.9}}}, {"test", {{"r2", 0.8}}}}.dump();
        const auto r = cli({"--out", out.string(), "report"});
        REQUIRE(r.code == 0);
        const auto j = read_json(out / "report.json");
        REQUIRE(j["rows"].size() == 7);
        const std::vector<std::string> order{"KAN", "MLP", "ANN (Baseline)", "ABR", "RFR", "LR", "DTR"};
        std::size_t measured = 0;
        for (std::size_t i = 0; i < 7; ++i) {
            CHECK(j["rows"][i]["model"] == order[i]);
            measured += j["rows"][i]["source"] == "measured";
        }
        CHECK(measured == 3);
        CHECK(j["rows"][0]["test_r2_pct"] == doctest::Approx(80.0));
        CHECK(j["rows"][0]["reference_test_r2_pct"] == 96.17);
        CHECK(j["rows"][6]["test_r2_pct"] == 93.91);
        CHECK(r.out.find("| DTR |") != std::string::npos);
    }
}

TEST_CASE("formula eval on the exported lift formula matches the reference") {
    support::TempDir dir("cli");
    const auto file = dir.path() / "lift.json";
    std::ofstream(file) << json{{"formula", kanfoil::to_json(support::lift_formula())}}.dump();
    const json point = {{"c1", 0.1}, {"c2", -0.2}, {"c3", 0.3}, {"c4", 0.05},
                        {"c5", -0.4}, {"c6", 0.25}, {"c7", 0.0}, {"c8", -0.1}, {"aoa", 3.5}};
    const auto r = cli({"formula", "eval", file.string(), "--at", point.dump()});
    REQUIRE(r.code == 0);
    std::array<std::string, 9> in{"0.1", "-0.2", "0.3", "0.05", "-0.4", "0.25", "0", "-0.1", "3.5"};
    const double ref = static_cast<double>(oracle::lift_reference(in));
    CHECK(std::abs(std::stod(r.out) - ref) < 1e-12);

    const auto bad = cli({"formula", "eval", file.string(), "--at", "{\"c1\": 1}"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("UnboundVariable") != std::string::npos);

    const auto rendered = cli({"formula", "render", file.string()});
    CHECK(rendered.out.rfind("0.69 - 2.42 * sin(", 0) == 0);
    const auto tex = cli({"formula", "render", file.string(), "--latex"});
    CHECK(tex.out.find("\\sin") != std::string::npos);
    CHECK(cli({"formula", "derive", file.string(), "--var", "aoa"}).code == 0);
}
