#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "relex/commands.hpp"
#include "relex/config.hpp"
#include "relex/errors.hpp"

using namespace relex;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string write_config(const fs::path& dir, const std::string& body) {
    const std::string path = (dir / "config.json").string();
    std::ofstream out(path);
    out << body;
    return path;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// One small, fast end-to-end configuration.
std::string pipeline_config(const fs::path& dir) {
    return write_config(dir, R"({
  "image": {"channels": 1, "height": 16, "width": 16},
  "feature_dim": 16,
  "metric_rank": 10,
  "epochs": 3,
  "batch_size": 32,
  "optimizer": {"alpha": 0.003},
  "seeds": {"init": 1, "split": 2, "negatives": 3, "shuffle": 5, "perturbation": 7},
  "epsilons": [0.001],
  "synthetic": {"items": 48, "users": 3, "motif_classes": 8, "categories": 2},
  "perturbation": {"steps": 4, "pixels_per_step": 8, "pairs": 4},
  "paths": {
    "manifest": ")" + (dir / "out" / "dataset" / "manifest.jsonl").string() + R"(",
    "checkpoint": ")" + (dir / "out" / "model.ckpt").string() + R"(",
    "out_dir": ")" + (dir / "out").string() + R"("
  }
})");
}

}  // namespace

TEST_CASE("config validation names the offending field") {
    TempDir dir("relex_cli_config");
    const std::string bad_loss =
        write_config(dir.path, R"({"loss": "hinge"})");
    try {
        load_config(bad_loss);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("loss") != std::string::npos);
    }

    const std::string bad_arch = write_config(
        dir.path, R"({"architecture": [{"kind": "warp"}]})");
    try {
        load_config(bad_arch);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("architecture[0]") != std::string::npos);
    }

    const std::string bad_fraction = write_config(dir.path, R"({"split_fraction": 1.5})");
    CHECK_THROWS_AS(load_config(bad_fraction), ConfigError);

    const std::string not_json = write_config(dir.path, "{nope");
    CHECK_THROWS_AS(load_config(not_json), ConfigError);
}

TEST_CASE("config defaults and seed override") {
    TempDir dir("relex_cli_defaults");
    const std::string path = write_config(dir.path, "{}");
    RunConfig cfg = load_config(path);
    CHECK(cfg.input_shape == std::vector<std::size_t>{1, 16, 16});
    CHECK(cfg.feature_dim == 16);
    CHECK(cfg.architecture.back().kind == LayerKind::Dense);
    override_seeds(cfg, 100);
    CHECK(cfg.seeds.init == 100);
    CHECK(cfg.seeds.perturbation == 104);
}

TEST_CASE("full pipeline: generate, ingest, train, eval, explain, perturb, recommend") {
    TempDir dir("relex_cli_pipeline");
    RunConfig cfg = load_config(pipeline_config(dir.path));

    const std::string manifest = cmd_generate(cfg);
    CHECK(manifest == cfg.manifest_path);
    CHECK(fs::exists(manifest));

    cmd_ingest(cfg);
    CHECK(fs::exists(dir.path / "out" / "ingest_summary.json"));

    cmd_train(cfg);
    CHECK(fs::exists(cfg.checkpoint_path));
    const std::string log = read_file((dir.path / "out" / "train_log.jsonl").string());
    REQUIRE(!log.empty());

    // training-progress contract: last logged objective beats the first
    std::istringstream lines(log);
    std::string line, first_line, last_line;
    while (std::getline(lines, line)) {
        if (first_line.empty()) first_line = line;
        last_line = line;
    }
    const auto objective_of = [](const std::string& text) {
        const std::size_t key = text.find("\"objective\":");
        REQUIRE(key != std::string::npos);
        return std::stod(text.substr(key + 12));
    };
    CHECK(objective_of(last_line) > objective_of(first_line));

    cmd_eval(cfg);
    const std::string accuracy = read_file((dir.path / "out" / "accuracy.csv").string());
    CHECK(accuracy.rfind("category,relation_type,D,accuracy\n", 0) == 0);
    // one row per (category, type) seen in the test split, all with D=10
    std::istringstream acc_lines(accuracy);
    std::getline(acc_lines, line);
    std::size_t rows = 0;
    while (std::getline(acc_lines, line)) {
        ++rows;
        CHECK(line.find(",10,") != std::string::npos);
    }
    CHECK(rows >= 1);

    // explain an existing pair
    const auto [catalog, graph] = ingest(cfg.manifest_path);
    const Edge& edge = graph.edges.front();
    cmd_explain(cfg, edge.src, edge.dst, edge.user);
    const std::string stem = "explain_" + edge.src + "_" + edge.dst;
    CHECK(fs::exists(dir.path / "out" / (stem + "_left.csv")));
    CHECK(fs::exists(dir.path / "out" / (stem + "_right.csv")));
    CHECK(fs::exists(dir.path / "out" / (stem + "_left.pgm")));
    CHECK(fs::exists(dir.path / "out" / (stem + "_left.pgm.json")));
    CHECK(fs::exists(dir.path / "out" / (stem + "_left_overlay.ppm")));

    cmd_perturb(cfg);
    const std::string curves = read_file((dir.path / "out" / "curves.csv").string());
    CHECK(curves.rfind("policy,epsilon,step,accuracy\n", 0) == 0);
    CHECK(curves.find("lrp,") != std::string::npos);
    CHECK(curves.find("random,") != std::string::npos);

    cmd_recommend(cfg, edge.src, edge.user, "");
    const std::string recs = read_file((dir.path / "out" / "recommendations.jsonl").string());
    CHECK(recs.find("\"query\":\"" + edge.src + "\"") != std::string::npos);
}

TEST_CASE("pipeline reruns are byte-identical") {
    TempDir dir("relex_cli_determinism");
    RunConfig cfg = load_config(pipeline_config(dir.path));
    cfg.epochs = 2;

    const auto run_into = [&](const std::string& name) {
        RunConfig local = cfg;
        local.out_dir = (dir.path / name).string();
        local.manifest_path = (fs::path(local.out_dir) / "dataset" / "manifest.jsonl").string();
        local.checkpoint_path = (fs::path(local.out_dir) / "model.ckpt").string();
        cmd_generate(local);
        cmd_train(local);
        cmd_eval(local);
        cmd_perturb(local);
        return local.out_dir;
    };
    const std::string a = run_into("run_a");
    const std::string b = run_into("run_b");
    for (const char* artifact : {"accuracy.csv", "curves.csv", "train_log.jsonl"}) {
        CHECK(read_file(a + "/" + artifact) == read_file(b + "/" + artifact));
    }
    CHECK(read_file(a + "/model.ckpt") == read_file(b + "/model.ckpt"));
}

TEST_CASE("eval rejects a checkpoint with mismatched input geometry") {
    TempDir dir("relex_cli_mismatch");
    RunConfig cfg = load_config(pipeline_config(dir.path));
    cfg.epochs = 1;
    cmd_generate(cfg);
    cmd_train(cfg);

    RunConfig wrong = cfg;
    wrong.input_shape = {1, 8, 8};
    CHECK_THROWS_AS(cmd_eval(wrong), IntegrityError);
}
