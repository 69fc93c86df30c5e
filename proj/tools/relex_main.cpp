#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "relex/commands.hpp"
#include "relex/config.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Image-based relationship prediction with pixel-level explanations"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir;
    std::int64_t master_seed = -1;
    app.add_option("--config", config_path, "JSON run configuration")->required();
    app.add_option("--seed", master_seed, "Master seed overriding all configured seeds");
    app.add_option("--out", out_dir, "Output directory override");

    auto* generate = app.add_subcommand("generate", "Synthesize a planted-motif dataset");
    auto* ingest = app.add_subcommand("ingest", "Validate a dataset manifest");
    auto* train = app.add_subcommand("train", "Train the model end to end");
    auto* eval = app.add_subcommand("eval", "Accuracy report per category/type/D");
    auto* explain = app.add_subcommand("explain", "Heatmaps for one item pair");
    auto* perturb = app.add_subcommand("perturb", "Perturbation curves, lrp vs random");
    auto* recommend = app.add_subcommand("recommend", "Top-k recommendations for a query item");

    std::string src, dst, user = "_global", query, category;
    explain->add_option("--src", src, "First item id")->required();
    explain->add_option("--dst", dst, "Second item id")->required();
    explain->add_option("--user", user, "User id (defaults to the global metric)");
    recommend->add_option("--query", query, "Query item id")->required();
    recommend->add_option("--user", user, "User id (defaults to the global metric)");
    recommend->add_option("--category", category, "Restrict to one category");

    CLI11_PARSE(app, argc, argv);

    try {
        relex::RunConfig config = relex::load_config(config_path);
        if (master_seed >= 0) {
            relex::override_seeds(config, static_cast<std::uint64_t>(master_seed));
        }
        if (!out_dir.empty()) config.out_dir = out_dir;

        if (generate->parsed()) {
            std::cout << "manifest: " << relex::cmd_generate(config) << "\n";
        } else if (ingest->parsed()) {
            relex::cmd_ingest(config);
        } else if (train->parsed()) {
            relex::cmd_train(config);
        } else if (eval->parsed()) {
            relex::cmd_eval(config);
        } else if (explain->parsed()) {
            relex::cmd_explain(config, src, dst, user);
        } else if (perturb->parsed()) {
            relex::cmd_perturb(config);
        } else if (recommend->parsed()) {
            relex::cmd_recommend(config, query, user, category);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
