#include "relex/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "relex/errors.hpp"
#include "relex/eval.hpp"
#include "relex/image_io.hpp"
#include "relex/pipeline.hpp"
#include "relex/recommend.hpp"

namespace fs = std::filesystem;

namespace relex {

namespace {

void atomic_write_text(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw FormatError("cannot open for writing: " + tmp);
        out << text;
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw FormatError("cannot rename into place: " + path);
    }
}

std::pair<ItemCatalog, RelationGraph> load_dataset(const RunConfig& config) {
    if (config.manifest_path.empty()) throw ConfigError("config field paths.manifest: required");
    return ingest(config.manifest_path);
}

TrainOptions train_options(const RunConfig& config) {
    TrainOptions options;
    options.specs = config.architecture;
    options.input_shape = config.input_shape;
    options.metric_rank = config.metric_rank;
    options.loss_variant = config.loss_variant;
    options.adam = config.adam;
    options.epochs = config.epochs;
    options.batch_size = config.batch_size;
    options.init_seed = config.seeds.init;
    options.negative_seed = config.seeds.negatives;
    options.shuffle_seed = config.seeds.shuffle;
    options.relation_type = config.relation_type;
    return options;
}

}  // namespace

std::string cmd_generate(const RunConfig& config) {
    SyntheticSpec spec = config.synthetic;
    spec.out_dir = (fs::path(config.out_dir) / "dataset").string();
    const SyntheticResult result = generate_synthetic(spec);
    return result.manifest_path;
}

void cmd_ingest(const RunConfig& config) {
    const auto [catalog, graph] = load_dataset(config);
    std::map<std::string, std::size_t> per_type;
    for (const Edge& edge : graph.edges) per_type[relation_type_name(edge.type)] += 1;

    nlohmann::json summary;
    summary["items"] = catalog.items.size();
    summary["categories"] = catalog.categories;
    summary["edges"] = graph.edges.size();
    summary["edges_per_type"] = per_type;
    fs::create_directories(config.out_dir);
    atomic_write_text((fs::path(config.out_dir) / "ingest_summary.json").string(),
                      summary.dump(2) + "\n");
}

void cmd_train(const RunConfig& config) {
    if (config.checkpoint_path.empty()) {
        throw ConfigError("config field paths.checkpoint: required for train");
    }
    const auto [catalog, graph] = load_dataset(config);
    const SplitSpec split = make_split(graph, config.seeds.split, config.split_fraction);

    fs::create_directories(config.out_dir);
    const std::string log_path = (fs::path(config.out_dir) / "train_log.jsonl").string();
    const std::string log_tmp = log_path + ".tmp";
    std::ofstream log(log_tmp, std::ios::trunc);
    if (!log) throw FormatError("cannot open training log: " + log_tmp);

    const Model model = train_model(catalog, graph, split, train_options(config),
                                    [&](const std::string& line) { log << line << "\n"; });
    log.close();
    if (std::rename(log_tmp.c_str(), log_path.c_str()) != 0) {
        throw FormatError("cannot rename training log into place: " + log_path);
    }
    save_model(model, config.checkpoint_path);
}

void cmd_eval(const RunConfig& config) {
    const auto [catalog, graph] = load_dataset(config);
    const SplitSpec split = make_split(graph, config.seeds.split, config.split_fraction);

    std::vector<std::string> checkpoints = config.eval_checkpoints;
    if (checkpoints.empty()) {
        if (config.checkpoint_path.empty()) {
            throw ConfigError("config field paths.checkpoint: required for eval");
        }
        checkpoints.push_back(config.checkpoint_path);
    }

    AccuracyReport combined;
    for (const std::string& path : checkpoints) {
        const Model model = load_model(path);
        if (model.stack.input_shape != config.input_shape) {
            throw IntegrityError("checkpoint " + path + " input shape " +
                                 shape_string(model.stack.input_shape) +
                                 " does not match config image " +
                                 shape_string(config.input_shape));
        }
        const AccuracyReport report = evaluate_accuracy(model, catalog, graph, split,
                                                        config.seeds.negatives, config.threshold);
        combined.rows.insert(combined.rows.end(), report.rows.begin(), report.rows.end());
    }
    std::sort(combined.rows.begin(), combined.rows.end(),
              [](const AccuracyRow& a, const AccuracyRow& b) {
                  if (a.category != b.category) return a.category < b.category;
                  if (a.type != b.type) return a.type < b.type;
                  return a.metric_rank < b.metric_rank;
              });
    fs::create_directories(config.out_dir);
    write_accuracy_csv(combined, (fs::path(config.out_dir) / "accuracy.csv").string());
}

void cmd_explain(const RunConfig& config, const std::string& src, const std::string& dst,
                 const std::string& user) {
    const auto [catalog, graph] = load_dataset(config);
    const Model model = load_model(config.checkpoint_path);

    const Tensor left = load_item_image(catalog.at(src), model.stack.input_shape);
    const Tensor right = load_item_image(catalog.at(dst), model.stack.input_shape);
    const HeatmapPair pair = explain_pair(model.stack, model.metric_for(user), model.q, left,
                                          right, config.epsilons.front(),
                                          config.relevance_source);

    fs::create_directories(config.out_dir);
    const std::string stem = (fs::path(config.out_dir) / ("explain_" + src + "_" + dst)).string();
    write_heatmap_csv(pair.left, stem + "_left.csv");
    write_heatmap_csv(pair.right, stem + "_right.csv");
    write_heatmap_pgm(pair.left, stem + "_left.pgm");
    write_heatmap_pgm(pair.right, stem + "_right.pgm");
    write_heatmap_overlay_ppm(pair.left, left, stem + "_left_overlay.ppm");
    write_heatmap_overlay_ppm(pair.right, right, stem + "_right_overlay.ppm");
}

void cmd_perturb(const RunConfig& config) {
    const auto [catalog, graph] = load_dataset(config);
    const SplitSpec split = make_split(graph, config.seeds.split, config.split_fraction);
    const Model model = load_model(config.checkpoint_path);

    // Correctly predicted test positives, capped at the configured count.
    struct Pair {
        std::string user;
        Tensor left, right;
    };
    std::vector<Pair> pairs;
    for (std::size_t idx : split.test_edges) {
        if (pairs.size() >= config.perturbation.pairs) break;
        const Edge& edge = graph.edges[idx];
        if (model.relation_type != "all" &&
            relation_type_name(edge.type) != model.relation_type) {
            continue;
        }
        Tensor left = load_item_image(catalog.at(edge.src), model.stack.input_shape);
        Tensor right = load_item_image(catalog.at(edge.dst), model.stack.input_shape);
        const double p = model.pair_probability(edge.user, forward(model.stack, left).features,
                                                forward(model.stack, right).features);
        if (p < config.threshold) continue;
        pairs.push_back({edge.user, std::move(left), std::move(right)});
    }
    if (pairs.empty()) throw EvalError("no correctly predicted test pairs to perturb");

    std::vector<PerturbationCurve> curves;
    for (double epsilon : config.epsilons) {
        for (PerturbPolicy policy : {PerturbPolicy::Lrp, PerturbPolicy::Random}) {
            std::vector<std::vector<double>> scores;
            for (const Pair& pair : pairs) {
                const HeatmapPair heatmaps =
                    explain_pair(model.stack, model.metric_for(pair.user), model.q, pair.left,
                                 pair.right, epsilon, config.relevance_source);
                scores.push_back(perturb_and_rescore(
                    model, pair.user, pair.left, pair.right, heatmaps, config.perturbation.steps,
                    config.perturbation.pixels_per_step, policy, config.seeds.perturbation,
                    config.perturbation.ordering));
            }
            curves.push_back(aggregate_curves(scores, config.threshold, epsilon, policy,
                                              config.perturbation.pixels_per_step,
                                              config.seeds.perturbation));
        }
    }
    fs::create_directories(config.out_dir);
    write_curves_csv(curves, (fs::path(config.out_dir) / "curves.csv").string());
}

void cmd_recommend(const RunConfig& config, const std::string& query, const std::string& user,
                   const std::string& category_filter) {
    const auto [catalog, graph] = load_dataset(config);
    const Model model = load_model(config.checkpoint_path);
    const FeatureIndex index(model, catalog);
    const RelationType type = config.relation_type == "all"
                                  ? RelationType::AlsoViewed
                                  : parse_relation_type(config.relation_type);
    const RecommendationList list =
        recommend(model, index, catalog, query, user, type, config.top_k, category_filter);
    fs::create_directories(config.out_dir);
    write_recommendations_jsonl(list,
                                (fs::path(config.out_dir) / "recommendations.jsonl").string());
}

}  // namespace relex
