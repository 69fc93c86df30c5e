#include "relex/config.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "relex/errors.hpp"

namespace relex {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& why) {
    throw ConfigError("config field " + field + ": " + why);
}

// Infers in_channels / in_width so configs only state what a layer adds.
std::vector<LayerSpec> build_architecture(const json& arch, std::vector<std::size_t> shape) {
    if (!arch.is_array() || arch.empty()) fail("architecture", "must be a non-empty array");
    std::vector<LayerSpec> specs;
    for (std::size_t i = 0; i < arch.size(); ++i) {
        const json& j = arch[i];
        const std::string field = "architecture[" + std::to_string(i) + "]";
        if (!j.is_object() || !j.contains("kind")) fail(field, "must be an object with a kind");
        const std::string kind = j.at("kind").get<std::string>();
        LayerSpec spec;
        if (kind == "conv") {
            if (shape.size() != 3) fail(field, "conv requires a [C,H,W] input at this point");
            spec = LayerSpec::conv(shape[0], j.value("out_channels", std::size_t{0}),
                                   j.value("kernel", std::size_t{3}),
                                   j.value("stride", std::size_t{1}), j.value("pad", std::size_t{0}),
                                   j.value("bias", true));
            if (spec.out_channels == 0) fail(field + ".out_channels", "must be >= 1");
        } else if (kind == "relu") {
            spec = LayerSpec::relu();
        } else if (kind == "maxpool") {
            spec = LayerSpec::maxpool(j.value("window", std::size_t{2}),
                                      j.value("stride", std::size_t{2}));
        } else if (kind == "flatten") {
            spec = LayerSpec::flatten();
        } else if (kind == "dense") {
            if (shape.size() != 1) fail(field, "dense requires a flattened input at this point");
            spec = LayerSpec::dense(shape[0], j.value("out_width", std::size_t{0}),
                                    j.value("bias", true));
            if (spec.out_width == 0) fail(field + ".out_width", "must be >= 1");
        } else {
            fail(field + ".kind", "unknown kind '" + kind + "'");
        }
        try {
            shape = layer_output_shape(spec, shape, i);
        } catch (const ConfigError& e) {
            fail(field, e.what());
        }
        specs.push_back(spec);
    }
    if (specs.back().kind != LayerKind::Dense) {
        fail("architecture", "final layer must be dense");
    }
    return specs;
}

}  // namespace

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path);

    RunConfig cfg;
    if (j.contains("image")) {
        const json& img = j.at("image");
        cfg.input_shape = {img.value("channels", std::size_t{1}),
                           img.value("height", std::size_t{16}),
                           img.value("width", std::size_t{16})};
    }
    for (std::size_t e : cfg.input_shape) {
        if (e == 0) fail("image", "extents must be positive");
    }

    if (j.contains("architecture")) {
        cfg.architecture = build_architecture(j.at("architecture"), cfg.input_shape);
    } else {
        // Small default stack sized for 16x16 synthetic images.
        const std::size_t c = cfg.input_shape[0];
        cfg.architecture = {LayerSpec::conv(c, 4, 3, 1, 1),
                            LayerSpec::relu(),
                            LayerSpec::maxpool(2, 2),
                            LayerSpec::conv(4, 8, 3, 1, 1),
                            LayerSpec::relu(),
                            LayerSpec::maxpool(2, 2),
                            LayerSpec::flatten(),
                            LayerSpec::dense(8 * (cfg.input_shape[1] / 4) *
                                                 (cfg.input_shape[2] / 4),
                                             j.value("feature_dim", std::size_t{16}))};
    }
    cfg.feature_dim = cfg.architecture.back().out_width;
    if (j.contains("feature_dim") && j.at("feature_dim").get<std::size_t>() != cfg.feature_dim) {
        fail("feature_dim", "does not match the final dense layer's out_width");
    }
    if (cfg.feature_dim == 0) fail("feature_dim", "must be >= 1");

    cfg.metric_rank = j.value("metric_rank", cfg.metric_rank);
    if (cfg.metric_rank == 0) fail("metric_rank", "must be >= 1");

    if (j.contains("loss")) {
        const std::string loss = j.at("loss").get<std::string>();
        if (loss == "bernoulli") {
            cfg.loss_variant = LossVariant::Bernoulli;
        } else if (loss == "paper_literal") {
            cfg.loss_variant = LossVariant::PaperLiteral;
        } else {
            fail("loss", "must be 'bernoulli' or 'paper_literal'");
        }
    }
    if (j.contains("relevance_source")) {
        const std::string src = j.at("relevance_source").get<std::string>();
        if (src == "probability") {
            cfg.relevance_source = RelevanceSource::Probability;
        } else if (src == "neg_distance") {
            cfg.relevance_source = RelevanceSource::NegDistance;
        } else {
            fail("relevance_source", "must be 'probability' or 'neg_distance'");
        }
    }
    if (j.contains("optimizer")) {
        const json& opt = j.at("optimizer");
        cfg.adam.alpha = opt.value("alpha", cfg.adam.alpha);
        cfg.adam.beta1 = opt.value("beta1", cfg.adam.beta1);
        cfg.adam.beta2 = opt.value("beta2", cfg.adam.beta2);
        cfg.adam.eps = opt.value("eps", cfg.adam.eps);
        if (cfg.adam.alpha <= 0.0) fail("optimizer.alpha", "must be positive");
    }
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    if (cfg.batch_size == 0) fail("batch_size", "must be >= 1");

    if (j.contains("seeds")) {
        const json& s = j.at("seeds");
        cfg.seeds.init = s.value("init", cfg.seeds.init);
        cfg.seeds.split = s.value("split", cfg.seeds.split);
        cfg.seeds.negatives = s.value("negatives", cfg.seeds.negatives);
        cfg.seeds.shuffle = s.value("shuffle", cfg.seeds.shuffle);
        cfg.seeds.perturbation = s.value("perturbation", cfg.seeds.perturbation);
    }
    if (j.contains("epsilons")) {
        cfg.epsilons = j.at("epsilons").get<std::vector<double>>();
        if (cfg.epsilons.empty()) fail("epsilons", "must not be empty");
        for (double e : cfg.epsilons) {
            if (e < 0.0) fail("epsilons", "values must be >= 0");
        }
    }
    if (j.contains("paths")) {
        const json& p = j.at("paths");
        cfg.manifest_path = p.value("manifest", cfg.manifest_path);
        cfg.checkpoint_path = p.value("checkpoint", cfg.checkpoint_path);
        cfg.out_dir = p.value("out_dir", cfg.out_dir);
    }
    cfg.eval_checkpoints = j.value("eval_checkpoints", cfg.eval_checkpoints);
    cfg.split_fraction = j.value("split_fraction", cfg.split_fraction);
    if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0)) {
        fail("split_fraction", "must lie in (0,1)");
    }
    cfg.top_k = j.value("top_k", cfg.top_k);
    cfg.relation_type = j.value("relation_type", cfg.relation_type);
    if (cfg.relation_type != "all") {
        try {
            parse_relation_type(cfg.relation_type);
        } catch (const IngestError&) {
            fail("relation_type", "must be one of the four relation types or 'all'");
        }
    }
    cfg.threshold = j.value("threshold", cfg.threshold);

    if (j.contains("perturbation")) {
        const json& p = j.at("perturbation");
        cfg.perturbation.steps = p.value("steps", cfg.perturbation.steps);
        cfg.perturbation.pixels_per_step =
            p.value("pixels_per_step", cfg.perturbation.pixels_per_step);
        cfg.perturbation.pairs = p.value("pairs", cfg.perturbation.pairs);
        const std::string ordering = p.value("ordering", std::string("global"));
        if (ordering == "global") {
            cfg.perturbation.ordering = PerturbOrdering::GlobalRank;
        } else if (ordering == "per_branch_equal") {
            cfg.perturbation.ordering = PerturbOrdering::PerBranchEqual;
        } else {
            fail("perturbation.ordering", "must be 'global' or 'per_branch_equal'");
        }
    }

    cfg.synthetic.height = cfg.input_shape[1];
    cfg.synthetic.width = cfg.input_shape[2];
    cfg.synthetic.channels = cfg.input_shape[0];
    if (j.contains("synthetic")) {
        const json& s = j.at("synthetic");
        cfg.synthetic.items = s.value("items", cfg.synthetic.items);
        cfg.synthetic.users = s.value("users", cfg.synthetic.users);
        cfg.synthetic.motif_classes = s.value("motif_classes", cfg.synthetic.motif_classes);
        cfg.synthetic.categories = s.value("categories", cfg.synthetic.categories);
        cfg.synthetic.noise = s.value("noise", cfg.synthetic.noise);
        if (cfg.synthetic.noise < 0.0 || cfg.synthetic.noise >= 1.0) {
            fail("synthetic.noise", "must lie in [0,1)");
        }
    }
    cfg.synthetic.seed = cfg.seeds.split ^ 0xc0ffee;
    return cfg;
}

void override_seeds(RunConfig& config, std::uint64_t master_seed) {
    config.seeds.init = master_seed;
    config.seeds.split = master_seed + 1;
    config.seeds.negatives = master_seed + 2;
    config.seeds.shuffle = master_seed + 3;
    config.seeds.perturbation = master_seed + 4;
    config.synthetic.seed = config.seeds.split ^ 0xc0ffee;
}

}  // namespace relex
