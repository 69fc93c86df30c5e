#include "relex/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "relex/errors.hpp"
#include "relex/image_io.hpp"
#include "relex/network_io.hpp"

namespace relex {

const UserMetric& Model::metric_for(const std::string& user) const {
    auto it = metrics.find(user);
    if (it != metrics.end()) return it->second;
    it = metrics.find(kGlobalUser);
    if (it == metrics.end()) throw LookupError("model has no metric for user " + user +
                                               " and no global fallback");
    return it->second;
}

double Model::pair_probability(const std::string& user, const Tensor& xi, const Tensor& xj) const {
    return link_probability(metric_distance(metric_for(user).factor, xi, xj), q);
}

namespace {

std::string loss_variant_name(LossVariant v) {
    return v == LossVariant::Bernoulli ? "bernoulli" : "paper_literal";
}

LossVariant parse_loss_variant(const std::string& name) {
    if (name == "bernoulli") return LossVariant::Bernoulli;
    if (name == "paper_literal") return LossVariant::PaperLiteral;
    throw ConfigError("unknown loss variant: " + name);
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
    nlohmann::json header = stack_header_json(model.stack);
    header["sections"] = {"network", "metric"};
    nlohmann::json metric;
    metric["rank"] = model.metric_rank;
    metric["loss"] = loss_variant_name(model.loss_variant);
    metric["relation_type"] = model.relation_type;
    metric["users"] = nlohmann::json::array();
    for (const auto& [user, m] : model.metrics) metric["users"].push_back(user);
    header["metric"] = metric;

    std::vector<const Tensor*> tensors;
    for (const LayerParams& p : model.stack.params) {
        if (p.weights.size() > 0) tensors.push_back(&p.weights);
        if (p.biases.size() > 0) tensors.push_back(&p.biases);
    }
    for (const auto& [user, m] : model.metrics) tensors.push_back(&m.factor);
    const Tensor q_tensor({1}, {model.q});
    tensors.push_back(&q_tensor);
    write_checkpoint_file(path, header, tensors);
}

Model load_model(const std::string& path) {
    CheckpointReader reader(path);
    const nlohmann::json& header = reader.header();
    if (!header.contains("metric")) {
        throw FormatError("checkpoint has no metric section: " + path);
    }
    Model model;
    model.stack = stack_from_header(header, reader);
    const nlohmann::json& metric = header.at("metric");
    model.metric_rank = metric.at("rank").get<std::size_t>();
    model.loss_variant = parse_loss_variant(metric.at("loss").get<std::string>());
    model.relation_type = metric.at("relation_type").get<std::string>();
    for (const auto& user_json : metric.at("users")) {
        const std::string user = user_json.get<std::string>();
        UserMetric m;
        m.user = user;
        m.factor = reader.read_tensor({model.metric_rank, model.stack.feature_dim});
        model.metrics.emplace(user, std::move(m));
    }
    model.q = reader.read_tensor({1})[0];
    reader.expect_end();
    if (model.metrics.count(kGlobalUser) == 0) {
        throw IntegrityError("model checkpoint lacks the global user metric: " + path);
    }
    return model;
}

std::uint64_t file_hash_fnv1a(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open file for hashing: " + path);
    std::uint64_t h = 1469598103934665603ull;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

Tensor load_item_image(const Item& item, const std::vector<std::size_t>& input_shape) {
    Tensor image = decode_image(item.image_path, input_shape[1], input_shape[2]);
    const std::size_t want = input_shape[0], have = image.extent(0);
    if (have == want) return image;
    const std::size_t h = image.extent(1), w = image.extent(2);
    Tensor out({want, h, w});
    if (have == 1) {
        for (std::size_t c = 0; c < want; ++c) {
            for (std::size_t i = 0; i < h * w; ++i) out[c * h * w + i] = image[i];
        }
    } else if (want == 1) {
        for (std::size_t i = 0; i < h * w; ++i) {
            double acc = 0.0;
            for (std::size_t c = 0; c < have; ++c) acc += image[c * h * w + i];
            out[i] = acc / static_cast<double>(have);
        }
    } else {
        throw DimensionError("cannot adapt image channels " + std::to_string(have) + " -> " +
                             std::to_string(want) + " for item " + item.id);
    }
    return out;
}

namespace {

bool edge_matches(const Edge& edge, const std::string& relation_type) {
    return relation_type == "all" || relation_type_name(edge.type) == relation_type;
}

}  // namespace

Model train_model(const ItemCatalog& catalog, const RelationGraph& graph, const SplitSpec& split,
                  const TrainOptions& options, const TrainLogFn& log) {
    if (options.relation_type != "all") parse_relation_type(options.relation_type);

    // Negatives are sampled once, parallel to graph.edges; membership checks
    // run against the full graph so test positives never become negatives.
    const std::vector<RelationInstance> negatives =
        sample_negatives(graph, options.negative_seed);

    std::vector<RelationInstance> instances;
    for (std::size_t idx : split.train_edges) {
        const Edge& edge = graph.edges[idx];
        if (!edge_matches(edge, options.relation_type)) continue;
        instances.push_back({edge.user, edge.src, edge.dst, edge.type, true});
        instances.push_back(negatives[idx]);
    }
    if (instances.empty()) {
        throw EvalError("no training edges for relation type " + options.relation_type);
    }

    Model model;
    model.stack = init_stack(options.specs, options.input_shape, options.init_seed);
    model.metric_rank = options.metric_rank;
    model.loss_variant = options.loss_variant;
    model.relation_type = options.relation_type;

    // One factor per user seen anywhere in the graph, plus the global
    // fallback, so the optimizer slot list is fixed from step one.
    {
        std::vector<std::string> users{kGlobalUser};
        for (const Edge& edge : graph.edges) users.push_back(edge.user);
        std::sort(users.begin(), users.end());
        users.erase(std::unique(users.begin(), users.end()), users.end());
        std::mt19937_64 rng(options.init_seed ^ 0x9e3779b97f4a7c15ull);
        const std::size_t k = model.stack.feature_dim;
        std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(k)));
        for (const std::string& user : users) {
            UserMetric m;
            m.user = user;
            m.factor = Tensor({options.metric_rank, k});
            for (std::size_t i = 0; i < m.factor.size(); ++i) m.factor[i] = dist(rng);
            model.metrics.emplace(user, std::move(m));
        }
    }

    // Images decoded once.
    std::map<std::string, Tensor> images;
    for (const RelationInstance& inst : instances) {
        for (const std::string& id : {inst.src, inst.dst}) {
            if (!images.count(id)) {
                images.emplace(id, load_item_image(catalog.at(id), model.stack.input_shape));
            }
        }
    }

    Adam adam(options.adam);
    std::mt19937_64 shuffle_rng(options.shuffle_seed);
    Tensor q_tensor({1});
    bool q_initialized = false;
    std::size_t global_step = 0;

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        std::shuffle(instances.begin(), instances.end(), shuffle_rng);
        for (std::size_t start = 0; start < instances.size(); start += options.batch_size) {
            const std::size_t end = std::min(start + options.batch_size, instances.size());
            const std::vector<RelationInstance> batch(instances.begin() + start,
                                                      instances.begin() + end);

            std::map<std::string, ForwardTrace> traces;
            std::map<std::string, Tensor> features;
            for (const RelationInstance& inst : batch) {
                for (const std::string& id : {inst.src, inst.dst}) {
                    if (!traces.count(id)) {
                        ForwardTrace t = forward(model.stack, images.at(id));
                        features.emplace(id, t.features);
                        traces.emplace(id, std::move(t));
                    }
                }
            }

            if (!q_initialized) {
                // Start the shifted sigmoid at the data's median distance so
                // the first predictions sit near 0.5.
                std::vector<double> dists;
                for (const RelationInstance& inst : batch) {
                    dists.push_back(metric_distance(model.metric_for(inst.user).factor,
                                                    features.at(inst.src), features.at(inst.dst)));
                }
                std::sort(dists.begin(), dists.end());
                q_tensor[0] = dists[dists.size() / 2];
                q_initialized = true;
            }
            model.q = q_tensor[0];

            LossGrads lg = loss_and_grads(batch, features, model.metrics, model.q,
                                          model.loss_variant);

            StackGradients stack_grads = zero_gradients(model.stack);
            for (const auto& [id, fg] : lg.feature_grads) {
                StackGradients g = backward(model.stack, traces.at(id), fg);
                for (std::size_t l = 0; l < stack_grads.params.size(); ++l) {
                    for (std::size_t i = 0; i < stack_grads.params[l].weights.size(); ++i) {
                        stack_grads.params[l].weights[i] += g.params[l].weights[i];
                    }
                    for (std::size_t i = 0; i < stack_grads.params[l].biases.size(); ++i) {
                        stack_grads.params[l].biases[i] += g.params[l].biases[i];
                    }
                }
            }

            // Descend the negated objective.
            std::vector<Tensor*> params;
            std::vector<Tensor> grads;
            std::vector<std::string> names;
            for (std::size_t l = 0; l < model.stack.params.size(); ++l) {
                LayerParams& p = model.stack.params[l];
                if (p.weights.size() > 0) {
                    params.push_back(&p.weights);
                    grads.push_back(stack_grads.params[l].weights);
                    names.push_back("layer" + std::to_string(l) + ".weights");
                }
                if (p.biases.size() > 0) {
                    params.push_back(&p.biases);
                    grads.push_back(stack_grads.params[l].biases);
                    names.push_back("layer" + std::to_string(l) + ".biases");
                }
            }
            for (auto& [user, m] : model.metrics) {
                params.push_back(&m.factor);
                auto it = lg.factor_grads.find(user);
                grads.push_back(it != lg.factor_grads.end() ? it->second
                                                            : Tensor(m.factor.shape()));
                names.push_back("metric." + user);
            }
            params.push_back(&q_tensor);
            grads.push_back(Tensor({1}, {lg.q_grad}));
            names.push_back("q");

            for (Tensor& g : grads) {
                for (std::size_t i = 0; i < g.size(); ++i) g[i] = -g[i];
            }
            std::vector<const Tensor*> grad_ptrs;
            for (const Tensor& g : grads) grad_ptrs.push_back(&g);
            adam.step(params, grad_ptrs, names);
            model.q = q_tensor[0];

            if (log) {
                std::size_t correct = 0;
                for (const RelationInstance& inst : batch) {
                    const double p = model.pair_probability(inst.user, features.at(inst.src),
                                                            features.at(inst.dst));
                    if ((p >= 0.5) == inst.positive) ++correct;
                }
                std::ostringstream line;
                line.precision(17);
                line << "{\"epoch\":" << epoch << ",\"step\":" << global_step
                     << ",\"objective\":" << lg.objective << ",\"accuracy\":"
                     << static_cast<double>(correct) / static_cast<double>(batch.size()) << "}";
                log(line.str());
            }
            ++global_step;
        }
    }
    return model;
}

FeatureIndex::FeatureIndex(const Model& model, const ItemCatalog& catalog) {
    for (const Item& item : catalog.items) {
        ForwardTrace t = forward(model.stack, load_item_image(item, model.stack.input_shape));
        features_.emplace(item.id, std::move(t.features));
    }
}

const Tensor& FeatureIndex::features(const std::string& item_id) const {
    auto it = features_.find(item_id);
    if (it == features_.end()) throw LookupError("feature index has no item: " + item_id);
    return it->second;
}

}  // namespace relex
