#include "relex/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include "relex/errors.hpp"

namespace relex {

AccuracyReport evaluate_accuracy(const Model& model, const ItemCatalog& catalog,
                                 const RelationGraph& graph, const SplitSpec& split,
                                 std::uint64_t negative_seed, double threshold) {
    if (split.test_edges.empty()) throw EvalError("test split is empty");

    const std::vector<RelationInstance> negatives = sample_negatives(graph, negative_seed);

    std::map<std::string, Tensor> features;
    auto features_of = [&](const std::string& id) -> const Tensor& {
        auto it = features.find(id);
        if (it == features.end()) {
            ForwardTrace t =
                forward(model.stack, load_item_image(catalog.at(id), model.stack.input_shape));
            it = features.emplace(id, std::move(t.features)).first;
        }
        return it->second;
    };

    struct Cell {
        std::size_t correct = 0, total = 0;
    };
    std::map<std::pair<std::string, RelationType>, Cell> cells;
    auto score = [&](const RelationInstance& inst) {
        const double p =
            model.pair_probability(inst.user, features_of(inst.src), features_of(inst.dst));
        const bool correct = inst.positive ? p >= threshold : p < threshold;
        Cell& cell = cells[{catalog.at(inst.src).category, inst.type}];
        cell.total += 1;
        cell.correct += correct ? 1 : 0;
    };

    bool any = false;
    for (std::size_t idx : split.test_edges) {
        const Edge& edge = graph.edges[idx];
        if (model.relation_type != "all" &&
            relation_type_name(edge.type) != model.relation_type) {
            continue;
        }
        any = true;
        score({edge.user, edge.src, edge.dst, edge.type, true});
        score(negatives[idx]);
    }
    if (!any) {
        throw EvalError("test split has no edges of relation type " + model.relation_type);
    }

    AccuracyReport report;
    for (const auto& [key, cell] : cells) {
        report.rows.push_back({key.first, key.second, model.metric_rank,
                               100.0 * static_cast<double>(cell.correct) /
                                   static_cast<double>(cell.total)});
    }
    return report;
}

void write_accuracy_csv(const AccuracyReport& report, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw EvalError("cannot open accuracy csv for writing: " + tmp);
        out.precision(17);
        out << "category,relation_type,D,accuracy\n";
        for (const AccuracyRow& row : report.rows) {
            out << row.category << ',' << relation_type_name(row.type) << ',' << row.metric_rank
                << ',' << row.accuracy_pct << '\n';
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw EvalError("cannot rename accuracy csv into place: " + path);
    }
}

std::string perturb_policy_name(PerturbPolicy policy) {
    return policy == PerturbPolicy::Lrp ? "lrp" : "random";
}

std::vector<double> perturb_and_rescore(const Model& model, const std::string& user,
                                        const Tensor& image_left, const Tensor& image_right,
                                        const HeatmapPair& heatmaps, std::size_t steps,
                                        std::size_t pixels_per_step, PerturbPolicy policy,
                                        std::uint64_t seed, PerturbOrdering ordering) {
    std::vector<PixelRef> order;
    if (policy == PerturbPolicy::Lrp && ordering == PerturbOrdering::PerBranchEqual) {
        // Alternate branches along each branch's own descending ranking.
        std::vector<PixelRef> left, right;
        for (const PixelRef& ref : heatmaps.ranking) {
            (ref.branch == 0 ? left : right).push_back(ref);
        }
        for (std::size_t i = 0; i < left.size() || i < right.size(); ++i) {
            if (i < left.size()) order.push_back(left[i]);
            if (i < right.size()) order.push_back(right[i]);
        }
    } else {
        order = heatmaps.ranking;
    }
    std::mt19937_64 rng(seed);
    if (policy == PerturbPolicy::Random) std::shuffle(order.begin(), order.end(), rng);

    if (steps * pixels_per_step > order.size()) {
        throw RangeError("perturbation would touch " + std::to_string(steps * pixels_per_step) +
                         " pixels but the pair has " + std::to_string(order.size()));
    }

    Tensor left = image_left, right = image_right;
    const UserMetric& metric = model.metric_for(user);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    std::vector<double> scores;
    scores.reserve(steps + 1);
    auto rescore = [&]() {
        const Tensor fl = forward(model.stack, left).features;
        const Tensor fr = forward(model.stack, right).features;
        return link_probability(metric_distance(metric.factor, fl, fr), model.q);
    };
    scores.push_back(rescore());

    std::size_t cursor = 0;
    for (std::size_t step = 0; step < steps; ++step) {
        for (std::size_t n = 0; n < pixels_per_step; ++n, ++cursor) {
            const PixelRef& ref = order[cursor];
            Tensor& target = ref.branch == 0 ? left : right;
            for (std::size_t c = 0; c < target.extent(0); ++c) {
                target.at(c, ref.y, ref.x) = uniform(rng);
            }
        }
        scores.push_back(rescore());
    }
    return scores;
}

PerturbationCurve aggregate_curves(const std::vector<std::vector<double>>& per_pair_scores,
                                   double threshold, double epsilon, PerturbPolicy policy,
                                   std::size_t pixels_per_step, std::uint64_t seed) {
    if (per_pair_scores.empty()) throw AggregationError("no curves to aggregate");
    const std::size_t grid = per_pair_scores.front().size();
    for (const auto& scores : per_pair_scores) {
        if (scores.size() != grid) {
            throw AggregationError("mismatched step grids: " + std::to_string(scores.size()) +
                                   " vs " + std::to_string(grid));
        }
    }

    PerturbationCurve curve;
    curve.epsilon = epsilon;
    curve.policy = policy;
    curve.pixels_per_step = pixels_per_step;
    curve.seed = seed;
    for (std::size_t step = 0; step < grid; ++step) {
        std::size_t correct = 0;
        for (const auto& scores : per_pair_scores) {
            if (scores[step] >= threshold) ++correct;
        }
        curve.points.push_back({step, 100.0 * static_cast<double>(correct) /
                                          static_cast<double>(per_pair_scores.size())});
    }
    return curve;
}

double curve_auc(const PerturbationCurve& curve) {
    if (curve.points.empty()) throw AggregationError("empty curve");
    double total = 0.0;
    for (const CurvePoint& point : curve.points) total += point.accuracy_pct;
    return total / static_cast<double>(curve.points.size());
}

void write_curves_csv(const std::vector<PerturbationCurve>& curves, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw EvalError("cannot open curves csv for writing: " + tmp);
        out.precision(17);
        out << "policy,epsilon,step,accuracy\n";
        for (const PerturbationCurve& curve : curves) {
            for (const CurvePoint& point : curve.points) {
                out << perturb_policy_name(curve.policy) << ',' << curve.epsilon << ','
                    << point.step << ',' << point.accuracy_pct << '\n';
            }
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw EvalError("cannot rename curves csv into place: " + path);
    }
}

}  // namespace relex
