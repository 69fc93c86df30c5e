#ifndef RELEX_DATA_HPP
#define RELEX_DATA_HPP

#include <cstdint>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "relex/tensor.hpp"

namespace relex {

enum class RelationType { AlsoViewed, BuyAfterViewing, AlsoBought, BoughtTogether };

inline constexpr std::size_t kRelationTypeCount = 4;

/// The four manifest strings; anything else is rejected at ingest.
std::string relation_type_name(RelationType type);
RelationType parse_relation_type(const std::string& name);
std::vector<RelationType> all_relation_types();

struct Item {
    std::string id;
    std::string category;
    std::string image_path;  // resolved against the manifest directory
};

struct ItemCatalog {
    std::vector<Item> items;  // manifest order
    std::map<std::string, std::size_t> index;
    std::vector<std::string> categories;  // sorted unique labels

    const Item& at(const std::string& id) const;
    bool contains(const std::string& id) const { return index.count(id) > 0; }
};

struct Edge {
    std::string user;
    std::string src;
    std::string dst;
    RelationType type;
};

/// Typed item-item relationships. Pairs are treated as unordered for
/// membership so a sampled negative can never mirror an existing edge.
struct RelationGraph {
    std::vector<Edge> edges;

    void add(Edge edge);
    bool has_pair(const std::string& user, const std::string& a, const std::string& b,
                  RelationType type) const;
    /// Membership regardless of which user the edge belongs to; negative
    /// sampling must not relabel a pair that is positive for anyone.
    bool has_pair_any_user(const std::string& a, const std::string& b, RelationType type) const;

private:
    std::unordered_set<std::string> keys_;
    std::unordered_set<std::string> userless_keys_;
};

std::pair<ItemCatalog, RelationGraph> ingest(const std::string& manifest_path);

/// Writes a manifest (JSON Lines) for the given catalog and graph. Image
/// paths are emitted relative to the manifest directory when possible.
void write_manifest(const ItemCatalog& catalog, const RelationGraph& graph,
                    const std::string& manifest_path);

struct SplitSpec {
    std::vector<std::size_t> train_edges;  // indices into graph.edges
    std::vector<std::size_t> test_edges;
    std::uint64_t seed = 0;
    double fraction = 0.8;
};

/// Per-relation-type stratified partition; test side rounds down.
SplitSpec make_split(const RelationGraph& graph, std::uint64_t seed, double fraction);

struct SyntheticSpec {
    std::size_t items = 500;
    std::size_t users = 3;
    std::size_t motif_classes = 8;
    std::size_t categories = 2;
    std::size_t channels = 1;
    std::size_t height = 16;
    std::size_t width = 16;
    double noise = 0.0;  // fraction of edges rewired against the motif rule
    std::uint64_t seed = 0;
    std::string out_dir;
};

struct SyntheticResult {
    ItemCatalog catalog;
    RelationGraph graph;
    std::string manifest_path;
    std::vector<std::size_t> motif_class;  // per item, ground truth
};

/// Plants one motif per item (class = item index mod motif_classes) on a
/// low-noise background and relates items of equal motif class, edge type
/// c mod 4. Emits images, ".mask.pgm" localization sidecars and a manifest.
SyntheticResult generate_synthetic(const SyntheticSpec& spec);

/// The stencil pixel count of one motif, before placement.
std::size_t motif_area(std::size_t motif_class);

}  // namespace relex

#endif
