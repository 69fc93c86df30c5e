#ifndef RELEX_COMMANDS_HPP
#define RELEX_COMMANDS_HPP

#include <string>

#include "relex/config.hpp"

namespace relex {

// Command bodies shared between the CLI binary and the test suites. Each
// writes its artifacts atomically under config.out_dir and throws on error.

/// Synthesizes the dataset into out_dir/dataset (manifest + images + masks).
std::string cmd_generate(const RunConfig& config);

/// Validates the manifest and writes out_dir/ingest_summary.json.
void cmd_ingest(const RunConfig& config);

/// Trains per config and writes the checkpoint plus out_dir/train_log.jsonl.
void cmd_train(const RunConfig& config);

/// Evaluates every configured checkpoint and writes out_dir/accuracy.csv
/// with columns category,relation_type,D,accuracy.
void cmd_eval(const RunConfig& config);

/// Heatmaps for one pair: raw CSV, rescaled PGM + sidecar, overlay PPM.
void cmd_explain(const RunConfig& config, const std::string& src, const std::string& dst,
                 const std::string& user);

/// Perturbation study over the config's epsilon list, both policies, writing
/// out_dir/curves.csv.
void cmd_perturb(const RunConfig& config);

/// Top-k per category for one query, writing out_dir/recommendations.jsonl.
void cmd_recommend(const RunConfig& config, const std::string& query, const std::string& user,
                   const std::string& category_filter = "");

}  // namespace relex

#endif
