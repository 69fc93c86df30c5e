#ifndef RELEX_NETWORK_IO_HPP
#define RELEX_NETWORK_IO_HPP

#include "relex/checkpoint_io.hpp"
#include "relex/network.hpp"

namespace relex {

// Shared between the network-only checkpoint and the full-model checkpoint,
// which appends a metric section after the network payload.

nlohmann::json stack_header_json(const LayerStack& stack);
LayerStack stack_from_header(const nlohmann::json& header, CheckpointReader& reader);

}  // namespace relex

#endif
