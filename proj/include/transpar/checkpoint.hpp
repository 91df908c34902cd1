#pragma once

// JSON checkpoint: {format_version: 1, modules: [{role, tensors: [{name, shape, data}]}]}.
// An optional "standardizer" object carries the input normalization used in training.

#include "transpar/data.hpp"
#include "transpar/model.hpp"

#include <json.hpp>

#include <optional>
#include <string>

namespace transpar::model {

struct Checkpoint {
  Network network;
  std::optional<data::Standardizer> standardizer;
};

nlohmann::ordered_json checkpoint_to_json(const Network& net,
                                          const std::optional<data::Standardizer>& standardizer);
/// Infers the network dimensions from tensor shapes and rejects any tensor
/// whose shape disagrees with them (or with `expected`, when given).
Checkpoint checkpoint_from_json(const nlohmann::json& j,
                                const std::optional<NetworkConfig>& expected = std::nullopt);

void save_checkpoint(const std::string& path, const Network& net,
                     const std::optional<data::Standardizer>& standardizer);
Checkpoint load_checkpoint(const std::string& path,
                           const std::optional<NetworkConfig>& expected = std::nullopt);

}  // namespace transpar::model
