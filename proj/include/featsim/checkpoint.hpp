#pragma once

// Checkpoint directory: manifest.json (kind, architecture config, ordered
// parameter list) and one TSR file per parameter.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "featsim/autograd.hpp"

namespace featsim::checkpoint {

struct Entry {
    std::string name;
    Tensor value;
};

struct Contents {
    std::string kind;
    nlohmann::json config;
    std::vector<Entry> parameters;
};

void save(const std::filesystem::path& dir, const std::string& kind, const nlohmann::json& config,
          const std::vector<const Parameter*>& params);

/// Reads and validates a checkpoint: manifest present and well formed, every
/// file readable, and every tensor's shape equal to the manifest's.
Contents load(const std::filesystem::path& dir);

/// Copies `contents` into `params` after checking names and shapes match one
/// to one, in order. Nothing is written unless every entry matches.
void assign(const Contents& contents, const std::vector<Parameter*>& params);

bool exists(const std::filesystem::path& dir);

}  // namespace featsim::checkpoint
