#pragma once

#include <cstdint>
#include <string>

#include "judgekit/engine.hpp"
#include "judgekit/errors.hpp"
#include "judgekit/grpo.hpp"
#include "judgekit/policy.hpp"
#include "judgekit/reward.hpp"
#include "judgekit/synthesis.hpp"

namespace judgekit::config {

struct Paths {
  /// Documents JSON-lines file backing the search index.
  std::string corpus;
  std::string templates = "assets/templates";
  std::string output = "out";
};

struct AppConfig {
  engine::HttpPolicyOptions endpoint;
  engine::EpisodeConfig episode;
  reward::RewardConfig reward;
  grpo::GrpoConfig grpo;
  synthesis::SynthesisConfig synthesis;
  Paths paths;
  int parallelism = 4;
  std::uint64_t seed = 7;
};

/// Reads a sectioned key = value file (strings quoted, #-comments, a strict
/// subset of TOML). Unknown sections or keys are configuration errors, as
/// are referenced paths that do not exist.
AppConfig load_config(const std::string& path);

/// Same parse from memory; origin names the source in error messages. Path
/// existence is checked here too (empty paths are simply unset).
AppConfig parse_config_text(const std::string& text, const std::string& origin,
                            bool check_paths = true);

/// Canonical key = value dump of every field, fixed order; the config hash
/// is the FNV-1a of this text, so equal hashes mean equal resolved configs.
std::string canonical_dump(const AppConfig& cfg);
std::string config_hash(const AppConfig& cfg);

}  // namespace judgekit::config
