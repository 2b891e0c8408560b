#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hierprobe/manipulation.hpp"
#include "hierprobe/rescoring.hpp"
#include "hierprobe/serialization.hpp"
#include "hierprobe/trainer.hpp"
#include "hierprobe/worker.hpp"

namespace hierprobe {

struct GeneratorSource {
  /// Planted spec or options file.
  std::optional<std::filesystem::path> planted;
  /// Worker command line; the worker runs in the config file's directory.
  std::vector<std::string> worker;
  std::filesystem::path worker_dir;
  std::chrono::milliseconds timeout = kDefaultWorkerTimeout;
  /// Worker sessions; 0 means one per --workers thread.
  std::size_t sessions = 0;
};

struct ManipulateConfig {
  std::string mode = "independent";  // independent | joint | jitter
  std::string concept_id;
  std::string second_concept_id;  // joint mode
  std::vector<double> steps{-kDefaultStep, 0.0, kDefaultStep};
  std::vector<double> second_steps{-kDefaultStep, 0.0, kDefaultStep};
  double step = kDefaultStep;  // jitter mode
  std::optional<std::vector<std::size_t>> layers;
  std::size_t count = 1;
  double jitter_scale = kDefaultJitterScale;
  std::uint64_t seed = 0;
};

struct TransitionConfig {
  std::optional<std::filesystem::path> before_mask;
  std::optional<std::filesystem::path> after_mask;
  std::string concept_id;
  double step = kDefaultStep;
  std::optional<std::vector<std::size_t>> layers;
  std::size_t count = 4;
  std::uint64_t seed = 0;
};

/// A run: one JSON document ("version": 1). Relative paths are resolved
/// against the config file's directory. Sub-seeds not given explicitly are
/// derived from the top-level "seed".
struct RunConfig {
  GeneratorSource generator;
  ProbeConfig probe;
  RescoreConfig rescore;
  /// Preset name or stage list; empty means the generator's default.
  std::optional<Json> stage_map;
  std::filesystem::path output_dir = "out";
  std::filesystem::path boundary_dir;  // defaults to <output_dir>/boundaries
  /// Concepts to probe; empty means the whole catalog.
  std::vector<std::string> concepts;
  ManipulateConfig manipulate;
  TransitionConfig transition;
  std::uint64_t seed = 0;
};

/// `seed_override` replaces the top-level seed and every explicit sub-seed.
RunConfig parse_run_config(const Json& doc, const std::filesystem::path& base_dir,
                           std::optional<std::uint64_t> seed_override = std::nullopt);
RunConfig load_run_config(const std::filesystem::path& path,
                          std::optional<std::uint64_t> seed_override = std::nullopt);

}  // namespace hierprobe
