#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hierprobe/generator.hpp"
#include "hierprobe/latent.hpp"

namespace hierprobe {

inline constexpr double kDefaultStep = 2.0;
inline constexpr std::size_t kDefaultRescoreSamples = 1000;

struct RescoreConfig {
  std::size_t num_samples = kDefaultRescoreSamples;
  double step = kDefaultStep;
  std::uint64_t seed = 0;
  /// Layers the shift is restricted to; empty optional means all layers.
  std::optional<std::vector<std::size_t>> layers;

  void validate() const;
};

/// (stage name, value) in stage-map order.
using StageScores = std::vector<std::pair<std::string, double>>;

struct RescoreResult {
  std::string concept_id;
  double delta_s = 0.0;
  std::optional<StageScores> per_stage;
  /// per_stage divided by its sum; all zeros when every stage is exactly 0.
  std::optional<StageScores> normalized_per_stage;
};

/// Shifts one sample along `boundary`. LayerwiseFlat boundaries move the
/// layer-wise code directly; Z/W boundaries move the latent, re-project it,
/// and replace only the codes of `layers`. Stochastic inputs are kept.
LayerwiseCode shift_sample(const GeneratorHandle& handle, const LatentCode& latent, const LayerwiseCode& code,
                           const Boundary& boundary, double step, std::span<const std::size_t> layers);

/// Mean clipped score gain of `concept_id` over cfg.num_samples fresh codes
/// drawn from cfg.seed, each shifted by cfg.step along the boundary.
RescoreResult rescore(const GeneratorHandle& handle, const Boundary& boundary, const std::string& concept_id,
                      const RescoreConfig& cfg);

/// Descending delta_s; equal values ordered by concept id.
std::vector<std::string> rank_concepts(std::span<const RescoreResult> results);

/// rescore restricted to each stage in turn (same base codes for every
/// stage). delta_s is the unrestricted value and equals rescore().
RescoreResult localize_stages(const GeneratorHandle& handle, const Boundary& boundary, const std::string& concept_id,
                              const RescoreConfig& cfg, const StageMap& stage_map);

/// Stage with the largest raw value (first on ties); empty when all are 0.
std::optional<std::string> argmax_stage(const RescoreResult& result);

/// Entry (i, j): delta_s of concepts[j] when shifting along boundaries[i].
/// The diagonal is bit-identical to rescore() with the same config.
Matrix disentanglement_matrix(const GeneratorHandle& handle, std::span<const Boundary> boundaries,
                              std::span<const std::string> concepts, const RescoreConfig& cfg);

}  // namespace hierprobe
