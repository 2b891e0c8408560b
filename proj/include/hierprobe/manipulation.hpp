#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hierprobe/image.hpp"
#include "hierprobe/latent.hpp"

namespace hierprobe {

inline constexpr double kDefaultJitterScale = 0.5;

struct Edit {
  Boundary boundary;
  double step = 0.0;
  /// Empty optional means all layers.
  std::optional<std::vector<std::size_t>> layers;
};

struct ManipulationRequest {
  LayerwiseCode base_code;
  std::vector<Edit> edits;
  double jitter_scale = 0.0;
  std::uint64_t seed = 0;
};

/// Exactly apply_shift.
LayerwiseCode manipulate_independent(const LayerwiseCode& code, const Boundary& boundary, double step,
                                     std::span<const std::size_t> layers);
/// z + step * n for a Z/W-space code.
LatentCode manipulate_independent(const LatentCode& code, const Boundary& boundary, double step);

/// code + sum_j step_j * n_j (each restricted to its layers). The per-edit
/// deltas are summed in a canonical order, so the result does not depend on
/// the order of `edits`; a single edit reproduces manipulate_independent.
LayerwiseCode manipulate_joint(const LayerwiseCode& code, std::span<const Edit> edits);
LatentCode manipulate_joint(const LatentCode& code, std::span<const Edit> edits);

/// apply_shift followed, when jitter_scale > 0, by jitter_scale * delta on the
/// shifted layers with delta ~ N(0, I) drawn from `seed`.
LayerwiseCode manipulate_jitter(const LayerwiseCode& code, const Boundary& boundary, double step,
                                std::span<const std::size_t> layers, double jitter_scale, std::uint64_t seed);
LatentCode manipulate_jitter(const LatentCode& code, const Boundary& boundary, double step, double jitter_scale,
                             std::uint64_t seed);

/// Joint edit of the request followed by its jitter (over the union of the
/// edited layers).
LayerwiseCode manipulate(const ManipulationRequest& request);

struct TransitionMatrix {
  /// (label before, label after) -> pixel count; only non-zero pairs are stored.
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> counts;
  std::map<std::uint32_t, std::string> label_names;

  std::uint64_t total() const noexcept;
  std::uint64_t off_diagonal() const noexcept;
};

/// Per-coordinate label pairs of two equally sized masks.
TransitionMatrix transition_matrix(const SegmentationMask& before, const SegmentationMask& after);

}  // namespace hierprobe
