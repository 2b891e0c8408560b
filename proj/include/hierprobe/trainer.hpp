#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hierprobe/generator.hpp"
#include "hierprobe/latent.hpp"

namespace hierprobe {

/// Probe sample counts for a full-size generator and for the planted testbed.
inline constexpr std::size_t kFullScaleNumSamples = 500000;
inline constexpr std::size_t kDeskNumSamples = 10000;
inline constexpr std::size_t kDefaultExtremeCount = 2000;

struct SvmConfig {
  /// Soft-margin weight C, in units of the data's mean squared coordinate:
  /// lambda = mean(x_i^2) / (C n). Small enough that a few points near the
  /// margin do not tilt the normal.
  double regularization = 5e-4;
  std::size_t epochs = 200;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ProbeConfig {
  std::size_t num_samples = kDeskNumSamples;
  std::size_t extreme_count = kDefaultExtremeCount;
  std::uint64_t seed = 0;
  SvmConfig svm;
  /// Where boundaries are trained: LayerwiseFlat (default) or W on the raw draws.
  SpaceTag space = SpaceTag::LayerwiseFlat;

  void validate() const;
};

struct TrainingReport {
  std::string concept_id;
  Boundary boundary;
  double train_accuracy = 0.0;
  double holdout_accuracy = 0.0;
  std::size_t positive_count = 0;
  std::size_t negative_count = 0;
  SvmConfig svm;
};

struct ExtremeLabels {
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;
};

/// Indices of the m largest and, among the rest, the m smallest scores.
/// Equal scores go to the lower index first.
ExtremeLabels label_extremes(std::span<const double> scores, std::size_t m);

/// Soft-margin linear SVM by projected stochastic subgradient descent
/// (Pegasos) on the primal hinge loss, with a regularized bias feature.
/// 20% of each class is held out. The normal points toward the positive class.
TrainingReport train_linear_svm(std::span<const LatentCode> positive, std::span<const LatentCode> negative,
                                const SvmConfig& cfg, std::string concept_id = {});

/// Samples N codes, scores them, labels extremes, and trains one boundary per
/// concept. Concepts are trained on up to `workers` threads; the output does
/// not depend on the thread count.
std::vector<TrainingReport> probe_concepts(const GeneratorHandle& handle, const ConceptCatalog& concepts,
                                           const ProbeConfig& cfg, std::size_t workers = 1);

/// Scores in chunks so a single request never carries more than `chunk` codes.
std::vector<ScoreVector> score_in_chunks(const GeneratorHandle& handle, std::span<const LayerwiseCode> codes,
                                         const ConceptCatalog& concepts, std::size_t chunk = 1000);

}  // namespace hierprobe
