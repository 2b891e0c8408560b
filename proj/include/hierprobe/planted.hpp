#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hierprobe/generator.hpp"
#include "hierprobe/latent.hpp"

namespace hierprobe {

/// How a planted concept's score depends on the sample.
///   Sigmoid  - sigma(sharpness * (direction . y[layers] + nuisance * xi)), wired to one stage.
///   Frozen   - sigma(sharpness * xi) where xi is a non-layer stochastic input
///              correlated with `shadow` at sampling time; visible in the
///              output, but no shift of the layer-wise code can change it.
///   Constant - a fixed score.
enum class ScorerKind { Sigmoid, Frozen, Constant };

std::string_view to_string(ScorerKind kind) noexcept;
ScorerKind scorer_kind_from_string(std::string_view text);

struct PlantedFactor {
  std::string concept_id;
  std::string name;
  SemanticLevel level = SemanticLevel::Attribute;
  ScorerKind kind = ScorerKind::Sigmoid;
  /// Unit vector over the flattened coordinates of `layers` (Sigmoid only).
  Vector direction;
  LayerRange layers;
  double sharpness = 1.0;
  /// Weight of this factor's own stochastic input in its activation (Sigmoid).
  double nuisance = 0.0;
  /// Unit vector over the full flat code that the stochastic input tracks (Frozen).
  Vector shadow;
  double shadow_correlation = 0.0;
  double constant_value = 0.5;

  bool frozen() const noexcept { return kind != ScorerKind::Sigmoid; }
};

struct RenderConfig {
  std::size_t width = 64;
  std::size_t height = 48;
  std::string hue_source;     // concept driving the background hue
  std::string layout_source;  // concept driving the wall-intersection position
};

struct PlantedGeneratorSpec {
  LatentSpaceSpec space;
  StyleTransform transform;
  StageMap stage_map;
  std::vector<PlantedFactor> factors;
  RenderConfig render;

  std::size_t factor_index(std::string_view concept_id) const;
  const PlantedFactor& factor(std::string_view concept_id) const;
  /// Flat-space embedding of a Sigmoid factor's direction (zero elsewhere).
  Vector flat_direction(const PlantedFactor& factor) const;

  /// Pre-sigmoid activation; 0 for Constant factors.
  double activation(const PlantedFactor& factor, const LayerwiseCode& code) const;
  double score(const PlantedFactor& factor, const LayerwiseCode& code) const;

  void validate() const;
};

struct Entanglement {
  SemanticLevel level = SemanticLevel::Attribute;
  std::size_t first = 0;
  std::size_t second = 1;
  double cosine = 0.7;
};

struct PlantedOptions {
  std::uint64_t seed = 0;
  std::size_t factors_per_level = 2;
  std::size_t num_layers = 14;
  std::size_t per_layer_dim = 32;
  /// W dimension; 0 means num_layers * per_layer_dim.
  std::size_t dim = 0;
  /// Defaults to the 14-layer map (or its proportional analog for other depths).
  std::optional<StageMap> stage_map;
  double sharpness = 1.0;
  double bias_scale = 0.1;
  std::size_t frozen_count = 0;
  double frozen_correlation = 0.6;
  std::size_t constant_count = 0;
  double constant_value = 0.5;
  /// Per Sigmoid factor, in catalog order; missing entries are 0.
  std::vector<double> nuisance;
  std::optional<Entanglement> entanglement;
  std::size_t render_width = 64;
  std::size_t render_height = 48;
};

struct PlantedGenerator {
  std::shared_ptr<const PlantedGeneratorSpec> spec;
  GeneratorHandle handle;
  ConceptCatalog catalog;
};

/// Builds the planted generator. Factor directions within a stage are
/// Gram-Schmidt orthogonalized from a seeded Gaussian basis; the stacked
/// style weights are rows of a seeded random orthogonal matrix.
PlantedGenerator make_planted_generator(const PlantedOptions& options);

/// Wraps an existing spec (e.g. one read from JSON).
PlantedGenerator make_planted_generator(PlantedGeneratorSpec spec);

ConceptCatalog planted_catalog(const PlantedGeneratorSpec& spec);

struct PlantedTruth {
  std::optional<std::string> stage;  // empty for frozen factors
  bool frozen = false;
};

std::map<std::string, PlantedTruth> planted_ground_truth(const PlantedGeneratorSpec& spec);

/// Brute-force Monte-Carlo estimate of
///   E[max(sigma(s(t + lambda c)) - sigma(s t), 0)],
/// with t drawn from the planted projection's exact distribution under the
/// sampling model (mean direction.b, standard deviation ||A^T direction||,
/// plus the factor's nuisance term). Independent of the sampling, scoring
/// and re-scoring code paths.
double oracle_rescore(const PlantedGeneratorSpec& spec, std::string_view concept_id,
                      double cosine, double step, std::size_t n_mc, std::uint64_t seed);

/// Cosine between the planted direction and the part of `boundary`'s normal
/// that lies in the factor's wired layers.
double planted_cosine(const PlantedGeneratorSpec& spec, std::string_view concept_id,
                      const Boundary& boundary);

/// direction . n restricted to `layers`: the activation gain per unit step
/// (divided by sharpness) when shifting along `boundary` in those layers.
double planted_shift_component(const PlantedGeneratorSpec& spec, std::string_view concept_id,
                               const Boundary& boundary, std::span<const std::size_t> layers);

ImageBuffer render_planted(const PlantedGeneratorSpec& spec, const LayerwiseCode& code);

}  // namespace hierprobe
