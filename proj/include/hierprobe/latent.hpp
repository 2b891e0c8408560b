#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace hierprobe {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Which space a code or boundary lives in. LayerwiseFlat is the
/// concatenation of all per-layer codes, length num_layers * per_layer_dim.
enum class SpaceTag { Z, W, LayerwiseFlat };

std::string_view to_string(SpaceTag tag) noexcept;
SpaceTag space_from_string(std::string_view text);

struct LatentSpaceSpec {
  std::size_t dim = 0;
  SpaceTag space = SpaceTag::W;
  std::size_t num_layers = 1;
  std::size_t per_layer_dim = 0;

  std::size_t flat_dim() const noexcept { return num_layers * per_layer_dim; }
  void validate() const;
};

struct LatentCode {
  Vector values;
  SpaceTag space = SpaceTag::W;
};

/// Per-layer affine map y(l) = A(l) w + b(l). Stored stacked so that the
/// flattened layer-wise code is a single matrix-vector product.
class StyleTransform {
public:
  StyleTransform(const std::vector<Matrix>& weights, const std::vector<Vector>& biases);
  StyleTransform(Matrix stacked_weight, Vector stacked_bias, std::size_t num_layers);

  /// A(l) = I and b(l) = 0 at every layer: w is broadcast to all layers.
  static StyleTransform broadcast(std::size_t num_layers, std::size_t dim);

  std::size_t num_layers() const noexcept { return num_layers_; }
  std::size_t per_layer_dim() const noexcept { return per_layer_dim_; }
  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(weight_.cols()); }

  Matrix weight(std::size_t layer) const;
  Vector bias(std::size_t layer) const;
  const Matrix& stacked_weight() const noexcept { return weight_; }
  const Vector& stacked_bias() const noexcept { return bias_; }

  bool operator==(const StyleTransform& other) const;

private:
  Matrix weight_;
  Vector bias_;
  std::size_t num_layers_ = 0;
  std::size_t per_layer_dim_ = 0;
};

/// Layer-wise code: L per-layer vectors stored flat, plus an optional block of
/// per-sample stochastic inputs that belong to the generated sample but are
/// not part of any layer's code. Shifts never touch the stochastic inputs.
class LayerwiseCode {
public:
  LayerwiseCode() = default;
  LayerwiseCode(std::size_t num_layers, std::size_t per_layer_dim);
  LayerwiseCode(std::size_t num_layers, std::size_t per_layer_dim, Vector flat,
                Vector stochastic = Vector());

  static LayerwiseCode from_layers(const std::vector<Vector>& layers);

  std::size_t num_layers() const noexcept { return num_layers_; }
  std::size_t per_layer_dim() const noexcept { return per_layer_dim_; }

  auto layer(std::size_t l) const {
    return flat_.segment(static_cast<Eigen::Index>(l * per_layer_dim_),
                         static_cast<Eigen::Index>(per_layer_dim_));
  }
  const Vector& flat() const noexcept { return flat_; }
  Vector& flat() noexcept { return flat_; }
  const Vector& stochastic() const noexcept { return stochastic_; }
  Vector& stochastic() noexcept { return stochastic_; }

  std::vector<Vector> layers() const;

  bool operator==(const LayerwiseCode& other) const;

private:
  std::size_t num_layers_ = 0;
  std::size_t per_layer_dim_ = 0;
  Vector flat_;
  Vector stochastic_;
};

/// Half-open layer interval [begin, end).
struct LayerRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
  bool empty() const noexcept { return size() == 0; }
  bool contains(std::size_t layer) const noexcept { return layer >= begin && layer < end; }
  std::vector<std::size_t> indices() const;
  bool operator==(const LayerRange&) const = default;
};

struct Stage {
  std::string name;
  LayerRange layers;
  bool operator==(const Stage&) const = default;
};

/// Ordered, disjoint partition of [0, L) into named stages.
class StageMap {
public:
  explicit StageMap(std::vector<Stage> stages);

  /// 14-layer default: layout [0,2), object [2,6), attribute [6,12), color [12,14).
  static StageMap stylegan14();
  /// 12-layer two-stage grouping: lower [0,6), upper [6,12).
  static StageMap biggan12();
  /// One stage named "all" covering [0, L).
  static StageMap single(std::size_t num_layers);
  /// Four stages (layout/object/attribute/color) split proportionally to the
  /// 14-layer default; used for planted generators with other depths.
  static StageMap proportional_four(std::size_t num_layers);

  const std::vector<Stage>& stages() const noexcept { return stages_; }
  std::size_t num_layers() const noexcept { return stages_.back().layers.end; }
  const Stage* find(std::string_view name) const noexcept;
  const Stage& stage_of(std::size_t layer) const;

  bool operator==(const StageMap&) const = default;

private:
  std::vector<Stage> stages_;
};

struct Boundary {
  Vector normal;
  double offset = 0.0;
  std::string concept_id;
  SpaceTag space = SpaceTag::LayerwiseFlat;
};

inline constexpr double kUnitNormTolerance = 1e-9;

/// Throws unless ||normal|| is within kUnitNormTolerance of 1.
void check_unit_norm(const Boundary& boundary);

enum class SemanticLevel { Layout, Object, Attribute, ColorScheme };

std::string_view to_string(SemanticLevel level) noexcept;
SemanticLevel level_from_string(std::string_view text);

struct SemanticConcept {
  std::string id;
  std::string name;
  SemanticLevel level = SemanticLevel::Attribute;
  std::string scorer_id;
  bool operator==(const SemanticConcept&) const = default;
};

class ConceptCatalog {
public:
  explicit ConceptCatalog(std::vector<SemanticConcept> concepts);

  const std::vector<SemanticConcept>& concepts() const noexcept { return concepts_; }
  std::size_t size() const noexcept { return concepts_.size(); }
  const SemanticConcept* find(std::string_view id) const noexcept;
  const SemanticConcept& at(std::string_view id) const;
  /// Catalog restricted to `ids`, in the order given.
  ConceptCatalog subset(std::span<const std::string> ids) const;

  bool operator==(const ConceptCatalog&) const = default;

private:
  std::vector<SemanticConcept> concepts_;
};

Boundary normalize_boundary(const Vector& raw_normal, double raw_offset,
                            std::string concept_id = {},
                            SpaceTag space = SpaceTag::LayerwiseFlat);

LayerwiseCode project_to_layerwise(const LatentCode& code, const StyleTransform& transform);

std::vector<std::size_t> all_layers(std::size_t num_layers);

/// Adds step * (layer segment of the normal) to every layer in `layers`;
/// other layers and the stochastic inputs are copied unchanged. Requires a
/// LayerwiseFlat boundary of matching length.
LayerwiseCode apply_shift(const LayerwiseCode& code, const Boundary& boundary, double step,
                          std::span<const std::size_t> layers);

/// z + step * n for Z/W-space boundaries.
LatentCode shift_latent(const LatentCode& code, const Boundary& boundary, double step);

}  // namespace hierprobe
