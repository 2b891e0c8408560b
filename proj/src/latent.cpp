#include "hierprobe/latent.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "hierprobe/error.hpp"

namespace hierprobe {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LayerOutOfRange: return "LayerOutOfRange";
    case ErrorCode::SpaceMismatch: return "SpaceMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::InsufficientDimension: return "InsufficientDimension";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MissingEstimate: return "MissingEstimate";
    case ErrorCode::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorCode::UnknownConcept: return "UnknownConcept";
    case ErrorCode::WorkerUnavailable: return "WorkerUnavailable";
    case ErrorCode::WorkerError: return "WorkerError";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

std::string_view to_string(SpaceTag tag) noexcept {
  switch (tag) {
    case SpaceTag::Z: return "Z";
    case SpaceTag::W: return "W";
    case SpaceTag::LayerwiseFlat: return "LayerwiseFlat";
  }
  return "?";
}

SpaceTag space_from_string(std::string_view text) {
  if (text == "Z") return SpaceTag::Z;
  if (text == "W") return SpaceTag::W;
  if (text == "LayerwiseFlat") return SpaceTag::LayerwiseFlat;
  throw Error(ErrorCode::InvalidArgument, "unknown space tag '" + std::string(text) + "'");
}

void LatentSpaceSpec::validate() const {
  if (dim < 1 || num_layers < 1 || per_layer_dim < 1) {
    throw Error(ErrorCode::InvalidArgument, "latent space dimensions must be positive");
  }
  if (space == SpaceTag::LayerwiseFlat) {
    throw Error(ErrorCode::InvalidArgument, "a latent space is Z or W, not LayerwiseFlat");
  }
}

// --- StyleTransform -------------------------------------------------------

StyleTransform::StyleTransform(const std::vector<Matrix>& weights,
                               const std::vector<Vector>& biases) {
  if (weights.empty() || weights.size() != biases.size()) {
    throw Error(ErrorCode::ShapeMismatch, "need one (weight, bias) pair per layer");
  }
  const auto rows = weights.front().rows();
  const auto cols = weights.front().cols();
  if (rows < 1 || cols < 1) throw Error(ErrorCode::ShapeMismatch, "empty style weight");
  num_layers_ = weights.size();
  per_layer_dim_ = static_cast<std::size_t>(rows);
  weight_.resize(rows * static_cast<Eigen::Index>(num_layers_), cols);
  bias_.resize(rows * static_cast<Eigen::Index>(num_layers_));
  for (std::size_t l = 0; l < num_layers_; ++l) {
    if (weights[l].rows() != rows || weights[l].cols() != cols || biases[l].size() != rows) {
      throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(l) + " has inconsistent shape");
    }
    const auto r0 = static_cast<Eigen::Index>(l) * rows;
    weight_.middleRows(r0, rows) = weights[l];
    bias_.segment(r0, rows) = biases[l];
  }
}

StyleTransform::StyleTransform(Matrix stacked_weight, Vector stacked_bias, std::size_t num_layers)
    : weight_(std::move(stacked_weight)), bias_(std::move(stacked_bias)), num_layers_(num_layers) {
  if (num_layers_ == 0 || weight_.rows() == 0 || weight_.cols() == 0 ||
      weight_.rows() % static_cast<Eigen::Index>(num_layers_) != 0 ||
      bias_.size() != weight_.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "stacked style transform has inconsistent shape");
  }
  per_layer_dim_ = static_cast<std::size_t>(weight_.rows()) / num_layers_;
}

StyleTransform StyleTransform::broadcast(std::size_t num_layers, std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  std::vector<Matrix> w(num_layers, Matrix::Identity(d, d));
  std::vector<Vector> b(num_layers, Vector::Zero(d));
  return StyleTransform(w, b);
}

Matrix StyleTransform::weight(std::size_t layer) const {
  if (layer >= num_layers_) throw Error(ErrorCode::LayerOutOfRange, std::to_string(layer));
  const auto n = static_cast<Eigen::Index>(per_layer_dim_);
  return weight_.middleRows(static_cast<Eigen::Index>(layer) * n, n);
}

Vector StyleTransform::bias(std::size_t layer) const {
  if (layer >= num_layers_) throw Error(ErrorCode::LayerOutOfRange, std::to_string(layer));
  const auto n = static_cast<Eigen::Index>(per_layer_dim_);
  return bias_.segment(static_cast<Eigen::Index>(layer) * n, n);
}

bool StyleTransform::operator==(const StyleTransform& other) const {
  return num_layers_ == other.num_layers_ && weight_.rows() == other.weight_.rows() &&
         weight_.cols() == other.weight_.cols() && weight_ == other.weight_ &&
         bias_ == other.bias_;
}

// --- LayerwiseCode --------------------------------------------------------

LayerwiseCode::LayerwiseCode(std::size_t num_layers, std::size_t per_layer_dim)
    : num_layers_(num_layers),
      per_layer_dim_(per_layer_dim),
      flat_(Vector::Zero(static_cast<Eigen::Index>(num_layers * per_layer_dim))) {}

LayerwiseCode::LayerwiseCode(std::size_t num_layers, std::size_t per_layer_dim, Vector flat,
                             Vector stochastic)
    : num_layers_(num_layers),
      per_layer_dim_(per_layer_dim),
      flat_(std::move(flat)),
      stochastic_(std::move(stochastic)) {
  if (static_cast<std::size_t>(flat_.size()) != num_layers * per_layer_dim) {
    throw Error(ErrorCode::ShapeMismatch, "flat code length does not equal L * per_layer_dim");
  }
  if (!flat_.allFinite() || !stochastic_.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "layer-wise code has non-finite entries");
  }
}

LayerwiseCode LayerwiseCode::from_layers(const std::vector<Vector>& layers) {
  if (layers.empty()) throw Error(ErrorCode::ShapeMismatch, "no layers");
  const auto d = layers.front().size();
  Vector flat(d * static_cast<Eigen::Index>(layers.size()));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].size() != d) throw Error(ErrorCode::ShapeMismatch, "ragged layer-wise code");
    flat.segment(static_cast<Eigen::Index>(l) * d, d) = layers[l];
  }
  return LayerwiseCode(layers.size(), static_cast<std::size_t>(d), std::move(flat));
}

std::vector<Vector> LayerwiseCode::layers() const {
  std::vector<Vector> out;
  out.reserve(num_layers_);
  for (std::size_t l = 0; l < num_layers_; ++l) out.emplace_back(layer(l));
  return out;
}

bool LayerwiseCode::operator==(const LayerwiseCode& other) const {
  return num_layers_ == other.num_layers_ && per_layer_dim_ == other.per_layer_dim_ &&
         flat_.size() == other.flat_.size() && flat_ == other.flat_ &&
         stochastic_.size() == other.stochastic_.size() && stochastic_ == other.stochastic_;
}

// --- Stages ---------------------------------------------------------------

std::vector<std::size_t> LayerRange::indices() const {
  std::vector<std::size_t> out;
  for (std::size_t l = begin; l < end; ++l) out.push_back(l);
  return out;
}

StageMap::StageMap(std::vector<Stage> stages) : stages_(std::move(stages)) {
  if (stages_.empty()) throw Error(ErrorCode::InvalidArgument, "stage map has no stages");
  std::size_t expected = 0;
  std::set<std::string> names;
  for (const auto& s : stages_) {
    if (s.layers.begin >= s.layers.end) {
      throw Error(ErrorCode::InvalidArgument, "stage '" + s.name + "' has an empty range");
    }
    if (s.layers.begin != expected) {
      throw Error(ErrorCode::InvalidArgument,
                  "stages must be sorted, disjoint and contiguous from layer 0");
    }
    if (!names.insert(s.name).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate stage name '" + s.name + "'");
    }
    expected = s.layers.end;
  }
}

StageMap StageMap::stylegan14() {
  return StageMap({{"layout", {0, 2}}, {"object", {2, 6}}, {"attribute", {6, 12}}, {"color", {12, 14}}});
}

StageMap StageMap::biggan12() { return StageMap({{"lower", {0, 6}}, {"upper", {6, 12}}}); }

StageMap StageMap::single(std::size_t num_layers) { return StageMap({{"all", {0, num_layers}}}); }

StageMap StageMap::proportional_four(std::size_t num_layers) {
  if (num_layers == 14) return stylegan14();
  if (num_layers < 4) {
    throw Error(ErrorCode::InvalidArgument, "a four-stage map needs at least 4 layers");
  }
  // Cut points at 2/14, 6/14 and 12/14 of the depth, each stage non-empty.
  const auto cut = [&](std::size_t num, std::size_t lo, std::size_t hi) {
    const auto c = static_cast<std::size_t>(std::lround(static_cast<double>(num_layers * num) / 14.0));
    return std::clamp(c, lo, hi);
  };
  const std::size_t a = cut(2, 1, num_layers - 3);
  const std::size_t b = cut(6, a + 1, num_layers - 2);
  const std::size_t c = cut(12, b + 1, num_layers - 1);
  return StageMap({{"layout", {0, a}}, {"object", {a, b}}, {"attribute", {b, c}}, {"color", {c, num_layers}}});
}

const Stage* StageMap::find(std::string_view name) const noexcept {
  for (const auto& s : stages_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

const Stage& StageMap::stage_of(std::size_t layer) const {
  for (const auto& s : stages_) {
    if (s.layers.contains(layer)) return s;
  }
  throw Error(ErrorCode::LayerOutOfRange, "layer " + std::to_string(layer) + " is not in the stage map");
}

// --- Boundaries and concepts ----------------------------------------------

void check_unit_norm(const Boundary& boundary) {
  const double n = boundary.normal.norm();
  if (!(std::abs(n - 1.0) <= kUnitNormTolerance)) {
    throw Error(ErrorCode::InvalidArgument,
                "boundary '" + boundary.concept_id + "' normal is not unit-norm");
  }
}

std::string_view to_string(SemanticLevel level) noexcept {
  switch (level) {
    case SemanticLevel::Layout: return "layout";
    case SemanticLevel::Object: return "object";
    case SemanticLevel::Attribute: return "attribute";
    case SemanticLevel::ColorScheme: return "color_scheme";
  }
  return "?";
}

SemanticLevel level_from_string(std::string_view text) {
  if (text == "layout") return SemanticLevel::Layout;
  if (text == "object") return SemanticLevel::Object;
  if (text == "attribute") return SemanticLevel::Attribute;
  if (text == "color_scheme") return SemanticLevel::ColorScheme;
  throw Error(ErrorCode::InvalidArgument, "unknown semantic level '" + std::string(text) + "'");
}

ConceptCatalog::ConceptCatalog(std::vector<SemanticConcept> concepts) : concepts_(std::move(concepts)) {
  if (concepts_.empty()) throw Error(ErrorCode::InvalidArgument, "concept catalog is empty");
  std::set<std::string> ids;
  for (const auto& c : concepts_) {
    if (c.id.empty()) throw Error(ErrorCode::InvalidArgument, "concept with empty id");
    if (!ids.insert(c.id).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate concept id '" + c.id + "'");
    }
  }
}

const SemanticConcept* ConceptCatalog::find(std::string_view id) const noexcept {
  for (const auto& c : concepts_) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

const SemanticConcept& ConceptCatalog::at(std::string_view id) const {
  if (const auto* c = find(id)) return *c;
  throw Error(ErrorCode::UnknownConcept, std::string(id));
}

ConceptCatalog ConceptCatalog::subset(std::span<const std::string> ids) const {
  std::vector<SemanticConcept> out;
  for (const auto& id : ids) out.push_back(at(id));
  return ConceptCatalog(std::move(out));
}

// --- Operations -----------------------------------------------------------

Boundary normalize_boundary(const Vector& raw_normal, double raw_offset, std::string concept_id,
                            SpaceTag space) {
  const double norm = raw_normal.norm();
  if (!(norm >= 1e-12) || !std::isfinite(norm)) {
    throw Error(ErrorCode::ZeroVector, "cannot normalize a zero normal");
  }
  Boundary b;
  b.normal = raw_normal / norm;
  b.offset = raw_offset / norm;
  b.concept_id = std::move(concept_id);
  b.space = space;
  return b;
}

LayerwiseCode project_to_layerwise(const LatentCode& code, const StyleTransform& transform) {
  if (code.space != SpaceTag::W) {
    throw Error(ErrorCode::SpaceMismatch, "layer-wise projection takes a W-space code");
  }
  if (static_cast<std::size_t>(code.values.size()) != transform.input_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "code length " + std::to_string(code.values.size()) +
                                              " does not match transform input " +
                                              std::to_string(transform.input_dim()));
  }
  Vector flat = transform.stacked_weight() * code.values + transform.stacked_bias();
  return LayerwiseCode(transform.num_layers(), transform.per_layer_dim(), std::move(flat));
}

std::vector<std::size_t> all_layers(std::size_t num_layers) {
  return LayerRange{0, num_layers}.indices();
}

LayerwiseCode apply_shift(const LayerwiseCode& code, const Boundary& boundary, double step,
                          std::span<const std::size_t> layers) {
  if (boundary.space != SpaceTag::LayerwiseFlat) {
    throw Error(ErrorCode::SpaceMismatch, "layer-wise shifts need a LayerwiseFlat boundary");
  }
  if (boundary.normal.size() != code.flat().size()) {
    throw Error(ErrorCode::ShapeMismatch, "boundary normal length does not match the code");
  }
  std::vector<bool> selected(code.num_layers(), false);
  for (const auto l : layers) {
    if (l >= code.num_layers()) {
      throw Error(ErrorCode::LayerOutOfRange, "layer " + std::to_string(l) + " of " +
                                                  std::to_string(code.num_layers()));
    }
    selected[l] = true;
  }
  LayerwiseCode out = code;
  const auto d = static_cast<Eigen::Index>(code.per_layer_dim());
  for (std::size_t l = 0; l < code.num_layers(); ++l) {
    if (!selected[l]) continue;
    const auto start = static_cast<Eigen::Index>(l) * d;
    out.flat().segment(start, d) += step * boundary.normal.segment(start, d);
  }
  return out;
}

LatentCode shift_latent(const LatentCode& code, const Boundary& boundary, double step) {
  if (boundary.space != code.space) {
    throw Error(ErrorCode::SpaceMismatch, "boundary lives in " + std::string(to_string(boundary.space)) +
                                              ", code in " + std::string(to_string(code.space)));
  }
  if (boundary.normal.size() != code.values.size()) {
    throw Error(ErrorCode::ShapeMismatch, "boundary normal length does not match the code");
  }
  return LatentCode{code.values + step * boundary.normal, code.space};
}

}  // namespace hierprobe
