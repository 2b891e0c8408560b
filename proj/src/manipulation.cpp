#include "hierprobe/manipulation.hpp"

#include <algorithm>
#include <numeric>

#include "hierprobe/error.hpp"
#include "hierprobe/random.hpp"

namespace hierprobe {

namespace {

std::vector<std::size_t> edit_layers(const Edit& e, std::size_t num_layers) {
  return e.layers ? *e.layers : all_layers(num_layers);
}

bool edit_less(const Edit& a, const Edit& b) {
  if (a.boundary.concept_id != b.boundary.concept_id) return a.boundary.concept_id < b.boundary.concept_id;
  if (a.step != b.step) return a.step < b.step;
  const auto& na = a.boundary.normal;
  const auto& nb = b.boundary.normal;
  if (na.size() != nb.size()) return na.size() < nb.size();
  for (Eigen::Index i = 0; i < na.size(); ++i) {
    if (na[i] != nb[i]) return na[i] < nb[i];
  }
  return a.layers < b.layers;
}

std::vector<const Edit*> canonical_order(std::span<const Edit> edits) {
  if (edits.empty()) throw Error(ErrorCode::InvalidArgument, "a manipulation needs at least one edit");
  std::vector<const Edit*> order;
  for (const auto& e : edits) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(), [](const Edit* a, const Edit* b) { return edit_less(*a, *b); });
  return order;
}

}  // namespace

LayerwiseCode manipulate_independent(const LayerwiseCode& code, const Boundary& boundary, double step,
                                     std::span<const std::size_t> layers) {
  return apply_shift(code, boundary, step, layers);
}

LatentCode manipulate_independent(const LatentCode& code, const Boundary& boundary, double step) {
  return shift_latent(code, boundary, step);
}

LayerwiseCode manipulate_joint(const LayerwiseCode& code, std::span<const Edit> edits) {
  const auto order = canonical_order(edits);
  const auto d = static_cast<Eigen::Index>(code.per_layer_dim());
  Vector delta = Vector::Zero(code.flat().size());
  for (const auto* e : order) {
    if (e->boundary.space != SpaceTag::LayerwiseFlat) {
      throw Error(ErrorCode::SpaceMismatch, "edit boundary for '" + e->boundary.concept_id +
                                                "' is not a layer-wise boundary");
    }
    if (e->boundary.normal.size() != code.flat().size()) {
      throw Error(ErrorCode::ShapeMismatch, "edit boundary length does not match the code");
    }
    std::vector<bool> selected(code.num_layers(), false);
    for (const auto l : edit_layers(*e, code.num_layers())) {
      if (l >= code.num_layers()) throw Error(ErrorCode::LayerOutOfRange, "layer " + std::to_string(l));
      selected[l] = true;
    }
    for (std::size_t l = 0; l < selected.size(); ++l) {
      if (!selected[l]) continue;
      const auto s = static_cast<Eigen::Index>(l) * d;
      delta.segment(s, d) += e->step * e->boundary.normal.segment(s, d);
    }
  }
  LayerwiseCode out = code;
  out.flat() += delta;
  return out;
}

LatentCode manipulate_joint(const LatentCode& code, std::span<const Edit> edits) {
  const auto order = canonical_order(edits);
  Vector delta = Vector::Zero(code.values.size());
  for (const auto* e : order) {
    if (e->boundary.space != code.space) {
      throw Error(ErrorCode::SpaceMismatch, "edit boundary for '" + e->boundary.concept_id +
                                                "' lives in a different space than the code");
    }
    if (e->boundary.normal.size() != code.values.size()) {
      throw Error(ErrorCode::ShapeMismatch, "edit boundary length does not match the code");
    }
    delta += e->step * e->boundary.normal;
  }
  LatentCode out = code;
  out.values += delta;
  return out;
}

LayerwiseCode manipulate_jitter(const LayerwiseCode& code, const Boundary& boundary, double step,
                                std::span<const std::size_t> layers, double jitter_scale, std::uint64_t seed) {
  if (!(jitter_scale >= 0.0)) throw Error(ErrorCode::InvalidArgument, "jitter scale must be non-negative");
  LayerwiseCode out = apply_shift(code, boundary, step, layers);
  if (jitter_scale == 0.0) return out;
  std::vector<bool> selected(code.num_layers(), false);
  for (const auto l : layers) selected[l] = true;
  const auto d = static_cast<Eigen::Index>(code.per_layer_dim());
  Rng rng(seed);
  for (std::size_t l = 0; l < selected.size(); ++l) {
    if (!selected[l]) continue;
    const auto s = static_cast<Eigen::Index>(l) * d;
    for (Eigen::Index i = 0; i < d; ++i) out.flat()[s + i] += jitter_scale * rng.normal();
  }
  return out;
}

LatentCode manipulate_jitter(const LatentCode& code, const Boundary& boundary, double step, double jitter_scale,
                             std::uint64_t seed) {
  if (!(jitter_scale >= 0.0)) throw Error(ErrorCode::InvalidArgument, "jitter scale must be non-negative");
  LatentCode out = shift_latent(code, boundary, step);
  if (jitter_scale == 0.0) return out;
  Rng rng(seed);
  for (Eigen::Index i = 0; i < out.values.size(); ++i) out.values[i] += jitter_scale * rng.normal();
  return out;
}

LayerwiseCode manipulate(const ManipulationRequest& request) {
  LayerwiseCode out = manipulate_joint(request.base_code, request.edits);
  if (!(request.jitter_scale >= 0.0)) throw Error(ErrorCode::InvalidArgument, "jitter scale must be non-negative");
  if (request.jitter_scale == 0.0) return out;
  std::vector<bool> selected(out.num_layers(), false);
  for (const auto& e : request.edits) {
    for (const auto l : edit_layers(e, out.num_layers())) selected[l] = true;
  }
  const auto d = static_cast<Eigen::Index>(out.per_layer_dim());
  Rng rng(request.seed);
  for (std::size_t l = 0; l < selected.size(); ++l) {
    if (!selected[l]) continue;
    const auto s = static_cast<Eigen::Index>(l) * d;
    for (Eigen::Index i = 0; i < d; ++i) out.flat()[s + i] += request.jitter_scale * rng.normal();
  }
  return out;
}

std::uint64_t TransitionMatrix::total() const noexcept {
  std::uint64_t sum = 0;
  for (const auto& [pair, n] : counts) sum += n;
  return sum;
}

std::uint64_t TransitionMatrix::off_diagonal() const noexcept {
  std::uint64_t sum = 0;
  for (const auto& [pair, n] : counts) {
    if (pair.first != pair.second) sum += n;
  }
  return sum;
}

TransitionMatrix transition_matrix(const SegmentationMask& before, const SegmentationMask& after) {
  if (before.width() != after.width() || before.height() != after.height()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(before.width()) + "x" + std::to_string(before.height()) + " vs " +
                    std::to_string(after.width()) + "x" + std::to_string(after.height()));
  }
  TransitionMatrix m;
  const auto& a = before.labels();
  const auto& b = after.labels();
  for (std::size_t i = 0; i < a.size(); ++i) ++m.counts[{a[i], b[i]}];
  m.label_names = before.label_names();
  for (const auto& [label, name] : after.label_names()) m.label_names.emplace(label, name);
  return m;
}

}  // namespace hierprobe
