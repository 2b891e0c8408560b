#include "hierprobe/rescoring.hpp"

#include <algorithm>
#include <cmath>

#include "hierprobe/error.hpp"
#include "hierprobe/sampling.hpp"

namespace hierprobe {

void RescoreConfig::validate() const {
  if (num_samples < 1) throw Error(ErrorCode::InvalidArgument, "rescore num_samples must be positive");
  if (!std::isfinite(step)) throw Error(ErrorCode::InvalidArgument, "rescore step must be finite");
}

LayerwiseCode shift_sample(const GeneratorHandle& handle, const LatentCode& latent, const LayerwiseCode& code,
                           const Boundary& boundary, double step, std::span<const std::size_t> layers) {
  if (boundary.space == SpaceTag::LayerwiseFlat) return apply_shift(code, boundary, step, layers);
  if (boundary.space != latent.space) {
    throw Error(ErrorCode::SpaceMismatch, "boundary lives in " + std::string(to_string(boundary.space)) +
                                              ", latent in " + std::string(to_string(latent.space)));
  }
  const LatentCode moved = shift_latent(latent, boundary, step);
  const LayerwiseCode projected = project_to_layerwise({moved.values, SpaceTag::W}, handle.transform());
  LayerwiseCode out = code;
  const auto d = static_cast<Eigen::Index>(code.per_layer_dim());
  for (const auto l : layers) {
    if (l >= code.num_layers()) throw Error(ErrorCode::LayerOutOfRange, "layer " + std::to_string(l));
    out.flat().segment(static_cast<Eigen::Index>(l) * d, d) = projected.layer(l);
  }
  return out;
}

namespace {

// Base samples and their scores for a set of concepts; shared by every
// shift evaluated against them.
struct Baseline {
  CodeSample sample;
  ConceptCatalog concepts;
  std::vector<ScoreVector> scores;
};

Baseline make_baseline(const GeneratorHandle& handle, std::span<const std::string> concept_ids,
                       const RescoreConfig& cfg) {
  cfg.validate();
  Baseline b{sample_codes(handle, cfg.num_samples, cfg.seed),
             handle.catalog().subset(concept_ids), {}};
  b.scores = score_batch(handle, b.sample.codes, b.concepts);
  return b;
}

// One Δs per baseline concept for a single shift.
std::vector<double> clipped_gains(const GeneratorHandle& handle, const Baseline& base, const Boundary& boundary,
                                  double step, std::span<const std::size_t> layers) {
  check_unit_norm(boundary);
  const auto& codes = base.sample.codes;
  std::vector<LayerwiseCode> shifted;
  shifted.reserve(codes.size());
  for (std::size_t k = 0; k < codes.size(); ++k) {
    shifted.push_back(shift_sample(handle, base.sample.latents[k], codes[k], boundary, step, layers));
  }
  const auto after = score_batch(handle, shifted, base.concepts);
  std::vector<double> out;
  out.reserve(base.concepts.size());
  for (const auto& c : base.concepts.concepts()) {
    double sum = 0.0;
    for (std::size_t k = 0; k < codes.size(); ++k) {
      sum += std::max(after[k].at(c.id) - base.scores[k].at(c.id), 0.0);
    }
    out.push_back(sum / static_cast<double>(codes.size()));
  }
  return out;
}

std::vector<std::size_t> shift_layers(const GeneratorHandle& handle, const RescoreConfig& cfg) {
  return cfg.layers ? *cfg.layers : all_layers(handle.space().num_layers);
}

}  // namespace

RescoreResult rescore(const GeneratorHandle& handle, const Boundary& boundary, const std::string& concept_id,
                      const RescoreConfig& cfg) {
  const std::string ids[] = {concept_id};
  const Baseline base = make_baseline(handle, ids, cfg);
  RescoreResult r;
  r.concept_id = concept_id;
  r.delta_s = clipped_gains(handle, base, boundary, cfg.step, shift_layers(handle, cfg))[0];
  return r;
}

std::vector<std::string> rank_concepts(std::span<const RescoreResult> results) {
  std::vector<const RescoreResult*> order;
  order.reserve(results.size());
  for (const auto& r : results) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const RescoreResult* a, const RescoreResult* b) {
    if (a->delta_s != b->delta_s) return a->delta_s > b->delta_s;
    return a->concept_id < b->concept_id;
  });
  std::vector<std::string> out;
  out.reserve(order.size());
  for (const auto* r : order) out.push_back(r->concept_id);
  return out;
}

RescoreResult localize_stages(const GeneratorHandle& handle, const Boundary& boundary, const std::string& concept_id,
                              const RescoreConfig& cfg, const StageMap& stage_map) {
  if (stage_map.num_layers() != handle.space().num_layers) {
    throw Error(ErrorCode::ShapeMismatch, "stage map covers " + std::to_string(stage_map.num_layers()) +
                                              " layers, generator has " +
                                              std::to_string(handle.space().num_layers));
  }
  const std::string ids[] = {concept_id};
  const Baseline base = make_baseline(handle, ids, cfg);
  RescoreResult r;
  r.concept_id = concept_id;
  r.delta_s = clipped_gains(handle, base, boundary, cfg.step, shift_layers(handle, cfg))[0];

  StageScores raw;
  double total = 0.0;
  for (const auto& stage : stage_map.stages()) {
    const double v = clipped_gains(handle, base, boundary, cfg.step, stage.layers.indices())[0];
    raw.emplace_back(stage.name, v);
    total += v;
  }
  StageScores normalized;
  for (const auto& [name, v] : raw) normalized.emplace_back(name, total > 0.0 ? v / total : 0.0);
  r.per_stage = std::move(raw);
  r.normalized_per_stage = std::move(normalized);
  return r;
}

std::optional<std::string> argmax_stage(const RescoreResult& result) {
  if (!result.per_stage) return std::nullopt;
  const std::pair<std::string, double>* best = nullptr;
  for (const auto& entry : *result.per_stage) {
    if (entry.second > 0.0 && (!best || entry.second > best->second)) best = &entry;
  }
  if (!best) return std::nullopt;
  return best->first;
}

Matrix disentanglement_matrix(const GeneratorHandle& handle, std::span<const Boundary> boundaries,
                              std::span<const std::string> concepts, const RescoreConfig& cfg) {
  if (boundaries.size() != concepts.size() || boundaries.empty()) {
    throw Error(ErrorCode::DimensionMismatch, "need one boundary per concept");
  }
  const auto layers = shift_layers(handle, cfg);
  const auto n = static_cast<Eigen::Index>(concepts.size());
  Matrix m(n, n);
  const Baseline base = make_baseline(handle, concepts, cfg);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto gains = clipped_gains(handle, base, boundaries[static_cast<std::size_t>(i)], cfg.step, layers);
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = gains[static_cast<std::size_t>(j)];
  }
  return m;
}

}  // namespace hierprobe
