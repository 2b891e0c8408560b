#include "hierprobe/planted.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hierprobe/error.hpp"
#include "hierprobe/random.hpp"

namespace hierprobe {

namespace {

double sigmoid(double a) noexcept {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

constexpr SemanticLevel kLevels[] = {SemanticLevel::Layout, SemanticLevel::Object,
                                     SemanticLevel::Attribute, SemanticLevel::ColorScheme};

std::string level_prefix(SemanticLevel level) {
  switch (level) {
    case SemanticLevel::Layout: return "layout";
    case SemanticLevel::Object: return "object";
    case SemanticLevel::Attribute: return "attribute";
    case SemanticLevel::ColorScheme: return "color";
  }
  return "factor";
}

Vector gaussian_vector(Rng& rng, Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

// Orthogonalizes `v` against `basis` (two passes of modified Gram-Schmidt)
// and normalizes it. Returns false if nothing is left.
bool orthonormalize_against(Vector& v, const std::vector<Vector>& basis) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& b : basis) v -= b.dot(v) * b;
  }
  const double n = v.norm();
  if (n < 1e-10) return false;
  v /= n;
  return true;
}

Matrix random_orthogonal(Rng& rng, Eigen::Index n) {
  Matrix g(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) g(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

class PlantedBackend final : public GeneratorBackend {
public:
  explicit PlantedBackend(std::shared_ptr<const PlantedGeneratorSpec> spec)
      : spec_(std::move(spec)), catalog_(planted_catalog(*spec_)) {}

  GeneratorKind kind() const override { return GeneratorKind::Planted; }
  const LatentSpaceSpec& space() const override { return spec_->space; }
  const StyleTransform& transform() const override { return spec_->transform; }
  const ConceptCatalog& catalog() const override { return catalog_; }

  std::vector<ScoreVector> score(std::span<const LayerwiseCode> codes,
                                 const ConceptCatalog& concepts) const override {
    std::vector<const PlantedFactor*> wanted;
    for (const auto& c : concepts.concepts()) wanted.push_back(&spec_->factor(c.id));
    std::vector<ScoreVector> out(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) {
      for (const auto* f : wanted) out[i].emplace(f->concept_id, spec_->score(*f, codes[i]));
    }
    return out;
  }

  std::vector<ImageBuffer> generate(std::span<const LayerwiseCode> codes) const override {
    std::vector<ImageBuffer> out;
    out.reserve(codes.size());
    for (const auto& code : codes) out.push_back(render_planted(*spec_, code));
    return out;
  }

  void attach_stochastic(std::span<LayerwiseCode> codes, std::uint64_t seed) const override {
    const auto& bias = spec_->transform.stacked_bias();
    const auto nf = static_cast<Eigen::Index>(spec_->factors.size());
    for (std::size_t i = 0; i < codes.size(); ++i) {
      Rng rng(derive_seed(seed, i));
      Vector xi(nf);
      for (Eigen::Index f = 0; f < nf; ++f) {
        const auto& factor = spec_->factors[static_cast<std::size_t>(f)];
        const double eps = rng.normal();
        if (factor.kind == ScorerKind::Frozen) {
          const double rho = factor.shadow_correlation;
          const double tracked = factor.shadow.dot(codes[i].flat() - bias);
          xi[f] = rho * tracked + std::sqrt(1.0 - rho * rho) * eps;
        } else {
          xi[f] = eps;
        }
      }
      codes[i].stochastic() = std::move(xi);
    }
  }

private:
  std::shared_ptr<const PlantedGeneratorSpec> spec_;
  ConceptCatalog catalog_;
};

}  // namespace

std::string_view to_string(ScorerKind kind) noexcept {
  switch (kind) {
    case ScorerKind::Sigmoid: return "sigmoid";
    case ScorerKind::Frozen: return "frozen";
    case ScorerKind::Constant: return "constant";
  }
  return "?";
}

ScorerKind scorer_kind_from_string(std::string_view text) {
  if (text == "sigmoid") return ScorerKind::Sigmoid;
  if (text == "frozen") return ScorerKind::Frozen;
  if (text == "constant") return ScorerKind::Constant;
  throw Error(ErrorCode::InvalidArgument, "unknown scorer kind '" + std::string(text) + "'");
}

// --- PlantedGeneratorSpec -------------------------------------------------

std::size_t PlantedGeneratorSpec::factor_index(std::string_view concept_id) const {
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (factors[i].concept_id == concept_id) return i;
  }
  throw Error(ErrorCode::UnknownConcept, std::string(concept_id));
}

const PlantedFactor& PlantedGeneratorSpec::factor(std::string_view concept_id) const {
  return factors[factor_index(concept_id)];
}

Vector PlantedGeneratorSpec::flat_direction(const PlantedFactor& f) const {
  Vector flat = Vector::Zero(static_cast<Eigen::Index>(space.flat_dim()));
  if (f.kind == ScorerKind::Sigmoid) {
    const auto start = static_cast<Eigen::Index>(f.layers.begin * space.per_layer_dim);
    flat.segment(start, f.direction.size()) = f.direction;
  }
  return flat;
}

double PlantedGeneratorSpec::activation(const PlantedFactor& f, const LayerwiseCode& code) const {
  const auto idx = static_cast<Eigen::Index>(&f - factors.data());
  const auto& stochastic = code.stochastic();
  const double xi = stochastic.size() == static_cast<Eigen::Index>(factors.size()) ? stochastic[idx] : 0.0;
  switch (f.kind) {
    case ScorerKind::Sigmoid: {
      const auto start = static_cast<Eigen::Index>(f.layers.begin * space.per_layer_dim);
      const double t = f.direction.dot(code.flat().segment(start, f.direction.size()));
      return f.sharpness * (t + f.nuisance * xi);
    }
    case ScorerKind::Frozen: return f.sharpness * xi;
    case ScorerKind::Constant: return 0.0;
  }
  return 0.0;
}

double PlantedGeneratorSpec::score(const PlantedFactor& f, const LayerwiseCode& code) const {
  if (f.kind == ScorerKind::Constant) return f.constant_value;
  return sigmoid(activation(f, code));
}

void PlantedGeneratorSpec::validate() const {
  space.validate();
  if (transform.num_layers() != space.num_layers || transform.per_layer_dim() != space.per_layer_dim ||
      transform.input_dim() != space.dim) {
    throw Error(ErrorCode::ShapeMismatch, "planted transform does not match the latent space");
  }
  if (stage_map.num_layers() != space.num_layers) {
    throw Error(ErrorCode::ShapeMismatch, "stage map does not cover the generator's layers");
  }
  if (factors.empty()) throw Error(ErrorCode::InvalidArgument, "planted generator has no factors");
  planted_catalog(*this);  // id uniqueness
  const auto d = space.per_layer_dim;
  for (const auto& f : factors) {
    if (f.kind == ScorerKind::Sigmoid) {
      if (f.layers.empty() || f.layers.end > space.num_layers) {
        throw Error(ErrorCode::LayerOutOfRange, "factor '" + f.concept_id + "' has a bad layer range");
      }
      if (static_cast<std::size_t>(f.direction.size()) != f.layers.size() * d ||
          std::abs(f.direction.norm() - 1.0) > 1e-9) {
        throw Error(ErrorCode::InvalidArgument,
                    "factor '" + f.concept_id + "' direction must be unit-norm over its layers");
      }
      if (!(f.sharpness > 0.0)) throw Error(ErrorCode::InvalidArgument, "sharpness must be positive");
    } else {
      if (!f.layers.empty()) {
        throw Error(ErrorCode::InvalidArgument, "frozen factor '" + f.concept_id + "' must not be wired");
      }
    }
    if (f.kind == ScorerKind::Frozen) {
      if (static_cast<std::size_t>(f.shadow.size()) != space.flat_dim() ||
          std::abs(f.shadow.norm() - 1.0) > 1e-9 || std::abs(f.shadow_correlation) > 1.0) {
        throw Error(ErrorCode::InvalidArgument, "frozen factor '" + f.concept_id + "' has a bad shadow");
      }
    }
    if (f.kind == ScorerKind::Constant && (f.constant_value < 0.0 || f.constant_value > 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "constant score must be in [0, 1]");
    }
  }
  for (const auto* src : {&render.hue_source, &render.layout_source}) {
    if (!src->empty()) factor(*src);
  }
  if (render.width == 0 || render.height == 0) {
    throw Error(ErrorCode::InvalidArgument, "render size must be positive");
  }
}

// --- Construction ---------------------------------------------------------

PlantedGenerator make_planted_generator(const PlantedOptions& o) {
  if (o.factors_per_level < 1 || o.num_layers < 1 || o.per_layer_dim < 1) {
    throw Error(ErrorCode::InvalidArgument, "planted generator dimensions must be positive");
  }
  const std::size_t flat_dim = o.num_layers * o.per_layer_dim;
  const std::size_t dim = o.dim == 0 ? flat_dim : o.dim;
  if (dim < flat_dim) {
    throw Error(ErrorCode::InsufficientDimension,
                "W dimension " + std::to_string(dim) + " is below L * per_layer_dim = " + std::to_string(flat_dim));
  }
  StageMap stages = o.stage_map ? *o.stage_map : StageMap::proportional_four(o.num_layers);
  if (stages.num_layers() != o.num_layers) {
    throw Error(ErrorCode::ShapeMismatch, "stage map does not cover the generator's layers");
  }
  if (stages.stages().size() != 4) {
    throw Error(ErrorCode::InvalidArgument, "planted generators need one stage per semantic level (4)");
  }

  Rng rng(derive_seed(o.seed, "planted"));
  const auto fd = static_cast<Eigen::Index>(flat_dim);

  // Style transform: stacked rows of a random orthogonal matrix, small bias.
  const Matrix q = random_orthogonal(rng, static_cast<Eigen::Index>(dim));
  Matrix weight = q.topRows(fd);
  Vector bias(fd);
  for (Eigen::Index i = 0; i < fd; ++i) bias[i] = o.bias_scale * rng.normal();

  std::vector<PlantedFactor> factors;
  std::vector<Vector> flat_basis;  // every planted direction, embedded flat
  std::size_t sigmoid_index = 0;
  for (std::size_t li = 0; li < 4; ++li) {
    const SemanticLevel level = kLevels[li];
    const Stage& stage = stages.stages()[li];
    const auto sub_dim = static_cast<Eigen::Index>(stage.layers.size() * o.per_layer_dim);
    if (o.factors_per_level > static_cast<std::size_t>(sub_dim)) {
      throw Error(ErrorCode::InsufficientDimension,
                  std::to_string(o.factors_per_level) + " factors do not fit in the " +
                      std::to_string(sub_dim) + "-dimensional '" + stage.name + "' stage");
    }
    std::vector<Vector> basis;
    while (basis.size() < o.factors_per_level) {
      Vector v = gaussian_vector(rng, sub_dim);
      if (orthonormalize_against(v, basis)) basis.push_back(std::move(v));
    }
    if (o.entanglement && o.entanglement->level == level) {
      const auto& e = *o.entanglement;
      if (e.first == e.second || e.first >= basis.size() || e.second >= basis.size() ||
          std::abs(e.cosine) > 1.0) {
        throw Error(ErrorCode::InvalidArgument, "bad entanglement request");
      }
      basis[e.second] = e.cosine * basis[e.first] + std::sqrt(1.0 - e.cosine * e.cosine) * basis[e.second];
      basis[e.second].normalize();
    }
    for (std::size_t k = 0; k < basis.size(); ++k) {
      PlantedFactor f;
      f.concept_id = level_prefix(level) + "_" + std::to_string(k);
      f.name = std::string(to_string(level)) + " factor " + std::to_string(k);
      f.level = level;
      f.kind = ScorerKind::Sigmoid;
      f.direction = basis[k];
      f.layers = stage.layers;
      f.sharpness = o.sharpness;
      f.nuisance = sigmoid_index < o.nuisance.size() ? o.nuisance[sigmoid_index] : 0.0;
      ++sigmoid_index;
      Vector flat = Vector::Zero(fd);
      flat.segment(static_cast<Eigen::Index>(stage.layers.begin * o.per_layer_dim), sub_dim) = basis[k];
      flat_basis.push_back(std::move(flat));
      factors.push_back(std::move(f));
    }
  }

  if (flat_basis.size() + o.frozen_count > flat_dim) {
    throw Error(ErrorCode::InsufficientDimension, "too many frozen factors for the code dimension");
  }
  if (std::abs(o.frozen_correlation) > 1.0) {
    throw Error(ErrorCode::InvalidArgument, "frozen correlation must be in [-1, 1]");
  }
  for (std::size_t k = 0; k < o.frozen_count; ++k) {
    Vector u = gaussian_vector(rng, fd);
    while (!orthonormalize_against(u, flat_basis)) u = gaussian_vector(rng, fd);
    flat_basis.push_back(u);
    PlantedFactor f;
    f.concept_id = "frozen_" + std::to_string(k);
    f.name = "frozen attribute " + std::to_string(k);
    f.level = SemanticLevel::Attribute;
    f.kind = ScorerKind::Frozen;
    f.sharpness = o.sharpness;
    f.shadow = std::move(u);
    f.shadow_correlation = o.frozen_correlation;
    factors.push_back(std::move(f));
  }
  for (std::size_t k = 0; k < o.constant_count; ++k) {
    PlantedFactor f;
    f.concept_id = "constant_" + std::to_string(k);
    f.name = "constant attribute " + std::to_string(k);
    f.level = SemanticLevel::Attribute;
    f.kind = ScorerKind::Constant;
    f.constant_value = o.constant_value;
    factors.push_back(std::move(f));
  }

  PlantedGeneratorSpec spec{
      .space = LatentSpaceSpec{dim, SpaceTag::W, o.num_layers, o.per_layer_dim},
      .transform = StyleTransform(std::move(weight), std::move(bias), o.num_layers),
      .stage_map = std::move(stages),
      .factors = std::move(factors),
      .render = RenderConfig{o.render_width, o.render_height, "color_0", "layout_0"},
  };
  return make_planted_generator(std::move(spec));
}

PlantedGenerator make_planted_generator(PlantedGeneratorSpec spec) {
  spec.validate();
  auto shared = std::make_shared<const PlantedGeneratorSpec>(std::move(spec));
  GeneratorHandle handle(std::make_shared<PlantedBackend>(shared));
  ConceptCatalog catalog = handle.catalog();
  return PlantedGenerator{std::move(shared), std::move(handle), std::move(catalog)};
}

ConceptCatalog planted_catalog(const PlantedGeneratorSpec& spec) {
  std::vector<SemanticConcept> concepts;
  concepts.reserve(spec.factors.size());
  for (const auto& f : spec.factors) concepts.push_back({f.concept_id, f.name, f.level, f.concept_id});
  return ConceptCatalog(std::move(concepts));
}

std::map<std::string, PlantedTruth> planted_ground_truth(const PlantedGeneratorSpec& spec) {
  std::map<std::string, PlantedTruth> out;
  for (const auto& f : spec.factors) {
    PlantedTruth t;
    t.frozen = f.frozen();
    if (!t.frozen) t.stage = spec.stage_map.stage_of(f.layers.begin).name;
    out.emplace(f.concept_id, std::move(t));
  }
  return out;
}

// --- Oracles --------------------------------------------------------------

double oracle_rescore(const PlantedGeneratorSpec& spec, std::string_view concept_id, double cosine,
                      double step, std::size_t n_mc, std::uint64_t seed) {
  const auto& f = spec.factor(concept_id);
  // Frozen and constant scores do not depend on the layer-wise code at all.
  if (f.kind != ScorerKind::Sigmoid || n_mc == 0) return 0.0;

  const auto d = static_cast<Eigen::Index>(spec.space.per_layer_dim);
  const auto start = static_cast<Eigen::Index>(f.layers.begin) * d;
  const auto len = f.direction.size();
  const double mean = f.direction.dot(spec.transform.stacked_bias().segment(start, len));
  const double sd = (spec.transform.stacked_weight().middleRows(start, len).transpose() * f.direction).norm();

  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double gain = step * cosine;
  double sum = 0.0;
  for (std::size_t k = 0; k < n_mc; ++k) {
    double t = mean + sd * normal(engine);
    if (f.nuisance != 0.0) t += f.nuisance * normal(engine);
    const double before = 1.0 / (1.0 + std::exp(-f.sharpness * t));
    const double after = 1.0 / (1.0 + std::exp(-f.sharpness * (t + gain)));
    sum += std::max(after - before, 0.0);
  }
  return sum / static_cast<double>(n_mc);
}

double planted_cosine(const PlantedGeneratorSpec& spec, std::string_view concept_id,
                      const Boundary& boundary) {
  const auto& f = spec.factor(concept_id);
  if (f.kind != ScorerKind::Sigmoid) throw Error(ErrorCode::InvalidArgument, "factor is not wired");
  if (static_cast<std::size_t>(boundary.normal.size()) != spec.space.flat_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "boundary is not in the flat layer-wise space");
  }
  const auto start = static_cast<Eigen::Index>(f.layers.begin * spec.space.per_layer_dim);
  const Vector part = boundary.normal.segment(start, f.direction.size());
  const double n = part.norm();
  return n > 0.0 ? f.direction.dot(part) / n : 0.0;
}

double planted_shift_component(const PlantedGeneratorSpec& spec, std::string_view concept_id,
                               const Boundary& boundary, std::span<const std::size_t> layers) {
  const auto& f = spec.factor(concept_id);
  if (f.kind != ScorerKind::Sigmoid) return 0.0;
  if (static_cast<std::size_t>(boundary.normal.size()) != spec.space.flat_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "boundary is not in the flat layer-wise space");
  }
  const Vector dir = spec.flat_direction(f);
  const auto d = static_cast<Eigen::Index>(spec.space.per_layer_dim);
  double sum = 0.0;
  std::vector<bool> seen(spec.space.num_layers, false);
  for (const auto l : layers) {
    if (l >= spec.space.num_layers) throw Error(ErrorCode::LayerOutOfRange, std::to_string(l));
    if (seen[l]) continue;
    seen[l] = true;
    const auto s = static_cast<Eigen::Index>(l) * d;
    sum += dir.segment(s, d).dot(boundary.normal.segment(s, d));
  }
  return sum;
}

// --- Rendering ------------------------------------------------------------

ImageBuffer render_planted(const PlantedGeneratorSpec& spec, const LayerwiseCode& code) {
  const auto& r = spec.render;
  double hue = 200.0;
  if (!r.hue_source.empty()) hue = 360.0 * spec.score(spec.factor(r.hue_source), code);
  ImageBuffer image(r.width, r.height, hsv_to_rgb({hue, 0.75, 0.85}));
  if (!r.layout_source.empty()) {
    const double a = spec.activation(spec.factor(r.layout_source), code);
    const double x = static_cast<double>(r.width) * (0.5 + 0.5 * std::tanh(a));
    const auto col = std::min(static_cast<std::size_t>(std::max(x, 0.0)), r.width - 1);
    for (std::size_t y = 0; y < r.height; ++y) image.at(col, y) = Rgb{96, 96, 96};
  }
  return image;
}

}  // namespace hierprobe
