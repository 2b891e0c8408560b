#include <doctest.h>

#include <algorithm>

#include "golden/golden_values.hpp"
#include "helpers.hpp"
#include "hierprobe/planted.hpp"
#include "hierprobe/random.hpp"
#include "hierprobe/rescoring.hpp"

using namespace hierprobe;
using hierprobe::test::code_of;

namespace {

// a + b * F for every concept of the wrapped generator.
class AffineScoreBackend final : public GeneratorBackend {
public:
  AffineScoreBackend(GeneratorHandle inner, double a, double b) : inner_(std::move(inner)), a_(a), b_(b) {}

  GeneratorKind kind() const override { return inner_.kind(); }
  const LatentSpaceSpec& space() const override { return inner_.space(); }
  const StyleTransform& transform() const override { return inner_.transform(); }
  const ConceptCatalog& catalog() const override { return inner_.catalog(); }
  std::vector<ScoreVector> score(std::span<const LayerwiseCode> codes, const ConceptCatalog& concepts) const override {
    auto s = inner_.backend().score(codes, concepts);
    for (auto& m : s) {
      for (auto& [id, v] : m) v = a_ + b_ * v;
    }
    return s;
  }
  std::vector<ImageBuffer> generate(std::span<const LayerwiseCode> codes) const override {
    return inner_.backend().generate(codes);
  }
  void attach_stochastic(std::span<LayerwiseCode> codes, std::uint64_t seed) const override {
    inner_.backend().attach_stochastic(codes, seed);
  }

private:
  GeneratorHandle inner_;
  double a_, b_;
};

PlantedGenerator unbiased(std::uint64_t seed = 1) {
  PlantedOptions o = test::small_options(seed);
  o.bias_scale = 0.0;
  o.frozen_count = 1;
  o.constant_count = 1;
  return make_planted_generator(o);
}

Boundary planted_boundary(const PlantedGenerator& gen, const std::string& id) {
  const auto& spec = *gen.spec;
  return normalize_boundary(spec.flat_direction(spec.factor(id)), 0.0, id);
}

RescoreResult result(std::string id, double ds) {
  RescoreResult r;
  r.concept_id = std::move(id);
  r.delta_s = ds;
  return r;
}

}  // namespace

TEST_CASE("rescore zero cases are exact") {
  const auto gen = unbiased();
  RescoreConfig cfg;
  cfg.num_samples = 200;
  cfg.seed = 4;
  const auto b = planted_boundary(gen, "object_0");
  CHECK(rescore(gen.handle, b, "constant_0", cfg).delta_s == 0.0);
  CHECK(rescore(gen.handle, b, "frozen_0", cfg).delta_s == 0.0);
  cfg.step = 0.0;
  CHECK(rescore(gen.handle, b, "object_0", cfg).delta_s == 0.0);
}

TEST_CASE("rescore along the planted direction matches the quadrature golden value") {
  const auto gen = unbiased(2);
  RescoreConfig cfg;
  cfg.seed = 77;
  CHECK(cfg.num_samples == 1000);
  CHECK(cfg.step == 2.0);
  for (const char* id : {"layout_0", "attribute_1"}) {
    const double ds = rescore(gen.handle, planted_boundary(gen, id), id, cfg).delta_s;
    CHECK(std::abs(ds / golden::kGainS1C1Step2 - 1.0) <= 0.02);
  }
}

TEST_CASE("rescore along an orthogonal direction is zero and below the planted direction") {
  const auto gen = unbiased(3);
  const auto& spec = *gen.spec;
  const auto& f = spec.factor("object_1");
  Rng rng(5);
  Vector v = spec.flat_direction(f);
  Vector ortho = Vector::Zero(v.size());
  for (auto& x : ortho) x = rng.normal();
  ortho -= ortho.dot(v) * v;
  RescoreConfig cfg;
  cfg.seed = 6;
  const double along = rescore(gen.handle, planted_boundary(gen, "object_1"), "object_1", cfg).delta_s;
  const double across = rescore(gen.handle, normalize_boundary(ortho, 0.0), "object_1", cfg).delta_s;
  CHECK(across < 1e-3);
  CHECK(along > across);
}

TEST_CASE("rescore is non-negative, deterministic, and scales with positive affine maps of the scorer") {
  const auto gen = unbiased(4);
  Rng rng(8);
  RescoreConfig cfg;
  cfg.num_samples = 300;
  for (int trial = 0; trial < 10; ++trial) {
    Vector n(static_cast<Eigen::Index>(gen.spec->space.flat_dim()));
    for (auto& x : n) x = rng.normal();
    const auto b = normalize_boundary(n, 0.0);
    cfg.seed = rng.next_u64();
    cfg.step = 4.0 * rng.normal();
    const auto& id = gen.catalog.concepts()[rng.below(gen.catalog.size())].id;
    const double ds = rescore(gen.handle, b, id, cfg).delta_s;
    CHECK(ds >= 0.0);
    CHECK(rescore(gen.handle, b, id, cfg).delta_s == ds);

    const double a = 0.1 * rng.uniform(), k = 0.2 + 0.6 * rng.uniform();
    const GeneratorHandle affine(std::make_shared<AffineScoreBackend>(gen.handle, a, k));
    CHECK(rescore(affine, b, id, cfg).delta_s == doctest::Approx(k * ds).epsilon(1e-12));
  }
}

TEST_CASE("rescore with a W-space boundary moves the latent") {
  const auto gen = unbiased(5);
  RescoreConfig cfg;
  cfg.num_samples = 200;
  cfg.seed = 3;
  // The transform is orthogonal, so A^T d is the W direction that moves the factor.
  const auto& spec = *gen.spec;
  const Vector w_dir = spec.transform.stacked_weight().transpose() * spec.flat_direction(spec.factor("color_0"));
  const Boundary b = normalize_boundary(w_dir, 0.0, "color_0", SpaceTag::W);
  const Boundary flat = planted_boundary(gen, "color_0");
  const double w_ds = rescore(gen.handle, b, "color_0", cfg).delta_s;
  const double flat_ds = rescore(gen.handle, flat, "color_0", cfg).delta_s;
  CHECK(w_ds == doctest::Approx(flat_ds).epsilon(1e-9));
}

TEST_CASE("RescoreConfig validation") {
  RescoreConfig cfg;
  cfg.num_samples = 0;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
  cfg.num_samples = 1;
  cfg.step = std::numeric_limits<double>::infinity();
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("rank_concepts examples") {
  const std::vector<RescoreResult> r{result("a", 0.3), result("b", 0.7), result("c", 0.1)};
  CHECK(rank_concepts(r) == std::vector<std::string>{"b", "a", "c"});
  const std::vector<RescoreResult> zeros{result("z", 0), result("m", 0), result("a", 0)};
  CHECK(rank_concepts(zeros) == std::vector<std::string>{"a", "m", "z"});
  const std::vector<RescoreResult> one{result("x", 0.2)};
  CHECK(rank_concepts(one) == std::vector<std::string>{"x"});
}

TEST_CASE("rank_concepts ignores input order") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<RescoreResult> r;
    const auto n = 1 + rng.below(12);
    for (std::uint64_t i = 0; i < n; ++i) r.push_back(result("c" + std::to_string(i), 0.1 * static_cast<double>(rng.below(4))));
    const auto expected = rank_concepts(r);
    rng.shuffle(r.begin(), r.end());
    CHECK(rank_concepts(r) == expected);
  }
}

TEST_CASE("localize_stages") {
  const auto gen = unbiased(6);
  RescoreConfig cfg;
  cfg.num_samples = 400;
  cfg.seed = 9;
  const auto& map = gen.spec->stage_map;

  SUBCASE("a wired factor localizes to its stage") {
    for (const auto& [id, truth] : planted_ground_truth(*gen.spec)) {
      if (truth.frozen) continue;
      const auto r = localize_stages(gen.handle, planted_boundary(gen, id), id, cfg, map);
      CHECK(argmax_stage(r) == truth.stage);
      double total = 0.0, best = 0.0;
      for (const auto& [name, v] : *r.normalized_per_stage) {
        total += v;
        if (name == *truth.stage) best = v;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(best >= 0.8);
      CHECK(r.delta_s == rescore(gen.handle, planted_boundary(gen, id), id, cfg).delta_s);
    }
  }
  SUBCASE("a frozen factor has all-zero stages") {
    const auto r = localize_stages(gen.handle, planted_boundary(gen, "layout_0"), "frozen_0", cfg, map);
    for (const auto& [name, v] : *r.per_stage) CHECK(v == 0.0);
    for (const auto& [name, v] : *r.normalized_per_stage) CHECK(v == 0.0);
    CHECK_FALSE(argmax_stage(r).has_value());
  }
  SUBCASE("a single-stage map reproduces the full value") {
    const auto single = StageMap::single(gen.spec->space.num_layers);
    const auto b = planted_boundary(gen, "color_1");
    const auto r = localize_stages(gen.handle, b, "color_1", cfg, single);
    CHECK(r.per_stage->front().second == rescore(gen.handle, b, "color_1", cfg).delta_s);
    CHECK(r.normalized_per_stage->front().second == 1.0);
  }
  SUBCASE("a map of the wrong depth is rejected") {
    CHECK(code_of([&] {
            localize_stages(gen.handle, planted_boundary(gen, "color_1"), "color_1", cfg, StageMap::single(3));
          }) == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("disentanglement_matrix") {
  const auto gen = unbiased(7);
  RescoreConfig cfg;
  cfg.num_samples = 300;
  cfg.seed = 10;
  const std::vector<std::string> ids{"layout_0", "object_1", "color_0"};
  std::vector<Boundary> bs;
  for (const auto& id : ids) bs.push_back(planted_boundary(gen, id));
  const Matrix m = disentanglement_matrix(gen.handle, bs, ids, cfg);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(m(i, i) == rescore(gen.handle, bs[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(i)], cfg).delta_s);
    for (Eigen::Index j = 0; j < 3; ++j) {
      if (i != j) CHECK(m(i, j) == 0.0);  // exactly orthogonal planted directions
    }
  }
  const std::vector<std::string> one{"object_1"};
  const std::vector<Boundary> one_b{bs[1]};
  const Matrix single = disentanglement_matrix(gen.handle, one_b, one, cfg);
  CHECK(single.rows() == 1);
  CHECK(single(0, 0) == m(1, 1));
  CHECK(code_of([&] { disentanglement_matrix(gen.handle, one_b, ids, cfg); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("disentanglement_matrix sees planted entanglement") {
  PlantedOptions o = test::small_options(8);
  o.bias_scale = 0.0;
  o.entanglement = Entanglement{SemanticLevel::Attribute, 0, 1, 0.7};
  const auto gen = make_planted_generator(o);
  RescoreConfig cfg;
  cfg.seed = 11;
  const std::vector<std::string> ids{"attribute_0", "attribute_1"};
  const std::vector<Boundary> bs{planted_boundary(gen, ids[0]), planted_boundary(gen, ids[1])};
  const Matrix m = disentanglement_matrix(gen.handle, bs, ids, cfg);
  CHECK(m(0, 1) >= 0.3 * m(0, 0));
  CHECK(m(1, 0) >= 0.3 * m(1, 1));
  CHECK(m(0, 1) == doctest::Approx(golden::kGainS1C07Step2).epsilon(0.05));
}
