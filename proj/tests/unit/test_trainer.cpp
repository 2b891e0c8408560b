#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "hierprobe/planted.hpp"
#include "hierprobe/random.hpp"
#include "hierprobe/trainer.hpp"

using namespace hierprobe;
using hierprobe::test::code_of;

namespace {

struct Clusters {
  std::vector<LatentCode> pos, neg;
};

// Two unit-variance Gaussian clusters centered at +-separation * e1.
Clusters clusters(std::size_t per_class, std::size_t dim, double separation, std::uint64_t seed) {
  Rng rng(seed);
  Clusters c;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    Vector v(static_cast<Eigen::Index>(dim));
    for (auto& x : v) x = rng.normal();
    v[0] += i < per_class ? separation : -separation;
    (i < per_class ? c.pos : c.neg).push_back({v, SpaceTag::W});
  }
  return c;
}

double cosine(const Vector& a, const Vector& b) { return a.dot(b) / (a.norm() * b.norm()); }

Vector e1(std::size_t dim) {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(dim));
  v[0] = 1.0;
  return v;
}

// Dual coordinate descent for the L1-loss linear SVM
//   min 1/2 |w|^2 + C sum_i max(0, 1 - y_i w.x_i)
// with a constant bias feature. Exhaustive sweeps until the projected
// gradient vanishes; a second, unrelated solver for the same hinge objective.
Vector reference_svm(const Clusters& data, double c, double bias_feature) {
  std::vector<Vector> x;
  std::vector<double> y;
  const auto dim = data.pos.front().values.size();
  for (const auto* set : {&data.pos, &data.neg}) {
    for (const auto& p : *set) {
      Vector a(dim + 1);
      a << p.values, bias_feature;
      x.push_back(a);
      y.push_back(set == &data.pos ? 1.0 : -1.0);
    }
  }
  const std::size_t n = x.size();
  std::vector<double> alpha(n, 0.0);
  Vector w = Vector::Zero(dim + 1);
  for (int sweep = 0; sweep < 5000; ++sweep) {
    double max_pg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = y[i] * w.dot(x[i]) - 1.0;
      double pg = g;
      if (alpha[i] == 0.0) pg = std::min(g, 0.0);
      if (alpha[i] == c) pg = std::max(g, 0.0);
      max_pg = std::max(max_pg, std::abs(pg));
      if (pg != 0.0) {
        const double old = alpha[i];
        alpha[i] = std::clamp(old - g / x[i].squaredNorm(), 0.0, c);
        w += (alpha[i] - old) * y[i] * x[i];
      }
    }
    if (max_pg < 1e-10) break;
  }
  return w.head(dim);
}

}  // namespace

TEST_CASE("label_extremes examples") {
  const std::vector<double> s{0.9, 0.1, 0.5, 0.8, 0.2};
  const auto l = label_extremes(s, 2);
  CHECK(l.positive == std::vector<std::size_t>{0, 3});
  CHECK(l.negative == std::vector<std::size_t>{1, 4});

  const std::vector<double> flat(6, 0.3);
  const auto t = label_extremes(flat, 1);
  CHECK(t.positive == std::vector<std::size_t>{0});
  CHECK(t.negative == std::vector<std::size_t>{1});

  CHECK(code_of([&] { label_extremes(s, 3); }) == ErrorCode::TooFewSamples);
  CHECK(code_of([&] { label_extremes(s, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("label_extremes commutes with permutations") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    const std::size_t m = 1 + rng.below(n / 2);
    std::vector<double> scores(n);
    // Distinct values so the tie rule does not interact with the permutation.
    for (std::size_t i = 0; i < n; ++i) scores[i] = static_cast<double>(i) + 0.5 * rng.uniform();
    rng.shuffle(scores.begin(), scores.end());
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    std::vector<double> permuted(n);
    for (std::size_t i = 0; i < n; ++i) permuted[i] = scores[perm[i]];

    const auto a = label_extremes(scores, m);
    const auto b = label_extremes(permuted, m);
    const auto map_back = [&](std::vector<std::size_t> idx) {
      for (auto& i : idx) i = perm[i];
      std::sort(idx.begin(), idx.end());
      return idx;
    };
    CHECK(map_back(b.positive) == a.positive);
    CHECK(map_back(b.negative) == a.negative);
    std::vector<std::size_t> both;
    std::set_intersection(a.positive.begin(), a.positive.end(), a.negative.begin(), a.negative.end(),
                          std::back_inserter(both));
    CHECK(both.empty());
  }
}

TEST_CASE("train_linear_svm on separated clusters") {
  const auto data = clusters(200, 16, 3.0, 5);
  SvmConfig cfg;
  cfg.seed = 9;
  const auto r = train_linear_svm(data.pos, data.neg, cfg, "sep");
  CHECK(r.concept_id == "sep");
  CHECK(r.holdout_accuracy == 1.0);
  CHECK(r.train_accuracy >= 0.99);
  CHECK(std::abs(cosine(r.boundary.normal, e1(16))) >= 0.99);
  CHECK(r.boundary.normal[0] > 0.0);
  CHECK(std::abs(r.boundary.normal.norm() - 1.0) <= kUnitNormTolerance);
  CHECK(r.positive_count == 200);
  CHECK(r.negative_count == 200);
  CHECK(r.boundary.space == SpaceTag::W);

  // Same objective solved by dual coordinate descent; bias feature and C
  // mapped to the primal scaling the trainer uses.
  double mean_sq = 0.0;
  for (const auto* set : {&data.pos, &data.neg}) {
    for (const auto& p : *set) mean_sq += p.values.squaredNorm();
  }
  mean_sq /= 400.0;
  const Vector ref = reference_svm(data, cfg.regularization * 16.0 / mean_sq, std::sqrt(mean_sq));
  CHECK(cosine(r.boundary.normal, ref) >= 0.99);
}

TEST_CASE("train_linear_svm on permuted labels is at chance") {
  const auto data = clusters(200, 16, 3.0, 5);
  std::vector<LatentCode> all = data.pos;
  all.insert(all.end(), data.neg.begin(), data.neg.end());
  double sum = 0.0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(100, static_cast<std::uint64_t>(t)));
    auto shuffled = all;
    rng.shuffle(shuffled.begin(), shuffled.end());
    const std::span<const LatentCode> s(shuffled);
    SvmConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(t);
    sum += train_linear_svm(s.first(200), s.subspan(200), cfg).holdout_accuracy;
  }
  const double mean = sum / trials;
  CHECK(mean >= 0.4);
  CHECK(mean <= 0.6);
}

TEST_CASE("train_linear_svm invariants") {
  Rng rng(31);
  for (int trial = 0; trial < 8; ++trial) {
    const auto data = clusters(60 + rng.below(60), 4 + rng.below(12), 0.5 + 2.0 * rng.uniform(), rng.next_u64());
    SvmConfig cfg;
    cfg.seed = rng.next_u64();
    const auto base = train_linear_svm(data.pos, data.neg, cfg);

    const auto again = train_linear_svm(data.pos, data.neg, cfg);
    CHECK(again.boundary.normal == base.boundary.normal);
    CHECK(again.boundary.offset == base.boundary.offset);

    for (double k : {0.25, 3.0, 40.0}) {
      auto scaled = data;
      for (auto* set : {&scaled.pos, &scaled.neg}) {
        for (auto& p : *set) p.values *= k;
      }
      const auto r = train_linear_svm(scaled.pos, scaled.neg, cfg);
      CHECK(cosine(r.boundary.normal, base.boundary.normal) >= 0.999);
    }

    const auto swapped = train_linear_svm(data.neg, data.pos, cfg);
    CHECK(cosine(swapped.boundary.normal, base.boundary.normal) <= -0.999);

    CHECK(base.train_accuracy >= 0.0);
    CHECK(base.train_accuracy <= 1.0);
    CHECK(base.holdout_accuracy >= 0.0);
    CHECK(base.holdout_accuracy <= 1.0);
  }
}

TEST_CASE("train_linear_svm rejects degenerate input") {
  const std::vector<LatentCode> p{{Vector::Ones(3), SpaceTag::W}};
  CHECK(code_of([&] { train_linear_svm(p, p, {}); }) == ErrorCode::DegenerateData);
  CHECK(code_of([&] { train_linear_svm(p, {}, {}); }) == ErrorCode::TooFewSamples);
  const std::vector<LatentCode> q{{Vector::Ones(4), SpaceTag::W}};
  CHECK(code_of([&] { train_linear_svm(p, q, {}); }) == ErrorCode::ShapeMismatch);
  SvmConfig bad;
  bad.regularization = 0.0;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("ProbeConfig validation") {
  ProbeConfig cfg;
  CHECK(cfg.num_samples == kDeskNumSamples);
  CHECK(cfg.extreme_count == 2000);
  cfg.num_samples = 3999;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::TooFewSamples);
}

TEST_CASE("probe_concepts on a small planted generator") {
  const auto gen = make_planted_generator(test::small_options(4));
  ProbeConfig cfg;
  cfg.num_samples = 2000;
  cfg.extreme_count = 200;
  cfg.seed = 8;
  const auto reports = probe_concepts(gen.handle, gen.catalog, cfg, 1);
  REQUIRE(reports.size() == gen.catalog.size());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    CHECK(r.concept_id == gen.catalog.concepts()[i].id);
    CHECK(r.boundary.space == SpaceTag::LayerwiseFlat);
    CHECK(r.boundary.normal.size() == static_cast<Eigen::Index>(gen.spec->space.flat_dim()));
    CHECK(std::abs(r.boundary.normal.norm() - 1.0) <= kUnitNormTolerance);
    CHECK(planted_cosine(*gen.spec, r.concept_id, r.boundary) >= 0.95);
  }
  SUBCASE("thread count does not change the output") {
    const auto threaded = probe_concepts(gen.handle, gen.catalog, cfg, 3);
    for (std::size_t i = 0; i < reports.size(); ++i) {
      CHECK(threaded[i].boundary.normal == reports[i].boundary.normal);
      CHECK(threaded[i].boundary.offset == reports[i].boundary.offset);
    }
  }
  SUBCASE("W-space probing") {
    auto w_cfg = cfg;
    w_cfg.space = SpaceTag::W;
    const auto w = probe_concepts(gen.handle, gen.catalog, w_cfg, 1);
    CHECK(w.front().boundary.space == SpaceTag::W);
    CHECK(w.front().boundary.normal.size() == static_cast<Eigen::Index>(gen.spec->space.dim));
  }
}

TEST_CASE("score_in_chunks matches one large batch") {
  const auto gen = make_planted_generator(test::small_options());
  std::vector<LayerwiseCode> codes;
  Rng rng(3);
  for (int i = 0; i < 25; ++i) {
    Vector v(static_cast<Eigen::Index>(gen.spec->space.flat_dim()));
    for (auto& x : v) x = rng.normal();
    codes.emplace_back(gen.spec->space.num_layers, gen.spec->space.per_layer_dim, v);
  }
  CHECK(score_in_chunks(gen.handle, codes, gen.catalog, 7) == score_batch(gen.handle, codes, gen.catalog));
}
