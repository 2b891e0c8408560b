#include <doctest.h>

#include "helpers.hpp"
#include "hierprobe/latent.hpp"
#include "hierprobe/random.hpp"

using namespace hierprobe;
using hierprobe::test::code_of;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Vector random_vector(Rng& rng, Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

LayerwiseCode random_code(Rng& rng, std::size_t L, std::size_t d) {
  return LayerwiseCode(L, d, random_vector(rng, static_cast<Eigen::Index>(L * d)));
}

// Plain triple loop, independent of Eigen's products.
Vector reference_matvec(const Matrix& a, const Vector& x) {
  Vector y = Vector::Zero(a.rows());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < a.cols(); ++c) acc += a(r, c) * x[c];
    y[r] = acc;
  }
  return y;
}

}  // namespace

TEST_CASE("normalize_boundary scales normal and offset together") {
  const auto b = normalize_boundary(vec({3, 4}), 10.0);
  CHECK(b.normal[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(b.normal[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(b.offset == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(std::abs(b.normal.norm() - 1.0) <= kUnitNormTolerance);
}

TEST_CASE("normalize_boundary leaves a unit normal unchanged") {
  const auto b = normalize_boundary(vec({1, 0, 0}), 0.0);
  CHECK(b.normal == vec({1, 0, 0}));
  CHECK(b.offset == 0.0);
}

TEST_CASE("normalize_boundary rejects a zero normal") {
  CHECK(code_of([] { normalize_boundary(vec({0, 0}), 1.0); }) == ErrorCode::ZeroVector);
  CHECK(code_of([] { normalize_boundary(vec({1e-13, 0}), 1.0); }) == ErrorCode::ZeroVector);
}

TEST_CASE("check_unit_norm") {
  Boundary b{vec({0.6, 0.8}), 0.0, "a"};
  CHECK_NOTHROW(check_unit_norm(b));
  b.normal[0] += 1e-6;
  CHECK(code_of([&] { check_unit_norm(b); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("project_to_layerwise with identity transform broadcasts w") {
  const auto t = StyleTransform::broadcast(5, 3);
  const LatentCode w{vec({1, -2, 3}), SpaceTag::W};
  const auto y = project_to_layerwise(w, t);
  REQUIRE(y.num_layers() == 5);
  for (std::size_t l = 0; l < 5; ++l) CHECK(Vector(y.layer(l)) == w.values);
}

TEST_CASE("project_to_layerwise hand example") {
  Matrix a(2, 2);
  a << 2, 0, 0, 3;
  const StyleTransform t({a}, {vec({1, 1})});
  const auto y = project_to_layerwise({vec({1, 1}), SpaceTag::W}, t);
  const Vector expected = reference_matvec(a, vec({1, 1})) + vec({1, 1});
  CHECK(expected == vec({3, 4}));
  CHECK(Vector(y.layer(0)) == expected);
}

TEST_CASE("project_to_layerwise with zero weights returns the biases") {
  const std::vector<Matrix> a(3, Matrix::Zero(2, 4));
  const std::vector<Vector> b{vec({1, 2}), vec({3, 4}), vec({5, 6})};
  const StyleTransform t(a, b);
  const auto y = project_to_layerwise({vec({9, -9, 7, 1}), SpaceTag::W}, t);
  for (std::size_t l = 0; l < 3; ++l) CHECK(Vector(y.layer(l)) == b[l]);
}

TEST_CASE("project_to_layerwise shape and space errors") {
  const auto t = StyleTransform::broadcast(2, 3);
  CHECK(code_of([&] { project_to_layerwise({vec({1, 2}), SpaceTag::W}, t); }) == ErrorCode::ShapeMismatch);
  CHECK(code_of([&] { project_to_layerwise({vec({1, 2, 3}), SpaceTag::Z}, t); }) == ErrorCode::SpaceMismatch);
  CHECK(code_of([] { StyleTransform({Matrix::Zero(2, 2)}, {}); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("project_to_layerwise is linear") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Matrix> a;
    for (int l = 0; l < 4; ++l) a.push_back(Matrix::NullaryExpr(3, 5, [&] { return rng.normal(); }));
    const StyleTransform t(a, std::vector<Vector>(4, Vector::Zero(3)));
    const Vector w1 = random_vector(rng, 5), w2 = random_vector(rng, 5);
    const double alpha = rng.normal(), beta = rng.normal();
    const auto lhs = project_to_layerwise({alpha * w1 + beta * w2, SpaceTag::W}, t);
    const auto p1 = project_to_layerwise({w1, SpaceTag::W}, t);
    const auto p2 = project_to_layerwise({w2, SpaceTag::W}, t);
    const Vector rhs = alpha * p1.flat() + beta * p2.flat();
    CHECK((lhs.flat() - rhs).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("apply_shift examples") {
  const std::size_t L = 14, d = 3;
  const LayerwiseCode zero(L, d);
  Vector n = Vector::Zero(static_cast<Eigen::Index>(L * d));
  n[0] = 1.0;
  const Boundary e1{n, 0.0, "e1"};

  SUBCASE("step 0 is the identity") {
    Rng rng(5);
    const auto c = random_code(rng, L, d);
    CHECK(apply_shift(c, e1, 0.0, all_layers(L)) == c);
  }
  SUBCASE("zero code, first basis vector, step 2") {
    const auto out = apply_shift(zero, e1, 2.0, all_layers(L));
    CHECK(out.flat()[0] == 2.0);
    CHECK(out.flat().tail(out.flat().size() - 1).isZero(0.0));
  }
  SUBCASE("restriction to layers 0 and 1 leaves layers 2..13 bit-identical") {
    Rng rng(6);
    const auto c = random_code(rng, L, d);
    const Boundary dense = normalize_boundary(random_vector(rng, static_cast<Eigen::Index>(L * d)), 0.0);
    const std::vector<std::size_t> layers{0, 1};
    const auto out = apply_shift(c, dense, 2.0, layers);
    for (std::size_t l = 2; l < L; ++l) CHECK(Vector(out.layer(l)) == Vector(c.layer(l)));
    CHECK(Vector(out.layer(0)) != Vector(c.layer(0)));
  }
  SUBCASE("errors") {
    const std::vector<std::size_t> bad{L};
    CHECK(code_of([&] { apply_shift(zero, e1, 1.0, bad); }) == ErrorCode::LayerOutOfRange);
    const Boundary w_space{n, 0.0, "w", SpaceTag::W};
    CHECK(code_of([&] { apply_shift(zero, w_space, 1.0, all_layers(L)); }) == ErrorCode::SpaceMismatch);
    const Boundary short_n = normalize_boundary(vec({1, 0}), 0.0);
    CHECK(code_of([&] { apply_shift(zero, short_n, 1.0, all_layers(L)); }) == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("apply_shift keeps stochastic inputs and does not mutate its input") {
  LayerwiseCode c(2, 2, vec({1, 2, 3, 4}), vec({7, 8}));
  const LayerwiseCode copy = c;
  const auto out = apply_shift(c, normalize_boundary(vec({1, 1, 1, 1}), 0.0), 3.0, all_layers(2));
  CHECK(c == copy);
  CHECK(out.stochastic() == vec({7, 8}));
}

TEST_CASE("apply_shift is additive and disjoint layer sets commute") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t L = 6, d = 5;
    const auto c = random_code(rng, L, d);
    const auto b = normalize_boundary(random_vector(rng, static_cast<Eigen::Index>(L * d)), 0.0);
    std::vector<std::size_t> s1, s2;
    for (std::size_t l = 0; l < L; ++l) (rng.below(2) ? s1 : s2).push_back(l);
    const double l1 = 4.0 * rng.normal(), l2 = 4.0 * rng.normal();

    const auto twice = apply_shift(apply_shift(c, b, l1, s1), b, l2, s1);
    const auto once = apply_shift(c, b, l1 + l2, s1);
    CHECK((twice.flat() - once.flat()).cwiseAbs().maxCoeff() <= 1e-12);

    const auto ab = apply_shift(apply_shift(c, b, l1, s1), b, l2, s2);
    const auto ba = apply_shift(apply_shift(c, b, l2, s2), b, l1, s1);
    CHECK(ab == ba);
  }
}

TEST_CASE("shift_latent") {
  const LatentCode z{vec({1, 1}), SpaceTag::Z};
  const Boundary b{vec({0, 1}), 0.0, "b", SpaceTag::Z};
  CHECK(shift_latent(z, b, 2.0).values == vec({1, 3}));
  const Boundary w{vec({0, 1}), 0.0, "b", SpaceTag::W};
  CHECK(code_of([&] { shift_latent(z, w, 2.0); }) == ErrorCode::SpaceMismatch);
}

TEST_CASE("StageMap presets partition their layers") {
  for (const auto& map : {StageMap::stylegan14(), StageMap::biggan12(), StageMap::single(9),
                          StageMap::proportional_four(8), StageMap::proportional_four(14)}) {
    std::size_t next = 0;
    for (const auto& s : map.stages()) {
      CHECK(s.layers.begin == next);
      CHECK(s.layers.end > s.layers.begin);
      next = s.layers.end;
    }
    CHECK(next == map.num_layers());
  }
  const auto m = StageMap::stylegan14();
  CHECK(m.find("layout")->layers == LayerRange{0, 2});
  CHECK(m.find("object")->layers == LayerRange{2, 6});
  CHECK(m.find("attribute")->layers == LayerRange{6, 12});
  CHECK(m.find("color")->layers == LayerRange{12, 14});
  CHECK(m.stage_of(7).name == "attribute");
  CHECK(StageMap::proportional_four(14) == m);
  CHECK(StageMap::biggan12().stages().size() == 2);
}

TEST_CASE("StageMap rejects gaps, overlaps and empty ranges") {
  CHECK(code_of([] { StageMap({{"a", {0, 2}}, {"b", {3, 4}}}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { StageMap({{"a", {0, 2}}, {"b", {1, 4}}}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { StageMap({{"a", {0, 0}}}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { StageMap({{"a", {1, 3}}}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { StageMap({{"a", {0, 1}}, {"a", {1, 2}}}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("ConceptCatalog") {
  const ConceptCatalog cat({{"a", "A", SemanticLevel::Layout, ""}, {"b", "B", SemanticLevel::Object, ""}});
  CHECK(cat.size() == 2);
  CHECK(cat.at("b").level == SemanticLevel::Object);
  CHECK(cat.find("c") == nullptr);
  CHECK(code_of([&] { cat.at("c"); }) == ErrorCode::UnknownConcept);
  const std::vector<std::string> ids{"b"};
  CHECK(cat.subset(ids).concepts().front().id == "b");
  CHECK(code_of([] { ConceptCatalog({{"a", "", SemanticLevel::Layout, ""}, {"a", "", SemanticLevel::Layout, ""}}); }) ==
        ErrorCode::InvalidArgument);
  CHECK(code_of([] { ConceptCatalog(std::vector<SemanticConcept>{}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("LatentSpaceSpec validation") {
  CHECK_NOTHROW(LatentSpaceSpec{4, SpaceTag::W, 2, 4}.validate());
  CHECK(code_of([] { LatentSpaceSpec{0, SpaceTag::W, 2, 4}.validate(); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { LatentSpaceSpec{4, SpaceTag::W, 0, 4}.validate(); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { LatentSpaceSpec{4, SpaceTag::W, 2, 0}.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("LayerwiseCode layout") {
  const auto c = LayerwiseCode::from_layers({vec({1, 2}), vec({3, 4}), vec({5, 6})});
  CHECK(c.flat() == vec({1, 2, 3, 4, 5, 6}));
  CHECK(Vector(c.layer(1)) == vec({3, 4}));
  CHECK(c.layers().size() == 3);
  CHECK(code_of([] { LayerwiseCode::from_layers({vec({1, 2}), vec({3})}); }) == ErrorCode::ShapeMismatch);
  CHECK(code_of([] { LayerwiseCode(2, 2, vec({1, 2, 3})); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("string conversions round-trip") {
  for (auto t : {SpaceTag::Z, SpaceTag::W, SpaceTag::LayerwiseFlat}) CHECK(space_from_string(to_string(t)) == t);
  for (auto l : {SemanticLevel::Layout, SemanticLevel::Object, SemanticLevel::Attribute, SemanticLevel::ColorScheme}) {
    CHECK(level_from_string(to_string(l)) == l);
  }
  CHECK(code_of([] { space_from_string("Q"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("Rng streams") {
  Rng a(1), b(1);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
  CHECK(Rng(1).next_u64() != Rng(2).next_u64());
  CHECK(derive_seed(5, "a") != derive_seed(5, "b"));
  CHECK(derive_seed(5, std::uint64_t{1}) != derive_seed(5, std::uint64_t{2}));
  Rng r(3);
  for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);
  double sum = 0, sq = 0;
  Rng n(4);
  for (int i = 0; i < 100000; ++i) {
    const double x = n.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / 1e5) < 0.02);
  CHECK(std::abs(sq / 1e5 - 1.0) < 0.02);
}
