#include "hierprobe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hierprobe/error.hpp"
#include "hierprobe/random.hpp"
#include "hierprobe/sampling.hpp"
#include "parallel.hpp"

namespace hierprobe {

void SvmConfig::validate() const {
  if (!(regularization > 0.0) || !std::isfinite(regularization)) {
    throw Error(ErrorCode::InvalidArgument, "svm regularization must be positive");
  }
  if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "svm epochs must be positive");
  if (!(tolerance > 0.0)) throw Error(ErrorCode::InvalidArgument, "svm tolerance must be positive");
}

void ProbeConfig::validate() const {
  if (num_samples < 1) throw Error(ErrorCode::InvalidArgument, "num_samples must be positive");
  if (extreme_count < 1) throw Error(ErrorCode::InvalidArgument, "extreme_count must be positive");
  if (2 * extreme_count > num_samples) {
    throw Error(ErrorCode::TooFewSamples, "2 * extreme_count (" + std::to_string(2 * extreme_count) +
                                              ") exceeds num_samples (" + std::to_string(num_samples) + ")");
  }
  svm.validate();
}

ExtremeLabels label_extremes(std::span<const double> scores, std::size_t m) {
  if (m < 1) throw Error(ErrorCode::InvalidArgument, "extreme count must be positive");
  if (2 * m > scores.size()) {
    throw Error(ErrorCode::TooFewSamples, "need " + std::to_string(2 * m) + " scores, got " +
                                              std::to_string(scores.size()));
  }
  for (const double s : scores) {
    if (std::isnan(s)) throw Error(ErrorCode::InvalidArgument, "NaN score");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  ExtremeLabels out;
  std::vector<bool> taken(scores.size(), false);
  out.positive.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
  for (const auto i : out.positive) taken[i] = true;

  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  for (const auto i : order) {
    if (out.negative.size() == m) break;
    if (!taken[i]) out.negative.push_back(i);
  }
  std::sort(out.positive.begin(), out.positive.end());
  std::sort(out.negative.begin(), out.negative.end());
  return out;
}

namespace {

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> holdout;
};

// Same seed for both classes, so the split of a class does not depend on its label.
Split holdout_split(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(perm.begin(), perm.end());
  std::size_t n_hold = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
  n_hold = std::min(n_hold, n - 1);
  Split s;
  s.holdout.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_hold));
  s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_hold), perm.end());
  std::sort(s.holdout.begin(), s.holdout.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

bool lexicographically_less(const Vector& a, const Vector& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

void check_inputs(std::span<const LatentCode> pos, std::span<const LatentCode> neg) {
  if (pos.empty() || neg.empty()) throw Error(ErrorCode::TooFewSamples, "both classes need at least one point");
  const auto dim = pos.front().values.size();
  const auto space = pos.front().space;
  if (dim == 0) throw Error(ErrorCode::ShapeMismatch, "zero-length training points");
  bool all_same = true;
  for (const auto* list : {&pos, &neg}) {
    for (const auto& c : *list) {
      if (c.values.size() != dim) throw Error(ErrorCode::ShapeMismatch, "training points differ in length");
      if (c.space != space) throw Error(ErrorCode::SpaceMismatch, "training points mix latent spaces");
      if (!c.values.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite training point");
      if (all_same && c.values != pos.front().values) all_same = false;
    }
  }
  if (all_same) throw Error(ErrorCode::DegenerateData, "all training points coincide");
}

}  // namespace

TrainingReport train_linear_svm(std::span<const LatentCode> positive, std::span<const LatentCode> negative,
                                const SvmConfig& cfg, std::string concept_id) {
  cfg.validate();
  check_inputs(positive, negative);
  const auto d = positive.front().values.size();
  const auto di = static_cast<Eigen::Index>(d);

  // Class order is fixed by the data, not the labels, so swapping the two
  // lists replays the same optimization with negated labels.
  const bool pos_first = !lexicographically_less(negative.front().values, positive.front().values);
  const auto split_seed = derive_seed(cfg.seed, "holdout");
  const Split pos_split = holdout_split(positive.size(), split_seed);
  const Split neg_split = holdout_split(negative.size(), split_seed);

  struct Member {
    const Vector* x;
    double y;
  };
  std::vector<Member> train;
  std::vector<Member> holdout;
  auto add = [](std::vector<Member>& out, std::span<const LatentCode> list, const std::vector<std::size_t>& idx,
                double y) {
    for (const auto i : idx) out.push_back({&list[i].values, y});
  };
  if (pos_first) {
    add(train, positive, pos_split.train, 1.0);
    add(train, negative, neg_split.train, -1.0);
  } else {
    add(train, negative, neg_split.train, -1.0);
    add(train, positive, pos_split.train, 1.0);
  }
  add(holdout, positive, pos_split.holdout, 1.0);
  add(holdout, negative, neg_split.holdout, -1.0);

  const auto n = train.size();
  // The bias feature is set to the RMS point norm and the regularizer is
  // measured in units of the mean squared coordinate, so rescaling every
  // point by k > 0 rescales the iterates by 1/k and leaves the normal's
  // direction unchanged, and one C suits any dimension.
  double mean_sq = 0.0;
  for (const auto& m : train) mean_sq += m.x->squaredNorm();
  mean_sq /= static_cast<double>(n);
  if (!(mean_sq > 0.0)) throw Error(ErrorCode::DegenerateData, "all training points are at the origin");
  const double bias_feature = std::sqrt(mean_sq);
  const double lambda = mean_sq / static_cast<double>(di) / (cfg.regularization * static_cast<double>(n));
  const double radius = 1.0 / std::sqrt(lambda);

  Matrix x(di + 1, static_cast<Eigen::Index>(n));
  Vector y(static_cast<Eigen::Index>(n));
  Vector sq(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    x.col(jj).head(di) = *train[j].x;
    x(di, jj) = bias_feature;
    y[jj] = train[j].y;
    sq[jj] = x.col(jj).squaredNorm();
  }

  // w = a * v; shrinking only touches the scalar.
  Vector v = Vector::Zero(di + 1);
  double a = 1.0;
  double v_norm2 = 0.0;
  double t = 0.0;
  Vector average = Vector::Zero(di + 1);
  Vector previous_average = average;
  std::size_t averaged = 0;
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(derive_seed(cfg.seed, "epochs"));
  const std::size_t burn_in = cfg.epochs / 2;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (const auto j : order) {
      t += 1.0;
      const double eta = 1.0 / (lambda * t);
      double vx = v.dot(x.col(j));
      const double margin = y[j] * a * vx;
      const double shrink = 1.0 - 1.0 / t;
      if (shrink == 0.0) {
        v.setZero();
        a = 1.0;
        v_norm2 = 0.0;
        vx = 0.0;
      } else {
        a *= shrink;
      }
      if (margin < 1.0) {
        const double c = eta * y[j] / a;
        v_norm2 += 2.0 * c * vx + c * c * sq[j];
        v.noalias() += c * x.col(j);
      }
      const double norm = std::abs(a) * std::sqrt(std::max(v_norm2, 0.0));
      if (norm > radius) a *= radius / norm;
      if (std::abs(a) < 1e-9) {
        v *= a;
        a = 1.0;
        v_norm2 = v.squaredNorm();
      }
    }
    if (epoch >= burn_in) {
      ++averaged;
      average += (a * v - average) / static_cast<double>(averaged);
      if (averaged > 1) {
        const double change = (average - previous_average).norm();
        if (change <= cfg.tolerance * average.norm()) break;
      }
      previous_average = average;
    }
  }

  const Vector raw_normal = average.head(di);
  if (!(raw_normal.norm() >= 1e-12)) throw Error(ErrorCode::DegenerateData, "no separating direction found");
  const auto space = positive.front().space;
  Boundary boundary = normalize_boundary(raw_normal, average[di] * bias_feature, concept_id, space);

  auto margin_of = [&](const Vector& p) { return boundary.normal.dot(p) + boundary.offset; };
  double pos_mean = 0.0, neg_mean = 0.0;
  std::size_t pos_n = 0, neg_n = 0;
  for (const auto& m : train) {
    if (m.y > 0) {
      pos_mean += margin_of(*m.x);
      ++pos_n;
    } else {
      neg_mean += margin_of(*m.x);
      ++neg_n;
    }
  }
  if (pos_mean / static_cast<double>(pos_n) < neg_mean / static_cast<double>(neg_n)) {
    boundary.normal = -boundary.normal;
    boundary.offset = -boundary.offset;
  }

  auto accuracy = [&](const std::vector<Member>& set) {
    std::size_t correct = 0;
    for (const auto& m : set) {
      const bool predicted_positive = margin_of(*m.x) > 0.0;
      if (predicted_positive == (m.y > 0)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(set.size());
  };

  TrainingReport report;
  report.concept_id = std::move(concept_id);
  report.train_accuracy = accuracy(train);
  // Single-point classes have nothing to hold out.
  report.holdout_accuracy = holdout.empty() ? report.train_accuracy : accuracy(holdout);
  report.positive_count = positive.size();
  report.negative_count = negative.size();
  report.svm = cfg;
  report.boundary = std::move(boundary);
  return report;
}

std::vector<ScoreVector> score_in_chunks(const GeneratorHandle& handle, std::span<const LayerwiseCode> codes,
                                         const ConceptCatalog& concepts, std::size_t chunk) {
  if (codes.empty()) throw Error(ErrorCode::EmptyBatch, "no codes to score");
  chunk = std::max<std::size_t>(chunk, 1);
  std::vector<ScoreVector> out;
  out.reserve(codes.size());
  for (std::size_t start = 0; start < codes.size(); start += chunk) {
    const auto len = std::min(chunk, codes.size() - start);
    auto part = score_batch(handle, codes.subspan(start, len), concepts);
    for (auto& s : part) out.push_back(std::move(s));
  }
  return out;
}

std::vector<TrainingReport> probe_concepts(const GeneratorHandle& handle, const ConceptCatalog& concepts,
                                           const ProbeConfig& cfg, std::size_t workers) {
  cfg.validate();
  const SpaceTag native = handle.space().space;
  if (cfg.space != SpaceTag::LayerwiseFlat && cfg.space != native) {
    throw Error(ErrorCode::SpaceMismatch, "cannot probe in " + std::string(to_string(cfg.space)) +
                                              " on a generator sampling " + std::string(to_string(native)));
  }
  const CodeSample sample = sample_codes(handle, cfg.num_samples, cfg.seed);
  const auto scores = score_in_chunks(handle, sample.codes, concepts);

  std::vector<TrainingReport> reports(concepts.size());
  detail::parallel_for(concepts.size(), workers, [&](std::size_t c) {
    const auto& id = concepts.concepts()[c].id;
    std::vector<double> s(scores.size());
    for (std::size_t k = 0; k < scores.size(); ++k) s[k] = scores[k].at(id);
    const auto labels = label_extremes(s, cfg.extreme_count);

    auto gather = [&](const std::vector<std::size_t>& idx) {
      std::vector<LatentCode> out;
      out.reserve(idx.size());
      for (const auto k : idx) {
        if (cfg.space == SpaceTag::LayerwiseFlat) {
          out.push_back({sample.codes[k].flat(), SpaceTag::LayerwiseFlat});
        } else {
          out.push_back({sample.latents[k].values, native});
        }
      }
      return out;
    };
    SvmConfig svm = cfg.svm;
    svm.seed = derive_seed(cfg.svm.seed, id);
    reports[c] = train_linear_svm(gather(labels.positive), gather(labels.negative), svm, id);
    reports[c].svm = cfg.svm;
  });
  return reports;
}

}  // namespace hierprobe
