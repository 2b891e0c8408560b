#include "hierprobe/config.hpp"

#include <set>

#include "hierprobe/error.hpp"
#include "hierprobe/random.hpp"

namespace hierprobe {

namespace {

void check_keys(const Json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::Config, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw Error(ErrorCode::Config, "unknown key '" + key + "' in " + where);
  }
}

template <class T>
T get(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorCode::Config, std::string("'") + key + "' has the wrong type");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

// Explicit sub-seed unless overridden, else derived from the top-level seed.
std::uint64_t sub_seed(const Json& j, const char* key, std::uint64_t top, const char* tag, bool overridden) {
  if (!overridden && j.contains(key)) return get<std::uint64_t>(j, key, 0);
  return derive_seed(top, tag);
}

std::optional<std::vector<std::size_t>> layers_of(const Json& j) {
  if (!j.contains("layers") || j.at("layers").is_null()) return std::nullopt;
  return get<std::vector<std::size_t>>(j, "layers", {});
}

}  // namespace

RunConfig parse_run_config(const Json& doc, const std::filesystem::path& base_dir,
                           std::optional<std::uint64_t> seed_override) {
  check_keys(doc, {"version", "seed", "generator", "probe", "rescore", "stage_map", "output_dir", "boundary_dir",
                   "concepts", "manipulate", "transition"},
             "config");
  if (get<int>(doc, "version", 0) != kSchemaVersion) {
    throw Error(ErrorCode::Config, "config needs \"version\": " + std::to_string(kSchemaVersion));
  }
  RunConfig cfg;
  const bool overridden = seed_override.has_value();
  cfg.seed = overridden ? *seed_override : get<std::uint64_t>(doc, "seed", 0);

  if (!doc.contains("generator")) throw Error(ErrorCode::Config, "config lacks a generator");
  const auto& g = doc.at("generator");
  check_keys(g, {"planted", "worker", "timeout_seconds", "sessions"}, "generator");
  if (g.contains("planted") == g.contains("worker")) {
    throw Error(ErrorCode::Config, "generator needs exactly one of 'planted' and 'worker'");
  }
  if (g.contains("planted")) cfg.generator.planted = resolve(base_dir, get<std::string>(g, "planted", ""));
  if (g.contains("worker")) {
    cfg.generator.worker = get<std::vector<std::string>>(g, "worker", {});
    if (cfg.generator.worker.empty()) throw Error(ErrorCode::Config, "worker command is empty");
    cfg.generator.worker_dir = std::filesystem::absolute(base_dir).lexically_normal();
  }
  const double timeout_s = get<double>(g, "timeout_seconds", 120.0);
  if (!(timeout_s > 0.0)) throw Error(ErrorCode::Config, "timeout_seconds must be positive");
  cfg.generator.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(timeout_s * 1000.0));
  cfg.generator.sessions = get<std::size_t>(g, "sessions", 0);

  const Json probe = doc.value("probe", Json::object());
  check_keys(probe, {"num_samples", "extreme_count", "seed", "space", "svm"}, "probe");
  cfg.probe.num_samples = get<std::size_t>(probe, "num_samples", cfg.probe.num_samples);
  cfg.probe.extreme_count = get<std::size_t>(probe, "extreme_count", cfg.probe.extreme_count);
  cfg.probe.seed = sub_seed(probe, "seed", cfg.seed, "probe", overridden);
  cfg.probe.space = space_from_string(get<std::string>(probe, "space", "LayerwiseFlat"));
  const Json svm = probe.value("svm", Json::object());
  check_keys(svm, {"regularization", "epochs", "tolerance", "seed"}, "probe.svm");
  cfg.probe.svm.regularization = get<double>(svm, "regularization", cfg.probe.svm.regularization);
  cfg.probe.svm.epochs = get<std::size_t>(svm, "epochs", cfg.probe.svm.epochs);
  cfg.probe.svm.tolerance = get<double>(svm, "tolerance", cfg.probe.svm.tolerance);
  cfg.probe.svm.seed = sub_seed(svm, "seed", cfg.seed, "svm", overridden);
  try {
    cfg.probe.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, e.what());
  }

  const Json rescore = doc.value("rescore", Json::object());
  check_keys(rescore, {"num_samples", "step", "seed", "layers"}, "rescore");
  cfg.rescore.num_samples = get<std::size_t>(rescore, "num_samples", cfg.rescore.num_samples);
  cfg.rescore.step = get<double>(rescore, "step", cfg.rescore.step);
  cfg.rescore.seed = sub_seed(rescore, "seed", cfg.seed, "rescore", overridden);
  cfg.rescore.layers = layers_of(rescore);
  try {
    cfg.rescore.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, e.what());
  }

  if (doc.contains("stage_map")) cfg.stage_map = doc.at("stage_map");
  cfg.output_dir = resolve(base_dir, get<std::string>(doc, "output_dir", "out"));
  cfg.boundary_dir = doc.contains("boundary_dir") ? resolve(base_dir, get<std::string>(doc, "boundary_dir", ""))
                                                  : cfg.output_dir / "boundaries";
  cfg.concepts = get<std::vector<std::string>>(doc, "concepts", {});

  const Json m = doc.value("manipulate", Json::object());
  check_keys(m, {"mode", "concept", "second_concept", "steps", "second_steps", "step", "layers", "count",
                 "jitter_scale", "seed"},
             "manipulate");
  cfg.manipulate.mode = get<std::string>(m, "mode", cfg.manipulate.mode);
  if (cfg.manipulate.mode != "independent" && cfg.manipulate.mode != "joint" && cfg.manipulate.mode != "jitter") {
    throw Error(ErrorCode::Config, "manipulate.mode must be independent, joint or jitter");
  }
  cfg.manipulate.concept_id = get<std::string>(m, "concept", "");
  cfg.manipulate.second_concept_id = get<std::string>(m, "second_concept", "");
  cfg.manipulate.steps = get<std::vector<double>>(m, "steps", cfg.manipulate.steps);
  cfg.manipulate.second_steps = get<std::vector<double>>(m, "second_steps", cfg.manipulate.second_steps);
  cfg.manipulate.step = get<double>(m, "step", cfg.manipulate.step);
  cfg.manipulate.layers = layers_of(m);
  cfg.manipulate.count = get<std::size_t>(m, "count", cfg.manipulate.count);
  cfg.manipulate.jitter_scale = get<double>(m, "jitter_scale", cfg.manipulate.jitter_scale);
  cfg.manipulate.seed = sub_seed(m, "seed", cfg.seed, "manipulate", overridden);
  if (cfg.manipulate.count < 1) throw Error(ErrorCode::Config, "manipulate.count must be positive");
  if (!(cfg.manipulate.jitter_scale >= 0.0)) throw Error(ErrorCode::Config, "jitter_scale must be non-negative");

  const Json t = doc.value("transition", Json::object());
  check_keys(t, {"before", "after", "concept", "step", "layers", "count", "seed"}, "transition");
  if (t.contains("before")) cfg.transition.before_mask = resolve(base_dir, get<std::string>(t, "before", ""));
  if (t.contains("after")) cfg.transition.after_mask = resolve(base_dir, get<std::string>(t, "after", ""));
  if (cfg.transition.before_mask.has_value() != cfg.transition.after_mask.has_value()) {
    throw Error(ErrorCode::Config, "transition needs both 'before' and 'after' masks");
  }
  cfg.transition.concept_id = get<std::string>(t, "concept", "");
  cfg.transition.step = get<double>(t, "step", cfg.transition.step);
  cfg.transition.layers = layers_of(t);
  cfg.transition.count = get<std::size_t>(t, "count", cfg.transition.count);
  cfg.transition.seed = sub_seed(t, "seed", cfg.seed, "transition", overridden);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::Config, "config file " + path.string() + " not found");
  const Json doc = read_json_file(path);
  return parse_run_config(doc, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path(),
                          seed_override);
}

}  // namespace hierprobe
