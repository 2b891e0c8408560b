#include "hierprobe/serialization.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "hierprobe/error.hpp"

namespace hierprobe {

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

double parse_double(std::string_view text) {
  const std::string s(text);
  if (s.empty()) throw Error(ErrorCode::Config, "empty number");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  // ERANGE on underflow still yields the nearest subnormal (or 0), which is fine.
  if (end != s.c_str() + s.size() || (errno == ERANGE && std::isinf(v))) {
    throw Error(ErrorCode::Config, "bad number '" + s + "'");
  }
  return v;
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json_file(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Config, path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

// --- CSV -----------------------------------------------------------------

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw Error(ErrorCode::Config, "CSV has no column '" + std::string(name) + "'");
}

namespace {

void append_field(std::string& out, const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) {
    out += field;
    return;
  }
  out += '"';
  for (const char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

void append_row(std::string& out, const std::vector<std::string>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    append_field(out, row[i]);
  }
  out += '\n';
}

}  // namespace

std::string to_csv(const CsvTable& table) {
  std::string out;
  append_row(out, table.header);
  for (const auto& row : table.rows) append_row(out, row);
  return out;
}

CsvTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    any = true;
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      records.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw Error(ErrorCode::Config, "unterminated quote in CSV");
  if (any || !field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    records.push_back(std::move(row));
  }
  if (records.empty()) throw Error(ErrorCode::Config, "empty CSV");
  CsvTable t;
  t.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size()) {
      throw Error(ErrorCode::Config, "CSV row " + std::to_string(r + 1) + " has " +
                                         std::to_string(records[r].size()) + " fields, header has " +
                                         std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

// --- Vectors ---------------------------------------------------------------

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::Config, what);
}

const Json& member(const Json& j, const char* key) {
  require(j.is_object() && j.contains(key), std::string("missing field '") + key + "'");
  return j.at(key);
}

template <class T>
T field(const Json& j, const char* key) {
  require(j.is_object() && j.contains(key), std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorCode::Config, std::string("field '") + key + "' has the wrong type");
  }
}

template <class T>
T field_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return field<T>(j, key);
}

void check_version(const Json& j) {
  const int v = field<int>(j, "version");
  require(v == kSchemaVersion, "unsupported schema version " + std::to_string(v));
}

std::vector<std::size_t> layer_range_json(const LayerRange& r) { return {r.begin, r.end}; }

LayerRange layer_range_from(const Json& j) {
  require(j.is_array() && j.size() == 2, "layer range must be [begin, end]");
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>()};
}

}  // namespace

Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw Error(ErrorCode::InvalidArgument, "cannot serialize a non-finite value");
    a.push_back(v[i]);
  }
  return a;
}

Vector vector_from_json(const Json& j) {
  require(j.is_array(), "expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    require(j[i].is_number(), "expected a number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(Vector(m.row(r).transpose())));
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  require(j.is_array(), "expected an array of rows");
  if (j.empty()) return Matrix();
  const auto cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    require(j[r].size() == cols, "ragged matrix");
    m.row(static_cast<Eigen::Index>(r)) = vector_from_json(j[r]).transpose();
  }
  return m;
}

// --- Boundaries ------------------------------------------------------------

Json boundary_to_json(const BoundaryRecord& r) {
  check_unit_norm(r.boundary);
  Json j;
  j["version"] = kSchemaVersion;
  j["concept_id"] = r.boundary.concept_id;
  j["space"] = std::string(to_string(r.boundary.space));
  j["normal"] = to_json(r.boundary.normal);
  j["offset"] = r.boundary.offset;
  j["train_accuracy"] = r.train_accuracy;
  j["holdout_accuracy"] = r.holdout_accuracy;
  return j;
}

BoundaryRecord boundary_from_json(const Json& j) {
  check_version(j);
  BoundaryRecord r;
  r.boundary.concept_id = field<std::string>(j, "concept_id");
  r.boundary.space = space_from_string(field<std::string>(j, "space"));
  r.boundary.normal = vector_from_json(member(j, "normal"));
  r.boundary.offset = field<double>(j, "offset");
  r.train_accuracy = field_or<double>(j, "train_accuracy", 0.0);
  r.holdout_accuracy = field_or<double>(j, "holdout_accuracy", 0.0);
  check_unit_norm(r.boundary);
  return r;
}

// --- Codes -----------------------------------------------------------------

Json code_to_json(const LayerwiseCode& code) {
  Json j;
  j["version"] = kSchemaVersion;
  j["space"] = "LayerwiseFlat";
  j["num_layers"] = code.num_layers();
  j["per_layer_dim"] = code.per_layer_dim();
  Json layers = Json::array();
  for (std::size_t l = 0; l < code.num_layers(); ++l) layers.push_back(to_json(Vector(code.layer(l))));
  j["layers"] = std::move(layers);
  j["stochastic"] = to_json(code.stochastic());
  return j;
}

LayerwiseCode layerwise_code_from_json(const Json& j) {
  check_version(j);
  require(field<std::string>(j, "space") == "LayerwiseFlat", "not a layer-wise code");
  std::vector<Vector> layers;
  for (const auto& l : member(j, "layers")) layers.push_back(vector_from_json(l));
  LayerwiseCode code = LayerwiseCode::from_layers(layers);
  require(code.num_layers() == field<std::size_t>(j, "num_layers") &&
              code.per_layer_dim() == field<std::size_t>(j, "per_layer_dim"),
          "code shape fields disagree with its layers");
  if (j.contains("stochastic")) code.stochastic() = vector_from_json(member(j, "stochastic"));
  return code;
}

Json code_to_json(const LatentCode& code) {
  Json j;
  j["version"] = kSchemaVersion;
  j["space"] = std::string(to_string(code.space));
  j["values"] = to_json(code.values);
  return j;
}

LatentCode latent_code_from_json(const Json& j) {
  check_version(j);
  LatentCode c;
  c.space = space_from_string(field<std::string>(j, "space"));
  c.values = vector_from_json(member(j, "values"));
  return c;
}

// --- Stage maps ------------------------------------------------------------

Json stage_map_to_json(const StageMap& map) {
  Json a = Json::array();
  for (const auto& s : map.stages()) a.push_back({{"name", s.name}, {"begin", s.layers.begin}, {"end", s.layers.end}});
  return a;
}

StageMap stage_map_from_json(const Json& j, std::size_t num_layers) {
  StageMap map = [&] {
    if (j.is_string()) {
      const auto name = j.get<std::string>();
      if (name == "stylegan14") return StageMap::stylegan14();
      if (name == "biggan12") return StageMap::biggan12();
      if (name == "single") return StageMap::single(num_layers);
      if (name == "proportional_four") return StageMap::proportional_four(num_layers);
      throw Error(ErrorCode::Config, "unknown stage map preset '" + name + "'");
    }
    require(j.is_array(), "stage map must be a preset name or a list of stages");
    std::vector<Stage> stages;
    for (const auto& s : j) {
      stages.push_back({field<std::string>(s, "name"), {field<std::size_t>(s, "begin"), field<std::size_t>(s, "end")}});
    }
    return StageMap(std::move(stages));
  }();
  if (map.num_layers() != num_layers) {
    throw Error(ErrorCode::Config, "stage map covers " + std::to_string(map.num_layers()) + " layers, generator has " +
                                       std::to_string(num_layers));
  }
  return map;
}

// --- Transition matrices ---------------------------------------------------

Json transition_to_json(const TransitionMatrix& m) {
  Json j;
  j["version"] = kSchemaVersion;
  Json names = Json::object();
  for (const auto& [label, name] : m.label_names) names[std::to_string(label)] = name;
  j["label_names"] = std::move(names);
  Json counts = Json::array();
  for (const auto& [pair, n] : m.counts) counts.push_back({{"before", pair.first}, {"after", pair.second}, {"count", n}});
  j["counts"] = std::move(counts);
  j["total"] = m.total();
  return j;
}

TransitionMatrix transition_from_json(const Json& j) {
  check_version(j);
  TransitionMatrix m;
  for (const auto& [key, name] : member(j, "label_names").items()) {
    m.label_names[static_cast<std::uint32_t>(std::stoul(key))] = name.get<std::string>();
  }
  for (const auto& c : member(j, "counts")) {
    m.counts[{field<std::uint32_t>(c, "before"), field<std::uint32_t>(c, "after")}] = field<std::uint64_t>(c, "count");
  }
  return m;
}

CsvTable transition_table(const TransitionMatrix& m) {
  std::set<std::uint32_t> before, after;
  for (const auto& [pair, n] : m.counts) {
    before.insert(pair.first);
    after.insert(pair.second);
  }
  auto label = [&](std::uint32_t l) {
    const auto it = m.label_names.find(l);
    return it == m.label_names.end() ? std::to_string(l) : it->second;
  };
  CsvTable t;
  t.header.push_back("before\\after");
  for (const auto a : after) t.header.push_back(label(a));
  for (const auto b : before) {
    std::vector<std::string> row{label(b)};
    for (const auto a : after) {
      const auto it = m.counts.find({b, a});
      row.push_back(std::to_string(it == m.counts.end() ? 0 : it->second));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// --- Planted generators ----------------------------------------------------

Json planted_spec_to_json(const PlantedGeneratorSpec& spec) {
  Json j;
  j["version"] = kSchemaVersion;
  j["kind"] = "planted_spec";
  j["space"] = {{"dim", spec.space.dim},
                {"space", std::string(to_string(spec.space.space))},
                {"num_layers", spec.space.num_layers},
                {"per_layer_dim", spec.space.per_layer_dim}};
  j["transform"] = {{"weight", to_json(spec.transform.stacked_weight())},
                    {"bias", to_json(spec.transform.stacked_bias())}};
  j["stage_map"] = stage_map_to_json(spec.stage_map);
  Json factors = Json::array();
  for (const auto& f : spec.factors) {
    Json jf;
    jf["concept_id"] = f.concept_id;
    jf["name"] = f.name;
    jf["level"] = std::string(to_string(f.level));
    jf["kind"] = std::string(to_string(f.kind));
    jf["layers"] = layer_range_json(f.layers);
    jf["direction"] = to_json(f.direction);
    jf["sharpness"] = f.sharpness;
    jf["nuisance"] = f.nuisance;
    jf["shadow"] = to_json(f.shadow);
    jf["shadow_correlation"] = f.shadow_correlation;
    jf["constant_value"] = f.constant_value;
    factors.push_back(std::move(jf));
  }
  j["factors"] = std::move(factors);
  j["render"] = {{"width", spec.render.width},
                 {"height", spec.render.height},
                 {"hue_source", spec.render.hue_source},
                 {"layout_source", spec.render.layout_source}};
  return j;
}

PlantedGeneratorSpec planted_spec_from_json(const Json& j) {
  check_version(j);
  require(field<std::string>(j, "kind") == "planted_spec", "not a planted spec document");
  const auto& js = member(j, "space");
  LatentSpaceSpec space{field<std::size_t>(js, "dim"), space_from_string(field<std::string>(js, "space")),
                        field<std::size_t>(js, "num_layers"), field<std::size_t>(js, "per_layer_dim")};
  space.validate();
  const auto& jt = member(j, "transform");
  StyleTransform transform(matrix_from_json(member(jt, "weight")), vector_from_json(member(jt, "bias")), space.num_layers);
  StageMap stages = stage_map_from_json(member(j, "stage_map"), space.num_layers);
  std::vector<PlantedFactor> factors;
  for (const auto& jf : member(j, "factors")) {
    PlantedFactor f;
    f.concept_id = field<std::string>(jf, "concept_id");
    f.name = field_or<std::string>(jf, "name", f.concept_id);
    f.level = level_from_string(field<std::string>(jf, "level"));
    f.kind = scorer_kind_from_string(field<std::string>(jf, "kind"));
    f.layers = layer_range_from(member(jf, "layers"));
    f.direction = vector_from_json(member(jf, "direction"));
    f.sharpness = field_or<double>(jf, "sharpness", 1.0);
    f.nuisance = field_or<double>(jf, "nuisance", 0.0);
    if (jf.contains("shadow")) f.shadow = vector_from_json(member(jf, "shadow"));
    f.shadow_correlation = field_or<double>(jf, "shadow_correlation", 0.0);
    f.constant_value = field_or<double>(jf, "constant_value", 0.5);
    factors.push_back(std::move(f));
  }
  const auto& jr = member(j, "render");
  RenderConfig render{field<std::size_t>(jr, "width"), field<std::size_t>(jr, "height"),
                      field_or<std::string>(jr, "hue_source", ""), field_or<std::string>(jr, "layout_source", "")};
  PlantedGeneratorSpec spec{std::move(space), std::move(transform), std::move(stages), std::move(factors),
                            std::move(render)};
  spec.validate();
  return spec;
}

Json planted_options_to_json(const PlantedOptions& o) {
  Json j;
  j["version"] = kSchemaVersion;
  j["kind"] = "planted_options";
  j["seed"] = o.seed;
  j["factors_per_level"] = o.factors_per_level;
  j["num_layers"] = o.num_layers;
  j["per_layer_dim"] = o.per_layer_dim;
  j["dim"] = o.dim;
  if (o.stage_map) j["stage_map"] = stage_map_to_json(*o.stage_map);
  j["sharpness"] = o.sharpness;
  j["bias_scale"] = o.bias_scale;
  j["frozen_count"] = o.frozen_count;
  j["frozen_correlation"] = o.frozen_correlation;
  j["constant_count"] = o.constant_count;
  j["constant_value"] = o.constant_value;
  j["nuisance"] = o.nuisance;
  if (o.entanglement) {
    j["entanglement"] = {{"level", std::string(to_string(o.entanglement->level))},
                         {"first", o.entanglement->first},
                         {"second", o.entanglement->second},
                         {"cosine", o.entanglement->cosine}};
  }
  j["render_width"] = o.render_width;
  j["render_height"] = o.render_height;
  return j;
}

PlantedOptions planted_options_from_json(const Json& j) {
  check_version(j);
  require(field<std::string>(j, "kind") == "planted_options", "not a planted options document");
  static const std::set<std::string> known = {
      "version",        "kind",          "seed",           "factors_per_level", "num_layers",
      "per_layer_dim",  "dim",           "stage_map",      "sharpness",         "bias_scale",
      "frozen_count",   "frozen_correlation", "constant_count", "constant_value", "nuisance",
      "entanglement",   "render_width",  "render_height"};
  for (const auto& [key, value] : j.items()) require(known.count(key) > 0, "unknown planted option '" + key + "'");
  PlantedOptions o;
  o.seed = field_or<std::uint64_t>(j, "seed", o.seed);
  o.factors_per_level = field_or<std::size_t>(j, "factors_per_level", o.factors_per_level);
  o.num_layers = field_or<std::size_t>(j, "num_layers", o.num_layers);
  o.per_layer_dim = field_or<std::size_t>(j, "per_layer_dim", o.per_layer_dim);
  o.dim = field_or<std::size_t>(j, "dim", o.dim);
  if (j.contains("stage_map")) o.stage_map = stage_map_from_json(member(j, "stage_map"), o.num_layers);
  o.sharpness = field_or<double>(j, "sharpness", o.sharpness);
  o.bias_scale = field_or<double>(j, "bias_scale", o.bias_scale);
  o.frozen_count = field_or<std::size_t>(j, "frozen_count", o.frozen_count);
  o.frozen_correlation = field_or<double>(j, "frozen_correlation", o.frozen_correlation);
  o.constant_count = field_or<std::size_t>(j, "constant_count", o.constant_count);
  o.constant_value = field_or<double>(j, "constant_value", o.constant_value);
  o.nuisance = field_or<std::vector<double>>(j, "nuisance", o.nuisance);
  if (j.contains("entanglement")) {
    const auto& je = member(j, "entanglement");
    Entanglement e;
    e.level = level_from_string(field_or<std::string>(je, "level", std::string(to_string(e.level))));
    e.first = field_or<std::size_t>(je, "first", e.first);
    e.second = field_or<std::size_t>(je, "second", e.second);
    e.cosine = field_or<double>(je, "cosine", e.cosine);
    o.entanglement = e;
  }
  o.render_width = field_or<std::size_t>(j, "render_width", o.render_width);
  o.render_height = field_or<std::size_t>(j, "render_height", o.render_height);
  return o;
}

PlantedGenerator load_planted(const Json& j) {
  const auto kind = field<std::string>(j, "kind");
  if (kind == "planted_options") return make_planted_generator(planted_options_from_json(j));
  if (kind == "planted_spec") return make_planted_generator(planted_spec_from_json(j));
  throw Error(ErrorCode::Config, "unknown planted document kind '" + kind + "'");
}

// --- Report tables ---------------------------------------------------------

namespace {

std::string level_of(const ConceptCatalog& catalog, const std::string& id) {
  const auto* c = catalog.find(id);
  return c ? std::string(to_string(c->level)) : std::string();
}

}  // namespace

CsvTable training_summary_table(std::span<const TrainingReport> reports, const ConceptCatalog& catalog) {
  CsvTable t;
  t.header = {"concept_id",       "level",  "positive_count", "negative_count", "train_accuracy",
              "holdout_accuracy", "offset", "regularization", "epochs",         "tolerance",
              "svm_seed"};
  for (const auto& r : reports) {
    t.rows.push_back({r.concept_id, level_of(catalog, r.concept_id), std::to_string(r.positive_count),
                      std::to_string(r.negative_count), format_double(r.train_accuracy),
                      format_double(r.holdout_accuracy), format_double(r.boundary.offset),
                      format_double(r.svm.regularization), std::to_string(r.svm.epochs),
                      format_double(r.svm.tolerance), std::to_string(r.svm.seed)});
  }
  return t;
}

std::vector<TrainingReport> parse_training_summary(const CsvTable& t) {
  const auto c_id = t.column("concept_id"), c_pos = t.column("positive_count"), c_neg = t.column("negative_count"),
             c_tr = t.column("train_accuracy"), c_ho = t.column("holdout_accuracy"), c_off = t.column("offset"),
             c_reg = t.column("regularization"), c_ep = t.column("epochs"), c_tol = t.column("tolerance"),
             c_seed = t.column("svm_seed");
  std::vector<TrainingReport> out;
  for (const auto& row : t.rows) {
    TrainingReport r;
    r.concept_id = row[c_id];
    r.boundary.concept_id = row[c_id];
    r.positive_count = std::stoull(row[c_pos]);
    r.negative_count = std::stoull(row[c_neg]);
    r.train_accuracy = parse_double(row[c_tr]);
    r.holdout_accuracy = parse_double(row[c_ho]);
    r.boundary.offset = parse_double(row[c_off]);
    r.svm.regularization = parse_double(row[c_reg]);
    r.svm.epochs = std::stoull(row[c_ep]);
    r.svm.tolerance = parse_double(row[c_tol]);
    r.svm.seed = std::stoull(row[c_seed]);
    out.push_back(std::move(r));
  }
  return out;
}

CsvTable rescore_table(std::span<const RescoreResult> results, const ConceptCatalog& catalog) {
  CsvTable t;
  t.header = {"concept_id", "level", "delta_s"};
  std::vector<std::string> stage_names;
  for (const auto& r : results) {
    if (r.per_stage) {
      for (const auto& [name, v] : *r.per_stage) stage_names.push_back(name);
      break;
    }
  }
  for (const auto& s : stage_names) t.header.push_back("stage:" + s);
  for (const auto& s : stage_names) t.header.push_back("share:" + s);
  for (const auto& r : results) {
    std::vector<std::string> row{r.concept_id, level_of(catalog, r.concept_id), format_double(r.delta_s)};
    if (!stage_names.empty()) {
      if (!r.per_stage || !r.normalized_per_stage || r.per_stage->size() != stage_names.size()) {
        throw Error(ErrorCode::InvalidArgument, "results mix different stage maps");
      }
      for (const auto& [name, v] : *r.per_stage) row.push_back(format_double(v));
      for (const auto& [name, v] : *r.normalized_per_stage) row.push_back(format_double(v));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<RescoreResult> parse_rescore_table(const CsvTable& t) {
  const auto c_id = t.column("concept_id"), c_ds = t.column("delta_s");
  std::vector<std::pair<std::string, std::size_t>> raw_cols, share_cols;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    const auto& h = t.header[i];
    if (h.rfind("stage:", 0) == 0) raw_cols.emplace_back(h.substr(6), i);
    if (h.rfind("share:", 0) == 0) share_cols.emplace_back(h.substr(6), i);
  }
  std::vector<RescoreResult> out;
  for (const auto& row : t.rows) {
    RescoreResult r;
    r.concept_id = row[c_id];
    r.delta_s = parse_double(row[c_ds]);
    if (!raw_cols.empty()) {
      StageScores raw, shares;
      for (const auto& [name, i] : raw_cols) raw.emplace_back(name, parse_double(row[i]));
      for (const auto& [name, i] : share_cols) shares.emplace_back(name, parse_double(row[i]));
      r.per_stage = std::move(raw);
      r.normalized_per_stage = std::move(shares);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace hierprobe
