#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hierprobe/latent.hpp"
#include "hierprobe/manipulation.hpp"
#include "hierprobe/planted.hpp"
#include "hierprobe/rescoring.hpp"
#include "hierprobe/trainer.hpp"

namespace hierprobe {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// 17 significant digits: parse_double(format_double(x)) == x for finite x.
std::string format_double(double value);
double parse_double(std::string_view text);

void write_text_file(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);
Json read_json_file(const std::filesystem::path& path);
/// Two-space indented, trailing newline.
void write_json_file(const std::filesystem::path& path, const Json& doc);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;  // throws Config when absent
};

std::string to_csv(const CsvTable& table);
CsvTable parse_csv(std::string_view text);

// Vectors and matrices.
Json to_json(const Vector& v);
Vector vector_from_json(const Json& j);
Json to_json(const Matrix& m);  // array of rows
Matrix matrix_from_json(const Json& j);

// Boundaries: {"version", "concept_id", "space", "normal", "offset",
// "train_accuracy", "holdout_accuracy"}.
struct BoundaryRecord {
  Boundary boundary;
  double train_accuracy = 0.0;
  double holdout_accuracy = 0.0;
};
Json boundary_to_json(const BoundaryRecord& record);
/// Rejects other versions and normals that are not unit-norm.
BoundaryRecord boundary_from_json(const Json& j);

// Codes.
Json code_to_json(const LayerwiseCode& code);
LayerwiseCode layerwise_code_from_json(const Json& j);
Json code_to_json(const LatentCode& code);
LatentCode latent_code_from_json(const Json& j);

// Stage maps: [{"name", "begin", "end"}, ...] or a preset name.
Json stage_map_to_json(const StageMap& map);
StageMap stage_map_from_json(const Json& j, std::size_t num_layers);

// Transition matrices.
Json transition_to_json(const TransitionMatrix& m);
TransitionMatrix transition_from_json(const Json& j);
/// Rows are "before" labels, columns "after" labels, both ascending.
CsvTable transition_table(const TransitionMatrix& m);

// Planted generators. A file holds either a full spec ("kind": "planted_spec")
// or construction options ("kind": "planted_options").
Json planted_spec_to_json(const PlantedGeneratorSpec& spec);
PlantedGeneratorSpec planted_spec_from_json(const Json& j);
Json planted_options_to_json(const PlantedOptions& options);
PlantedOptions planted_options_from_json(const Json& j);
PlantedGenerator load_planted(const Json& j);

// Report tables. Parsing a table reproduces the fields it carries exactly.
CsvTable training_summary_table(std::span<const TrainingReport> reports, const ConceptCatalog& catalog);
std::vector<TrainingReport> parse_training_summary(const CsvTable& table);
CsvTable rescore_table(std::span<const RescoreResult> results, const ConceptCatalog& catalog);
std::vector<RescoreResult> parse_rescore_table(const CsvTable& table);

}  // namespace hierprobe
