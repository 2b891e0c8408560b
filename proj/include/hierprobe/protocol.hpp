#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hierprobe/generator.hpp"
#include "hierprobe/serialization.hpp"

// Worker wire protocol: one JSON object per line over the worker's stdin and
// stdout. Every response echoes the request id; failures are reported as
// {"id", "error": {"code", "message"}}.
namespace hierprobe::protocol {

Json spec_request(std::int64_t id);
Json score_request(std::int64_t id, std::span<const LayerwiseCode> codes);
/// Images are written as PNG files into `out_dir`.
Json generate_request(std::int64_t id, std::span<const LayerwiseCode> codes, const std::filesystem::path& out_dir);
Json segment_request(std::int64_t id, std::span<const std::filesystem::path> images);
/// `id` is null when the request could not be parsed far enough to read one.
Json error_response(const Json& id, std::string_view code, std::string_view message);

/// Per-code layer lists of a score/generate request.
std::vector<LayerwiseCode> codes_from_request(const Json& request);

struct WorkerSpec {
  LatentSpaceSpec space;
  std::vector<SemanticConcept> concepts;
  /// Optional {"weight", "bias"} block; absent means w is broadcast to every layer.
  std::optional<StyleTransform> transform;
};

WorkerSpec parse_spec_response(const Json& response);
std::vector<ScoreVector> parse_score_response(const Json& response);
std::vector<std::filesystem::path> parse_path_list(const Json& response, const char* key);

/// Structural check of a request; empty when it is well-formed.
std::optional<std::string> check_request(const Json& request);
/// Structural check of a response against the request it answers.
std::optional<std::string> check_response(const Json& request, const Json& response);

struct TranscriptCheck {
  bool ok = true;
  std::size_t line = 0;  // 1-based line of the first problem
  std::string message;
  std::size_t exchanges = 0;
};

/// A transcript alternates request and response lines. Checks schemas and
/// that every response echoes the id of the request just before it.
TranscriptCheck check_transcript(std::string_view text);

}  // namespace hierprobe::protocol
