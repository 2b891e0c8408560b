#include "hierprobe/generator.hpp"

#include <cmath>

#include "hierprobe/error.hpp"

namespace hierprobe {

GeneratorHandle::GeneratorHandle(std::shared_ptr<const GeneratorBackend> backend)
    : backend_(std::move(backend)) {
  if (!backend_) throw Error(ErrorCode::InvalidArgument, "null generator backend");
}

void check_code_shape(const GeneratorHandle& handle, const LayerwiseCode& code) {
  const auto& s = handle.space();
  if (code.num_layers() != s.num_layers || code.per_layer_dim() != s.per_layer_dim) {
    throw Error(ErrorCode::ShapeMismatch,
                "code has " + std::to_string(code.num_layers()) + "x" +
                    std::to_string(code.per_layer_dim()) + " layers, generator expects " +
                    std::to_string(s.num_layers) + "x" + std::to_string(s.per_layer_dim));
  }
}

std::vector<ScoreVector> score_batch(const GeneratorHandle& handle,
                                     std::span<const LayerwiseCode> codes,
                                     const ConceptCatalog& concepts) {
  if (codes.empty()) throw Error(ErrorCode::EmptyBatch, "no codes to score");
  for (const auto& c : concepts.concepts()) {
    if (!handle.catalog().find(c.id)) throw Error(ErrorCode::UnknownConcept, c.id);
  }
  for (const auto& code : codes) check_code_shape(handle, code);

  auto raw = handle.backend().score(codes, concepts);
  if (raw.size() != codes.size()) {
    throw Error(ErrorCode::ProtocolViolation, "expected " + std::to_string(codes.size()) +
                                                  " score vectors, got " + std::to_string(raw.size()));
  }
  std::vector<ScoreVector> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    for (const auto& c : concepts.concepts()) {
      const auto it = raw[i].find(c.id);
      if (it == raw[i].end()) {
        throw Error(ErrorCode::ProtocolViolation, "score vector " + std::to_string(i) + " lacks '" + c.id + "'");
      }
      const double v = it->second;
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw Error(ErrorCode::ScoreOutOfRange,
                    "concept '" + c.id + "' scored " + std::to_string(v) + " on code " + std::to_string(i));
      }
      out[i].emplace(c.id, v);
    }
  }
  return out;
}

std::vector<ImageBuffer> generate_batch(const GeneratorHandle& handle,
                                        std::span<const LayerwiseCode> codes) {
  if (codes.empty()) throw Error(ErrorCode::EmptyBatch, "no codes to render");
  for (const auto& code : codes) check_code_shape(handle, code);
  auto images = handle.backend().generate(codes);
  if (images.size() != codes.size()) {
    throw Error(ErrorCode::ProtocolViolation, "expected " + std::to_string(codes.size()) +
                                                  " images, got " + std::to_string(images.size()));
  }
  return images;
}

}  // namespace hierprobe
