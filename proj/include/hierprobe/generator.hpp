#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hierprobe/image.hpp"
#include "hierprobe/latent.hpp"

namespace hierprobe {

/// Concept id -> score in [0, 1].
using ScoreVector = std::map<std::string, double>;

enum class GeneratorKind { Planted, ExternalWorker };

/// What a generator must provide. Backends are immutable from the caller's
/// point of view and must be callable from several threads at once.
class GeneratorBackend {
public:
  virtual ~GeneratorBackend() = default;

  virtual GeneratorKind kind() const = 0;
  virtual const LatentSpaceSpec& space() const = 0;
  /// The W -> layer-wise map. Backends without one broadcast w to all layers.
  virtual const StyleTransform& transform() const = 0;
  virtual const ConceptCatalog& catalog() const = 0;

  /// One score map per code covering at least `concepts`.
  virtual std::vector<ScoreVector> score(std::span<const LayerwiseCode> codes,
                                         const ConceptCatalog& concepts) const = 0;
  virtual std::vector<ImageBuffer> generate(std::span<const LayerwiseCode> codes) const = 0;

  /// Draws the per-sample stochastic inputs of freshly projected codes.
  /// Backends without such inputs leave the codes alone.
  virtual void attach_stochastic(std::span<LayerwiseCode> /*codes*/, std::uint64_t /*seed*/) const {}
};

/// Shared, cheap-to-copy reference to a generator.
class GeneratorHandle {
public:
  explicit GeneratorHandle(std::shared_ptr<const GeneratorBackend> backend);

  GeneratorKind kind() const { return backend_->kind(); }
  const LatentSpaceSpec& space() const { return backend_->space(); }
  const StyleTransform& transform() const { return backend_->transform(); }
  const ConceptCatalog& catalog() const { return backend_->catalog(); }
  const GeneratorBackend& backend() const { return *backend_; }

private:
  std::shared_ptr<const GeneratorBackend> backend_;
};

/// Scores every code for every concept in `concepts`, order-preserving. The
/// result covers exactly the requested concepts; scores outside [0, 1] or
/// non-finite raise ScoreOutOfRange rather than being clamped.
std::vector<ScoreVector> score_batch(const GeneratorHandle& handle,
                                     std::span<const LayerwiseCode> codes,
                                     const ConceptCatalog& concepts);

std::vector<ImageBuffer> generate_batch(const GeneratorHandle& handle,
                                        std::span<const LayerwiseCode> codes);

/// Throws ShapeMismatch unless the code has the handle's layer layout.
void check_code_shape(const GeneratorHandle& handle, const LayerwiseCode& code);

}  // namespace hierprobe
