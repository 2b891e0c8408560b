#pragma once

#include <cstdint>
#include <vector>

#include "hierprobe/generator.hpp"
#include "hierprobe/latent.hpp"

namespace hierprobe {

/// n codes with i.i.d. standard-normal coordinates. Identical (spec, n, seed)
/// give bit-identical output.
std::vector<LatentCode> sample_latents(const LatentSpaceSpec& spec, std::size_t n, std::uint64_t seed);

/// Latent draws together with their layer-wise codes.
struct CodeSample {
  std::vector<LatentCode> latents;
  std::vector<LayerwiseCode> codes;
};

/// Projects latents through the handle's transform and attaches the
/// backend's per-sample stochastic inputs (seeded from `seed`).
std::vector<LayerwiseCode> prepare_codes(const GeneratorHandle& handle,
                                         const std::vector<LatentCode>& latents, std::uint64_t seed);

/// sample_latents followed by prepare_codes, with independent sub-streams.
CodeSample sample_codes(const GeneratorHandle& handle, std::size_t n, std::uint64_t seed);

}  // namespace hierprobe
