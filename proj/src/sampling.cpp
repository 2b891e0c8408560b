#include "hierprobe/sampling.hpp"

#include "hierprobe/error.hpp"
#include "hierprobe/random.hpp"

namespace hierprobe {

std::vector<LatentCode> sample_latents(const LatentSpaceSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "sample count must be positive");
  Rng rng(seed);
  std::vector<LatentCode> out(n);
  const auto dim = static_cast<Eigen::Index>(spec.dim);
  for (auto& code : out) {
    code.space = spec.space;
    code.values.resize(dim);
    for (Eigen::Index j = 0; j < dim; ++j) code.values[j] = rng.normal();
  }
  return out;
}

std::vector<LayerwiseCode> prepare_codes(const GeneratorHandle& handle,
                                         const std::vector<LatentCode>& latents, std::uint64_t seed) {
  std::vector<LayerwiseCode> codes;
  codes.reserve(latents.size());
  for (const auto& z : latents) {
    // Z-space handles have no mapping network here; their draws feed the
    // transform directly.
    LatentCode w{z.values, SpaceTag::W};
    codes.push_back(project_to_layerwise(w, handle.transform()));
  }
  handle.backend().attach_stochastic(codes, seed);
  return codes;
}

CodeSample sample_codes(const GeneratorHandle& handle, std::size_t n, std::uint64_t seed) {
  CodeSample s;
  s.latents = sample_latents(handle.space(), n, derive_seed(seed, "latents"));
  s.codes = prepare_codes(handle, s.latents, derive_seed(seed, "stochastic"));
  return s;
}

}  // namespace hierprobe
