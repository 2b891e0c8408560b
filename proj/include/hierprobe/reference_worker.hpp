#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>

#include "hierprobe/image.hpp"
#include "hierprobe/planted.hpp"
#include "hierprobe/serialization.hpp"

namespace hierprobe {

/// Misbehaviors a reference worker can be told to show on its n-th request
/// (1-based), for exercising the client's failure handling.
struct FaultPlan {
  std::optional<std::size_t> stall_on;         // never answer
  std::optional<std::size_t> garbage_on;       // write a non-JSON line
  std::optional<std::size_t> out_of_range_on;  // report a score of 1.7
  std::optional<std::size_t> wrong_id_on;      // echo id + 1
  std::optional<std::size_t> exit_on;          // exit without answering
};

/// Labels of a planted render: 1 left of the wall line, 2 the line itself
/// (achromatic pixels), 3 right of it; 0 everywhere when no line is visible.
SegmentationMask segment_planted(const ImageBuffer& image);

/// Answers one protocol request with the planted generator. Requests that
/// cannot be served produce an error object instead of throwing. Scores are
/// computed from the layer codes alone (stochastic inputs read as zero).
Json handle_planted_request(const PlantedGenerator& generator, const Json& request);

/// Serves requests line by line until `in` closes. Returns the exit status.
int serve_planted(std::istream& in, std::ostream& out, const PlantedGenerator& generator, const FaultPlan& faults);

}  // namespace hierprobe
