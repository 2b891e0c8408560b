#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hierprobe/latent.hpp"
#include "hierprobe/rescoring.hpp"

namespace hierprobe {

/// Horizontal bars, one per (label, value), in the given order.
std::string svg_bar_chart(const std::vector<std::pair<std::string, double>>& bars, const std::string& title,
                          const std::string& value_label);

/// One stacked bar of normalized stage shares per result. Results without
/// any non-zero share are drawn as a hatched "none" bar.
std::string svg_stage_shares(const std::vector<RescoreResult>& results, const std::string& title);

/// Matrix of cells shaded by value / row diagonal, with the values printed.
std::string svg_matrix(const Matrix& m, const std::vector<std::string>& labels, const std::string& title);

}  // namespace hierprobe
