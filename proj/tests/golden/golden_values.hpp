#pragma once

// Frozen outputs of tests/oracles/rescore_golden.py (adaptive quadrature,
// epsrel 1e-13): E[max(sigmoid(s(t + step c)) - sigmoid(s t), 0)], t ~ N(0, 1).
namespace hierprobe::golden {

inline constexpr double kGainS1C1Step2 = 0.3445374814698765;
inline constexpr double kGainS1C07Step2 = 0.26338122411501175;
inline constexpr double kGainS2C1Step2 = 0.4323323583816936;

}  // namespace hierprobe::golden
