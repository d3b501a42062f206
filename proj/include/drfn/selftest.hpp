#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "drfn/model.hpp"

namespace drfn {

/// Outcome of one named verification.
struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Randomised gradient comparison between an analytic backward and
/// finite_difference_grad. Every instance is drawn from `seed + instance`.
struct GradCheckOptions {
  std::uint64_t seed = 2024;
  std::size_t instances = 20;
  double tolerance = 0.0;  ///< 0 selects 1e-3 (float) or 1e-6 (double)
  /// 0 selects 1e-3 (float) or 1e-6 (double). Network checks difference a
  /// double copy of the weights and default to 1e-6 for both.
  double epsilon = 0.0;
  /// Multiplies the analytic gradients before comparison. Anything other
  /// than 1 must make the check fail; used to prove the harness can fail.
  double analytic_scale = 1.0;
};

struct GradCheckReport {
  std::size_t instances = 0;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  /// Network checks only: elements compared, and elements whose stencil
  /// crossed a PReLU kink and were left out.
  std::size_t compared = 0;
  std::size_t excluded = 0;
  bool passed() const { return max_relative_error <= tolerance && excluded * 10 <= compared + excluded; }
};

template <typename T>
GradCheckReport check_conv2d_gradients(const GradCheckOptions& opts);
template <typename T>
GradCheckReport check_transposed_conv2d_gradients(const GradCheckOptions& opts);
template <typename T>
GradCheckReport check_prelu_gradients(const GradCheckOptions& opts);
template <typename T>
GradCheckReport check_mse_gradients(const GradCheckOptions& opts);
/// Whole tiny networks (channels <= 3, cycles <= 2, inputs <= 4x4, every scale
/// and level count), covering the input and every registry tensor.
template <typename T>
GradCheckReport check_network_gradients(const GradCheckOptions& opts);

/// Per-layer-group learnable counts, in registry order of first appearance.
struct ParamGroup {
  std::string group;
  std::uint64_t count;
};
std::vector<ParamGroup> param_breakdown(const DrfnModel& m);

/// Scalars removed by sharing one block's three convolutions across `cycles`
/// iterations instead of unrolling them: (cycles - 1) * shared count.
std::uint64_t recurrent_savings(std::uint32_t channels, std::uint32_t cycles);

/// Largest |shared - unrolled| over random inputs, where "unrolled" stacks
/// `cycles` single-cycle copies of the block with duplicated weights.
double unrolled_block_max_difference(std::uint32_t channels, std::uint32_t cycles, std::uint64_t seed);

struct SelftestOptions {
  /// Name of a gradient check whose analytic side is deliberately perturbed.
  std::string perturb;
  std::uint64_t seed = 2024;
};

/// Gradient oracles (float and double), parameter-count identities and
/// unrolled-equivalence checks. `progress` receives each result as it lands.
std::vector<CheckResult> run_selftest(const SelftestOptions& opts = {},
                                      const std::function<void(const CheckResult&)>& progress = {});

}  // namespace drfn
