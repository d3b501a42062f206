#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drfn/ops.hpp"
#include "drfn/tensor.hpp"

namespace drfn {

/// Architecture hyperparameters.
///
/// scale selects the upsampling front-end: x2, x4 and x8 stack one, two and
/// three stride-2 transposed convolutions; x3 uses a single stride-3 stage.
/// levels selects which recovery stages feed the fusion layer: 3 taps the
/// front-end and both blocks, 2 drops the block-1 tap, 1 keeps only the
/// block-2 tap.
struct ModelConfig {
  std::uint32_t scale = 4;
  std::uint32_t channels = 64;
  std::uint32_t cycles = 10;
  std::uint32_t blocks = 2;
  std::uint32_t levels = 3;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class ParamKind { kWeight, kBias, kSlope };

template <typename T>
struct UpsampleStage {
  TransposedConv2dParams<T> tconv;
  PReluParams<T> prelu;
};

/// One residual unit, applied `cycles` times with the same parameters:
/// x <- conv_c(prelu_b(conv_b(prelu_a(conv_a(x))))) + x
template <typename T>
struct RecurrentResidualBlock {
  Conv2dParams<T> conv_a, conv_b, conv_c;
  PReluParams<T> prelu_a, prelu_b;
};

template <typename T>
struct BasicDrfnModel {
  ModelConfig config;
  std::vector<UpsampleStage<T>> upsample;
  std::vector<RecurrentResidualBlock<T>> blocks;
  /// One per active level, in tap order (see level_taps()).
  std::vector<Conv2dParams<T>> level_convs;
  Conv2dParams<T> fusion;
};

using DrfnModel = BasicDrfnModel<float>;
using DrfnModelD = BasicDrfnModel<double>;

template <typename T>
using TensorMap = std::map<std::string, BasicTensor<T>>;

template <typename T>
using GradMap = TensorMap<T>;

template <typename T>
struct ParamSlot {
  std::string name;
  ParamKind kind;
  T* tensor;
};

/// Feature stages are numbered 0 (front-end), 1 (block 1), 2 (block 2).
/// Returns the stages tapped for the given level count.
std::vector<std::size_t> level_taps(std::uint32_t levels);

/// Transposed-conv kernel / geometry used by each upsampling stage for a scale.
struct UpsampleGeometry {
  std::size_t stages;
  std::size_t kernel;
  ConvGeometry geometry;
};
UpsampleGeometry upsample_geometry(std::uint32_t scale);

/// He-normal weights (std sqrt(2 / (in_c*k*k))), zero biases, PReLU slopes 0.33.
template <typename T>
BasicDrfnModel<T> build_drfn(const ModelConfig& cfg, std::uint64_t seed);

/// Every distinct learnable tensor exactly once, in a fixed order.
template <typename T>
std::vector<ParamSlot<BasicTensor<T>>> registry(BasicDrfnModel<T>& m);
template <typename T>
std::vector<ParamSlot<const BasicTensor<T>>> registry(const BasicDrfnModel<T>& m);

template <typename T>
TensorMap<T> registry_snapshot(const BasicDrfnModel<T>& m);

template <typename T>
std::uint64_t param_count(const BasicDrfnModel<T>& m);

template <typename U, typename T>
BasicDrfnModel<U> cast_model(const BasicDrfnModel<T>& m);

template <typename T>
struct BlockCycleTape {
  BasicTensor<T> input, a, pa, b, pb;
};

/// Intermediates retained by forward() for backward().
template <typename T>
struct ForwardTape {
  BasicTensor<T> input;
  std::vector<BasicTensor<T>> stage_inputs;
  std::vector<BasicTensor<T>> stage_pre;
  /// [front-end output, block 1 output, block 2 output]
  std::vector<BasicTensor<T>> features;
  std::vector<std::vector<BlockCycleTape<T>>> cycles;
  BasicTensor<T> fused_input;
  Dims output_dims;
};

/// Applies one recurrent block for `cycles` iterations.
template <typename T>
BasicTensor<T> recurrent_block_forward(const RecurrentResidualBlock<T>& block, const BasicTensor<T>& x,
                                       std::uint32_t cycles, std::vector<BlockCycleTape<T>>* tape = nullptr);

/// x is (n,1,H,W); returns (n,1,scale*H,scale*W). The tape is filled when non-null.
template <typename T>
BasicTensor<T> forward(const BasicDrfnModel<T>& m, const BasicTensor<T>& x, ForwardTape<T>* tape = nullptr);

/// Gradients of <hr, grad_hr> with respect to every registry tensor. Shared
/// recurrent parameters receive the sum of their per-cycle contributions.
template <typename T>
GradMap<T> backward(const BasicDrfnModel<T>& m, const ForwardTape<T>& tape, const BasicTensor<T>& grad_hr,
                    BasicTensor<T>* grad_input = nullptr);

// Checkpoints ---------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const DrfnModel& m);

/// Rebuilds a model from checkpoint bytes. When cycles_override is set the
/// stored weights are loaded into a model with that cycle count.
DrfnModel decode_checkpoint(std::span<const std::uint8_t> bytes,
                            std::optional<std::uint32_t> cycles_override = std::nullopt);

void save_checkpoint(const DrfnModel& m, const std::filesystem::path& path);
DrfnModel load_checkpoint(const std::filesystem::path& path,
                          std::optional<std::uint32_t> cycles_override = std::nullopt);

}  // namespace drfn
