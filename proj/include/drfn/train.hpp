#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "drfn/dataset.hpp"
#include "drfn/model.hpp"

namespace drfn {

/// Optimisation hyperparameters. Defaults are the full-scale recipe; tiny
/// desk-scale models train better with lr_initial = 0.01.
struct TrainConfig {
  std::uint32_t batch = 32;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lr_initial = 0.1;
  double lr_decay = 0.1;
  std::uint32_t lr_step_epochs = 10;
  double clip_A = 0.01;
  std::uint32_t epochs = 1;
  std::uint64_t seed = 1;
  /// Stop after this many iterations in total (0 = no cap).
  std::uint64_t max_iterations = 0;
  /// Stop once the mean epoch loss fails to improve by plateau_tolerance
  /// (relative) for plateau_patience consecutive epochs.
  bool stop_on_plateau = false;
  double plateau_tolerance = 1e-5;
  std::uint32_t plateau_patience = 3;

  void validate() const;
};

template <typename T>
struct OptimizerState {
  TensorMap<T> velocity;
};

template <typename T>
struct LossAndGrad {
  double loss;
  BasicTensor<T> grad;
};

/// (1/2N) sum_i ||target_i - pred_i||^2 with N = pred.n(); grad = (pred - target)/N.
template <typename T>
LossAndGrad<T> mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

/// Clamps every gradient element to [-clip_A/lr, clip_A/lr].
template <typename T>
GradMap<T> clip_gradients(GradMap<T> grads, double lr, double clip_A);

template <typename T>
OptimizerState<T> init_optimizer(const BasicDrfnModel<T>& m);

/// g' = g + weight_decay*theta (weights only); v = momentum*v + g'; theta -= lr*v.
/// grads and state must be keyed exactly by the slot names.
template <typename T>
void sgd_step(std::span<const ParamSlot<BasicTensor<T>>> params, const GradMap<T>& grads, OptimizerState<T>& state,
              double lr, const TrainConfig& cfg);

template <typename T>
void sgd_step(BasicDrfnModel<T>& m, const GradMap<T>& grads, OptimizerState<T>& state, double lr,
              const TrainConfig& cfg);

/// lr_initial * lr_decay^floor(epoch / lr_step_epochs)
double lr_at_epoch(const TrainConfig& cfg, std::uint32_t epoch);

struct IterationEvent {
  std::uint64_t iteration;  ///< 1-based, counted across epochs
  std::uint32_t epoch;      ///< 0-based
  double lr;
  double loss;
};

struct EpochEvent {
  std::uint32_t epoch;
  double mean_loss;
  std::uint64_t iterations;
};

struct TrainSink {
  std::function<void(const IterationEvent&)> on_iteration;
  /// Called with the model as it stands after each completed epoch.
  std::function<void(const EpochEvent&, const DrfnModel&)> on_epoch;
};

struct TrainResult {
  std::vector<double> losses;  ///< one per iteration
  std::uint64_t iterations = 0;
  std::uint32_t epochs_completed = 0;
  bool stopped_on_plateau = false;
};

/// Stacks pairs[idx...] into (n,1,p,p) / (n,1,sp,sp) batches.
std::pair<Tensor, Tensor> assemble_batch(const PatchArchive& archive, std::span<const std::size_t> indices);

/// Runs epochs of shuffled mini-batches through forward, mse_loss, backward,
/// clip_gradients and sgd_step. The shuffle for epoch e is seeded from
/// (cfg.seed, e). Throws DivergenceError on a non-finite loss.
TrainResult train_loop(DrfnModel& model, const PatchArchive& archive, const TrainConfig& cfg,
                       const TrainSink& sink = {});

}  // namespace drfn
