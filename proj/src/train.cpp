#include "drfn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace drfn {

void TrainConfig::validate() const {
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0,1)");
  if (!(lr_initial > 0.0)) throw ConfigError("lr_initial must be > 0");
  if (!(lr_decay > 0.0)) throw ConfigError("lr_decay must be > 0");
  if (lr_step_epochs < 1) throw ConfigError("lr_step_epochs must be >= 1");
  if (!(clip_A > 0.0)) throw ConfigError("clip_A must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

template <typename T>
LossAndGrad<T> mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  if (pred.dims() != target.dims()) {
    throw ShapeError("mse_loss: pred " + pred.dims().str() + " vs target " + target.dims().str());
  }
  const double n = static_cast<double>(pred.n());
  LossAndGrad<T> out{0.0, BasicTensor<T>(pred.dims())};
  double sse = 0.0;
  auto p = pred.data();
  auto t = target.data();
  auto g = out.grad.data();
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double d = static_cast<double>(p[k]) - static_cast<double>(t[k]);
    sse += d * d;
    g[k] = static_cast<T>(d / n);
  }
  out.loss = sse / (2.0 * n);
  return out;
}

template <typename T>
GradMap<T> clip_gradients(GradMap<T> grads, double lr, double clip_A) {
  if (!(lr > 0.0)) throw ConfigError("clip_gradients: learning rate must be > 0");
  // Largest T not above clip_A / lr, so the bound also holds in exact arithmetic.
  const double exact = clip_A / lr;
  T bound = static_cast<T>(exact);
  if (static_cast<double>(bound) > exact) bound = std::nextafter(bound, T(0));
  for (auto& [name, g] : grads) {
    for (auto& v : g.data()) v = std::clamp(v, -bound, bound);
  }
  return grads;
}

template <typename T>
OptimizerState<T> init_optimizer(const BasicDrfnModel<T>& m) {
  OptimizerState<T> s;
  for (const auto& slot : registry(m)) s.velocity.emplace(slot.name, BasicTensor<T>(slot.tensor->dims()));
  return s;
}

template <typename T>
void sgd_step(std::span<const ParamSlot<BasicTensor<T>>> slots, const GradMap<T>& grads, OptimizerState<T>& state,
              double lr, const TrainConfig& cfg) {
  if (grads.size() != slots.size() || state.velocity.size() != slots.size()) {
    throw StateError("sgd_step: registry has " + std::to_string(slots.size()) + " tensors, gradients " +
                     std::to_string(grads.size()) + ", velocity " + std::to_string(state.velocity.size()));
  }
  for (const auto& slot : slots) {
    auto g_it = grads.find(slot.name);
    auto v_it = state.velocity.find(slot.name);
    if (g_it == grads.end() || v_it == state.velocity.end()) {
      throw StateError("sgd_step: no gradient or velocity for \"" + slot.name + "\"");
    }
    if (g_it->second.dims() != slot.tensor->dims() || v_it->second.dims() != slot.tensor->dims()) {
      throw StateError("sgd_step: dims disagree for \"" + slot.name + "\"");
    }
    const double decay = slot.kind == ParamKind::kWeight ? cfg.weight_decay : 0.0;
    auto theta = slot.tensor->data();
    auto g = g_it->second.data();
    auto v = v_it->second.data();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double gd = static_cast<double>(g[k]) + decay * static_cast<double>(theta[k]);
      const double vel = cfg.momentum * static_cast<double>(v[k]) + gd;
      v[k] = static_cast<T>(vel);
      theta[k] = static_cast<T>(static_cast<double>(theta[k]) - lr * vel);
    }
  }
}

template <typename T>
void sgd_step(BasicDrfnModel<T>& m, const GradMap<T>& grads, OptimizerState<T>& state, double lr,
              const TrainConfig& cfg) {
  const auto slots = registry(m);
  sgd_step<T>(std::span(slots), grads, state, lr, cfg);
}

double lr_at_epoch(const TrainConfig& cfg, std::uint32_t epoch) {
  return cfg.lr_initial * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.lr_step_epochs));
}

std::pair<Tensor, Tensor> assemble_batch(const PatchArchive& archive, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ShapeError("assemble_batch: empty batch");
  const std::size_t p = archive.lr_patch;
  const std::size_t hp = p * archive.scale;
  Tensor lr(Dims{indices.size(), 1, p, p});
  Tensor hr(Dims{indices.size(), 1, hp, hp});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const PatchPair& pair = archive.pairs.at(indices[i]);
    std::copy(pair.lr.data().begin(), pair.lr.data().end(), lr.sample(i).begin());
    std::copy(pair.hr.data().begin(), pair.hr.data().end(), hr.sample(i).begin());
  }
  return {std::move(lr), std::move(hr)};
}

TrainResult train_loop(DrfnModel& model, const PatchArchive& archive, const TrainConfig& cfg, const TrainSink& sink) {
  cfg.validate();
  if (archive.pairs.empty()) throw ConfigError("train_loop: archive holds no patch pairs");
  if (archive.scale != model.config.scale) {
    throw ConfigError("train_loop: archive scale " + std::to_string(archive.scale) + " != model scale " +
                      std::to_string(model.config.scale));
  }

  TrainResult result;
  OptimizerState<float> state = init_optimizer(model);
  std::vector<std::size_t> order(archive.pairs.size());
  double best_epoch_loss = std::numeric_limits<double>::infinity();
  std::uint32_t stale_epochs = 0;

  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(cfg.seed ^ (0x9E3779B97F4A7C15ull * (epoch + 1)));
    std::shuffle(order.begin(), order.end(), rng);

    const double lr = lr_at_epoch(cfg, epoch);
    double epoch_loss = 0.0;
    std::uint64_t epoch_iters = 0;
    bool capped = false;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      if (cfg.max_iterations && result.iterations >= cfg.max_iterations) {
        capped = true;
        break;
      }
      const std::size_t len = std::min<std::size_t>(cfg.batch, order.size() - start);
      auto [lr_batch, hr_batch] = assemble_batch(archive, std::span(order).subspan(start, len));

      ForwardTape<float> tape;
      const Tensor pred = forward(model, lr_batch, &tape);
      const auto loss = mse_loss(pred, hr_batch);
      ++result.iterations;
      if (!std::isfinite(loss.loss)) {
        throw DivergenceError("non-finite loss at iteration " + std::to_string(result.iterations) + " (epoch " +
                                  std::to_string(epoch) + ")",
                              result.iterations);
      }
      const GradMap<float> grads = clip_gradients(backward(model, tape, loss.grad), lr, cfg.clip_A);
      sgd_step(model, grads, state, lr, cfg);

      result.losses.push_back(loss.loss);
      epoch_loss += loss.loss;
      ++epoch_iters;
      if (sink.on_iteration) sink.on_iteration({result.iterations, epoch, lr, loss.loss});
    }
    if (epoch_iters == 0) break;
    ++result.epochs_completed;
    const double mean = epoch_loss / static_cast<double>(epoch_iters);
    if (sink.on_epoch) sink.on_epoch({epoch, mean, epoch_iters}, model);
    if (capped) break;

    if (cfg.stop_on_plateau) {
      if (mean < best_epoch_loss * (1.0 - cfg.plateau_tolerance)) {
        best_epoch_loss = mean;
        stale_epochs = 0;
      } else if (++stale_epochs >= cfg.plateau_patience) {
        result.stopped_on_plateau = true;
        break;
      }
    }
  }
  return result;
}

template LossAndGrad<float> mse_loss(const Tensor&, const Tensor&);
template LossAndGrad<double> mse_loss(const TensorD&, const TensorD&);
template GradMap<float> clip_gradients(GradMap<float>, double, double);
template GradMap<double> clip_gradients(GradMap<double>, double, double);
template OptimizerState<float> init_optimizer(const DrfnModel&);
template OptimizerState<double> init_optimizer(const DrfnModelD&);
template void sgd_step(DrfnModel&, const GradMap<float>&, OptimizerState<float>&, double, const TrainConfig&);
template void sgd_step(std::span<const ParamSlot<Tensor>>, const GradMap<float>&, OptimizerState<float>&, double,
                       const TrainConfig&);
template void sgd_step(std::span<const ParamSlot<TensorD>>, const GradMap<double>&, OptimizerState<double>&, double,
                       const TrainConfig&);
template void sgd_step(DrfnModelD&, const GradMap<double>&, OptimizerState<double>&, double, const TrainConfig&);

}  // namespace drfn
