#include "drfn/selftest.hpp"

#include <cstdio>
#include <random>

#include "drfn/train.hpp"

namespace drfn {
namespace {

template <typename T>
constexpr double default_tolerance() {
  return std::is_same_v<T, float> ? 1e-3 : 1e-6;
}

template <typename T>
struct Resolved {
  double tolerance, epsilon;
};

template <typename T>
Resolved<T> resolve(const GradCheckOptions& o) {
  return {o.tolerance > 0 ? o.tolerance : default_tolerance<T>(), o.epsilon > 0 ? o.epsilon : default_tolerance<T>()};
}

template <typename T>
BasicTensor<T> random_tensor(Dims d, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  BasicTensor<T> t(d);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

// Values in [-1,-margin] U [margin,1], so no FD stencil straddles a PReLU kink.
template <typename T>
BasicTensor<T> away_from_zero(Dims d, std::mt19937_64& rng, double margin) {
  std::uniform_real_distribution<double> u(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  BasicTensor<T> t(d);
  for (auto& v : t.data()) v = static_cast<T>(sign(rng) ? u(rng) : -u(rng));
  return t;
}

template <typename T>
double weighted_sum(const BasicTensor<T>& out, const BasicTensor<T>& r) {
  double acc = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) acc += static_cast<double>(out.data()[k]) * r.data()[k];
  return acc;
}

template <typename T>
BasicTensor<T> scaled(BasicTensor<T> t, double s) {
  if (s != 1.0) {
    for (auto& v : t.data()) v = static_cast<T>(v * s);
  }
  return t;
}

template <typename T>
void record(GradCheckReport& rep, const BasicTensor<T>& analytic, const TensorD& numeric, double scale) {
  rep.max_relative_error = std::max(rep.max_relative_error, relative_error(scaled(analytic, scale), numeric));
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

template <typename T>
GradCheckReport check_conv2d_gradients(const GradCheckOptions& opts) {
  const auto r = resolve<T>(opts);
  GradCheckReport rep{opts.instances, 0.0, r.tolerance};
  for (std::size_t i = 0; i < opts.instances; ++i) {
    std::mt19937_64 rng(opts.seed + i);
    const std::size_t n = pick(rng, 1, 2), ci = pick(rng, 1, 3), co = pick(rng, 1, 3), k = pick(rng, 1, 3);
    const ConvGeometry g{pick(rng, 1, 2), pick(rng, 0, k / 2 + 1)};
    const std::size_t h = pick(rng, k, k + 4), w = pick(rng, k, k + 4);
    Conv2dParams<T> p{random_tensor<T>({co, ci, k, k}, rng), random_tensor<T>({co, 1, 1, 1}, rng), g};
    const BasicTensor<T> x = random_tensor<T>({n, ci, h, w}, rng);
    const Dims od{n, co, conv_output_extent(h, k, g), conv_output_extent(w, k, g)};
    const BasicTensor<T> gout = random_tensor<T>(od, rng);
    const ConvGrads<T> an = conv2d_backward(x, p, gout);

    record(rep, an.grad_x,
           finite_difference_grad<T>([&](const BasicTensor<T>& v) { return weighted_sum(conv2d_forward(v, p), gout); },
                                     x, r.epsilon),
           opts.analytic_scale);
    record(rep, an.grad_weight, finite_difference_grad<T>([&](const BasicTensor<T>& v) {
             auto q = p;
             q.weight = v;
             return weighted_sum(conv2d_forward(x, q), gout);
           }, p.weight, r.epsilon),
           opts.analytic_scale);
    record(rep, an.grad_bias, finite_difference_grad<T>([&](const BasicTensor<T>& v) {
             auto q = p;
             q.bias = v;
             return weighted_sum(conv2d_forward(x, q), gout);
           }, p.bias, r.epsilon),
           opts.analytic_scale);
  }
  return rep;
}

template <typename T>
GradCheckReport check_transposed_conv2d_gradients(const GradCheckOptions& opts) {
  const auto r = resolve<T>(opts);
  GradCheckReport rep{opts.instances, 0.0, r.tolerance};
  for (std::size_t i = 0; i < opts.instances; ++i) {
    std::mt19937_64 rng(opts.seed + 1000 + i);
    const std::size_t n = pick(rng, 1, 2), ci = pick(rng, 1, 3), co = pick(rng, 1, 3), k = pick(rng, 2, 5);
    const ConvGeometry g{pick(rng, 1, 3), pick(rng, 0, (k - 1) / 2)};
    const std::size_t h = pick(rng, 2, 5), w = pick(rng, 2, 5);
    TransposedConv2dParams<T> p{random_tensor<T>({ci, co, k, k}, rng), random_tensor<T>({co, 1, 1, 1}, rng), g};
    const BasicTensor<T> x = random_tensor<T>({n, ci, h, w}, rng);
    const Dims od{n, co, transposed_conv_output_extent(h, k, g), transposed_conv_output_extent(w, k, g)};
    const BasicTensor<T> gout = random_tensor<T>(od, rng);
    const ConvGrads<T> an = transposed_conv2d_backward(x, p, gout);

    record(rep, an.grad_x, finite_difference_grad<T>([&](const BasicTensor<T>& v) {
             return weighted_sum(transposed_conv2d_forward(v, p), gout);
           }, x, r.epsilon),
           opts.analytic_scale);
    record(rep, an.grad_weight, finite_difference_grad<T>([&](const BasicTensor<T>& v) {
             auto q = p;
             q.weight = v;
             return weighted_sum(transposed_conv2d_forward(x, q), gout);
           }, p.weight, r.epsilon),
           opts.analytic_scale);
    record(rep, an.grad_bias, finite_difference_grad<T>([&](const BasicTensor<T>& v) {
             auto q = p;
             q.bias = v;
             return weighted_sum(transposed_conv2d_forward(x, q), gout);
           }, p.bias, r.epsilon),
           opts.analytic_scale);
  }
  return rep;
}

template <typename T>
GradCheckReport check_prelu_gradients(const GradCheckOptions& opts) {
  const auto r = resolve<T>(opts);
  GradCheckReport rep{opts.instances, 0.0, r.tolerance};
  for (std::size_t i = 0; i < opts.instances; ++i) {
    std::mt19937_64 rng(opts.seed + 2000 + i);
    const Dims d{pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 5), pick(rng, 1, 5)};
    PReluParams<T> p{random_tensor<T>({d.c, 1, 1, 1}, rng, 0.5)};
    const BasicTensor<T> x = away_from_zero<T>(d, rng, 10 * r.epsilon);
    const BasicTensor<T> gout = random_tensor<T>(d, rng);
    const PReluGrads<T> an = prelu_backward(x, p, gout);

    record(rep, an.grad_x,
           finite_difference_grad<T>([&](const BasicTensor<T>& v) { return weighted_sum(prelu_forward(v, p), gout); },
                                     x, r.epsilon),
           opts.analytic_scale);
    record(rep, an.grad_slope, finite_difference_grad<T>([&](const BasicTensor<T>& v) {
             return weighted_sum(prelu_forward(x, PReluParams<T>{v}), gout);
           }, p.slope, r.epsilon),
           opts.analytic_scale);
  }
  return rep;
}

template <typename T>
GradCheckReport check_mse_gradients(const GradCheckOptions& opts) {
  const auto r = resolve<T>(opts);
  GradCheckReport rep{opts.instances, 0.0, r.tolerance};
  for (std::size_t i = 0; i < opts.instances; ++i) {
    std::mt19937_64 rng(opts.seed + 3000 + i);
    const Dims d{pick(rng, 1, 4), 1, pick(rng, 1, 6), pick(rng, 1, 6)};
    const BasicTensor<T> pred = random_tensor<T>(d, rng);
    const BasicTensor<T> target = random_tensor<T>(d, rng);
    record(rep, mse_loss(pred, target).grad,
           finite_difference_grad<T>([&](const BasicTensor<T>& v) { return mse_loss(v, target).loss; }, pred,
                                     r.epsilon),
           opts.analytic_scale);
  }
  return rep;
}

namespace {

// Sign of every PReLU input on the tape; x == 0 counts as positive.
template <typename T>
std::vector<bool> activation_pattern(const ForwardTape<T>& tape) {
  std::vector<bool> signs;
  auto push = [&](const BasicTensor<T>& z) {
    for (T v : z.data()) signs.push_back(v >= T(0));
  };
  for (const auto& z : tape.stage_pre) push(z);
  for (const auto& block : tape.cycles) {
    for (const auto& c : block) {
      push(c.a);
      push(c.b);
    }
  }
  return signs;
}

// Central differences of f over every element of *target. Elements whose
// stencil changes the PReLU sign pattern are left out of the comparison.
template <typename A>
void compare_guarded(GradCheckReport& rep, TensorD* target, const BasicTensor<A>& analytic,
                     const std::function<std::pair<double, std::vector<bool>>()>& eval,
                     const std::vector<bool>& base, double eps, double scale) {
  std::vector<double> an, num;
  for (std::size_t k = 0; k < target->size(); ++k) {
    double& slot = target->data()[k];
    const double saved = slot;
    slot = saved + eps;
    const double up = slot;
    const auto [fp, sp] = eval();
    slot = saved - eps;
    const double down = slot;
    const auto [fm, sm] = eval();
    slot = saved;
    if (sp != base || sm != base) {
      ++rep.excluded;
      continue;
    }
    ++rep.compared;
    an.push_back(static_cast<double>(analytic.data()[k]) * scale);
    num.push_back((fp - fm) / (up - down));
  }
  if (an.empty()) return;
  const Dims d{an.size(), 1, 1, 1};
  rep.max_relative_error = std::max(rep.max_relative_error, relative_error(TensorD(d, an), TensorD(d, num)));
}

}  // namespace

template <typename T>
GradCheckReport check_network_gradients(const GradCheckOptions& opts) {
  static constexpr std::uint32_t kScales[] = {2, 3, 4, 8};
  // The numeric side always runs on an exact double copy of the weights: in
  // float, forward rounding over a whole network swamps small gradients.
  const double tolerance = opts.tolerance > 0 ? opts.tolerance : default_tolerance<T>();
  const double eps = opts.epsilon > 0 ? opts.epsilon : 1e-6;
  GradCheckReport rep{opts.instances, 0.0, tolerance};
  for (std::size_t i = 0; i < opts.instances; ++i) {
    std::mt19937_64 rng(opts.seed + 4000 + i);
    ModelConfig cfg;
    cfg.scale = kScales[i % 4];
    cfg.channels = static_cast<std::uint32_t>(pick(rng, 1, 3));
    cfg.cycles = static_cast<std::uint32_t>(pick(rng, 1, 2));
    cfg.levels = static_cast<std::uint32_t>(pick(rng, 1, 3));
    BasicDrfnModel<T> m = build_drfn<T>(cfg, opts.seed + i);
    // Non-zero biases so every bias path is exercised away from symmetric points.
    for (auto& slot : registry(m)) {
      if (slot.kind == ParamKind::kBias) *slot.tensor = random_tensor<T>(slot.tensor->dims(), rng, 0.1);
    }
    const std::size_t side = cfg.scale == 8 ? 2 : pick(rng, 2, 4);
    const BasicTensor<T> x = random_tensor<T>({1, 1, side, side}, rng);
    ForwardTape<T> tape;
    const BasicTensor<T> out = forward(m, x, &tape);
    const BasicTensor<T> gout = random_tensor<T>(out.dims(), rng);
    BasicTensor<T> grad_x;
    const GradMap<T> an = backward(m, tape, gout, &grad_x);

    DrfnModelD md = cast_model<double>(m);
    TensorD xd = x.template cast<double>();
    const TensorD gd = gout.template cast<double>();
    const auto eval = [&]() {
      ForwardTape<double> t;
      const double f = weighted_sum(forward(md, xd, &t), gd);
      return std::make_pair(f, activation_pattern(t));
    };
    const std::vector<bool> base = eval().second;
    compare_guarded<T>(rep, &xd, grad_x, eval, base, eps, opts.analytic_scale);
    for (const auto& slot : registry(md)) {
      compare_guarded<T>(rep, slot.tensor, an.at(slot.name), eval, base, eps, opts.analytic_scale);
    }
  }
  return rep;
}

std::vector<ParamGroup> param_breakdown(const DrfnModel& m) {
  std::vector<ParamGroup> groups;
  for (const auto& slot : registry(m)) {
    // upsample.N.*, blockN.*, levelN.*, fusion.*
    std::string group = slot.name.substr(0, slot.name.find('.'));
    if (group == "upsample") group = slot.name.substr(0, slot.name.find('.', 9));
    if (groups.empty() || groups.back().group != group) groups.push_back({group, 0});
    groups.back().count += slot.tensor->size();
  }
  return groups;
}

std::uint64_t recurrent_savings(std::uint32_t channels, std::uint32_t cycles) {
  ModelConfig cfg;
  cfg.channels = channels;
  cfg.cycles = cycles;
  const DrfnModel m = build_drfn<float>(cfg, 0);
  const auto& blk = m.blocks.front();
  std::uint64_t shared = 0;
  for (const auto* conv : {&blk.conv_a, &blk.conv_b, &blk.conv_c}) shared += conv->weight.size() + conv->bias.size();
  const std::uint64_t unrolled = shared * cycles;
  return unrolled - shared;
}

double unrolled_block_max_difference(std::uint32_t channels, std::uint32_t cycles, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.channels = channels;
  cfg.cycles = cycles;
  const DrfnModel m = build_drfn<float>(cfg, seed);
  const RecurrentResidualBlock<float>& shared = m.blocks.front();
  const std::vector<RecurrentResidualBlock<float>> copies(cycles, shared);

  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    const Tensor x = random_tensor<float>({2, channels, 9, 7}, rng);
    const Tensor y_shared = recurrent_block_forward(shared, x, cycles);
    Tensor y = x;
    for (const auto& blk : copies) {
      const Tensor a = prelu_forward(conv2d_forward(y, blk.conv_a), blk.prelu_a);
      const Tensor b = prelu_forward(conv2d_forward(a, blk.conv_b), blk.prelu_b);
      y = add(conv2d_forward(b, blk.conv_c), y);
    }
    for (std::size_t k = 0; k < y.size(); ++k) {
      worst = std::max(worst, std::abs(static_cast<double>(y.data()[k]) - y_shared.data()[k]));
    }
  }
  return worst;
}

namespace {

char* fmt(char* buf, std::size_t len, const char* f, double a, double b) {
  std::snprintf(buf, len, f, a, b);
  return buf;
}

}  // namespace

std::vector<CheckResult> run_selftest(const SelftestOptions& opts,
                                      const std::function<void(const CheckResult&)>& progress) {
  std::vector<CheckResult> results;
  auto emit = [&](CheckResult r) {
    if (progress) progress(r);
    results.push_back(std::move(r));
  };
  char buf[160];

  auto grad = [&](const std::string& name, auto check) {
    GradCheckOptions o;
    o.seed = opts.seed;
    if (opts.perturb == name) o.analytic_scale = 1.05;
    const GradCheckReport rep = check(o);
    std::string detail = std::to_string(rep.instances) + " instances, max rel err " +
                         fmt(buf, sizeof buf, "%.3g (tol %.0e)", rep.max_relative_error, rep.tolerance);
    if (rep.compared + rep.excluded > 0) {
      detail += ", " + std::to_string(rep.excluded) + " of " + std::to_string(rep.compared + rep.excluded) +
                " elements skipped at PReLU kinks";
    }
    emit({name, rep.passed(), detail});
  };
  grad("grad/conv2d/f32", check_conv2d_gradients<float>);
  grad("grad/conv2d/f64", check_conv2d_gradients<double>);
  grad("grad/transposed_conv2d/f32", check_transposed_conv2d_gradients<float>);
  grad("grad/transposed_conv2d/f64", check_transposed_conv2d_gradients<double>);
  grad("grad/prelu/f32", check_prelu_gradients<float>);
  grad("grad/prelu/f64", check_prelu_gradients<double>);
  grad("grad/mse_loss/f32", check_mse_gradients<float>);
  grad("grad/mse_loss/f64", check_mse_gradients<double>);
  grad("grad/network/f32", check_network_gradients<float>);
  grad("grad/network/f64", check_network_gradients<double>);

  {
    ModelConfig cfg;
    std::vector<std::uint64_t> counts;
    for (std::uint32_t cycles : {1u, 3u, 5u, 10u}) {
      cfg.cycles = cycles;
      counts.push_back(param_count(build_drfn<float>(cfg, 0)));
    }
    const bool same = std::equal(counts.begin() + 1, counts.end(), counts.begin());
    emit({"params/cycle_invariance", same,
          "cycles 1,3,5,10 -> " + std::to_string(counts[0]) + "," + std::to_string(counts[1]) + "," +
              std::to_string(counts[2]) + "," + std::to_string(counts[3])});
  }
  {
    const std::uint64_t saved = recurrent_savings(64, 5);
    emit({"params/recurrent_savings", saved == 443136,
          "64 channels, 5 cycles: unrolled - shared = " + std::to_string(saved) + " (expected 443136)"});
  }
  {
    const DrfnModel m = build_drfn<float>(ModelConfig{}, 0);
    std::uint64_t total = 0;
    std::string parts;
    for (const auto& g : param_breakdown(m)) {
      total += g.count;
      parts += " " + g.group + "=" + std::to_string(g.count);
    }
    const std::uint64_t counted = param_count(m);
    const long long delta = static_cast<long long>(counted) - 347297;
    emit({"params/breakdown", total == counted,
          "x4/64ch total " + std::to_string(counted) + " (delta vs 347297: " + std::to_string(delta) + ");" + parts});
  }
  {
    const double diff = unrolled_block_max_difference(8, 5, opts.seed);
    emit({"unrolled_equivalence", diff <= 1e-5, fmt(buf, sizeof buf, "max |shared - unrolled| = %.3g (tol %.0e)", diff, 1e-5)});
  }
  return results;
}

#define DRFN_INSTANTIATE_CHECKS(T)                                                    \
  template GradCheckReport check_conv2d_gradients<T>(const GradCheckOptions&);            \
  template GradCheckReport check_transposed_conv2d_gradients<T>(const GradCheckOptions&); \
  template GradCheckReport check_prelu_gradients<T>(const GradCheckOptions&);             \
  template GradCheckReport check_mse_gradients<T>(const GradCheckOptions&);               \
  template GradCheckReport check_network_gradients<T>(const GradCheckOptions&);

DRFN_INSTANTIATE_CHECKS(float)
DRFN_INSTANTIATE_CHECKS(double)

}  // namespace drfn
