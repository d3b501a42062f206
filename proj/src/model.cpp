#include "drfn/model.hpp"

#include <cmath>
#include <random>
#include <set>

#include "binary_io.hpp"

namespace drfn {
namespace {

constexpr double kInitialSlope = 0.33;

template <typename Model, typename Fn>
void visit_params(Model& m, Fn&& fn) {
  for (std::size_t s = 0; s < m.upsample.size(); ++s) {
    const std::string p = "upsample." + std::to_string(s) + ".";
    fn(p + "weight", ParamKind::kWeight, m.upsample[s].tconv.weight);
    fn(p + "bias", ParamKind::kBias, m.upsample[s].tconv.bias);
    fn(p + "prelu", ParamKind::kSlope, m.upsample[s].prelu.slope);
  }
  for (std::size_t b = 0; b < m.blocks.size(); ++b) {
    const std::string p = "block" + std::to_string(b + 1) + ".";
    auto& blk = m.blocks[b];
    fn(p + "conv_a.weight", ParamKind::kWeight, blk.conv_a.weight);
    fn(p + "conv_a.bias", ParamKind::kBias, blk.conv_a.bias);
    fn(p + "prelu_a", ParamKind::kSlope, blk.prelu_a.slope);
    fn(p + "conv_b.weight", ParamKind::kWeight, blk.conv_b.weight);
    fn(p + "conv_b.bias", ParamKind::kBias, blk.conv_b.bias);
    fn(p + "prelu_b", ParamKind::kSlope, blk.prelu_b.slope);
    fn(p + "conv_c.weight", ParamKind::kWeight, blk.conv_c.weight);
    fn(p + "conv_c.bias", ParamKind::kBias, blk.conv_c.bias);
  }
  const auto taps = level_taps(m.config.levels);
  for (std::size_t l = 0; l < m.level_convs.size(); ++l) {
    const std::string p = "level" + std::to_string(taps[l] + 1) + ".";
    fn(p + "weight", ParamKind::kWeight, m.level_convs[l].weight);
    fn(p + "bias", ParamKind::kBias, m.level_convs[l].bias);
  }
  fn(std::string("fusion.weight"), ParamKind::kWeight, m.fusion.weight);
  fn(std::string("fusion.bias"), ParamKind::kBias, m.fusion.bias);
}

template <typename T>
Conv2dParams<T> make_conv(std::size_t in_c, std::size_t out_c) {
  return {BasicTensor<T>(Dims{out_c, in_c, 3, 3}), BasicTensor<T>(Dims{out_c, 1, 1, 1}), ConvGeometry{1, 1}};
}

template <typename T>
PReluParams<T> make_prelu(std::size_t c) {
  return {BasicTensor<T>(Dims{c, 1, 1, 1}, static_cast<T>(kInitialSlope))};
}

template <typename T>
RecurrentResidualBlock<T> make_block(std::size_t c) {
  return {make_conv<T>(c, c), make_conv<T>(c, c), make_conv<T>(c, c), make_prelu<T>(c), make_prelu<T>(c)};
}

// Same structure as m, all values zero.
template <typename T>
BasicDrfnModel<T> zeros_like(const BasicDrfnModel<T>& m) {
  BasicDrfnModel<T> z = m;
  visit_params(z, [](const std::string&, ParamKind, BasicTensor<T>& t) { t.fill(T(0)); });
  return z;
}

template <typename T>
void accumulate(Conv2dParams<T>& acc, const ConvGrads<T>& g) {
  add_inplace(acc.weight, g.grad_weight);
  add_inplace(acc.bias, g.grad_bias);
}

template <typename T>
void accumulate(TransposedConv2dParams<T>& acc, const ConvGrads<T>& g) {
  add_inplace(acc.weight, g.grad_weight);
  add_inplace(acc.bias, g.grad_bias);
}

}  // namespace

void ModelConfig::validate() const {
  if (scale != 2 && scale != 3 && scale != 4 && scale != 8) {
    throw ConfigError("scale must be one of 2, 3, 4, 8; got " + std::to_string(scale));
  }
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (cycles < 1) throw ConfigError("cycles must be >= 1");
  if (blocks != 2) throw ConfigError("blocks is fixed at 2; got " + std::to_string(blocks));
  if (levels < 1 || levels > 3) throw ConfigError("levels must be 1, 2 or 3; got " + std::to_string(levels));
}

std::vector<std::size_t> level_taps(std::uint32_t levels) {
  switch (levels) {
    case 1: return {2};
    case 2: return {0, 2};
    case 3: return {0, 1, 2};
    default: throw ConfigError("levels must be 1, 2 or 3; got " + std::to_string(levels));
  }
}

UpsampleGeometry upsample_geometry(std::uint32_t scale) {
  switch (scale) {
    case 2: return {1, 4, ConvGeometry{2, 1}};
    case 3: return {1, 5, ConvGeometry{3, 1}};
    case 4: return {2, 4, ConvGeometry{2, 1}};
    case 8: return {3, 4, ConvGeometry{2, 1}};
    default: throw ConfigError("scale must be one of 2, 3, 4, 8; got " + std::to_string(scale));
  }
}

template <typename T>
BasicDrfnModel<T> build_drfn(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t c = cfg.channels;
  BasicDrfnModel<T> m;
  m.config = cfg;

  const UpsampleGeometry up = upsample_geometry(cfg.scale);
  for (std::size_t s = 0; s < up.stages; ++s) {
    const std::size_t in_c = s == 0 ? 1 : c;
    m.upsample.push_back({TransposedConv2dParams<T>{BasicTensor<T>(Dims{in_c, c, up.kernel, up.kernel}),
                                                    BasicTensor<T>(Dims{c, 1, 1, 1}), up.geometry},
                          make_prelu<T>(c)});
  }
  for (std::uint32_t b = 0; b < cfg.blocks; ++b) m.blocks.push_back(make_block<T>(c));
  for (std::size_t l = 0; l < cfg.levels; ++l) m.level_convs.push_back(make_conv<T>(c, c));
  m.fusion = make_conv<T>(c * cfg.levels, 1);

  // Weight tensors are filled in registry order from one seeded stream.
  std::mt19937_64 rng(seed);
  visit_params(m, [&](const std::string& name, ParamKind kind, BasicTensor<T>& t) {
    if (kind != ParamKind::kWeight) return;
    // Transposed-conv weights are (in, out, k, k); conv weights are (out, in, k, k).
    const bool transposed = name.rfind("upsample.", 0) == 0;
    const std::size_t in_c = transposed ? t.n() : t.c();
    const double fan_in = static_cast<double>(in_c * t.h() * t.w());
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : t.data()) v = static_cast<T>(normal(rng));
  });
  return m;
}

template <typename T>
std::vector<ParamSlot<BasicTensor<T>>> registry(BasicDrfnModel<T>& m) {
  std::vector<ParamSlot<BasicTensor<T>>> out;
  visit_params(m, [&](const std::string& name, ParamKind kind, BasicTensor<T>& t) { out.push_back({name, kind, &t}); });
  return out;
}

template <typename T>
std::vector<ParamSlot<const BasicTensor<T>>> registry(const BasicDrfnModel<T>& m) {
  std::vector<ParamSlot<const BasicTensor<T>>> out;
  visit_params(m, [&](const std::string& name, ParamKind kind, const BasicTensor<T>& t) {
    out.push_back({name, kind, &t});
  });
  return out;
}

template <typename T>
TensorMap<T> registry_snapshot(const BasicDrfnModel<T>& m) {
  TensorMap<T> out;
  for (const auto& slot : registry(m)) out.emplace(slot.name, *slot.tensor);
  return out;
}

template <typename T>
std::uint64_t param_count(const BasicDrfnModel<T>& m) {
  std::uint64_t total = 0;
  for (const auto& slot : registry(m)) total += slot.tensor->size();
  return total;
}

template <typename U, typename T>
BasicDrfnModel<U> cast_model(const BasicDrfnModel<T>& m) {
  BasicDrfnModel<U> out = build_drfn<U>(m.config, 0);
  auto dst = registry(out);
  auto src = registry(m);
  for (std::size_t k = 0; k < dst.size(); ++k) *dst[k].tensor = src[k].tensor->template cast<U>();
  return out;
}

template <typename T>
BasicTensor<T> recurrent_block_forward(const RecurrentResidualBlock<T>& block, const BasicTensor<T>& x,
                                       std::uint32_t cycles, std::vector<BlockCycleTape<T>>* tape) {
  BasicTensor<T> h = x;
  if (tape) {
    tape->clear();
    tape->reserve(cycles);
  }
  for (std::uint32_t k = 0; k < cycles; ++k) {
    BasicTensor<T> a = conv2d_forward(h, block.conv_a);
    BasicTensor<T> pa = prelu_forward(a, block.prelu_a);
    BasicTensor<T> b = conv2d_forward(pa, block.conv_b);
    BasicTensor<T> pb = prelu_forward(b, block.prelu_b);
    BasicTensor<T> out = conv2d_forward(pb, block.conv_c);
    add_inplace(out, h);
    if (tape) {
      tape->push_back({std::move(h), std::move(a), std::move(pa), std::move(b), std::move(pb)});
    }
    h = std::move(out);
  }
  return h;
}

template <typename T>
BasicTensor<T> forward(const BasicDrfnModel<T>& m, const BasicTensor<T>& x, ForwardTape<T>* tape) {
  if (x.c() != 1) throw ShapeError("forward: expected a 1-channel luminance input, got " + x.dims().str());
  ForwardTape<T> local;
  ForwardTape<T>& t = tape ? *tape : local;
  t = ForwardTape<T>{};
  t.input = x;

  BasicTensor<T> h = x;
  for (const auto& stage : m.upsample) {
    BasicTensor<T> pre = transposed_conv2d_forward(h, stage.tconv);
    BasicTensor<T> post = prelu_forward(pre, stage.prelu);
    if (tape) {
      t.stage_inputs.push_back(std::move(h));
      t.stage_pre.push_back(std::move(pre));
    }
    h = std::move(post);
  }
  std::vector<BasicTensor<T>> features;
  features.push_back(h);
  t.cycles.resize(m.blocks.size());
  for (std::size_t b = 0; b < m.blocks.size(); ++b) {
    h = recurrent_block_forward(m.blocks[b], h, m.config.cycles, tape ? &t.cycles[b] : nullptr);
    features.push_back(h);
  }

  const auto taps = level_taps(m.config.levels);
  std::vector<BasicTensor<T>> tapped;
  for (std::size_t l = 0; l < taps.size(); ++l) tapped.push_back(conv2d_forward(features[taps[l]], m.level_convs[l]));
  BasicTensor<T> fused = concat_channels<T>(std::span<const BasicTensor<T>>(tapped));
  BasicTensor<T> out = conv2d_forward(fused, m.fusion);

  if (tape) {
    t.features = std::move(features);
    t.fused_input = std::move(fused);
    t.output_dims = out.dims();
  }
  return out;
}

template <typename T>
GradMap<T> backward(const BasicDrfnModel<T>& m, const ForwardTape<T>& tape, const BasicTensor<T>& grad_hr,
                    BasicTensor<T>* grad_input) {
  if (tape.features.empty()) throw StateError("backward: tape was not recorded by forward()");
  if (grad_hr.dims() != tape.output_dims) {
    throw ShapeError("backward: grad_hr " + grad_hr.dims().str() + " != output " + tape.output_dims.str());
  }
  BasicDrfnModel<T> g = zeros_like(m);

  const ConvGrads<T> fusion = conv2d_backward(tape.fused_input, m.fusion, grad_hr);
  accumulate(g.fusion, fusion);

  std::vector<BasicTensor<T>> feature_grads;
  for (const auto& f : tape.features) feature_grads.emplace_back(f.dims());
  const auto taps = level_taps(m.config.levels);
  const std::size_t c = m.config.channels;
  for (std::size_t l = 0; l < taps.size(); ++l) {
    const BasicTensor<T> g_tap = slice_channels(fusion.grad_x, l * c, c);
    const ConvGrads<T> lg = conv2d_backward(tape.features[taps[l]], m.level_convs[l], g_tap);
    accumulate(g.level_convs[l], lg);
    add_inplace(feature_grads[taps[l]], lg.grad_x);
  }

  for (std::size_t b = m.blocks.size(); b-- > 0;) {
    const auto& blk = m.blocks[b];
    auto& gblk = g.blocks[b];
    BasicTensor<T> gh = feature_grads[b + 1];
    const auto& cycles = tape.cycles[b];
    for (std::size_t k = cycles.size(); k-- > 0;) {
      const auto& ct = cycles[k];
      const ConvGrads<T> gc = conv2d_backward(ct.pb, blk.conv_c, gh);
      accumulate(gblk.conv_c, gc);
      const PReluGrads<T> gpb = prelu_backward(ct.b, blk.prelu_b, gc.grad_x);
      add_inplace(gblk.prelu_b.slope, gpb.grad_slope);
      const ConvGrads<T> gb = conv2d_backward(ct.pa, blk.conv_b, gpb.grad_x);
      accumulate(gblk.conv_b, gb);
      const PReluGrads<T> gpa = prelu_backward(ct.a, blk.prelu_a, gb.grad_x);
      add_inplace(gblk.prelu_a.slope, gpa.grad_slope);
      const ConvGrads<T> ga = conv2d_backward(ct.input, blk.conv_a, gpa.grad_x);
      accumulate(gblk.conv_a, ga);
      add_inplace(gh, ga.grad_x);  // skip connection
    }
    add_inplace(feature_grads[b], gh);
  }

  BasicTensor<T> gh = feature_grads[0];
  for (std::size_t s = m.upsample.size(); s-- > 0;) {
    const PReluGrads<T> gp = prelu_backward(tape.stage_pre[s], m.upsample[s].prelu, gh);
    add_inplace(g.upsample[s].prelu.slope, gp.grad_slope);
    const ConvGrads<T> gt = transposed_conv2d_backward(tape.stage_inputs[s], m.upsample[s].tconv, gp.grad_x);
    accumulate(g.upsample[s].tconv, gt);
    gh = gt.grad_x;
  }
  if (grad_input) *grad_input = std::move(gh);
  return registry_snapshot(g);
}

// Checkpoints -----------------------------------------------------------------

namespace {

constexpr std::string_view kCheckpointMagic = "DRFN";

std::uint32_t logical_rank(ParamKind kind) { return kind == ParamKind::kWeight ? 4u : 1u; }

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const DrfnModel& m) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(m.config.scale);
  w.u32(m.config.channels);
  w.u32(m.config.cycles);
  w.u32(m.config.blocks);
  w.u32(m.config.levels);
  const auto slots = registry(m);
  w.u32(static_cast<std::uint32_t>(slots.size()));
  for (const auto& slot : slots) {
    w.u32(static_cast<std::uint32_t>(slot.name.size()));
    w.raw(slot.name);
    const std::uint32_t rank = logical_rank(slot.kind);
    w.u32(rank);
    const Dims& d = slot.tensor->dims();
    const std::size_t all[4] = {d.n, d.c, d.h, d.w};
    for (std::uint32_t r = 0; r < rank; ++r) w.u64(all[r]);
    w.f32s(slot.tensor->data());
  }
  return w.take();
}

DrfnModel decode_checkpoint(std::span<const std::uint8_t> bytes, std::optional<std::uint32_t> cycles_override) {
  detail::ByteReader r(bytes, "checkpoint");
  r.expect_magic(kCheckpointMagic);
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  ModelConfig cfg;
  cfg.scale = r.u32("scale");
  cfg.channels = r.u32("channels");
  cfg.cycles = r.u32("cycles");
  cfg.blocks = r.u32("blocks");
  cfg.levels = r.u32("levels");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    r.fail(std::string("invalid model config: ") + e.what());
  }
  if (cycles_override) cfg.cycles = *cycles_override;

  DrfnModel m = build_drfn<float>(cfg, 0);
  std::map<std::string, ParamSlot<Tensor>> by_name;
  for (auto& slot : registry(m)) by_name.emplace(slot.name, slot);

  const std::uint32_t count = r.u32("tensor count");
  if (count != by_name.size()) {
    r.fail("expected " + std::to_string(by_name.size()) + " tensors, header says " + std::to_string(count));
  }
  std::set<std::string> seen;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t len = r.u32("name length");
    const std::string name = r.str(len, "name");
    auto it = by_name.find(name);
    if (it == by_name.end()) r.fail("unknown tensor \"" + name + "\"");
    if (!seen.insert(name).second) r.fail("duplicate tensor \"" + name + "\"");
    Tensor& t = *it->second.tensor;
    const std::uint32_t rank = r.u32("rank");
    if (rank != logical_rank(it->second.kind)) r.fail("tensor \"" + name + "\" has wrong rank");
    const Dims& d = t.dims();
    const std::size_t want[4] = {d.n, d.c, d.h, d.w};
    for (std::uint32_t i = 0; i < rank; ++i) {
      if (r.u64("dim") != want[i]) r.fail("tensor \"" + name + "\" has wrong dims, expected " + d.str());
    }
    r.f32s(t.data(), "tensor payload");
  }
  if (r.remaining() != 0) r.fail("trailing bytes after last tensor");
  return m;
}

void save_checkpoint(const DrfnModel& m, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(m));
}

DrfnModel load_checkpoint(const std::filesystem::path& path, std::optional<std::uint32_t> cycles_override) {
  const auto bytes = detail::read_file(path);
  return decode_checkpoint(bytes, cycles_override);
}

#define DRFN_INSTANTIATE_MODEL(T)                                                                          \
  template BasicDrfnModel<T> build_drfn<T>(const ModelConfig&, std::uint64_t);                             \
  template std::vector<ParamSlot<BasicTensor<T>>> registry(BasicDrfnModel<T>&);                            \
  template std::vector<ParamSlot<const BasicTensor<T>>> registry(const BasicDrfnModel<T>&);                \
  template TensorMap<T> registry_snapshot(const BasicDrfnModel<T>&);                                       \
  template std::uint64_t param_count(const BasicDrfnModel<T>&);                                            \
  template BasicTensor<T> recurrent_block_forward(const RecurrentResidualBlock<T>&, const BasicTensor<T>&, \
                                                  std::uint32_t, std::vector<BlockCycleTape<T>>*);         \
  template BasicTensor<T> forward(const BasicDrfnModel<T>&, const BasicTensor<T>&, ForwardTape<T>*);       \
  template GradMap<T> backward(const BasicDrfnModel<T>&, const ForwardTape<T>&, const BasicTensor<T>&,     \
                               BasicTensor<T>*);

DRFN_INSTANTIATE_MODEL(float)
DRFN_INSTANTIATE_MODEL(double)

template BasicDrfnModel<double> cast_model<double, float>(const BasicDrfnModel<float>&);
template BasicDrfnModel<float> cast_model<float, double>(const BasicDrfnModel<double>&);
template BasicDrfnModel<float> cast_model<float, float>(const BasicDrfnModel<float>&);
template BasicDrfnModel<double> cast_model<double, double>(const BasicDrfnModel<double>&);

}  // namespace drfn
