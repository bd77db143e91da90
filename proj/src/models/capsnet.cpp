#include "capsgram/error.hpp"
#include "capsgram/models/model.hpp"
#include "capsgram/tensor/ops.hpp"

namespace capsgram {

namespace {

// Output extent of a valid (or padded) strided window; records the step in
// `chain` so errors can show how the extent got there.
std::size_t plan_step(const std::string& layer, std::size_t in, std::size_t kernel, std::size_t stride,
                      std::size_t padding, std::string& chain) {
  if (stride == 0 || kernel == 0) {
    throw ShapeError(layer + ": kernel and stride must be positive (" + chain + ")");
  }
  if (in + 2 * padding < kernel) {
    throw ShapeError(layer + ": kernel " + std::to_string(kernel) + " exceeds input extent " +
                     std::to_string(in + 2 * padding) + " (" + chain + ")");
  }
  const std::size_t out = (in + 2 * padding - kernel) / stride + 1;
  if (!chain.empty()) chain += ", ";
  chain += layer + " " + std::to_string(in) + "->" + std::to_string(out);
  return out;
}

}  // namespace

CapsNetConfig CapsNetConfig::desk() {
  CapsNetConfig c;
  c.image_extent = 32;
  c.stem = {ConvSpec{16, 3, 1, 0, Activation::kRelu}, ConvSpec{32, 3, 1, 0, Activation::kRelu}};
  c.primary = PrimaryCapsSpec{8, 8, 3, 2};
  c.routed = {RoutedLayerSpec{8, 8, 3, 2, 3}, RoutedLayerSpec{2, 16, 0, 1, 3}};
  c.n_classes = 2;
  return c;
}

CapsNetConfig CapsNetConfig::miniature() {
  CapsNetConfig c;
  c.image_extent = 12;
  c.stem = {ConvSpec{4, 3, 1, 0, Activation::kNone}};
  c.primary = PrimaryCapsSpec{4, 4, 3, 2};
  c.routed = {RoutedLayerSpec{4, 4, 3, 1, 3}, RoutedLayerSpec{2, 4, 0, 1, 3}};
  c.n_classes = 2;
  return c;
}

Model build_capsnet(const CapsNetConfig& config, std::uint64_t seed) {
  if (config.routed.empty()) throw ShapeError("capsnet: at least one routed layer is required");
  if (config.n_classes < 2) throw ShapeError("capsnet: n_classes must be at least 2");
  Model m;
  m.kind_ = ModelKind::kCapsNet;
  m.caps_ = config;
  Rng rng(seed);
  std::string chain;
  std::size_t extent = config.image_extent;
  std::size_t channels = 1;

  for (std::size_t i = 0; i < config.stem.size(); ++i) {
    const auto& s = config.stem[i];
    const std::string name = "stem." + std::to_string(i);
    if (s.out_channels == 0) throw ShapeError(name + ": out_channels must be positive");
    extent = plan_step(name, extent, s.kernel, s.stride, s.padding, chain);
    m.params_.push_back({name + ".weight", he_uniform({s.out_channels, channels, s.kernel, s.kernel},
                                                      channels * s.kernel * s.kernel, rng)});
    Tensor bias = Tensor::zeros({s.out_channels});
    bias.set_requires_grad(true);
    m.params_.push_back({name + ".bias", bias});
    channels = s.out_channels;
  }

  const auto& p = config.primary;
  if (p.n_types == 0 || p.dim == 0) throw ShapeError("primary: n_types and dim must be positive");
  extent = plan_step("primary", extent, p.kernel, p.stride, 0, chain);
  m.params_.push_back({"primary.weight", he_uniform({p.n_types * p.dim, channels, p.kernel, p.kernel},
                                                    channels * p.kernel * p.kernel, rng)});
  Tensor pbias = Tensor::zeros({p.n_types * p.dim});
  pbias.set_requires_grad(true);
  m.params_.push_back({"primary.bias", pbias});

  std::size_t n_in = p.n_types;
  std::size_t dim_in = p.dim;
  for (std::size_t l = 0; l < config.routed.size(); ++l) {
    auto& r = m.caps_.routed[l];
    const std::string name = "routed." + std::to_string(l);
    if (r.n_out == 0 || r.dim_out == 0) throw ShapeError(name + ": n_out and dim_out must be positive");
    if (r.iters == 0) throw DomainError(name + ": at least one routing iteration is required");
    if (r.kernel == 0) {
      r.kernel = extent;
      r.stride = 1;
    }
    extent = plan_step(name, extent, r.kernel, r.stride, 0, chain);
    m.params_.push_back({name + ".weight", he_uniform({r.n_out, r.dim_out, dim_in, r.kernel, r.kernel},
                                                      dim_in * r.kernel * r.kernel, rng)});
    n_in = r.n_out;
    dim_in = r.dim_out;
  }
  if (n_in != config.n_classes) {
    throw ShapeError("capsnet: final routed layer has " + std::to_string(n_in) + " types, expected " +
                     std::to_string(config.n_classes) + " classes");
  }
  if (extent != 1) {
    throw ShapeError("capsnet: final routed layer must reach a 1x1 extent (" + chain + ")");
  }
  return m;
}

ModelOutput Model::forward_capsnet(const Tensor& image) const {
  std::size_t k = 0;
  FeatureField field(image);
  for (const auto& s : caps_.stem) {
    field = conv_layer(field, params_[k].value, s.stride, s.padding, s.activation, params_[k + 1].value);
    k += 2;
  }
  const auto& p = caps_.primary;
  auto raw = conv_layer(field, params_[k].value, p.stride, 0, Activation::kNone, params_[k + 1].value);
  k += 2;
  CapsuleField caps(squash(reshape(raw.values, {p.n_types, p.dim, raw.height(), raw.width()}), 1));

  ModelOutput out;
  for (const auto& r : caps_.routed) {
    auto predictions = predict(caps, params_[k++].value, r.stride, 0);
    auto routed = caps_.routing == RoutingMode::kEqual ? equal_route_traced(predictions)
                                                       : dynamic_route(predictions, r.iters);
    caps = std::move(routed.output);
    out.traces.push_back(std::move(routed.trace));
  }
  out.class_activations = l2_norm(reduce_mean(caps.values, {2, 3}), 1);
  return out;
}

}  // namespace capsgram
