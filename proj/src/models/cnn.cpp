#include "capsgram/error.hpp"
#include "capsgram/models/model.hpp"
#include "capsgram/tensor/ops.hpp"

namespace capsgram {

CNNConfig CNNConfig::desk() {
  CNNConfig c;
  c.image_extent = 32;
  c.layers = {CnnLayerSpec::convolution({16, 3, 1, 0, Activation::kRelu}),
              CnnLayerSpec::convolution({32, 3, 1, 0, Activation::kRelu}),
              CnnLayerSpec::pooling({2, 2}),
              CnnLayerSpec::convolution({64, 3, 2, 0, Activation::kRelu})};
  c.head = CnnHead::kMarginScores;
  c.n_classes = 2;
  return c;
}

Model build_cnn(const CNNConfig& config, std::uint64_t seed) {
  if (config.n_classes < 2) throw ShapeError("cnn: n_classes must be at least 2");
  Model m;
  m.kind_ = ModelKind::kCnn;
  m.cnn_ = config;
  Rng rng(seed);
  std::string chain;
  std::size_t extent = config.image_extent;
  std::size_t channels = 1;

  auto step = [&](const std::string& layer, std::size_t kernel, std::size_t stride, std::size_t padding) {
    if (kernel == 0 || stride == 0 || extent + 2 * padding < kernel) {
      throw ShapeError(layer + ": window " + std::to_string(kernel) + " does not fit extent " +
                       std::to_string(extent) + " (" + chain + ")");
    }
    const std::size_t next = (extent + 2 * padding - kernel) / stride + 1;
    if (!chain.empty()) chain += ", ";
    chain += layer + " " + std::to_string(extent) + "->" + std::to_string(next);
    extent = next;
  };

  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& spec = config.layers[i];
    const std::string name = "layer." + std::to_string(i);
    if (spec.kind == CnnLayerSpec::Kind::kPool) {
      step(name, spec.pool.window, spec.pool.stride, 0);
      continue;
    }
    const auto& c = spec.conv;
    if (c.out_channels == 0) throw ShapeError(name + ": out_channels must be positive");
    step(name, c.kernel, c.stride, c.padding);
    m.params_.push_back({name + ".weight", he_uniform({c.out_channels, channels, c.kernel, c.kernel},
                                                      channels * c.kernel * c.kernel, rng)});
    Tensor bias = Tensor::zeros({c.out_channels});
    bias.set_requires_grad(true);
    m.params_.push_back({name + ".bias", bias});
    channels = c.out_channels;
  }
  m.params_.push_back({"head.weight", he_uniform({config.n_classes, channels, extent, extent},
                                                 channels * extent * extent, rng)});
  Tensor bias = Tensor::zeros({config.n_classes});
  bias.set_requires_grad(true);
  m.params_.push_back({"head.bias", bias});
  return m;
}

ModelOutput Model::forward_cnn(const Tensor& image) const {
  std::size_t k = 0;
  FeatureField field(image);
  for (const auto& spec : cnn_.layers) {
    if (spec.kind == CnnLayerSpec::Kind::kPool) {
      field = max_pool_layer(field, spec.pool.window, spec.pool.stride);
      continue;
    }
    const auto& c = spec.conv;
    field = conv_layer(field, params_[k].value, c.stride, c.padding, c.activation, params_[k + 1].value);
    k += 2;
  }
  auto head = conv_layer(field, params_[k].value, 1, 0, Activation::kNone, params_[k + 1].value);
  ModelOutput out;
  out.scores = reshape(head.values, {cnn_.n_classes});
  out.class_activations =
      cnn_.head == CnnHead::kMarginScores ? sigmoid(out.scores) : softmax(out.scores, 0);
  return out;
}

}  // namespace capsgram
