#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "capsgram/equivariant/layers.hpp"
#include "capsgram/routing/routing.hpp"
#include "capsgram/tensor/random.hpp"
#include "capsgram/tensor/tensor.hpp"

namespace capsgram {

struct ConvSpec {
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Activation activation = Activation::kRelu;
};

struct PrimaryCapsSpec {
  std::size_t n_types = 8;
  std::size_t dim = 8;
  std::size_t kernel = 3;
  std::size_t stride = 2;
};

/// kernel == 0 means "cover the whole remaining extent".
struct RoutedLayerSpec {
  std::size_t n_out = 0;
  std::size_t dim_out = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t iters = kDefaultRoutingIterations;
};

enum class RoutingMode { kDynamic, kEqual };

std::string to_string(RoutingMode mode);
RoutingMode routing_mode_from_string(const std::string& name);

struct CapsNetConfig {
  std::size_t image_extent = 32;
  std::vector<ConvSpec> stem;
  PrimaryCapsSpec primary;
  std::vector<RoutedLayerSpec> routed;
  RoutingMode routing = RoutingMode::kDynamic;
  std::size_t n_classes = 2;

  static CapsNetConfig desk();
  /// 12 x 12 input, no stem, two routed layers; small enough to check every
  /// parameter coordinate by finite differences.
  static CapsNetConfig miniature();
};

struct PoolSpec {
  std::size_t window = 2;
  std::size_t stride = 2;
};

struct CnnLayerSpec {
  enum class Kind { kConv, kPool } kind = Kind::kConv;
  ConvSpec conv;
  PoolSpec pool;

  static CnnLayerSpec convolution(ConvSpec c) { return {Kind::kConv, c, {}}; }
  static CnnLayerSpec pooling(PoolSpec p) { return {Kind::kPool, {}, p}; }
};

enum class CnnHead { kMarginScores, kCrossEntropyLogits };

struct CNNConfig {
  std::size_t image_extent = 32;
  std::vector<CnnLayerSpec> layers;
  CnnHead head = CnnHead::kMarginScores;
  std::size_t n_classes = 2;

  static CNNConfig desk();
};

struct ModelOutput {
  Tensor class_activations;   // [n_classes], each in [0,1)
  Tensor scores;              // CNN only: pre-activation per-class scores
  std::vector<RoutingTrace> traces;  // one per routed layer, empty for the CNN
};

struct Parameter {
  std::string name;
  Tensor value;
};

enum class ModelKind { kCapsNet, kCnn };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

class Model {
 public:
  ModelKind kind() const { return kind_; }
  const CapsNetConfig& capsnet_config() const;
  const CNNConfig& cnn_config() const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Tensor> parameter_tensors() const;
  const Tensor& parameter(const std::string& name) const;
  std::size_t parameter_count() const;

  std::size_t image_extent() const;
  std::size_t n_classes() const;

  /// One image, [1,H,W] with pixels in [0,1].
  ModelOutput forward(const Tensor& image) const;

 private:
  friend Model build_capsnet(const CapsNetConfig&, std::uint64_t);
  friend Model build_cnn(const CNNConfig&, std::uint64_t);

  ModelOutput forward_capsnet(const Tensor& image) const;
  ModelOutput forward_cnn(const Tensor& image) const;
  std::size_t index_of(const std::string& name) const;

  ModelKind kind_ = ModelKind::kCapsNet;
  CapsNetConfig caps_;
  CNNConfig cnn_;
  std::vector<Parameter> params_;
};

/// Throws ShapeError (naming the layer chain) if the extents do not fit.
Model build_capsnet(const CapsNetConfig& config, std::uint64_t seed);
Model build_cnn(const CNNConfig& config, std::uint64_t seed);

/// batch: [B,1,H,W]; one output per sample.
std::vector<ModelOutput> forward(const Model& model, const Tensor& batch);

/// Weights drawn from U(-sqrt(6/fan_in), sqrt(6/fan_in)).
Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace capsgram
