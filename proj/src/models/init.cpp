#include <cmath>

#include "capsgram/error.hpp"
#include "capsgram/models/model.hpp"
#include "capsgram/tensor/ops.hpp"

namespace capsgram {

Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw ShapeError("he_uniform: fan_in must be positive");
  const Real bound = std::sqrt(6.0 / static_cast<Real>(fan_in));
  std::vector<Real> values(shape_numel(shape));
  for (auto& v : values) v = rng.uniform(-bound, bound);
  Tensor t(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  return t;
}

std::string to_string(RoutingMode mode) { return mode == RoutingMode::kEqual ? "equal" : "dynamic"; }

RoutingMode routing_mode_from_string(const std::string& name) {
  if (name == "dynamic") return RoutingMode::kDynamic;
  if (name == "equal") return RoutingMode::kEqual;
  throw DomainError("unknown routing mode '" + name + "'");
}

std::string to_string(ModelKind kind) { return kind == ModelKind::kCnn ? "cnn" : "capsnet"; }

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "capsnet") return ModelKind::kCapsNet;
  if (name == "cnn") return ModelKind::kCnn;
  throw DomainError("unknown model kind '" + name + "'");
}

const CapsNetConfig& Model::capsnet_config() const {
  if (kind_ != ModelKind::kCapsNet) throw std::logic_error("model is not a capsule network");
  return caps_;
}

const CNNConfig& Model::cnn_config() const {
  if (kind_ != ModelKind::kCnn) throw std::logic_error("model is not a CNN");
  return cnn_;
}

std::vector<Tensor> Model::parameter_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

std::size_t Model::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

const Tensor& Model::parameter(const std::string& name) const { return params_[index_of(name)].value; }

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

std::size_t Model::image_extent() const {
  return kind_ == ModelKind::kCnn ? cnn_.image_extent : caps_.image_extent;
}

std::size_t Model::n_classes() const { return kind_ == ModelKind::kCnn ? cnn_.n_classes : caps_.n_classes; }

ModelOutput Model::forward(const Tensor& image) const {
  const std::size_t e = image_extent();
  if (image.rank() != 3 || image.dim(0) != 1 || image.dim(1) != e || image.dim(2) != e) {
    throw ShapeError("forward: expected image [1," + std::to_string(e) + "," + std::to_string(e) +
                     "], got " + shape_to_string(image.shape()));
  }
  return kind_ == ModelKind::kCnn ? forward_cnn(image) : forward_capsnet(image);
}

std::vector<ModelOutput> forward(const Model& model, const Tensor& batch) {
  if (batch.rank() != 4) {
    throw ShapeError("forward: expected batch [B,1,H,W], got " + shape_to_string(batch.shape()));
  }
  std::vector<ModelOutput> out;
  out.reserve(batch.dim(0));
  for (std::size_t b = 0; b < batch.dim(0); ++b) out.push_back(model.forward(select(batch, b)));
  return out;
}

}  // namespace capsgram
