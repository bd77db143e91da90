#include "capsgram/experiment/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "capsgram/error.hpp"
#include "capsgram/losses/losses.hpp"
#include "capsgram/models/adam.hpp"
#include "capsgram/models/checkpoint.hpp"
#include "capsgram/tensor/ops.hpp"

namespace capsgram {

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566;

}  // namespace

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::stream(seed, kShuffleStream, epoch);
  for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
  return order;
}

std::string MetricsRecord::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["loss_total"] = loss_total;
  j["loss_margin"] = loss_margin;
  j["loss_entropy"] = loss_entropy;
  j["w_cls"] = w_cls;
  j["w_ent"] = w_ent;
  j["train_accuracy"] = train_accuracy;
  j["val_accuracy"] = val_accuracy;
  j["val_entropy"] = val_entropy;
  j["val_entropy_total"] = val_entropy_total;
  j["wall_time_s"] = wall_time_s;
  return j.dump();
}

int predict_class(const Tensor& activations) {
  const auto a = activations.data();
  int best = 0;
  for (std::size_t k = 1; k < a.size(); ++k) {
    if (a[k] > a[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
  }
  return best;
}

EvalResult evaluate(const Model& model, const DatasetSplit& split, const std::vector<std::size_t>& indices) {
  NoGradGuard no_grad;
  std::vector<std::size_t> which = indices;
  if (which.empty()) {
    which.resize(split.size());
    std::iota(which.begin(), which.end(), 0);
  }
  EvalResult r;
  r.count = which.size();
  for (std::size_t i : which) {
    const auto out = model.forward(split.images.image(i));
    const int pred = predict_class(out.class_activations);
    r.predictions.push_back(pred);
    r.face_activation.push_back(out.class_activations.data()[kFaceLabel]);
    if (pred == split.labels[i]) ++r.correct;
    if (r.layer_entropy.empty()) r.layer_entropy.assign(out.traces.size(), 0.0);
    for (std::size_t l = 0; l < out.traces.size(); ++l) {
      r.layer_entropy[l] += routing_entropy(out.traces[l]).item();
    }
  }
  if (r.count > 0) {
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.count);
    for (auto& e : r.layer_entropy) {
      e /= static_cast<double>(r.count);
      r.entropy_total += e;
    }
  }
  return r;
}

TrainResult train(const RunConfig& config, const DatasetBundle& data, Model& model, std::ostream* log) {
  const auto start = std::chrono::steady_clock::now();
  const auto& train_split = data.train;
  const std::size_t n = config.train_limit > 0 ? std::min(config.train_limit, train_split.size()) : train_split.size();
  if (n == 0) throw DomainError("train: the training split is empty");
  if (model.image_extent() != train_split.images.height) {
    throw ShapeError("train: model expects " + std::to_string(model.image_extent()) + "-pixel images, dataset has " +
                     std::to_string(train_split.images.height));
  }

  std::filesystem::create_directories(config.out_dir);
  {
    std::ofstream cfg(config.out_dir / "run.cfg", std::ios::trunc);
    cfg << config.to_text();
  }
  std::ofstream metrics(config.out_dir / "metrics.jsonl", std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + (config.out_dir / "metrics.jsonl").string());

  const bool cross_entropy_head =
      model.kind() == ModelKind::kCnn && model.cnn_config().head == CnnHead::kCrossEntropyLogits;
  Adam optimiser(model.parameter_tensors(), AdamOptions{config.learning_rate});
  TrainResult result;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const LossWeights weights = schedule_weights(epoch, config.schedule);
    const auto order = epoch_order(n, config.seed, epoch);
    MetricsRecord rec;
    rec.epoch = epoch;
    rec.w_cls = weights.w_cls;
    rec.w_ent = weights.w_ent;
    std::size_t correct = 0;

    for (std::size_t b0 = 0, batch_no = 0; b0 < n; b0 += config.batch, ++batch_no) {
      const std::size_t b1 = std::min(n, b0 + config.batch);
      const Real inv = 1.0 / static_cast<Real>(b1 - b0);
      optimiser.zero_grad();
      for (std::size_t k = b0; k < b1; ++k) {
        const std::size_t i = order[k];
        const int target = train_split.labels[i];
        const auto where = "at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_no) +
                           ", sample " + std::to_string(i);
        ModelOutput out;
        Tensor cls, ent, loss;
        try {
          out = model.forward(train_split.images.image(i));
          cls = cross_entropy_head ? cross_entropy(out.scores, static_cast<std::size_t>(target))
                                   : margin_loss(out.class_activations, static_cast<std::size_t>(target));
          ent = out.traces.empty() ? Tensor::scalar(0.0) : entropy_loss(out.traces);
          loss = combined_loss(cls, ent, weights);
        } catch (const DomainError& e) {
          // ops reject non-finite inputs before the loss is formed
          throw TrainingError("diverged " + where + ": " + e.what());
        }
        if (!std::isfinite(loss.item())) throw TrainingError("non-finite loss " + where);
        scale(loss, inv).backward();
        rec.loss_total += loss.item();
        rec.loss_margin += cls.item();
        rec.loss_entropy += ent.item();
        if (predict_class(out.class_activations) == target) ++correct;
      }
      optimiser.step();
    }
    rec.loss_total /= static_cast<double>(n);
    rec.loss_margin /= static_cast<double>(n);
    rec.loss_entropy /= static_cast<double>(n);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);

    const EvalResult val = evaluate(model, data.val);
    rec.val_accuracy = val.accuracy;
    rec.val_entropy = val.layer_entropy;
    rec.val_entropy_total = val.entropy_total;
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (rec.val_accuracy > result.best_val_accuracy) {
      result.best_val_accuracy = rec.val_accuracy;
      result.best_epoch = epoch;
      save_checkpoint(model, config.out_dir / "best.ckpt");
    }
    metrics << rec.to_json() << '\n' << std::flush;
    if (log) {
      *log << "epoch " << epoch << " loss " << rec.loss_total << " margin " << rec.loss_margin << " entropy "
           << rec.loss_entropy << " val_acc " << rec.val_accuracy << " val_entropy " << rec.val_entropy_total
           << " (" << rec.wall_time_s << " s)\n"
           << std::flush;
    }
    result.history.push_back(std::move(rec));
  }
  save_checkpoint(model, config.out_dir / "final.ckpt");
  return result;
}

}  // namespace capsgram
