#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "capsgram/experiment/config.hpp"
#include "capsgram/grammar/dataset.hpp"
#include "capsgram/models/model.hpp"

namespace capsgram {

/// Training hit a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MetricsRecord {
  std::size_t epoch = 0;
  double loss_total = 0.0;
  double loss_margin = 0.0;
  double loss_entropy = 0.0;
  double w_cls = 1.0;
  double w_ent = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  std::vector<double> val_entropy;  // mean final-iteration entropy per routed layer, nats
  double val_entropy_total = 0.0;
  double wall_time_s = 0.0;

  /// One JSON object, wall_time_s last.
  std::string to_json() const;
};

struct EvalResult {
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::vector<double> layer_entropy;
  double entropy_total = 0.0;
  std::vector<int> predictions;
  std::vector<double> face_activation;  // per sample
};

/// Visiting order of `n` training samples in `epoch`: a Fisher-Yates
/// shuffle drawn from its own (seed, epoch) stream.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// argmax of the class activations, lowest index on ties.
int predict_class(const Tensor& activations);

/// Forward passes without gradient over `indices` of `split` (all when empty).
EvalResult evaluate(const Model& model, const DatasetSplit& split, const std::vector<std::size_t>& indices = {});

struct TrainResult {
  std::vector<MetricsRecord> history;
  double best_val_accuracy = -1.0;
  std::size_t best_epoch = 0;
};

/// Minibatch Adam over the training split; per-epoch shuffles come from
/// (seed, epoch) streams. Writes metrics.jsonl, final.ckpt, best.ckpt and
/// run.cfg into config.out_dir. Progress lines go to `log` when given.
TrainResult train(const RunConfig& config, const DatasetBundle& data, Model& model, std::ostream* log = nullptr);

}  // namespace capsgram
