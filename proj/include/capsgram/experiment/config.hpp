#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>

#include "capsgram/grammar/dataset.hpp"
#include "capsgram/losses/losses.hpp"
#include "capsgram/models/model.hpp"

namespace capsgram {

/// Bad command line or configuration; the CLI exits with status 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` text. `[section]` lines prefix the keys that follow
/// with "section."; '#' starts a comment.
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text, const std::string& origin = "<config>");
  static ConfigFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::uint64_t get_count(const std::string& key, std::uint64_t fallback) const;
  double get_real(const std::string& key, double fallback) const;

  /// UsageError naming the first key outside `known`.
  void check_known(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path data_path = "data";
  std::filesystem::path out_dir = "run";
  ModelKind model_kind = ModelKind::kCapsNet;
  RoutingMode routing = RoutingMode::kDynamic;
  std::size_t iters = kDefaultRoutingIterations;
  CnnHead cnn_head = CnnHead::kMarginScores;
  LossSchedule schedule = presets::unregularised(30);
  std::size_t epochs = 30;
  std::size_t batch = 32;
  double learning_rate = 1e-3;
  std::size_t train_limit = 0;  // 0 = whole training split
  std::string precision = "wide";

  // eval / probe / inspect
  std::optional<std::filesystem::path> checkpoint;
  std::string split = "val";

  DatasetConfig dataset;

  /// Reads every recognised key; UsageError for unknown keys or bad values.
  static RunConfig from(const ConfigFile& file);
  /// The keys and values this run resolved to, in ConfigFile syntax.
  std::string to_text() const;

  std::filesystem::path checkpoint_path() const;
  CapsNetConfig capsnet() const;
  CNNConfig cnn() const;
};

/// Builds the model a RunConfig describes, initialised from its seed.
Model build_model(const RunConfig& config);

}  // namespace capsgram
