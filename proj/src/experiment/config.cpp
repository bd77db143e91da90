#include "capsgram/experiment/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "capsgram/error.hpp"

namespace capsgram {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

const std::set<std::string> kKnownKeys = {
    "seed",           "data.path",       "data.n_train",     "data.n_val",     "data.n_probe",
    "data.canvas",    "data.seed",       "out",              "model.kind",     "model.routing",
    "model.iters",    "model.head",      "loss.mode",        "loss.w_ent",     "loss.w_ent_start",
    "loss.w_ent_end", "train.epochs",    "train.batch",      "train.lr",       "train.limit",
    "precision",      "eval.checkpoint", "eval.split",
};

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
  ConfigFile cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw UsageError(origin + ":" + std::to_string(line_no) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw UsageError(origin + ":" + std::to_string(line_no) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path.string());
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::uint64_t ConfigFile::get_count(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    if (!it->second.empty() && it->second.front() == '-') throw std::invalid_argument("negative");
    const auto v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("junk");
    return v;
  } catch (const std::logic_error&) {
    throw UsageError(origin_ + ": '" + key + "' must be a non-negative integer, got '" + it->second + "'");
  }
}

double ConfigFile::get_real(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size() || !std::isfinite(v)) throw std::invalid_argument("junk");
    return v;
  } catch (const std::logic_error&) {
    throw UsageError(origin_ + ": '" + key + "' must be a number, got '" + it->second + "'");
  }
}

void ConfigFile::check_known(const std::set<std::string>& known) const {
  for (const auto& [key, value] : values_) {
    if (!known.count(key)) throw UsageError(origin_ + ": unknown key '" + key + "'");
  }
}

RunConfig RunConfig::from(const ConfigFile& file) {
  file.check_known(kKnownKeys);
  RunConfig c;
  try {
    c.seed = file.get_count("seed", c.seed);
    c.data_path = file.get_string("data.path", c.data_path.string());
    c.out_dir = file.get_string("out", c.out_dir.string());
    c.model_kind = model_kind_from_string(file.get_string("model.kind", "capsnet"));
    c.routing = routing_mode_from_string(file.get_string("model.routing", "dynamic"));
    c.iters = file.get_count("model.iters", c.iters);
    const auto head = file.get_string("model.head", "margin");
    if (head == "margin") {
      c.cnn_head = CnnHead::kMarginScores;
    } else if (head == "cross_entropy") {
      c.cnn_head = CnnHead::kCrossEntropyLogits;
    } else {
      throw UsageError("model.head must be 'margin' or 'cross_entropy', got '" + head + "'");
    }
    c.epochs = file.get_count("train.epochs", c.epochs);
    c.batch = file.get_count("train.batch", c.batch);
    c.learning_rate = file.get_real("train.lr", c.learning_rate);
    c.train_limit = file.get_count("train.limit", c.train_limit);
    c.precision = file.get_string("precision", c.precision);

    c.schedule.mode = schedule_mode_from_string(file.get_string("loss.mode", "fixed"));
    c.schedule.total_epochs = c.epochs;
    if (c.schedule.mode == ScheduleMode::kFixed) {
      const double w = file.get_real("loss.w_ent", 0.0);
      c.schedule.w_ent_start = w;
      c.schedule.w_ent_end = w;
    } else {
      c.schedule.w_ent_start = file.get_real("loss.w_ent_start", 0.0);
      c.schedule.w_ent_end = file.get_real("loss.w_ent_end", 0.8);
    }

    if (file.has("eval.checkpoint")) c.checkpoint = file.get_string("eval.checkpoint", "");
    c.split = file.get_string("eval.split", c.split);

    c.dataset.n_train = file.get_count("data.n_train", c.dataset.n_train);
    c.dataset.n_val = file.get_count("data.n_val", c.dataset.n_val);
    c.dataset.n_probe = file.get_count("data.n_probe", c.dataset.n_probe);
    c.dataset.canvas = file.get_count("data.canvas", c.dataset.canvas);
    c.dataset.seed = file.get_count("data.seed", c.seed);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  if (c.precision != "wide") {
    throw UsageError("precision '" + c.precision + "' is not supported; only 'wide' (64-bit) is implemented");
  }
  if (c.epochs == 0) throw UsageError("train.epochs must be positive");
  if (c.batch == 0) throw UsageError("train.batch must be positive");
  if (!(c.learning_rate > 0.0)) throw UsageError("train.lr must be positive");
  if (c.iters == 0) throw UsageError("model.iters must be positive");
  if (c.split != "train" && c.split != "val" && c.split != "probe") {
    throw UsageError("eval.split must be train, val or probe");
  }
  try {
    c.schedule.validate();
    LossWeights::fixed(c.schedule.w_ent_start).validate();
    LossWeights::fixed(c.schedule.w_ent_end).validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  return c;
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "seed = " << seed << "\n";
  out << "data.path = " << data_path.string() << "\n";
  out << "model.kind = " << to_string(model_kind) << "\n";
  out << "model.routing = " << to_string(routing) << "\n";
  out << "model.iters = " << iters << "\n";
  out << "model.head = " << (cnn_head == CnnHead::kMarginScores ? "margin" : "cross_entropy") << "\n";
  out << "loss.mode = " << to_string(schedule.mode) << "\n";
  if (schedule.mode == ScheduleMode::kFixed) {
    out << "loss.w_ent = " << schedule.w_ent_start << "\n";
  } else {
    out << "loss.w_ent_start = " << schedule.w_ent_start << "\n";
    out << "loss.w_ent_end = " << schedule.w_ent_end << "\n";
  }
  out << "train.epochs = " << epochs << "\n";
  out << "train.batch = " << batch << "\n";
  out << "train.lr = " << learning_rate << "\n";
  out << "train.limit = " << train_limit << "\n";
  out << "precision = " << precision << "\n";
  return out.str();
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint ? *checkpoint : out_dir / "final.ckpt";
}

CapsNetConfig RunConfig::capsnet() const {
  auto c = CapsNetConfig::desk();
  c.routing = routing;
  for (auto& r : c.routed) r.iters = iters;
  return c;
}

CNNConfig RunConfig::cnn() const {
  auto c = CNNConfig::desk();
  c.head = cnn_head;
  return c;
}

Model build_model(const RunConfig& config) {
  return config.model_kind == ModelKind::kCnn ? build_cnn(config.cnn(), config.seed)
                                              : build_capsnet(config.capsnet(), config.seed);
}

}  // namespace capsgram
