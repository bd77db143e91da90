#include "capsgram/experiment/commands.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "capsgram/error.hpp"
#include "capsgram/models/checkpoint.hpp"
#include "capsgram/routing/routing.hpp"

namespace capsgram {

namespace {

DatasetBundle require_dataset(const RunConfig& config) {
  if (!std::filesystem::exists(config.data_path / "dataset.cfg")) {
    throw UsageError("no dataset at '" + config.data_path.string() + "' (run generate first)");
  }
  return load_dataset(config.data_path);
}

double mean_face_activation(const Model& model, const ImageSet& images) {
  NoGradGuard no_grad;
  double total = 0.0;
  for (std::size_t i = 0; i < images.count; ++i) {
    const auto out = model.forward(images.image(i));
    total += out.class_activations.data()[kFaceLabel];
  }
  return total / static_cast<double>(images.count);
}

}  // namespace

std::string ProbeReport::to_json() const {
  nlohmann::ordered_json j;
  j["count"] = count;
  j["mean_intact"] = mean_intact;
  j["mean_swapped"] = mean_swapped;
  j["drop"] = drop;
  j["metadata"] = {{"model", model_kind}, {"routing", routing}, {"checkpoint", checkpoint}, {"activation", activation}};
  return j.dump(2);
}

ProbeReport measure_probe(const Model& model, const ImageSet& intact, const ImageSet& swapped) {
  if (intact.count == 0 || swapped.count == 0) throw DomainError("probe: empty image set");
  ProbeReport r;
  r.count = swapped.count;
  r.mean_intact = mean_face_activation(model, intact);
  r.mean_swapped = mean_face_activation(model, swapped);
  r.drop = r.mean_intact - r.mean_swapped;
  r.model_kind = to_string(model.kind());
  r.routing = model.kind() == ModelKind::kCapsNet ? to_string(model.capsnet_config().routing) : "none";
  return r;
}

ImageSet probe_sources(const DatasetBundle& data) {
  const auto faces = data.indices_with_label("val", kFaceLabel);
  ImageSet out;
  out.height = data.val.images.height;
  out.width = data.val.images.width;
  if (faces.empty()) return out;
  for (std::size_t i = 0; i < data.probe.size(); ++i) out.append(data.val.images.image(faces[i % faces.size()]));
  return out;
}

std::string InspectReport::dot() const { return parse_layers_to_dot(forests); }

std::string InspectReport::table() const {
  std::ostringstream os;
  os << split << "[" << index << "] label " << label << " prediction " << prediction << "\n";
  os << "activations";
  for (double a : activations) os << ' ' << std::fixed << std::setprecision(6) << a;
  os << "\n";
  os << "layer  n_in  n_out  grid   entropy(nats)  max(ln n_out)\n";
  double total = 0.0;
  for (std::size_t l = 0; l < forests.size(); ++l) {
    const auto& f = forests[l];
    std::ostringstream grid;
    grid << f.height << "x" << f.width;
    os << std::left << std::setw(7) << l + 1 << std::setw(6) << f.n_in << std::setw(7) << f.n_out << std::setw(7)
       << grid.str() << std::setw(15) << std::setprecision(6) << layer_entropy[l]
       << std::log(static_cast<double>(f.n_out)) << "\n";
    total += layer_entropy[l];
  }
  os << "total  " << std::setprecision(6) << total << "\n";
  return os.str();
}

InspectReport inspect_sample(const Model& model, const DatasetSplit& split, std::size_t index) {
  if (index >= split.size()) {
    throw UsageError("index " + std::to_string(index) + " out of range for split '" + split.name + "' of " +
                     std::to_string(split.size()) + " scenes");
  }
  if (model.kind() != ModelKind::kCapsNet) throw UsageError("inspect needs a capsule model");
  NoGradGuard no_grad;
  const auto out = model.forward(split.images.image(index));
  InspectReport r;
  r.split = split.name;
  r.index = index;
  r.label = split.labels[index];
  r.prediction = predict_class(out.class_activations);
  const auto acts = out.class_activations.data();
  r.activations.assign(acts.begin(), acts.end());
  for (const auto& trace : out.traces) {
    r.layer_entropy.push_back(routing_entropy(trace).item());
    r.forests.push_back(extract_parse(trace));
  }
  return r;
}

Model load_model(const RunConfig& config) {
  Model model = build_model(config);
  const auto path = config.checkpoint_path();
  if (!std::filesystem::exists(path)) throw UsageError("checkpoint '" + path.string() + "' does not exist");
  load_checkpoint(model, path);
  return model;
}

std::string eval_json(const EvalResult& result, const std::string& split) {
  nlohmann::ordered_json j;
  j["split"] = split;
  j["count"] = result.count;
  j["correct"] = result.correct;
  j["accuracy"] = result.accuracy;
  j["entropy"] = result.layer_entropy;
  j["entropy_total"] = result.entropy_total;
  j["predictions"] = result.predictions;
  return j.dump();
}

int cmd_generate(const RunConfig& config, std::ostream& out) {
  try {
    config.dataset.validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  const auto bundle = generate_dataset(config.dataset, config.data_path);
  out << "wrote " << bundle.train.size() << " train, " << bundle.val.size() << " val, " << bundle.probe.size()
      << " probe scenes to " << config.data_path.string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& config, std::ostream& out) {
  const auto data = require_dataset(config);
  Model model = build_model(config);
  const auto result = train(config, data, model, &out);
  out << "best val accuracy " << result.best_val_accuracy << " at epoch " << result.best_epoch << "\n";
  return 0;
}

int cmd_eval(const RunConfig& config, std::ostream& out) {
  const auto data = require_dataset(config);
  const Model model = load_model(config);
  const auto& split = data.split(config.split);
  out << eval_json(evaluate(model, split), config.split) << "\n";
  return 0;
}

int cmd_probe(const RunConfig& config, std::ostream& out) {
  const auto data = require_dataset(config);
  const Model model = load_model(config);
  if (data.probe.size() == 0) throw UsageError("the dataset has no probe scenes");
  auto report = measure_probe(model, probe_sources(data), data.probe.images);
  report.checkpoint = config.checkpoint_path().string();
  std::filesystem::create_directories(config.out_dir);
  std::ofstream(config.out_dir / "probe.json", std::ios::trunc) << report.to_json() << "\n";
  out << report.to_json() << "\n";
  return 0;
}

int cmd_inspect(const RunConfig& config, std::size_t index, std::ostream& out) {
  const auto data = require_dataset(config);
  const Model model = load_model(config);
  const auto report = inspect_sample(model, data.split(config.split), index);
  std::filesystem::create_directories(config.out_dir);
  const auto dot_path = config.out_dir / ("parse-" + config.split + "-" + std::to_string(index) + ".dot");
  std::ofstream(dot_path, std::ios::trunc) << report.dot();
  out << report.table() << "parse forest written to " << dot_path.string() << "\n";
  return 0;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Capsule routing experiments on synthetic grammar scenes"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t index = 0;

  std::vector<CLI::App*> subs;
  for (const char* name : {"generate", "train", "eval", "probe", "inspect"}) {
    static const std::map<std::string, std::string> help = {
        {"generate", "write the train/val/probe scene dataset"},
        {"train", "train a model and write metrics and checkpoints"},
        {"eval", "accuracy and routing entropy of a checkpoint on a split"},
        {"probe", "face activation on intact vs part-swapped faces"},
        {"inspect", "parse forest and entropy table for one scene"}};
    auto* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (dataset directory for generate)");
    sub->add_option("--seed", seed, "overrides the configured seed");
    if (std::string(name) == "inspect") sub->add_option("--index", index, "scene index in eval.split")->required();
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, er;
    const int code = app.exit(e, o, er);
    out << o.str();
    err << er.str();
    return code == 0 ? 0 : 1;
  }

  try {
    ConfigFile file = config_path.empty() ? ConfigFile{} : ConfigFile::load(config_path);
    const std::string command = app.get_subcommands().front()->get_name();
    if (!out_dir.empty()) file.set(command == "generate" ? "data.path" : "out", out_dir);
    if (app.get_subcommands().front()->count("--seed") > 0) file.set("seed", std::to_string(seed));
    const RunConfig config = RunConfig::from(file);
    if (command == "generate") return cmd_generate(config, out);
    if (command == "train") return cmd_train(config, out);
    if (command == "eval") return cmd_eval(config, out);
    if (command == "probe") return cmd_probe(config, out);
    return cmd_inspect(config, index, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "failed: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace capsgram
