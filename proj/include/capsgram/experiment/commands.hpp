#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "capsgram/experiment/config.hpp"
#include "capsgram/experiment/trainer.hpp"
#include "capsgram/routing/parse.hpp"

namespace capsgram {

struct ProbeReport {
  std::size_t count = 0;
  double mean_intact = 0.0;   // face-class activation on the source faces
  double mean_swapped = 0.0;  // same on their part-swapped copies
  double drop = 0.0;          // mean_intact - mean_swapped
  std::string model_kind;
  std::string routing;
  std::string checkpoint;
  std::string activation = "face-capsule norm";

  std::string to_json() const;
};

/// Mean face-class activation over each image set. DomainError when either
/// is empty.
ProbeReport measure_probe(const Model& model, const ImageSet& intact, const ImageSet& swapped);

/// The val faces each probe scene was made from, in probe order.
ImageSet probe_sources(const DatasetBundle& data);

struct InspectReport {
  std::string split;
  std::size_t index = 0;
  int label = 0;
  int prediction = 0;
  std::vector<double> activations;
  std::vector<double> layer_entropy;
  std::vector<ParseForest> forests;

  std::string dot() const;
  std::string table() const;
};

InspectReport inspect_sample(const Model& model, const DatasetSplit& split, std::size_t index);

/// Loads the model a config describes from its checkpoint.
Model load_model(const RunConfig& config);

std::string eval_json(const EvalResult& result, const std::string& split);

// Subcommands. Each writes its report to `out` and returns the exit status.
int cmd_generate(const RunConfig& config, std::ostream& out);
int cmd_train(const RunConfig& config, std::ostream& out);
int cmd_eval(const RunConfig& config, std::ostream& out);
int cmd_probe(const RunConfig& config, std::ostream& out);
int cmd_inspect(const RunConfig& config, std::size_t index, std::ostream& out);

/// Full command line: generate|train|eval|probe|inspect with --config,
/// --out, --seed (and --index for inspect). 0 success, 1 usage, 2 failure.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace capsgram
