#include "capsgram/grammar/dataset.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "capsgram/error.hpp"
#include "capsgram/grammar/part_swap.hpp"

namespace capsgram {

namespace {

constexpr const char* kSplits[] = {"train", "val", "probe"};

std::uint64_t split_code(const std::string& split) {
  if (split == "train") return 0;
  if (split == "val") return 1;
  if (split == "probe") return 2;
  throw DomainError("unknown split '" + split + "'");
}

const SceneGrammar& face_grammar() {
  static const SceneGrammar g = builtin_face_grammar();
  return g;
}

const SceneGrammar& distractor_grammar() {
  static const SceneGrammar g = builtin_distractor_grammar();
  return g;
}

void add_scene(DatasetSplit& split, const Tensor& image, SceneManifest manifest) {
  split.images.append(image);
  split.labels.push_back(static_cast<std::uint8_t>(manifest.label));
  split.manifests.push_back(std::move(manifest));
}

std::map<std::string, std::string> read_cfg(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace

void DatasetConfig::validate() const {
  if (n_train % 2 || n_val % 2) throw DomainError("dataset: train and val sizes must be even for exact balance");
  if (n_probe > 0 && n_val == 0) throw DomainError("dataset: the probe set needs validation faces");
  if (canvas < 24) throw DomainError("dataset: canvas must be at least 24 pixels");
}

const DatasetSplit& DatasetBundle::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "probe") return probe;
  throw DomainError("unknown split '" + name + "'");
}

std::vector<std::size_t> DatasetBundle::indices_with_label(const std::string& name, int label) const {
  const auto& s = split(name);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.labels[i] == label) out.push_back(i);
  }
  return out;
}

Scene dataset_scene(const DatasetConfig& config, const std::string& split, std::size_t index) {
  const std::uint64_t code = split_code(split);
  if (code == 2) throw DomainError("dataset_scene: probe scenes are derived from val faces");
  Rng rng = Rng::stream(config.seed, code, index);
  const int label = static_cast<int>(index % 2);
  Scene s = sample_scene(label == kFaceLabel ? face_grammar() : distractor_grammar(), rng, config.canvas, label);
  s.manifest.index = index;
  return s;
}

DatasetBundle build_dataset(const DatasetConfig& config) {
  config.validate();
  DatasetBundle b;
  b.config = config;
  b.train.name = "train";
  b.val.name = "val";
  b.probe.name = "probe";
  for (std::size_t i = 0; i < config.n_train; ++i) {
    Scene s = dataset_scene(config, "train", i);
    add_scene(b.train, s.image, std::move(s.manifest));
  }
  std::vector<Scene> faces;
  for (std::size_t i = 0; i < config.n_val; ++i) {
    Scene s = dataset_scene(config, "val", i);
    if (s.manifest.label == kFaceLabel) faces.push_back(s);
    add_scene(b.val, s.image, std::move(s.manifest));
  }
  for (std::size_t i = 0; i < config.n_probe; ++i) {
    const Scene& face = faces[i % faces.size()];
    Rng rng = Rng::stream(config.seed, split_code("probe"), i);
    SwapResult swapped = part_swap(face.image, face.manifest, rng);
    swapped.manifest.index = i;
    add_scene(b.probe, swapped.image, std::move(swapped.manifest));
  }
  for (DatasetSplit* s : {&b.train, &b.val, &b.probe}) {
    if (s->size() == 0) {
      s->images.height = config.canvas;
      s->images.width = config.canvas;
    }
  }
  return b;
}

void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const char* name : kSplits) {
    const auto& s = bundle.split(name);
    write_idx_images(dir / (std::string(name) + "-images.idx"), s.images);
    write_idx_labels(dir / (std::string(name) + "-labels.idx"), s.labels);
    write_manifest(dir / (std::string(name) + "-manifest.jsonl"), s.manifests);
  }
  std::ofstream cfg(dir / "dataset.cfg", std::ios::trunc);
  const auto& c = bundle.config;
  cfg << "seed = " << c.seed << "\ncanvas = " << c.canvas << "\nn_train = " << c.n_train
      << "\nn_val = " << c.n_val << "\nn_probe = " << c.n_probe << "\n";
  if (!cfg) throw std::runtime_error("failed writing " + (dir / "dataset.cfg").string());
}

DatasetBundle generate_dataset(const DatasetConfig& config, const std::filesystem::path& dir) {
  DatasetBundle b = build_dataset(config);
  save_dataset(b, dir);
  return b;
}

DatasetBundle load_dataset(const std::filesystem::path& dir) {
  DatasetBundle b;
  const auto kv = read_cfg(dir / "dataset.cfg");
  auto number = [&](const char* key) -> std::uint64_t {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError((dir / "dataset.cfg").string() + ": missing '" + key + "'");
    try {
      std::size_t used = 0;
      const auto v = std::stoull(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("junk");
      return v;
    } catch (const std::logic_error&) {
      throw FormatError((dir / "dataset.cfg").string() + ": '" + key + "' is not a count");
    }
  };
  b.config.seed = number("seed");
  b.config.canvas = number("canvas");
  b.config.n_train = number("n_train");
  b.config.n_val = number("n_val");
  b.config.n_probe = number("n_probe");
  const std::size_t expected[] = {b.config.n_train, b.config.n_val, b.config.n_probe};
  DatasetSplit* splits[] = {&b.train, &b.val, &b.probe};
  for (int k = 0; k < 3; ++k) {
    const std::string name = kSplits[k];
    auto& s = *splits[k];
    s.name = name;
    s.images = read_idx_images(dir / (name + "-images.idx"));
    s.labels = read_idx_labels(dir / (name + "-labels.idx"));
    s.manifests = read_manifest(dir / (name + "-manifest.jsonl"));
    if (s.images.count != expected[k] || s.labels.size() != expected[k] || s.manifests.size() != expected[k]) {
      throw FormatError(dir.string() + ": " + name + " split has " + std::to_string(s.images.count) + " images, " +
                        std::to_string(s.labels.size()) + " labels and " + std::to_string(s.manifests.size()) +
                        " manifest lines; dataset.cfg says " + std::to_string(expected[k]));
    }
    if (s.images.height != b.config.canvas || s.images.width != b.config.canvas) {
      throw FormatError(dir.string() + ": " + name + " images are " + std::to_string(s.images.height) + "x" +
                        std::to_string(s.images.width) + ", canvas is " + std::to_string(b.config.canvas));
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.labels[i] > 1 || s.manifests[i].label != s.labels[i] || s.manifests[i].index != i) {
        throw FormatError(dir.string() + ": " + name + " record " + std::to_string(i) +
                          " disagrees between labels and manifest");
      }
    }
  }
  return b;
}

}  // namespace capsgram
