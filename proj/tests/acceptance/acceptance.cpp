// Acceptance suite: one PASS/FAIL line per criterion. Criteria 5-8 train the
// full desk experiment matrix and take tens of minutes on one core.
//
//   capsgram_acceptance [--work DIR] [--only 1,2,...]

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "capsgram/equivariant/layers.hpp"
#include "capsgram/experiment/commands.hpp"
#include "capsgram/losses/losses.hpp"
#include "capsgram/routing/routing.hpp"
#include "capsgram/tensor/grad_check.hpp"
#include "capsgram/tensor/ops.hpp"
#include "oracles.hpp"
#include "routing_oracles.hpp"

using namespace capsgram;
namespace fs = std::filesystem;
using oracle::random_tensor;
using oracle::values_of;

namespace {

// Tolerances and thresholds.
constexpr std::size_t kRoutingStacks = 1000;
constexpr double kSimplexTol = 1e-9;
constexpr double kSquashTol = 1e-9;
constexpr double kEntropyTol = 1e-9;
constexpr double kRoutingBudgetS = 60.0;

constexpr std::size_t kGradPoints = 10;
constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetS = 120.0;

constexpr double kEquivarianceTol = 1e-8;
constexpr std::size_t kOracleMaxExtent = 8;

constexpr double kUnregEntropyMin = 1.0;
constexpr double kRegEntropyMax = 0.1;
constexpr double kRunBudgetS = 15 * 60.0;
constexpr double kAccuracyMin = 0.97;
constexpr double kAccuracyGapMax = 0.03;
constexpr double kRegVsUnregDropRatio = 1.5;
constexpr double kCnnVsRegDropRatio = 0.25;

constexpr std::uint64_t kSeed = 42;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

Outcome routing_invariants() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1001);
  double simplex = 0.0, squash_err = 0.0, one_iter = 0.0, below = 0.0, above = 0.0, equal_err = 0.0;
  for (std::size_t trial = 0; trial < kRoutingStacks; ++trial) {
    const std::size_t n_in = 1 + rng.below(6), n_out = 2 + rng.below(5), dim = 1 + rng.below(8);
    const std::size_t h = 1 + rng.below(4), w = 1 + rng.below(4);
    const double magnitude = std::pow(10.0, -2.0 + 4.0 * rng.uniform());
    PredictionStack s(random_tensor(rng, {n_in, n_out, dim, h, w}, magnitude));

    const auto dyn = dynamic_route(s, 3);
    for (const auto& c : dyn.trace.coefficients) {
      for (double v : c.data()) simplex = std::max(simplex, v < 0.0 ? -v : 0.0);
      const auto sums = reduce_sum(c, {1});
      for (double v : sums.data()) simplex = std::max(simplex, std::abs(v - 1.0));
    }

    const auto v = random_tensor(rng, {n_out, dim, h, w}, magnitude);
    const auto q = squash(v, 1);
    const auto vn = l2_norm(v, 1, 0.0);
    const auto qn = l2_norm(q, 1, 0.0);
    for (std::size_t k = 0; k < vn.numel(); ++k) {
      const double n = vn.data()[k];
      squash_err = std::max(squash_err, std::abs(qn.data()[k] - n * n / (1.0 + n * n)));
    }

    one_iter = std::max(one_iter, max_abs_diff(values_of(dynamic_route(s, 1).output.values),
                                               values_of(equal_route(s).values)));

    const double ln_out = std::log(static_cast<double>(n_out));
    for (double e : dyn.trace.entropy_mean) {
      below = std::max(below, -e);
      above = std::max(above, e - ln_out);
    }
    equal_err = std::max(equal_err, std::abs(routing_entropy(equal_route_traced(s).trace).item() - ln_out));
  }
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = simplex <= kSimplexTol && squash_err <= kSquashTol && one_iter == 0.0 && below <= kEntropyTol &&
           above <= kEntropyTol && equal_err <= kEntropyTol && elapsed < kRoutingBudgetS;
  o.detail = std::to_string(kRoutingStacks) + " stacks: simplex " + fmt(simplex) + ", squash law " +
             fmt(squash_err) + ", 1-iteration vs equal " + fmt(one_iter) + ", entropy below 0 by " +
             fmt(std::max(below, 0.0)) + ", above ln n_out by " + fmt(std::max(above, 0.0)) + ", equal attainment " +
             fmt(equal_err) + ", " + fmt(elapsed, 3) + " s";
  return o;
}

Outcome gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  const auto cfg = CapsNetConfig::miniature();
  for (std::size_t p = 0; p < kGradPoints; ++p) {
    Model m = build_capsnet(cfg, 500 + p);
    Rng rng(900 + p);
    std::vector<Real> px(cfg.image_extent * cfg.image_extent);
    for (auto& v : px) v = rng.uniform();
    const Tensor image({1, cfg.image_extent, cfg.image_extent}, px);
    const std::size_t target = rng.below(cfg.n_classes);
    auto loss = [&] {
      const auto out = m.forward(image);
      return combined_loss(margin_loss(out.class_activations, target), entropy_loss(out.traces),
                           LossWeights::fixed(0.5));
    };
    worst = std::max(worst, grad_check_params(loss, m.parameter_tensors(), 1e-5));
  }
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = worst < kGradTol && elapsed < kGradBudgetS;
  o.detail = std::to_string(kGradPoints) + " parameter points, 2 routed layers, every coordinate: max relative error " +
             fmt(worst) + ", " + fmt(elapsed, 3) + " s";
  return o;
}

Outcome equivariance() {
  Rng rng(3003);
  const auto stem = random_tensor(rng, {4, 2, 3, 3}, 0.5);
  const auto primary = random_tensor(rng, {3 * 4, 4, 3, 3}, 0.5);
  const auto filters = random_tensor(rng, {2, 4, 4, 3, 3}, 0.5);

  auto pipeline = [&](std::size_t stride) -> GridMap {
    return [&, stride](const Tensor& x) {
      const auto a = conv_layer(FeatureField(x), stem, 1, 0, Activation::kRelu);
      const auto b = conv_layer(a, primary, stride, 0, Activation::kNone);
      const auto caps = squash(reshape(b.values, {3, 4, b.height(), b.width()}), 1);
      return dynamic_route(predict(CapsuleField(caps), filters, stride, 0), 3).output.values;
    };
  };
  const Geometry g3{3, 3, 1, 0};
  const Geometry g3s2{3, 3, 2, 0};

  double stride1 = 0.0;
  const auto x = random_tensor(rng, {2, 16, 16});
  for (Shift s : {Shift{1, 0}, Shift{0, -2}, Shift{2, 3}, Shift{-3, -1}}) {
    stride1 = std::max(stride1, check_translation_equivariance(pipeline(1), g3.then(g3).then(g3), x, s));
  }

  double strided = 0.0;
  const auto y = random_tensor(rng, {2, 28, 28});
  for (Shift s : {Shift{4, 0}, Shift{0, -4}, Shift{4, 8}}) {
    strided = std::max(strided, check_translation_equivariance(pipeline(2), g3.then(g3s2).then(g3s2), y, s));
  }
  const FeatureField f(random_tensor(rng, {3, 20, 20}));
  const auto k = random_tensor(rng, {2, 3, 3, 3});
  for (Shift s : {Shift{2, 0}, Shift{-2, 4}, Shift{6, -2}}) {
    strided = std::max(strided, check_pool_equivariance(f, 2, 2, s));
    strided = std::max(strided, check_pool_equivariance(f, 3, 2, s));
    strided = std::max(strided, check_translation_equivariance(f, k, 2, 1, Activation::kRelu, s));
  }

  Outcome o;
  o.pass = stride1 < kEquivarianceTol && strided < kEquivarianceTol;
  o.detail = "stride-1 capsule pipeline (conv, primary caps, squash, predict, 3-iteration routing) " + fmt(stride1) +
             "; stride-2 capsule pipeline, max pool and strided conv at stride-multiple shifts " + fmt(strided);
  return o;
}

Outcome oracle_equivalence() {
  Rng rng(4004);
  std::size_t cases = 0, mismatches = 0;
  for (std::size_t h = 1; h <= kOracleMaxExtent; ++h) {
    for (std::size_t w = 1; w <= kOracleMaxExtent; ++w) {
      for (std::size_t pad = 0; pad <= 2; ++pad) {
        for (std::size_t kh = 1; kh <= std::min<std::size_t>(kOracleMaxExtent, h + 2 * pad); ++kh) {
          for (std::size_t kw = 1; kw <= std::min<std::size_t>(kOracleMaxExtent, w + 2 * pad); ++kw) {
            for (std::size_t stride = 1; stride <= 3; ++stride) {
              const std::size_t c = 1 + rng.below(3), out = 1 + rng.below(3);
              const auto x = random_tensor(rng, {c, h, w});
              const auto k = random_tensor(rng, {out, c, kh, kw});
              ++cases;
              if (values_of(correlate2d(x, k, stride, pad)) !=
                  oracle::correlate(values_of(x), c, h, w, values_of(k), out, kh, kw, stride, pad)) {
                ++mismatches;
              }
            }
          }
        }
      }
      for (std::size_t window = 1; window <= std::min(h, w); ++window) {
        for (std::size_t stride = 1; stride <= 3; ++stride) {
          const std::size_t c = 1 + rng.below(3);
          const auto x = random_tensor(rng, {c, h, w});
          ++cases;
          if (values_of(max_pool_window(x, window, stride)) != oracle::max_pool(values_of(x), c, h, w, window, stride)) {
            ++mismatches;
          }
        }
      }
      for (std::size_t rep = 0; rep < 4; ++rep) {
        const auto s = random_tensor(rng, {1 + rng.below(kOracleMaxExtent), 1 + rng.below(kOracleMaxExtent),
                                           1 + rng.below(kOracleMaxExtent), h, w});
        ++cases;
        if (values_of(equal_route(PredictionStack(s)).values) != oracle::equal_route(s)) ++mismatches;
      }
    }
  }
  Outcome o;
  o.pass = mismatches == 0;
  o.detail = std::to_string(cases) + " cases (correlate2d, max_pool, equal_route; extents <= " +
             std::to_string(kOracleMaxExtent) + "), " + std::to_string(mismatches) + " not bit-identical";
  return o;
}

// ---------------------------------------------------------------------------
// Desk experiment matrix.

struct RunSummary {
  double wall_s = 0.0;
  double val_accuracy = 0.0;
  double val_entropy = 0.0;
  std::vector<double> layer_entropy;
  ProbeReport probe;
};

struct Matrix {
  fs::path work;
  DatasetBundle data;
  std::map<std::string, RunSummary> runs;
};

const std::vector<std::pair<std::string, std::string>> kRuns = {
    {"unregcaps", "loss.w_ent = 0\n"},
    {"0.4caps", "loss.w_ent = 0.4\n"},
    {"0.8caps", "loss.w_ent = 0.8\n"},
    {"schcaps", "loss.mode = linear_ramp\nloss.w_ent_start = 0\nloss.w_ent_end = 0.8\n"},
    {"equalcaps", "model.routing = equal\n"},
    {"cnn", "model.kind = cnn\n"},
};

RunConfig run_config(const fs::path& work, const std::string& name, const std::string& extra,
                     const std::string& out_name) {
  return RunConfig::from(ConfigFile::parse("seed = " + std::to_string(kSeed) + "\ndata.path = " +
                                           (work / "data").string() + "\nout = " + (work / out_name).string() +
                                           "\n" + extra, name));
}

RunSummary execute(const Matrix& m, const std::string& name, const std::string& extra, const std::string& out_name) {
  const auto cfg = run_config(m.work, name, extra, out_name);
  std::cout << "  training " << name << " (" << cfg.epochs << " epochs, " << m.data.train.size() << " scenes)"
            << std::endl;
  Model model = build_model(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  train(cfg, m.data, model);
  RunSummary r;
  r.wall_s = seconds_since(t0);
  const auto val = evaluate(model, m.data.val);
  r.val_accuracy = val.accuracy;
  r.val_entropy = val.entropy_total;
  r.layer_entropy = val.layer_entropy;
  r.probe = measure_probe(model, probe_sources(m.data), m.data.probe.images);
  std::cout << "    " << fmt(r.wall_s, 4) << " s, val accuracy " << fmt(r.val_accuracy) << ", entropy "
            << fmt(r.val_entropy) << ", probe " << fmt(r.probe.mean_intact) << " -> " << fmt(r.probe.mean_swapped)
            << " (drop " << fmt(r.probe.drop) << ")" << std::endl;
  return r;
}

Matrix& matrix(const fs::path& work) {
  static std::optional<Matrix> m;
  if (!m) {
    m.emplace();
    m->work = work;
    fs::create_directories(work);
    DatasetConfig dc;
    dc.seed = kSeed;
    m->data = generate_dataset(dc, work / "data");
    for (const auto& [name, extra] : kRuns) m->runs[name] = execute(*m, name, extra, name);

    nlohmann::ordered_json report;
    for (const auto& [name, extra] : kRuns) {
      const auto& r = m->runs[name];
      report[name] = {{"wall_time_s", r.wall_s},      {"val_accuracy", r.val_accuracy},
                      {"val_entropy", r.val_entropy}, {"val_entropy_per_layer", r.layer_entropy},
                      {"probe_intact", r.probe.mean_intact}, {"probe_swapped", r.probe.mean_swapped},
                      {"probe_drop", r.probe.drop}};
    }
    std::ofstream(work / "matrix.json") << report.dump(2) << "\n";
  }
  return *m;
}

Outcome entropy_separation(const fs::path& work) {
  const auto& r = matrix(work).runs;
  const double unreg = r.at("unregcaps").val_entropy;
  const double reg08 = r.at("0.8caps").val_entropy;
  const double sch = r.at("schcaps").val_entropy;
  const double equal = r.at("equalcaps").val_entropy;
  const double expected_equal = std::log(8.0) + std::log(2.0);
  double slowest = 0.0;
  for (const auto& [name, s] : r) slowest = std::max(slowest, s.wall_s);
  Outcome o;
  o.pass = unreg >= kUnregEntropyMin && reg08 <= kRegEntropyMax && sch <= kRegEntropyMax &&
           std::abs(equal - expected_equal) <= kEntropyTol && slowest <= kRunBudgetS;
  o.detail = "val entropy (nats, summed over routed layers): unregcaps " + fmt(unreg) + " (>= " +
             fmt(kUnregEntropyMin) + "), 0.8caps " + fmt(reg08) + ", schcaps " + fmt(sch) + " (<= " +
             fmt(kRegEntropyMax) + "), equalcaps " + fmt(equal, 12) + " vs ln 8 + ln 2 = " +
             fmt(expected_equal, 12) + "; slowest run " + fmt(slowest, 4) + " s";
  return o;
}

Outcome accuracy_parity(const fs::path& work) {
  const auto& r = matrix(work).runs;
  Outcome o;
  std::ostringstream d;
  d << "val accuracy:";
  for (const auto& [name, extra] : kRuns) {
    const double acc = r.at(name).val_accuracy;
    d << ' ' << name << ' ' << fmt(acc);
    o.pass = o.pass && acc >= kAccuracyMin;
  }
  const double unreg = r.at("unregcaps").val_accuracy;
  double gap = 0.0;
  for (const char* name : {"0.4caps", "0.8caps", "schcaps"}) gap = std::max(gap, std::abs(r.at(name).val_accuracy - unreg));
  o.pass = o.pass && gap <= kAccuracyGapMax;
  d << "; largest regularised-vs-unregularised gap " << fmt(gap);
  o.detail = d.str();
  return o;
}

Outcome probe_ordering(const fs::path& work) {
  const auto& r = matrix(work).runs;
  const double d08 = r.at("0.8caps").probe.drop, dsch = r.at("schcaps").probe.drop;
  const double dun = r.at("unregcaps").probe.drop, deq = r.at("equalcaps").probe.drop;
  const double dcnn = r.at("cnn").probe.drop;
  const double dreg = std::max(d08, dsch);
  Outcome o;
  o.pass = dreg >= kRegVsUnregDropRatio * dun && dun > deq && dcnn <= kCnnVsRegDropRatio * dreg;
  o.detail = "face activation drop intact -> swapped: 0.8caps " + fmt(d08) + ", schcaps " + fmt(dsch) +
             ", unregcaps " + fmt(dun) + ", equalcaps " + fmt(deq) + ", cnn " + fmt(dcnn) +
             "; need reg >= 1.5 x unreg, unreg > equal, cnn <= 0.25 x reg";
  return o;
}

Outcome determinism(const fs::path& work) {
  auto& m = matrix(work);
  Outcome o;
  std::ostringstream d;

  DatasetConfig dc;
  dc.seed = kSeed;
  generate_dataset(dc, work / "data_again");
  std::size_t files = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(work / "data")) {
    ++files;
    if (slurp(entry.path()) != slurp(work / "data_again" / entry.path().filename())) ++differing;
  }
  d << "dataset " << files - differing << "/" << files << " files identical";
  o.pass = differing == 0 && files > 0;

  const auto& [name, extra] = kRuns[2];
  execute(m, name, extra, name + "_again");
  auto strip = [](const std::string& text) {
    std::istringstream in(text);
    std::string out;
    for (std::string line; std::getline(in, line);) {
      auto j = nlohmann::ordered_json::parse(line);
      j.erase("wall_time_s");
      out += j.dump() + "\n";
    }
    return out;
  };
  const bool metrics_same = strip(slurp(work / name / "metrics.jsonl")) == strip(slurp(work / (name + "_again") / "metrics.jsonl"));
  const bool final_same = slurp(work / name / "final.ckpt") == slurp(work / (name + "_again") / "final.ckpt");
  const bool best_same = slurp(work / name / "best.ckpt") == slurp(work / (name + "_again") / "best.ckpt");
  o.pass = o.pass && metrics_same && final_same && best_same;
  d << "; " << name << " rerun: metrics " << (metrics_same ? "identical" : "DIFFER") << " (wall time excluded), final.ckpt "
    << (final_same ? "identical" : "DIFFERS") << ", best.ckpt " << (best_same ? "identical" : "DIFFERS");
  o.detail = d.str();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"capsgram acceptance suite"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work", work, "directory for the dataset and training runs");
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const fs::path dir = fs::absolute(work);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"routing invariants", routing_invariants},
      {"gradient fidelity", gradient_fidelity},
      {"translation equivariance", equivariance},
      {"oracle equivalence", oracle_equivalence},
      {"entropy separation", [&] { return entropy_separation(dir); }},
      {"accuracy parity", [&] { return accuracy_parity(dir); }},
      {"compositionality probe ordering", [&] { return probe_ordering(dir); }},
      {"determinism", [&] { return determinism(dir); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
