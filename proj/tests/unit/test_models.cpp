#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "capsgram/error.hpp"
#include "capsgram/losses/losses.hpp"
#include "capsgram/models/adam.hpp"
#include "capsgram/models/checkpoint.hpp"
#include "capsgram/models/model.hpp"
#include "capsgram/tensor/grad_check.hpp"
#include "capsgram/tensor/ops.hpp"
#include "golden.hpp"

namespace capsgram {
namespace {

namespace fs = std::filesystem;

Tensor random_image(std::size_t extent, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Real> px(extent * extent);
  for (auto& v : px) v = rng.uniform();
  return Tensor({1, extent, extent}, px);
}

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "capsgram_test_models";
  fs::create_directories(dir);
  return dir / name;
}

// stem 16*1*9+16, 32*16*9+32; primary 64*32*9+64; routed 8*8*8*9; class 2*16*8*6*6
constexpr std::size_t kDeskCapsParams = 160 + 4640 + 18496 + 4608 + 9216;
// same stem, conv 64*32*9+64 after pooling, head 2*64*6*6+2
constexpr std::size_t kDeskCnnParams = 160 + 4640 + 18496 + 4610;

TEST(BuildCapsNet, DeskParameterCount) {
  auto m = build_capsnet(CapsNetConfig::desk(), 1);
  EXPECT_EQ(m.parameter_count(), kDeskCapsParams);
  EXPECT_EQ(m.parameter("routed.1.weight").shape(), (Shape{2, 16, 8, 6, 6}));
  EXPECT_EQ(m.capsnet_config().routed[1].kernel, 6u);
}

TEST(BuildCnn, DeskParameterCountWithinTwiceCapsNet) {
  auto m = build_cnn(CNNConfig::desk(), 1);
  EXPECT_EQ(m.parameter_count(), kDeskCnnParams);
  EXPECT_LE(kDeskCapsParams, 2 * kDeskCnnParams);
  EXPECT_LE(kDeskCnnParams, 2 * kDeskCapsParams);
}

TEST(BuildCapsNet, SeedDeterminism) {
  auto a = build_capsnet(CapsNetConfig::desk(), 7);
  auto b = build_capsnet(CapsNetConfig::desk(), 7);
  auto c = build_capsnet(CapsNetConfig::desk(), 8);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto x = a.parameters()[i].value.data();
    const auto y = b.parameters()[i].value.data();
    const auto z = c.parameters()[i].value.data();
    ASSERT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
    if (!std::equal(x.begin(), x.end(), z.begin())) any_diff = true;
  }
  EXPECT_TRUE(any_diff);
}

TEST(BuildCapsNet, InitialisationBounds) {
  auto m = build_capsnet(CapsNetConfig::desk(), 3);
  const Real bound = std::sqrt(6.0 / (16 * 9));
  for (Real v : m.parameter("stem.1.weight").data()) {
    ASSERT_LE(std::abs(v), bound);
  }
  for (Real v : m.parameter("stem.1.bias").data()) EXPECT_EQ(v, 0.0);
}

TEST(BuildCapsNet, InconsistentExtentsReportChain) {
  auto cfg = CapsNetConfig::desk();
  cfg.routed[1].kernel = 3;  // 6x6 field would leave a 4x4 class grid
  try {
    build_capsnet(cfg, 1);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("primary 28->13"), std::string::npos) << e.what();
  }
  cfg = CapsNetConfig::desk();
  cfg.image_extent = 6;
  EXPECT_THROW(build_capsnet(cfg, 1), ShapeError);
  cfg = CapsNetConfig::desk();
  cfg.routed[1].n_out = 3;
  EXPECT_THROW(build_capsnet(cfg, 1), ShapeError);
}

TEST(Forward, CapsNetOutputsAndTraces) {
  auto m = build_capsnet(CapsNetConfig::desk(), 5);
  auto out = m.forward(random_image(32, 9));
  ASSERT_EQ(out.class_activations.shape(), (Shape{2}));
  ASSERT_EQ(out.traces.size(), 2u);
  EXPECT_EQ(out.traces[0].final_coefficients().shape(), (Shape{8, 8, 6, 6}));
  EXPECT_EQ(out.traces[1].final_coefficients().shape(), (Shape{8, 2, 1, 1}));
  EXPECT_EQ(out.traces[1].iterations(), 3u);
  for (Real a : out.class_activations.data()) {
    EXPECT_GE(a, 0.0);
    EXPECT_LT(a, 1.0);
  }
}

TEST(Forward, ActivationsBoundedOnExtremeImages) {
  auto m = build_capsnet(CapsNetConfig::desk(), 5);
  auto c = build_cnn(CNNConfig::desk(), 5);
  for (Real fill : {0.0, 1.0}) {
    Tensor img({1, 32, 32}, fill);
    const auto caps_out = m.forward(img);
    for (Real a : caps_out.class_activations.data()) {
      EXPECT_GE(a, 0.0);
      EXPECT_LT(a, 1.0);
    }
    const auto cnn_out = c.forward(img);
    for (Real a : cnn_out.class_activations.data()) {
      EXPECT_GT(a, 0.0);
      EXPECT_LT(a, 1.0);
    }
  }
}

TEST(Forward, EqualRoutingEntropyIsLogOfFanOut) {
  auto cfg = CapsNetConfig::desk();
  cfg.routing = RoutingMode::kEqual;
  auto m = build_capsnet(cfg, 5);
  auto out = m.forward(random_image(32, 2));
  EXPECT_NEAR(entropy_loss(out.traces).item(), std::log(8.0) + std::log(2.0), 1e-10);
}

TEST(Forward, DuplicatedBatchGivesIdenticalOutputs) {
  auto m = build_capsnet(CapsNetConfig::desk(), 5);
  auto img = random_image(32, 4);
  auto batch = stack({img, img});
  auto outs = forward(m, batch);
  ASSERT_EQ(outs.size(), 2u);
  EXPECT_EQ(outs[0].class_activations.data()[0], outs[1].class_activations.data()[0]);
  EXPECT_EQ(outs[0].class_activations.data()[1], outs[1].class_activations.data()[1]);
}

TEST(Forward, RejectsWrongExtent) {
  auto m = build_capsnet(CapsNetConfig::desk(), 5);
  EXPECT_THROW(m.forward(random_image(30, 1)), ShapeError);
  EXPECT_THROW(forward(m, random_image(32, 1)), ShapeError);
}

TEST(Forward, CrossEntropyHeadIsSoftmax) {
  auto cfg = CNNConfig::desk();
  cfg.head = CnnHead::kCrossEntropyLogits;
  auto m = build_cnn(cfg, 5);
  auto out = m.forward(random_image(32, 4));
  EXPECT_NEAR(out.class_activations.data()[0] + out.class_activations.data()[1], 1.0, 1e-12);
  EXPECT_EQ(out.scores.shape(), (Shape{2}));
}

TEST(Forward, GoldenActivations) {
  auto caps = build_capsnet(CapsNetConfig::desk(), 2024);
  auto cnn = build_cnn(CNNConfig::desk(), 2024);
  auto img = random_image(32, 77);
  std::string text;
  char line[64];
  for (const auto* m : {&caps, &cnn}) {
    const auto out = m->forward(img);
    for (Real a : out.class_activations.data()) {
      std::snprintf(line, sizeof line, "%.17g\n", a);
      text += line;
    }
  }
  golden::expect_matches("model_activations.txt", text);
}

TEST(GradCheck, MiniatureCapsNetEveryCoordinate) {
  auto m = build_capsnet(CapsNetConfig::miniature(), 11);
  auto img = random_image(12, 12);
  auto loss = [&] {
    auto out = m.forward(img);
    return combined_loss(margin_loss(out.class_activations, 1), entropy_loss(out.traces), {0.6, 0.4});
  };
  EXPECT_LT(grad_check_params(loss, m.parameter_tensors(), 1e-5), 1e-4);
}

TEST(GradCheck, SmallCnn) {
  CNNConfig cfg;
  cfg.image_extent = 10;
  cfg.layers = {CnnLayerSpec::convolution({3, 3, 1, 0, Activation::kNone}), CnnLayerSpec::pooling({2, 2}),
                CnnLayerSpec::convolution({4, 3, 1, 0, Activation::kNone})};
  auto m = build_cnn(cfg, 3);
  auto img = random_image(10, 5);
  auto loss = [&] { return margin_loss(m.forward(img).class_activations, 0); };
  EXPECT_LT(grad_check_params(loss, m.parameter_tensors(), 1e-5), 1e-4);
}

TEST(Checkpoint, ByteExactRoundTrip) {
  auto a = build_capsnet(CapsNetConfig::desk(), 31);
  const auto p1 = temp_path("a.ckpt");
  const auto p2 = temp_path("b.ckpt");
  save_checkpoint(a, p1);
  auto b = build_capsnet(CapsNetConfig::desk(), 99);
  load_checkpoint(b, p1);
  save_checkpoint(b, p2);
  EXPECT_EQ(read_bytes(p1), read_bytes(p2));
  EXPECT_EQ(read_bytes(p1).substr(0, 4), "CGL1");
  auto img = random_image(32, 3);
  EXPECT_EQ(a.forward(img).class_activations.data()[0], b.forward(img).class_activations.data()[0]);
}

TEST(Checkpoint, LayoutOfFirstRecord) {
  auto m = build_cnn(CNNConfig::desk(), 1);
  const auto p = temp_path("layout.ckpt");
  save_checkpoint(m, p);
  const auto bytes = read_bytes(p);
  const std::string name = "layer.0.weight";
  // name length as little-endian u64
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), name.size());
  for (int i = 5; i < 12; ++i) EXPECT_EQ(bytes[i], '\0');
  EXPECT_EQ(bytes.substr(12, name.size()), name);
  EXPECT_EQ(static_cast<unsigned char>(bytes[12 + name.size()]), 4);  // rank
  std::size_t expected = 4;
  for (const auto& prm : m.parameters()) {
    expected += 8 + prm.name.size() + 8 + 8 * prm.value.rank() + 8 * prm.value.numel();
  }
  EXPECT_EQ(bytes.size(), expected);
}

TEST(Checkpoint, MismatchAndCorruption) {
  auto caps = build_capsnet(CapsNetConfig::desk(), 1);
  auto cnn = build_cnn(CNNConfig::desk(), 1);
  const auto p = temp_path("caps.ckpt");
  save_checkpoint(caps, p);
  EXPECT_THROW(load_checkpoint(cnn, p), FormatError);

  auto bytes = read_bytes(p);
  const auto truncated = temp_path("trunc.ckpt");
  std::ofstream(truncated, std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  EXPECT_THROW(read_checkpoint(truncated), FormatError);

  const auto bad = temp_path("bad.ckpt");
  std::ofstream(bad, std::ios::binary) << "XXXX" << bytes.substr(4);
  EXPECT_THROW(read_checkpoint(bad), FormatError);
  EXPECT_THROW(read_checkpoint(temp_path("missing.ckpt")), std::runtime_error);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor w = Tensor::from({1.0, -2.0, 0.5});
  w.set_requires_grad(true);
  Adam opt({w}, {0.1, 0.9, 0.999, 1e-8});
  sum(mul(w, w)).backward();
  opt.step();
  // bias-corrected first step is lr * g / (|g| + eps)
  EXPECT_NEAR(w.data()[0], 0.9, 1e-7);
  EXPECT_NEAR(w.data()[1], -1.9, 1e-7);
  EXPECT_NEAR(w.data()[2], 0.4, 1e-7);
  EXPECT_EQ(opt.steps_taken(), 1u);
}

TEST(Adam, MinimisesQuadratic) {
  Tensor w = Tensor::from({3.0, -4.0});
  w.set_requires_grad(true);
  Adam opt({w}, {0.05});
  for (int i = 0; i < 2000; ++i) {
    opt.zero_grad();
    sum(mul(w, w)).backward();
    opt.step();
  }
  EXPECT_LT(std::abs(w.data()[0]), 1e-3);
  EXPECT_LT(std::abs(w.data()[1]), 1e-3);
}

}  // namespace
}  // namespace capsgram
