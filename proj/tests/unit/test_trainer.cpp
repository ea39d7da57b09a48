#include <gtest/gtest.h>

#include <fstream>

#include "picar/trainer.hpp"

using namespace picar;
namespace fs = std::filesystem;

namespace {

// Small enough for finite differences over every parameter (154 of them).
NetworkSpec gradcheck_spec() {
  NetworkSpec s;
  s.input_shape = {8, 8, 2};
  s.layers = {LayerSpec::make_conv(3, 3, 2, 3, 1), LayerSpec::make_conv(3, 3, 3, 2, 2),
              LayerSpec::make_flatten(), LayerSpec::make_fc(8, 4),
              LayerSpec::make_fc(4, 1, Activation::linear)};
  return s;
}

// Takes full-size frames but trains in seconds.
NetworkSpec small_steering_spec() {
  NetworkSpec s;
  s.layers = {LayerSpec::make_conv(5, 5, 3, 4, 5), LayerSpec::make_flatten(),
              LayerSpec::make_fc(13 * 40 * 4, 8), LayerSpec::make_fc(8, 1, Activation::linear)};
  return s;
}

std::vector<Example64> random_batch(const NetworkSpec& spec, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  std::vector<Example64> out;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor64 t(spec.input_shape);
    for (double& v : t.data()) v = d(rng);
    out.push_back({t, 2.0 * d(rng) - 1.0});
  }
  return out;
}

DatasetIndex mixed_index() {
  DatasetIndex idx;
  const float angles[] = {-30, -20, 0, 5, 0, 20, 30, -3, 16, 1};
  for (std::size_t i = 0; i < std::size(angles); ++i) {
    DatasetRecord r;
    r.frame = "f" + std::to_string(i);
    r.angle_deg = angles[i];
    idx.add(r, RawImage(200, 66, 3, static_cast<std::uint8_t>(i * 20)));
  }
  return idx;
}

}  // namespace

TEST(Trainer, Labels) {
  EXPECT_EQ(label_for_angle(14.99), RoadLabel::straight);
  EXPECT_EQ(label_for_angle(15.0), RoadLabel::curved);
  EXPECT_EQ(label_for_angle(-15.0), RoadLabel::curved);
  EXPECT_EQ(label_for_angle(0.0), RoadLabel::straight);
  EXPECT_EQ(parse_sampler("balanced"), SamplerKind::balanced);
  EXPECT_THROW(parse_sampler("stratified"), std::invalid_argument);
}

TEST(Trainer, MseLoss) {
  EXPECT_DOUBLE_EQ(mse_loss(std::vector<double>{1, 2, 3}, std::vector<double>{1, 0, 6}), 13.0 / 3.0);
  EXPECT_THROW(mse_loss(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(mse_loss(std::vector<double>{1}, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST(Trainer, BalancedSamplerSplitsEvenly) {
  const auto idx = mixed_index();
  for (std::size_t b : {100u, 7u, 1u}) {
    TrainConfig cfg;
    cfg.batch_size = b;
    cfg.sampler = SamplerKind::balanced;
    Rng rng(1);
    const auto batch = sample_batch(idx, cfg, rng);
    ASSERT_EQ(batch.size(), b);
    std::size_t curved = 0;
    for (std::size_t i : batch) curved += idx.records[i].label == RoadLabel::curved;
    EXPECT_EQ(curved, (b + 1) / 2) << b;
  }
}

TEST(Trainer, BalancedNeedsBothCategories) {
  auto idx = make_synthetic_linear(20, 0, 1);  // all angles below 3 degrees
  TrainConfig cfg;
  cfg.sampler = SamplerKind::balanced;
  Rng rng(1);
  EXPECT_THROW(sample_batch(idx, cfg, rng), DatasetError);
}

TEST(Trainer, UniformSamplerUsesTrainSplitOnly) {
  auto idx = make_synthetic_linear(5, 5, 2);
  TrainConfig cfg;
  cfg.batch_size = 200;
  Rng rng(3);
  for (std::size_t i : sample_batch(idx, cfg, rng)) EXPECT_EQ(idx.records[i].split, Split::train);
}

TEST(Trainer, SyntheticLinearTask) {
  const auto idx = make_synthetic_linear(30, 10, 4);
  EXPECT_EQ(idx.indices(Split::train).size(), 30u);
  EXPECT_EQ(idx.indices(Split::validation).size(), 10u);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const double a = idx.frames[i].pixels[0] / 255.0;
    EXPECT_FLOAT_EQ(idx.records[i].angle_deg, static_cast<float>(3.0 * a));
  }
}

TEST(Trainer, GradientCheckPasses) {
  const auto spec = gradcheck_spec();
  auto w = xavier_init(spec, 3).cast<double>();
  for (auto& l : w.layers)
    for (double& b : l.bias) b = 0.05;  // keep pre-activations off the ReLU kink
  EXPECT_LT(gradient_check(spec, w, random_batch(spec, 3, 8)), 1e-4);
}

TEST(Trainer, GradientCheckCatchesCorruption) {
  const auto spec = gradcheck_spec();
  auto w = xavier_init(spec, 3).cast<double>();
  for (auto& l : w.layers)
    for (double& b : l.bias) b = 0.05;
  const auto batch = random_batch(spec, 3, 8);
  for (std::size_t layer : {0u, 3u, 4u}) {
    EXPECT_GT(gradient_check(spec, w, batch, GradientCorruption{layer, 1.5}), 0.1) << layer;
  }
}

TEST(Trainer, GradientCheckRefusesLargeNetworks) {
  const auto spec = build_dave2();
  Example64 e{Tensor64(spec.input_shape), 0.0};
  EXPECT_THROW(gradient_check(spec, xavier_init(spec, 1).cast<double>(), std::span(&e, 1)),
               std::invalid_argument);
}

TEST(Trainer, ZeroLearningRateLeavesWeights) {
  const auto spec = small_steering_spec();
  const auto idx = make_synthetic_linear(20, 0, 1);
  TrainConfig cfg;
  cfg.steps = 3;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.0;
  const auto r = train(spec, idx, cfg);
  EXPECT_EQ(r.weights, xavier_init(spec, cfg.seed));
  EXPECT_EQ(r.loss_history.size(), 3u);
  EXPECT_FALSE(r.validation_loss.has_value());
}

TEST(Trainer, DeterministicAcrossWorkerCounts) {
  const auto spec = small_steering_spec();
  const auto idx = make_synthetic_linear(40, 8, 2);
  TrainConfig cfg;
  cfg.steps = 5;
  cfg.batch_size = 10;
  cfg.learning_rate = 1e-3;
  const auto a = train(spec, idx, cfg);
  cfg.worker_count = 3;
  const auto b = train(spec, idx, cfg);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.validation_loss, b.validation_loss);
}

TEST(Trainer, LossDropsOnLinearTask) {
  const auto spec = small_steering_spec();
  const auto idx = make_synthetic_linear(200, 50, 5);
  TrainConfig cfg;
  cfg.steps = 100;
  cfg.batch_size = 20;
  cfg.learning_rate = 1e-3;
  const auto r = train(spec, idx, cfg);
  ASSERT_EQ(r.loss_history.size(), 100u);
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) {
    first += r.loss_history[i];
    last += r.loss_history[90 + i];
  }
  EXPECT_LT(last, 0.5 * first);
  ASSERT_TRUE(r.validation_loss.has_value());
}

TEST(Trainer, DivergenceIsReported) {
  const auto spec = small_steering_spec();
  const auto idx = make_synthetic_linear(20, 0, 1);
  TrainConfig cfg;
  cfg.steps = 50;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e6;
  EXPECT_THROW(train(spec, idx, cfg), TrainingDiverged);
}

TEST(Trainer, ManifestLoading) {
  const auto dir = fs::temp_directory_path() / "picar_manifest";
  fs::create_directories(dir);
  write_raw_frame(RawImage(200, 66, 3, 10), dir / "a.raw");
  write_ppm(RawImage(320, 240, 3, 20), dir / "b.ppm");
  std::ofstream(dir / "train.csv") << "# frame,angle\na.raw,-21.5\n\nb.ppm,4\n";
  std::ofstream(dir / "bad.csv") << "a.raw;3\n";
  DatasetIndex idx;
  load_manifest(dir / "train.csv", Split::train, idx);
  ASSERT_EQ(idx.size(), 2u);
  EXPECT_EQ(idx.records[0].label, RoadLabel::curved);
  EXPECT_EQ(idx.records[1].angle_deg, 4.0f);
  EXPECT_EQ(idx.frames[1].width, 320u);
  EXPECT_THROW(load_manifest(dir / "bad.csv", Split::train, idx), DatasetError);
  EXPECT_THROW(load_manifest(dir / "missing.csv", Split::train, idx), DatasetError);
}
