#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "fdd/adam.hpp"
#include "fdd/checkpoint.hpp"
#include "fdd/corpus.hpp"
#include "fdd/dae.hpp"

using namespace fdd;

namespace {

DaeConfig tiny_config() {
  DaeConfig cfg;
  cfg.input = {16, 16, 1};
  cfg.encoder_channels = {4, 8};
  cfg.latent_dim = 8;
  return cfg;
}

std::vector<Image> tiny_corpus(std::size_t n, std::uint64_t seed = 1) {
  CorpusSpec spec;
  spec.count = n;
  spec.size = 16;
  spec.seed = seed;
  return generate_corpus(spec);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("fdd_test_" + name)).string();
}

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
  // With m = v = 0, the bias-corrected first step is -lr * g / (|g| + eps).
  ParameterBlock<double> params;
  params.add("p", Tensor({2}, std::vector<double>{0.0, 1.0}));
  const std::vector<Tensor> grads{Tensor({2}, std::vector<double>{2.0, -0.5})};
  adam_step(params, std::span<const Tensor>(grads), {0.1, 0.9, 0.999, 1e-8});
  EXPECT_NEAR(params[0].value[0], -0.1 * 2.0 / (2.0 + 1e-8), 1e-12);
  EXPECT_NEAR(params[0].value[1], 1.0 + 0.1 * 0.5 / (0.5 + 1e-8), 1e-12);
  EXPECT_EQ(params.step(), 1u);
}

TEST(Adam, SecondStepMatchesHandComputation) {
  ParameterBlock<double> params;
  params.add("p", Tensor({1}, 0.0));
  const AdamOptions opt{0.01, 0.9, 0.999, 1e-8};
  const std::vector<Tensor> g1{Tensor({1}, 1.0)}, g2{Tensor({1}, 3.0)};
  adam_step(params, std::span<const Tensor>(g1), opt);
  adam_step(params, std::span<const Tensor>(g2), opt);
  const double m = 0.9 * 0.1 + 0.1 * 3.0;
  const double v = 0.999 * 0.001 + 0.001 * 9.0;
  const double m_hat = m / (1 - 0.81), v_hat = v / (1 - 0.999 * 0.999);
  const double first = -0.01 * 1.0 / (1.0 + 1e-8);
  const double expect = first - 0.01 * m_hat / (std::sqrt(v_hat) + 1e-8);
  EXPECT_NEAR(params[0].value[0], expect, 1e-12);
}

TEST(Adam, NonFiniteGradientLeavesStateUntouched) {
  ParameterBlock<double> params;
  params.add("a", Tensor({1}, 1.0));
  params.add("b", Tensor({1}, 2.0));
  const std::vector<Tensor> grads{Tensor({1}, 1.0),
                                  Tensor({1}, std::numeric_limits<double>::quiet_NaN())};
  EXPECT_THROW(adam_step(params, std::span<const Tensor>(grads), {}), NumericalError);
  EXPECT_EQ(params[0].value[0], 1.0);
  EXPECT_EQ(params.step(), 0u);
  EXPECT_FALSE(params.has_moments());
}

TEST(DaePlan, PaperImagenetShapes) {
  const auto arch = plan_dae(DaeConfig::imagenet());
  EXPECT_EQ(arch.heights, (std::vector<std::size_t>{299, 150, 75, 38, 19, 10}));
  EXPECT_EQ(arch.widths, arch.heights);
  EXPECT_EQ(arch.flat_size, 512u * 10 * 10);
  // Decoder mirrors back to 299.
  std::size_t h = 10;
  for (std::size_t j = 0; j < arch.output_padding_h.size(); ++j)
    h = kernels::transposed_output_extent(h, 2, 1, arch.output_padding_h[j]);
  EXPECT_EQ(h, 299u);
}

TEST(DaePlan, DeskShapes) {
  const auto arch = plan_dae(DaeConfig::desk());
  EXPECT_EQ(arch.heights, (std::vector<std::size_t>{64, 32, 16, 8}));
  EXPECT_EQ(arch.output_padding_h, (std::vector<std::size_t>{1, 1, 1}));
}

TEST(DaePlan, RejectsBadConfigs) {
  DaeConfig cfg = tiny_config();
  cfg.latent_dim = 0;
  EXPECT_THROW(plan_dae(cfg), ConfigError);
  cfg = tiny_config();
  cfg.encoder_channels.clear();
  EXPECT_THROW(plan_dae(cfg), ConfigError);
  cfg = tiny_config();
  cfg.encoder_channels = {4, 0};
  EXPECT_THROW(plan_dae(cfg), ConfigError);
}

TEST(Dae, TargetDatasetConfigBuilds) {
  const auto model = build_dae(DaeConfig::target_dataset(), 1);
  EXPECT_EQ(model.latent_dim(), 64u);
  EXPECT_EQ(model.params().find("enc4.weight").value.shape(), (Shape{512, 256, 3, 3}));
  EXPECT_EQ(model.params().find("enc_proj.weight").value.shape(),
            (Shape{64, 512 * 8 * 8}));
  // Decoder channels are the reverse of the encoder channels.
  EXPECT_EQ(model.params().find("dec0.weight").value.shape(), (Shape{512, 256, 3, 3}));
  EXPECT_EQ(model.params().find("dec4.weight").value.shape(), (Shape{32, 1, 3, 3}));
}

TEST(Dae, EncodeShapeAndDeterminism) {
  const auto model = build_dae(DaeConfig::desk(), 3);
  const auto images = tiny_corpus(5);
  CorpusSpec spec;
  spec.count = 5;
  const auto corpus = generate_corpus(spec);
  const FeatureSet a = encode(model, corpus);
  const FeatureSet b = encode(model, corpus);
  EXPECT_EQ(a.rows(), 5);
  EXPECT_EQ(a.cols(), 128);
  EXPECT_TRUE(a == b);
  EXPECT_THROW(encode(model, images), InputError);  // 16x16 into a 64x64 model
}

TEST(Dae, ReconstructionInRange) {
  const auto model = build_dae(tiny_config(), 4);
  for (const Image& img : reconstruct(model, tiny_corpus(3)))
    for (double v : img.pixels) EXPECT_TRUE(v >= -1 && v <= 1);
}

TEST(Dae, SeedControlsInitialization) {
  const auto a = build_dae(tiny_config(), 1), b = build_dae(tiny_config(), 1),
             c = build_dae(tiny_config(), 2);
  EXPECT_EQ(a.encoder_digest(), b.encoder_digest());
  EXPECT_NE(a.encoder_digest(), c.encoder_digest());
}

TEST(EarlyStoppingTest, StopsAfterPatienceEpochsWithoutImprovement) {
  EarlyStopping stop(3);
  for (double loss : {5.0, 4.0, 4.5, 4.0}) {  // ties do not count as improvement
    stop.observe(loss);
    EXPECT_FALSE(stop.should_stop());
  }
  stop.observe(4.1);
  EXPECT_TRUE(stop.should_stop());
  EXPECT_EQ(stop.best_epoch(), 1u);
}

TEST(EarlyStoppingTest, RunEpochsStopsOnPlateau) {
  std::size_t best_calls = 0;
  const auto r = run_epochs(
      100, 2, [](std::size_t e) { return e < 4 ? 10.0 - e : 7.0; },
      [&](std::size_t) { ++best_calls; });
  // 10 9 8 7 | 7 7: best at epoch 3, two flat epochs, stop.
  EXPECT_EQ(r.history.size(), 6u);
  EXPECT_EQ(r.best_epoch, 3u);
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(best_calls, 4u);
}

TEST(EarlyStoppingTest, NonFiniteLossAborts) {
  EXPECT_THROW(run_epochs(5, 2, [](std::size_t) { return std::nan(""); }),
               NumericalError);
}

TEST(Training, LossDecreasesOnTinyCorpus) {
  auto model = build_dae(tiny_config(), 5);
  const auto data = tiny_corpus(16);
  TrainingConfig tc;
  tc.batch_size = 8;
  tc.max_epochs = 15;
  tc.lr = 3e-3;
  const auto r = train_dae(model, data, {0.1, 1}, tc);
  ASSERT_EQ(r.history.size(), 15u);
  EXPECT_LT(r.best_loss, r.history.front());
  EXPECT_EQ(model.history().size(), 15u);
  // The best epoch's parameters (and optimizer state) are kept.
  EXPECT_EQ(model.params().step(), (r.best_epoch + 1) * 2);
}

TEST(Training, DeterministicGivenSeeds) {
  const auto data = tiny_corpus(8);
  TrainingConfig tc;
  tc.batch_size = 4;
  tc.max_epochs = 3;
  auto a = build_dae(tiny_config(), 6), b = build_dae(tiny_config(), 6);
  train_dae(a, data, {0.1, 2}, tc);
  train_dae(b, data, {0.1, 2}, tc);
  EXPECT_EQ(serialize_checkpoint(a), serialize_checkpoint(b));
}

TEST(Training, RejectsOutOfRangePixels) {
  auto model = build_dae(tiny_config(), 1);
  auto data = tiny_corpus(2);
  data[0].pixels[0] = 1.5;
  EXPECT_THROW(train_dae(model, data, {}, {}), InputError);
}

TEST(Training, ValidationSplitMonitorsHeldOut) {
  auto model = build_dae(tiny_config(), 7);
  TrainingConfig tc;
  tc.max_epochs = 2;
  tc.validation_fraction = 0.25;
  const auto r = train_dae(model, tiny_corpus(8), {0.1, 3}, tc);
  EXPECT_EQ(r.history.size(), 2u);
  // 6 training images, batch 128: one step per epoch.
  EXPECT_EQ(model.params().step(), r.best_epoch + 1);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto model = build_dae(tiny_config(), 8);
  TrainingConfig tc;
  tc.max_epochs = 2;
  train_dae(model, tiny_corpus(4), {0.1, 4}, tc);
  const auto bytes = serialize_checkpoint(model);
  const auto back = deserialize_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(back.params().step(), model.params().step());
  EXPECT_TRUE(back.params().has_moments());
  EXPECT_EQ(back.history(), model.history());
  EXPECT_EQ(back.encoder_digest(), model.encoder_digest());
}

TEST(Checkpoint, DetectsCorruption) {
  auto bytes = serialize_checkpoint(build_dae(tiny_config(), 9));
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  EXPECT_THROW(deserialize_checkpoint(flipped), ChecksumError);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 9);
  EXPECT_THROW(deserialize_checkpoint(truncated), InputError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), InputError);
}

TEST(Checkpoint, ResumeContinuesAdamState) {
  const auto data = tiny_corpus(8);
  TrainingConfig tc;
  tc.batch_size = 8;
  tc.max_epochs = 2;
  auto model = build_dae(tiny_config(), 10);
  train_dae(model, data, {0.1, 5}, tc);
  const std::string path = temp_path("resume.ckpt");
  save_checkpoint(model, path);
  auto resumed = load_checkpoint(path);
  std::remove(path.c_str());
  const auto step_before = resumed.params().step();
  const auto m_before = resumed.params()[0].first_moment;
  ASSERT_GT(step_before, 0u);
  const auto r = train_dae(resumed, data, {0.1, 5}, tc);
  EXPECT_EQ(resumed.history().size(), 4u);
  // Every resumed epoch steps from the loaded Adam state.
  EXPECT_EQ(resumed.params().step(), step_before + r.best_epoch + 1);
  EXPECT_NE(resumed.params()[0].first_moment, m_before);
}
