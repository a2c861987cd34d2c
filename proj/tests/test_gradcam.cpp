#include <gtest/gtest.h>

#include "fdd/corpus.hpp"
#include "fdd/gradcam.hpp"
#include "gradcheck.hpp"

using namespace fdd;

namespace {

DaeConfig tiny_config() {
  DaeConfig cfg;
  cfg.input = {12, 12, 1};
  cfg.encoder_channels = {3, 4};
  cfg.latent_dim = 5;
  return cfg;
}

std::vector<Image> images(std::size_t n, std::size_t size, std::uint64_t seed = 1) {
  CorpusSpec spec;
  spec.count = n;
  spec.size = size;
  spec.seed = seed;
  return generate_corpus(spec);
}

}  // namespace

TEST(GradCam, DeskLastLayerGridIs8x8) {
  const auto model = build_dae(DaeConfig::desk(), 1);
  const auto maps = gradcam(model, images(3, 64), "last");
  ASSERT_EQ(maps.size(), 3u);
  EXPECT_EQ(maps[0].layer, "enc2");
  EXPECT_EQ(maps[0].height, 8u);
  EXPECT_EQ(maps[0].width, 8u);
  EXPECT_EQ(maps[0].upsampled.size(), 64u * 64);
  EXPECT_EQ(gradcam(model, images(2, 64), "enc0")[0].height, 32u);
}

TEST(GradCam, Errors) {
  const auto model = build_dae(tiny_config(), 1);
  const auto batch = images(2, 12);
  EXPECT_THROW(gradcam(model, std::span<const Image>(batch).first(1), "last"),
               InputError);
  EXPECT_THROW(gradcam(model, batch, "enc7"), InputError);
  EXPECT_THROW(gradcam(model, batch, "dec0"), InputError);
}

TEST(GradCam, ZeroInputOnBiasFreeModelIsFinite) {
  auto model = build_dae<double>(tiny_config(), 2);
  for (auto& p : model.params())
    if (p.name.ends_with(".bias")) p.value.fill(0.0);
  const std::vector<Image> zeros(3, Image(12, 12, 1, 0.0));
  for (const auto& m : gradcam(model, zeros, "last")) {
    for (double v : m.raw) EXPECT_TRUE(std::isfinite(v));
    for (double v : m.upsampled) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(GradCam, LayerGradientMatchesFiniteDifferences) {
  const auto model = build_dae<double>(tiny_config(), 3);
  const auto batch = images(3, 12, 4);
  for (std::size_t layer = 0; layer < 2; ++layer) {
    const auto lg = spread_gradient(model, batch, layer);
    auto f = [&](ad::Tape<double>& t, const std::vector<ad::Var>& v) {
      const auto params = bind_parameters(t, model, false);
      return ad::latent_spread(t, encoder_tail(t, model, params, v[0], layer));
    };
    // The tape gradient at the activation against central differences...
    const auto r = test::check_gradients(f, {lg.activation});
    EXPECT_LT(r.rel_error, 1e-4) << "layer " << layer;
    // ...and the gradcam gradient against the same tape gradient.
    ad::Tape<double> tape;
    const ad::Var h = tape.parameter(lg.activation);
    const ad::Var obj = f(tape, {h});
    tape.backward(obj);
    const Tensor g = tape.grad(h);
    for (std::size_t i = 0; i < g.size(); ++i)
      EXPECT_NEAR(g[i], lg.gradient[i], 1e-12);
    EXPECT_NEAR(tape.value(obj)[0], lg.objective, 1e-12);
  }
}

TEST(GradCam, ObjectiveEqualsDirectRecomputation) {
  const auto model = build_dae<double>(tiny_config(), 5);
  const auto batch = images(4, 12, 6);
  const FeatureSet w = encode(model, batch);
  const Eigen::RowVectorXd mu = w.colwise().mean();
  const Eigen::MatrixXd centered = w.rowwise() - mu;
  const double trace = (centered.transpose() * centered).trace() / 3.0;
  EXPECT_NEAR(spread_gradient(model, batch, 1).objective, mu.squaredNorm() + trace,
              1e-10);
}

TEST(GradCam, MapIsSignedWeightedChannelSum) {
  const auto model = build_dae<double>(tiny_config(), 7);
  const auto batch = images(2, 12, 8);
  const auto lg = spread_gradient(model, batch, 1);
  const auto maps = gradcam(model, batch, "enc1");
  const std::size_t c = 4, hw = 9;
  for (std::size_t p = 0; p < hw; ++p) {
    double expect = 0;
    for (std::size_t k = 0; k < c; ++k) {
      double weight = 0;
      for (std::size_t q = 0; q < hw; ++q) weight += lg.gradient[(c + k) * hw + q];
      expect += weight / hw * lg.activation[(c + k) * hw + p];
    }
    EXPECT_NEAR(maps[1].raw[p], expect, 1e-12);
  }
}

TEST(GradCam, ConstantGridUpsamplesToConstant) {
  const std::vector<double> grid(9, 0.7);
  for (double v : resize_bilinear(grid, 3, 3, 17, 13)) EXPECT_DOUBLE_EQ(v, 0.7);
}

TEST(GradCam, OverlayAndCsv) {
  const auto model = build_dae(tiny_config(), 9);
  const auto batch = images(2, 12, 10);
  const auto maps = gradcam(model, batch, "last");
  const RawImage overlay = attention_overlay(batch[0], maps[0]);
  EXPECT_EQ(overlay.channels, 3u);
  for (double v : overlay.values) EXPECT_TRUE(v >= 0 && v <= 255);
  const std::string csv = attention_csv(maps[0]);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), ','), 3 * 2);
}
