#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "fdd/corpus.hpp"
#include "fdd/disturbance.hpp"
#include "fdd/pipeline.hpp"

using namespace fdd;

namespace {

/// Mean intensity of each 4x4 tile of a 16x16 image; counts encoded images.
class TileEncoder final : public Encoder {
 public:
  FeatureSet encode(std::span<const Image> images) const override {
    calls += images.size();
    FeatureSet f(static_cast<Eigen::Index>(images.size()), 16);
    for (std::size_t i = 0; i < images.size(); ++i)
      for (std::size_t t = 0; t < 16; ++t) {
        double s = 0;
        for (std::size_t y = 0; y < 4; ++y)
          for (std::size_t x = 0; x < 4; ++x)
            s += images[i].at((t / 4) * 4 + y, (t % 4) * 4 + x);
        f(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = s / 16;
      }
    return f;
  }
  ImageShape input_shape() const override { return {16, 16, 1}; }
  std::size_t latent_dim() const override { return 16; }
  std::string identity() const override { return "tile16"; }

  mutable std::atomic<std::size_t> calls{0};
};

std::vector<Image> corpus(std::size_t n, std::uint64_t seed) {
  CorpusSpec spec;
  spec.count = n;
  spec.size = 16;
  spec.seed = seed;
  return generate_corpus(spec);
}

std::vector<Image> disturbed(const std::vector<Image>& images, DisturbanceSpec spec) {
  std::vector<Image> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    spec.seed = i;
    out.push_back(apply(images[i], spec));
  }
  return out;
}

}  // namespace

TEST(Pipeline, IdenticalSetsScoreZero) {
  auto enc = std::make_shared<TileEncoder>();
  const auto images = corpus(30, 1);
  EXPECT_EQ(evaluate(metric_by_name("fdd", enc), images, images).score, 0.0);
  EXPECT_EQ(evaluate(metric_by_name("tdd", enc), images, images).score, 0.0);
}

TEST(Pipeline, SharedCacheEncodesEachImageOnce) {
  auto enc = std::make_shared<TileEncoder>();
  const auto real = corpus(20, 2);
  const auto gen = disturbed(real, {DisturbanceKind::patch_swap, 0.25});
  FeatureCache cache;
  evaluate(metric_by_name("fdd", enc), real, gen, &cache);
  evaluate(metric_by_name("tdd", enc), real, gen, &cache);
  EXPECT_EQ(enc->calls.load(), 40u);
  EXPECT_EQ(cache.encoded_images(), 40u);
}

TEST(Pipeline, DuplicateImagesInOneRequestEncodeOnce) {
  auto enc = std::make_shared<TileEncoder>();
  auto images = corpus(3, 3);
  images.push_back(images[0]);
  FeatureCache cache;
  const FeatureSet f = cache.features(*enc, images);
  EXPECT_EQ(enc->calls.load(), 3u);
  EXPECT_TRUE(f.row(0) == f.row(3));
}

TEST(Pipeline, PermutationInvariance) {
  auto enc = std::make_shared<TileEncoder>();
  const auto real = corpus(25, 4);
  const auto gen = disturbed(real, {DisturbanceKind::gaussian, 0.04});
  auto shuffled = gen;
  std::reverse(shuffled.begin(), shuffled.end());
  for (const char* name : {"fdd", "kdd", "tdd"}) {
    const auto spec = metric_by_name(name, enc);
    const double a = evaluate(spec, real, gen).score;
    const double b = evaluate(spec, real, shuffled).score;
    EXPECT_NEAR(a, b, 1e-9 * std::max(1.0, std::abs(a))) << name;
  }
}

TEST(Pipeline, DeterministicScoreBits) {
  auto enc = std::make_shared<TileEncoder>();
  const auto real = corpus(20, 5);
  const auto gen = disturbed(real, {DisturbanceKind::patch_mask, 0.25});
  for (const char* name : {"fdd", "kdd", "tdd"}) {
    const auto spec = metric_by_name(name, enc, 9);
    EXPECT_EQ(evaluate(spec, real, gen).score, evaluate(spec, real, gen).score);
  }
}

TEST(Pipeline, MatrixIsPairMajor) {
  auto enc = std::make_shared<TileEncoder>();
  const auto real = corpus(12, 6);
  std::vector<std::vector<Image>> gens;
  std::vector<SetPair> pairs;
  for (int k = 0; k < 5; ++k)
    gens.push_back(disturbed(real, {DisturbanceKind::gaussian, 0.01 * (k + 1)}));
  for (int k = 0; k < 5; ++k)
    pairs.push_back({"g" + std::to_string(k), real, gens[static_cast<std::size_t>(k)]});
  const std::vector<MetricSpec> specs{metric_by_name("fdd", enc),
                                      metric_by_name("kdd", enc),
                                      metric_by_name("tdd", enc)};
  FeatureCache cache;
  const auto reports = evaluate_matrix(specs, pairs, &cache);
  ASSERT_EQ(reports.size(), 15u);
  EXPECT_EQ(reports[0].label, "g0");
  EXPECT_EQ(reports[0].metric, "fdd");
  EXPECT_EQ(reports[4].label, "g1");
  EXPECT_EQ(reports[4].metric, "kdd");
  EXPECT_EQ(cache.encoded_images(), 12u * 6);
  // A single cell equals a plain evaluate.
  EXPECT_EQ(reports[2].score, evaluate(specs[2], real, gens[0]).score);
}

TEST(Pipeline, ConfigHashTracksSpec) {
  auto enc = std::make_shared<TileEncoder>();
  const auto a = metric_by_name("fdd", enc, 1), b = metric_by_name("fdd", enc, 2);
  EXPECT_EQ(config_hash(a), config_hash(metric_by_name("fdd", enc, 1)));
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(metric_by_name("kdd", enc, 1)));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Pipeline, Errors) {
  auto enc = std::make_shared<TileEncoder>();
  const auto images = corpus(5, 7);
  EXPECT_THROW(metric_by_name("fid", enc), InputError);
  EXPECT_THROW(evaluate(metric_by_name("fdd", enc),
                        std::span<const Image>(images).first(1), images),
               InputError);
  MetricSpec none;
  EXPECT_THROW(evaluate(none, images, images), ConfigError);
}

TEST(Pipeline, MatchedNSubsamplesLargerSet) {
  auto enc = std::make_shared<TileEncoder>();
  const auto real = corpus(30, 8);
  const auto gen = corpus(10, 9);
  auto spec = metric_by_name("fdd", enc, 3);
  spec.matched_n = true;
  const double a = evaluate(spec, real, gen).score;
  EXPECT_EQ(a, evaluate(spec, real, gen).score);
  spec.matched_n = false;
  EXPECT_NE(a, evaluate(spec, real, gen).score);
}

TEST(Pipeline, CacheIsSafeUnderConcurrentUse) {
  auto enc = std::make_shared<TileEncoder>();
  const auto images = corpus(40, 10);
  FeatureCache cache;
  std::vector<std::thread> threads;
  std::vector<FeatureSet> results(4);
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] { results[static_cast<std::size_t>(t)] = cache.features(*enc, images); });
  for (auto& th : threads) th.join();
  for (const auto& r : results) EXPECT_TRUE(r == results[0]);
  EXPECT_EQ(cache.size(), 40u);
}

TEST(Pipeline, CsvRow) {
  MetricReport r;
  r.label = "x";
  r.metric = "fdd";
  r.score = 0.5;
  r.n_real = 3;
  r.n_gen = 4;
  r.config_hash = "abc";
  r.seed = 7;
  EXPECT_EQ(report_csv_row(r), "x,fdd,0.5,3,4,abc,7");
}
