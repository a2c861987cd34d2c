// fdd: command-line front end for the denoised-distance toolkit.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fdd/fdd.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

using Model = fdd::BasicDae<float>;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> parse_levels(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw fdd::InputError("bad level '" + item + "'");
    }
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw fdd::InputError("cannot write " + path);
  out << text;
  if (!out) throw fdd::InputError("write failed: " + path);
}

/// A PNG directory if `source` names one, otherwise a corpus spec.
std::vector<fdd::Image> load_source(const std::string& source,
                                    const fdd::ImageShape& shape, bool strict) {
  if (fs::is_directory(source)) return fdd::io::load_images(source, shape, strict).images;
  if (fs::exists(source)) throw fdd::InputError(source + " is not a directory");
  std::vector<fdd::Image> images = fdd::generate_corpus(fdd::parse_corpus_spec(source));
  for (auto& img : images) img = fdd::conform(img, shape);
  return images;
}

struct Loaded {
  std::shared_ptr<const Model> model;
  std::shared_ptr<const fdd::Encoder> encoder;
};

Loaded load_encoder(const std::string& path) {
  auto model = std::make_shared<const Model>(fdd::load_checkpoint<float>(path));
  return {model, std::make_shared<fdd::DaeEncoder<float>>(model)};
}

std::vector<fdd::MetricSpec> metric_list(const std::string& names,
                                         const std::shared_ptr<const fdd::Encoder>& enc,
                                         std::uint64_t seed) {
  std::vector<fdd::MetricSpec> out;
  for (const auto& n : split_list(names)) out.push_back(fdd::metric_by_name(n, enc, seed));
  if (out.empty()) throw fdd::InputError("no metrics given");
  return out;
}

// ---------------------------------------------------------------------------
// train-dae

struct TrainSettings {
  fdd::DaeConfig model;
  fdd::TrainingConfig training;
  fdd::NoiseSpec noise;
  std::uint64_t model_seed = 0;
  std::vector<std::string> model_keys;  // model keys present in the file
};

template <class T>
T config_value(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw fdd::ConfigError("config key '" + key + "' has the wrong type");
  }
}

TrainSettings parse_train_config(const json& j) {
  if (!j.is_object()) throw fdd::ConfigError("config must be a JSON object");
  TrainSettings s;
  for (const auto& [key, v] : j.items()) {
    if (key == "input") {
      const auto dims = config_value<std::vector<std::size_t>>(v, key);
      if (dims.size() != 3) throw fdd::ConfigError("config key 'input' needs [h, w, c]");
      s.model.input = {dims[0], dims[1], dims[2]};
      s.model_keys.push_back(key);
    } else if (key == "encoder_channels") {
      s.model.encoder_channels = config_value<std::vector<std::size_t>>(v, key);
      s.model_keys.push_back(key);
    } else if (key == "latent_dim") {
      s.model.latent_dim = config_value<std::size_t>(v, key);
      s.model_keys.push_back(key);
    } else if (key == "model_seed") {
      s.model_seed = config_value<std::uint64_t>(v, key);
    } else if (key == "batch_size") {
      s.training.batch_size = config_value<std::size_t>(v, key);
    } else if (key == "lr") {
      s.training.lr = config_value<double>(v, key);
    } else if (key == "max_epochs") {
      s.training.max_epochs = config_value<std::size_t>(v, key);
    } else if (key == "patience") {
      s.training.patience = config_value<std::size_t>(v, key);
    } else if (key == "seed") {
      s.training.seed = config_value<std::uint64_t>(v, key);
    } else if (key == "validation_fraction") {
      s.training.validation_fraction = config_value<double>(v, key);
    } else if (key == "beta1") {
      s.training.beta1 = config_value<double>(v, key);
    } else if (key == "beta2") {
      s.training.beta2 = config_value<double>(v, key);
    } else if (key == "eps") {
      s.training.eps = config_value<double>(v, key);
    } else if (key == "noise_sigma") {
      s.noise.sigma = config_value<double>(v, key);
    } else if (key == "noise_seed") {
      s.noise.seed = config_value<std::uint64_t>(v, key);
    } else {
      throw fdd::ConfigError("unknown config key '" + key + "'");
    }
  }
  return s;
}

struct TrainArgs {
  std::string corpus, config, out, resume, history;
  bool strict = false, quiet = false;
};

int cmd_train(const TrainArgs& a) {
  TrainSettings s;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw fdd::InputError("cannot read config " + a.config);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw fdd::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    s = parse_train_config(j);
  }
  Model model = [&] {
    if (a.resume.empty()) return fdd::build_dae<float>(s.model, s.model_seed);
    Model m = fdd::load_checkpoint<float>(a.resume);
    if (!s.model_keys.empty() && !(m.config() == s.model))
      throw fdd::ConfigError("config model keys disagree with the resumed checkpoint");
    return m;
  }();
  const auto images = load_source(a.corpus, model.config().input, a.strict);
  const auto result = fdd::train_dae(model, images, s.noise, s.training,
                                     [&](std::size_t epoch, double loss) {
                                       if (!a.quiet)
                                         std::fprintf(stderr, "epoch %zu loss %.6g\n",
                                                      epoch, loss);
                                     });
  fdd::save_checkpoint(model, a.out);
  std::string csv = "epoch,loss\n";
  for (std::size_t e = 0; e < model.history().size(); ++e)
    csv += std::to_string(e) + ',' + fdd::format_real(model.history()[e]) + '\n';
  write_text(a.history.empty() ? a.out + ".loss.csv" : a.history, csv);
  if (!a.quiet)
    std::fprintf(stderr, "best epoch %zu loss %.6g%s\n", result.best_epoch,
                 result.best_loss, result.stopped_early ? " (stopped early)" : "");
  return 0;
}

// ---------------------------------------------------------------------------
// score

/// Encodes through $FDD_CACHE_DIR when set: one feature file per
/// (encoder, image set).
fdd::FeatureSet set_features(const fdd::DaeEncoder<float>& enc,
                             std::span<const fdd::Image> images,
                             fdd::FeatureCache& memory) {
  const char* dir = std::getenv("FDD_CACHE_DIR");
  if (!dir || !*dir) return memory.features(enc, images);
  fdd::Sha256 h;
  h.update(enc.identity());
  for (const auto& img : images) h.update(fdd::FeatureCache::image_key(img));
  const fdd::Digest key = h.finish();
  const fs::path path = fs::path(dir) / (fdd::to_hex(key) + ".feat");
  const fdd::Digest digest = enc.model().encoder_digest();
  if (fs::exists(path)) {
    try {
      fdd::io::FeatureFile f = fdd::io::load_features(path.string());
      if (f.encoder == digest &&
          f.features.rows() == static_cast<Eigen::Index>(images.size()))
        return f.features;
    } catch (const fdd::InputError& e) {
      fdd::warn("ignoring cache entry " + path.string() + ": " + e.what());
    }
  }
  fdd::io::FeatureFile f;
  f.encoder = digest;
  f.features = memory.features(enc, images);
  fs::create_directories(dir);
  fdd::io::save_features(f, path.string());
  // Rows come back at file precision so cold and warm runs agree.
  return fdd::io::load_features(path.string()).features;
}

struct ScoreArgs {
  std::string metric = "fdd", encoder, real, gen, report;
  std::uint64_t seed = 0;
  bool json = false, strict = false, matched_n = false;
};

int cmd_score(const ScoreArgs& a) {
  const Loaded enc = load_encoder(a.encoder);
  fdd::MetricSpec spec = fdd::metric_by_name(a.metric, enc.encoder, a.seed);
  spec.matched_n = a.matched_n;
  const auto shape = enc.model->config().input;
  const auto real = fdd::io::load_images(a.real, shape, a.strict).images;
  const auto gen = fdd::io::load_images(a.gen, shape, a.strict).images;
  if (real.size() < 2 || gen.size() < 2)
    throw fdd::InputError("score needs at least 2 images per set");

  const auto start = std::chrono::steady_clock::now();
  const auto& dae = static_cast<const fdd::DaeEncoder<float>&>(*enc.encoder);
  fdd::FeatureCache memory;
  fdd::MetricReport r;
  r.metric = spec.name;
  r.score = fdd::score_features(spec, set_features(dae, real, memory),
                                set_features(dae, gen, memory));
  r.n_real = real.size();
  r.n_gen = gen.size();
  r.config_hash = fdd::config_hash(spec);
  r.seed = spec.seed;
  r.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (a.json) {
    std::cout << fdd::io::to_json_line(r);
  } else {
    std::printf("%.6f\n", r.score);
  }
  if (!a.report.empty()) write_text(a.report, fdd::io::to_json(r).dump(2) + '\n');
  return 0;
}

// ---------------------------------------------------------------------------
// make-corpus, disturb

struct CorpusArgs {
  std::string generator, out;
  fdd::CorpusSpec spec;
};

int cmd_make_corpus(CorpusArgs a) {
  a.spec.generator = fdd::parse_corpus_generator(a.generator);
  if (a.spec.count == 0) throw fdd::InputError("count must be >= 1");
  if (a.spec.size < 8) throw fdd::InputError("size must be >= 8");
  fs::create_directories(a.out);
  for (std::size_t i = 0; i < a.spec.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.png", i);
    fdd::io::save_png((fs::path(a.out) / name).string(), fdd::generate_image(a.spec, i));
  }
  std::fprintf(stderr, "wrote %zu images (%s)\n", a.spec.count,
               fdd::to_string(a.spec).c_str());
  return 0;
}

struct DisturbArgs {
  std::string in, out, spec;
  std::size_t size = 64, channels = 1;
  std::uint64_t seed = 0;
  bool strict = false;
};

int cmd_disturb(const DisturbArgs& a) {
  const fdd::DisturbanceSpec spec = fdd::parse_disturbance(a.spec);
  const auto loaded = fdd::io::load_images(a.in, {a.size, a.size, a.channels}, a.strict);
  const auto out = fdd::disturb_set(loaded.images, spec, a.seed);
  fs::create_directories(a.out);
  for (std::size_t i = 0; i < out.size(); ++i)
    fdd::io::save_png((fs::path(a.out) / loaded.names[i]).string(), out[i]);
  return 0;
}

// ---------------------------------------------------------------------------
// sensitivity, consistency, rank

struct SensitivityArgs {
  std::string encoder, data, metrics = "fdd", out, summary, correlations;
  std::size_t groups = 10, k = 300, grid = 4;
  std::uint64_t seed = 0;
  bool strict = false;
};

int cmd_sensitivity(const SensitivityArgs& a) {
  const Loaded enc = load_encoder(a.encoder);
  const auto images = load_source(a.data, enc.model->config().input, a.strict);
  fdd::SensitivityConfig cfg;
  cfg.n_groups = a.groups;
  cfg.group_size = a.k;
  cfg.disturbances = fdd::default_sensitivity_disturbances(a.grid);
  cfg.metrics = metric_list(a.metrics, enc.encoder, a.seed);
  cfg.seed = a.seed;
  const auto res = fdd::sensitivity_test(images, cfg);
  write_text(a.out, fdd::sensitivity_csv(res, a.seed));
  if (!a.summary.empty()) write_text(a.summary, fdd::sensitivity_summary_csv(res));
  if (!a.correlations.empty()) {
    const auto [names, rows] = fdd::sensitivity_score_table(res);
    json j = fdd::io::to_json(fdd::pearson_matrix(names, rows));
    j["config_hash"] = res.config_hash;
    write_text(a.correlations, j.dump(2) + '\n');
  }
  return 0;
}

struct ConsistencyArgs {
  std::string encoder, data, kind = "gaussian", ladder, metrics = "fdd", out;
  double noise = 0.01;
  std::size_t grid = 4;
  std::uint64_t seed = 0;
  bool strict = false;
};

int cmd_consistency(const ConsistencyArgs& a) {
  const Loaded enc = load_encoder(a.encoder);
  const auto images = load_source(a.data, enc.model->config().input, a.strict);
  fdd::DisturbanceSpec base;
  base.kind = fdd::parse_disturbance_kind(a.kind);
  base.patch_grid = a.grid;
  if (base.kind == fdd::DisturbanceKind::mixed) base.alpha = a.noise;
  const auto ladder = a.ladder.empty() ? fdd::default_ladder(base.kind) : parse_levels(a.ladder);
  const auto res = fdd::consistency_test(images, base, ladder,
                                         metric_list(a.metrics, enc.encoder, a.seed), a.seed);
  write_text(a.out, fdd::consistency_csv(res, a.seed));
  return 0;
}

std::string bracketed(const std::vector<std::string>& order) {
  std::string s = "[";
  for (std::size_t i = 0; i < order.size(); ++i) s += (i ? ", " : "") + order[i];
  return s + "]";
}

struct RankArgs {
  std::string scores, out;
};

int cmd_rank(const RankArgs& a) {
  std::ifstream in(a.scores, std::ios::binary);
  if (!in) throw fdd::InputError("cannot read " + a.scores);
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  std::istringstream stream(text);
  const auto res = fdd::model_ranking(fdd::parse_ranking_csv(stream));
  for (const auto& m : res.metrics) {
    std::printf("%s order: %s", m.metric.c_str(), bracketed(m.order).c_str());
    if (m.pearson_r) std::printf(" r=%.4f", *m.pearson_r);
    std::printf("\n");
  }
  if (res.human_order) std::printf("human order: %s\n", bracketed(*res.human_order).c_str());
  for (const auto& [x, y] : res.disagreements)
    std::printf("disagreement: %s vs %s\n", x.c_str(), y.c_str());
  if (res.disagreements.empty()) std::printf("all metrics agree\n");
  if (!a.out.empty())
    write_text(a.out, fdd::io::to_json(res, fdd::sha256_hex(text).substr(0, 16)).dump(2) + '\n');
  return 0;
}

// ---------------------------------------------------------------------------
// gradcam

struct GradcamArgs {
  std::string encoder, images, layer = "last", out;
  double opacity = 0.6;
  bool strict = false;
};

int cmd_gradcam(const GradcamArgs& a) {
  const Model model = fdd::load_checkpoint<float>(a.encoder);
  const auto loaded = fdd::io::load_images(a.images, model.config().input, a.strict);
  const auto maps = fdd::gradcam(model, loaded.images, a.layer);
  fs::create_directories(a.out);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const std::string stem = fs::path(loaded.names[i]).stem().string();
    fdd::io::encode_png((fs::path(a.out) / (stem + ".png")).string(),
                        fdd::attention_overlay(loaded.images[i], maps[i], a.opacity));
    write_text((fs::path(a.out) / (stem + ".csv")).string(), fdd::attention_csv(maps[i]));
  }
  std::fprintf(stderr, "layer %s: %zu maps of %zux%zu\n", maps.front().layer.c_str(),
               maps.size(), maps.front().height, maps.front().width);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Denoised distances for generated image sets"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train-dae", "Train a denoising autoencoder");
  t->add_option("--corpus", train.corpus, "PNG directory or corpus spec")->required();
  t->add_option("--config", train.config, "JSON training config");
  t->add_option("--out", train.out, "Checkpoint to write")->required();
  t->add_option("--resume", train.resume, "Checkpoint to continue from");
  t->add_option("--history", train.history, "Loss CSV (default <out>.loss.csv)");
  t->add_flag("--strict", train.strict, "Abort on undecodable images");
  t->add_flag("--quiet", train.quiet);

  ScoreArgs score;
  auto* s = app.add_subcommand("score", "Score a generated set against a real set");
  s->add_option("--metric", score.metric)->check(CLI::IsMember({"fdd", "kdd", "tdd"}));
  s->add_option("--encoder", score.encoder)->required();
  s->add_option("--real", score.real)->required();
  s->add_option("--gen", score.gen)->required();
  s->add_option("--seed", score.seed);
  s->add_option("--report", score.report, "Write the report as JSON");
  s->add_flag("--json", score.json);
  s->add_flag("--matched-n", score.matched_n);
  s->add_flag("--strict", score.strict);

  CorpusArgs corpus;
  auto* mc = app.add_subcommand("make-corpus", "Write a synthetic PNG corpus");
  mc->add_option("generator", corpus.generator, "shapes | frames | bikes-stick")->required();
  mc->add_option("--count", corpus.spec.count);
  mc->add_option("--size", corpus.spec.size);
  mc->add_option("--seed", corpus.spec.seed);
  mc->add_option("--missing-wheel", corpus.spec.missing_wheel)->check(CLI::Range(0.0, 1.0));
  mc->add_option("--detach", corpus.spec.detach)->check(CLI::Range(0.0, 1.0));
  mc->add_option("--out", corpus.out)->required();

  DisturbArgs disturb;
  auto* d = app.add_subcommand("disturb", "Apply a disturbance to every image");
  d->add_option("--in", disturb.in)->required();
  d->add_option("--out", disturb.out)->required();
  d->add_option("--spec", disturb.spec, "e.g. patch_swap:alpha=0.25,grid=4")->required();
  d->add_option("--size", disturb.size);
  d->add_option("--channels", disturb.channels);
  d->add_option("--seed", disturb.seed);
  d->add_flag("--strict", disturb.strict);

  SensitivityArgs sens;
  auto* se = app.add_subcommand("sensitivity", "Grouped sensitivity test");
  se->add_option("--encoder", sens.encoder)->required();
  se->add_option("--data", sens.data, "PNG directory or corpus spec")->required();
  se->add_option("--groups", sens.groups);
  se->add_option("--k", sens.k, "Images per group");
  se->add_option("--grid", sens.grid, "Patch grid for mask and swap");
  se->add_option("--metrics", sens.metrics, "Comma-separated list");
  se->add_option("--seed", sens.seed);
  se->add_option("--out", sens.out, "CSV path (default stdout)");
  se->add_option("--summary", sens.summary);
  se->add_option("--correlations", sens.correlations);
  se->add_flag("--strict", sens.strict);

  ConsistencyArgs cons;
  auto* co = app.add_subcommand("consistency", "Score along a disturbance ladder");
  co->add_option("--encoder", cons.encoder)->required();
  co->add_option("--data", cons.data)->required();
  co->add_option("--kind", cons.kind);
  co->add_option("--ladder", cons.ladder, "Comma-separated levels");
  co->add_option("--noise", cons.noise, "Noise alpha held fixed for mixed");
  co->add_option("--grid", cons.grid);
  co->add_option("--metrics", cons.metrics);
  co->add_option("--seed", cons.seed);
  co->add_option("--out", cons.out);
  co->add_flag("--strict", cons.strict);

  RankArgs rank;
  auto* r = app.add_subcommand("rank", "Rank models by ingested scores");
  r->add_option("--scores", rank.scores, "CSV: model,metric,score,human_error")->required();
  r->add_option("--out", rank.out, "ranking.json");
  r->add_option("--seed", [](const CLI::results_t&) { return true; }, "Unused");

  GradcamArgs cam;
  auto* g = app.add_subcommand("gradcam", "Attention maps at an encoder layer");
  g->add_option("--encoder", cam.encoder)->required();
  g->add_option("--images", cam.images)->required();
  g->add_option("--layer", cam.layer, "last or encN");
  g->add_option("--opacity", cam.opacity)->check(CLI::Range(0.0, 1.0));
  g->add_option("--out", cam.out)->required();
  g->add_flag("--strict", cam.strict);
  g->add_option("--seed", [](const CLI::results_t&) { return true; }, "Unused");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*t) return cmd_train(train);
    if (*s) return cmd_score(score);
    if (*mc) return cmd_make_corpus(corpus);
    if (*d) return cmd_disturb(disturb);
    if (*se) return cmd_sensitivity(sens);
    if (*co) return cmd_consistency(cons);
    if (*r) return cmd_rank(rank);
    if (*g) return cmd_gradcam(cam);
  } catch (const fdd::NumericalError& e) {
    std::fprintf(stderr, "fdd: numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const fdd::InputError& e) {
    std::fprintf(stderr, "fdd: %s\n", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fdd: %s\n", e.what());
    return 1;
  }
  return kExitInput;
}
