// Command-line surface over the core library: dataset synthesis, teacher
// caching, training, embedding, evaluation, and visualization. Exit codes:
// 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "ppssl/ais.hpp"
#include "ppssl/checkpoint.hpp"
#include "ppssl/config.hpp"
#include "ppssl/data.hpp"
#include "ppssl/eval.hpp"
#include "ppssl/image.hpp"
#include "ppssl/ppse.hpp"
#include "ppssl/synthetic.hpp"
#include "ppssl/teacher.hpp"
#include "ppssl/trainer.hpp"
#include "ppssl/viz.hpp"

namespace fs = std::filesystem;
using namespace ppssl;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

config::Settings resolve_settings(const CommonArgs& args) {
  config::Doc doc;
  if (!args.config_path.empty()) doc = config::Doc::parse_file(args.config_path);
  return config::resolve(doc, args.overrides);
}

void write_snapshot(const config::Settings& s, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write config snapshot '" + path + "'");
  out << s.snapshot();
}

// <root>/<UTC timestamp>_seed<seed>, suffixed on collision. The root is
// run.dir unless PPSSL_RUN_DIR overrides it; an explicit directory wins
// over both.
std::string make_run_dir(const config::Settings& s, const std::string& explicit_dir) {
  if (!explicit_dir.empty()) {
    fs::create_directories(explicit_dir);
    return explicit_dir;
  }
  const char* env = std::getenv("PPSSL_RUN_DIR");
  const fs::path root = (env && *env) ? fs::path(env) : fs::path(s.run.dir);
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string base = std::string(stamp) + "_seed" + std::to_string(s.run.seed);
  fs::path dir = root / base;
  for (int n = 2; fs::exists(dir); ++n) dir = root / (base + "_" + std::to_string(n));
  fs::create_directories(dir);
  return dir.string();
}

std::shared_ptr<teacher::TeacherProvider> make_provider(const config::Settings& s) {
  if (s.ais.disable || s.ais.alpha <= 0.0) return nullptr;
  if (s.ais.provider == "cache")
    return std::make_shared<teacher::CacheProvider>(s.ais.image_cache, s.ais.text_cache);
  teacher::FixtureConfig fc;
  fc.dim = s.ais.teacher_dim;
  fc.num_classes = s.ais.fixture_classes;
  fc.seed = s.run.seed;
  fc.kappa = s.ais.kappa;
  return std::make_shared<teacher::FixtureProvider>(fc);
}

struct RestoredRun {
  config::Settings trained;  // the settings the checkpoint was written under
  std::unique_ptr<train::Pipeline> pipeline;
};

// Rebuilds the pipeline of a checkpoint for inference. Both auxiliary
// losses are switched off so no teacher is needed; the heads still exist
// and receive their trained weights.
RestoredRun restore_for_eval(const std::string& checkpoint_path) {
  const train::Checkpoint c = train::load_checkpoint(checkpoint_path);
  RestoredRun run;
  run.trained = config::resolve(config::Doc::parse_text(c.settings_text, checkpoint_path));
  config::Settings quiet = run.trained;
  quiet.ais.disable = true;
  quiet.iadm.disable = true;
  run.pipeline = std::make_unique<train::Pipeline>(quiet, nullptr);
  run.pipeline->restore(c);
  return run;
}

bool resolve_gate(const std::string& gate, const config::Settings& trained) {
  if (gate == "on") return true;
  if (gate == "off") return false;
  // auto: gate exactly when the attention head was part of the objective
  return !trained.ais.disable && trained.ais.alpha > 0.0;
}

int run_make_synthetic(const data::SyntheticSpec& spec, const std::string& out_dir) {
  const std::string manifest = data::generate_synthetic(spec, out_dir);
  std::cout << "manifest " << manifest << "\n";
  return 0;
}

void copy_table(const std::string& from, const std::string& to, int expected_dim,
                const char* what) {
  const ppse::Table table = ppse::read_table(from, ppse::sidecar_path(from, "ids"));
  if (table.rows.dim(1) != expected_dim)
    throw ConfigError(std::string(what) + " '" + from + "' has dimension " +
                      std::to_string(table.rows.dim(1)) + ", ais.teacher_dim is " +
                      std::to_string(expected_dim));
  ppse::write_table(to, ppse::sidecar_path(to, "ids"), table);
}

int run_cache_teacher(const config::Settings& s, const std::string& from_images,
                      const std::string& from_texts, const std::string& external) {
  std::vector<std::string> missing;
  if (s.data.manifest.empty()) missing.push_back("data.manifest is required");
  if (s.ais.corpus.empty()) missing.push_back("ais.corpus is required");
  if (s.ais.image_cache.empty()) missing.push_back("ais.image_cache names the output file");
  if (s.ais.text_cache.empty()) missing.push_back("ais.text_cache names the output file");
  if (!missing.empty()) throw ConfigError("cache-teacher configuration incomplete", missing);

  const data::Manifest manifest = data::load_manifest(s.data.manifest);
  const auto descriptions = ais::load_descriptions(s.ais.corpus);
  fs::create_directories(fs::path(s.ais.image_cache).parent_path());
  fs::create_directories(fs::path(s.ais.text_cache).parent_path());

  if (!external.empty()) {
    // hand the whole job to an external embedder; arguments are appended
    // in a fixed order
    const std::string cmd = external + " '" + s.data.manifest + "' '" + s.ais.image_cache +
                            "' '" + s.ais.corpus + "' '" + s.ais.text_cache + "'";
    const int rc = std::system(cmd.c_str());
    if (rc != 0)
      throw IoError("external embedding command exited with status " + std::to_string(rc));
  } else if (!from_images.empty()) {
    if (from_texts.empty())
      throw ConfigError("--from needs --from-text so both cache sides stay consistent");
    copy_table(from_images, s.ais.image_cache, s.ais.teacher_dim, "image cache");
    copy_table(from_texts, s.ais.text_cache, s.ais.teacher_dim, "text cache");
  } else {
    teacher::FixtureConfig fc;
    fc.dim = s.ais.teacher_dim;
    fc.num_classes = s.ais.fixture_classes;
    fc.seed = s.run.seed;
    fc.kappa = s.ais.kappa;
    const teacher::FixtureProvider fixture(fc);
    const data::AugPolicy policy = config::aug_policy(s);

    ppse::Table images;
    images.rows = Tensor({int(manifest.records.size()), fc.dim});
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      const data::ImageRecord& rec = manifest.records[i];
      const Tensor original = data::original_transform_image(img::load_png(rec.path), policy);
      const Tensor row = fixture.image_embedding(original, rec.id);
      std::copy(row.raw().begin(), row.raw().end(),
                images.rows.raw().begin() + std::int64_t(i) * fc.dim);
      images.ids.push_back(rec.id);
    }
    ppse::write_table(s.ais.image_cache, ppse::sidecar_path(s.ais.image_cache, "ids"), images);

    ppse::Table texts;
    texts.rows = Tensor({int(descriptions.size()), fc.dim});
    for (std::size_t i = 0; i < descriptions.size(); ++i) {
      const Tensor row = fixture.text_embedding(descriptions[i]);
      std::copy(row.raw().begin(), row.raw().end(),
                texts.rows.raw().begin() + std::int64_t(i) * fc.dim);
      texts.ids.push_back(teacher::description_key(descriptions[i]));
    }
    ppse::write_table(s.ais.text_cache, ppse::sidecar_path(s.ais.text_cache, "ids"), texts);
  }

  // every mode ends with the same audit: the caches must cover the whole
  // manifest and corpus at the configured width
  const teacher::CacheProvider audit(s.ais.image_cache, s.ais.text_cache);
  if (audit.dim() != s.ais.teacher_dim)
    throw ConfigError("cache dimension " + std::to_string(audit.dim()) +
                      " does not match ais.teacher_dim " + std::to_string(s.ais.teacher_dim));
  for (const auto& rec : manifest.records) audit.image_embedding(Tensor(), rec.id);
  for (const auto& desc : descriptions) audit.text_embedding(desc);

  write_snapshot(s, ppse::sidecar_path(s.ais.image_cache, "cfg"));
  std::cout << "image cache " << s.ais.image_cache << " (" << manifest.records.size()
            << " rows)\n"
            << "text cache " << s.ais.text_cache << " (" << descriptions.size() << " rows)\n";
  return 0;
}

int run_train(const config::Settings& s, const std::string& resume_path,
              const std::string& run_dir_flag) {
  config::validate_training_inputs(s);
  const data::Manifest manifest = data::load_manifest(s.data.manifest);
  const std::string run_dir = make_run_dir(s, run_dir_flag);
  write_snapshot(s, (fs::path(run_dir) / "config.cfg").string());

  train::Pipeline pipeline(s, make_provider(s));
  if (!resume_path.empty()) pipeline.restore(train::load_checkpoint(resume_path));

  const train::FitReport report = pipeline.fit(manifest, run_dir);
  std::cout << "run dir " << run_dir << "\n";
  if (!report.metrics.empty()) {
    const train::StepMetrics& last = report.metrics.back();
    std::cout << "steps " << report.metrics.size() << "\n"
              << "final l_cl " << last.l_cl << "\n";
  }
  std::cout << "final checkpoint " << report.final_checkpoint << "\n";
  return 0;
}

int run_embed(const std::string& checkpoint_path, const std::string& manifest_flag,
              const std::string& split_name, const std::string& out_path,
              const std::string& gate_flag) {
  RestoredRun run = restore_for_eval(checkpoint_path);
  const std::string manifest_path =
      manifest_flag.empty() ? run.trained.data.manifest : manifest_flag;
  if (manifest_path.empty())
    throw ConfigError("no manifest: the checkpoint has none recorded, pass --manifest");
  const data::Manifest manifest = data::load_manifest(manifest_path);
  const data::Split split = split_name == "train" ? data::Split::train : data::Split::test;
  const bool gate = resolve_gate(gate_flag, run.trained);

  fs::create_directories(fs::path(out_path).parent_path().empty()
                             ? fs::path(".")
                             : fs::path(out_path).parent_path());
  const eval::FeatureSet fs_set =
      eval::embed_dataset(run.pipeline->state().student_encoder, run.pipeline->ais_head(),
                          manifest, split, config::aug_policy(run.trained), gate);
  eval::export_features(fs_set, out_path);
  write_snapshot(run.trained, ppse::sidecar_path(out_path, "cfg"));
  std::cout << "features " << out_path << " (" << fs_set.features.dim(0) << " x "
            << fs_set.features.dim(1) << ", gate " << (gate ? "on" : "off") << ")\n";
  return 0;
}

int run_eval_retrieval(const std::string& features_path, const std::string& labels_path) {
  const eval::FeatureSet fs_set = eval::import_features(features_path, labels_path);
  const eval::RetrievalReport report = eval::retrieval_eval(fs_set);
  std::cout.setf(std::ios::fixed);
  std::cout.precision(2);
  std::cout << "queries " << fs_set.features.dim(0) << "\n"
            << "isolated " << report.isolated_queries.size() << "\n"
            << "rank1 " << report.rank1 << "\n"
            << "rank5 " << report.rank5 << "\n"
            << "map " << report.map << "\n";
  return 0;
}

int run_eval_probe(const std::string& train_path, const std::string& test_path,
                   const eval::ProbeConfig& cfg) {
  const eval::FeatureSet train_set = eval::import_features(train_path);
  const eval::FeatureSet test_set = eval::import_features(test_path);
  const eval::ProbeReport report = eval::linear_probe(train_set, test_set, cfg);
  std::cout.setf(std::ios::fixed);
  std::cout.precision(2);
  std::cout << "fraction " << cfg.fraction << "\n"
            << "top1 " << report.top1 << "\n"
            << "top5 " << report.top5 << "\n";
  return 0;
}

int run_visualize(const std::string& checkpoint_path, const std::string& manifest_flag,
                  const std::string& split_name, const std::string& out_dir,
                  const viz::VizConfig& cfg) {
  RestoredRun run = restore_for_eval(checkpoint_path);
  const std::string manifest_path =
      manifest_flag.empty() ? run.trained.data.manifest : manifest_flag;
  if (manifest_path.empty())
    throw ConfigError("no manifest: the checkpoint has none recorded, pass --manifest");
  const data::Manifest manifest = data::load_manifest(manifest_path);
  const data::Split split = split_name == "train" ? data::Split::train : data::Split::test;

  const auto written = viz::visualize(*run.pipeline, manifest, split, out_dir, cfg);
  write_snapshot(run.trained, (fs::path(out_dir) / "config.cfg").string());
  std::cout << "wrote " << written.size() << " maps under " << out_dir << "\n";
  return 0;
}

std::string format_error(const Error& e) {
  std::string line = e.what();
  if (const auto* cfg = dynamic_cast<const ConfigError*>(&e)) {
    for (const std::string& issue : cfg->issues()) line += "; " + issue;
  }
  return line;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pp-ssl: momentum-contrast pretraining with semantic and saliency alignment"};
  app.require_subcommand(1);

  // make-synthetic
  data::SyntheticSpec spec;
  std::string synth_out;
  CLI::App* make = app.add_subcommand("make-synthetic", "render the synthetic dataset");
  make->add_option("--out", synth_out, "output directory")->required();
  make->add_option("--classes", spec.num_classes, "number of classes (max 16)");
  make->add_option("--per-class", spec.per_class, "images per class");
  make->add_option("--canvas", spec.canvas, "square image size in pixels");
  make->add_option("--seed", spec.seed, "render seed");
  make->add_option("--clutter", spec.background_clutter, "background clutter density");

  // shared --config/--set
  CommonArgs cache_args, train_args;

  // cache-teacher
  std::string from_images, from_texts, external_cmd;
  CLI::App* cache = app.add_subcommand("cache-teacher", "precompute teacher embeddings");
  cache->add_option("--config", cache_args.config_path, "config file")->required();
  cache->add_option("--set", cache_args.overrides, "override, section.key=value");
  cache->add_option("--from", from_images, "copy a precomputed image-embedding table");
  cache->add_option("--from-text", from_texts, "copy a precomputed text-embedding table");
  cache->add_option("--command", external_cmd,
                    "external embedder; receives manifest, image cache, corpus, text cache");

  // train
  std::string resume_path, run_dir_flag;
  CLI::App* train_cmd = app.add_subcommand("train", "run the pretraining loop");
  train_cmd->add_option("--config", train_args.config_path, "config file")->required();
  train_cmd->add_option("--set", train_args.overrides, "override, section.key=value");
  train_cmd->add_option("--resume", resume_path, "checkpoint to continue from");
  train_cmd->add_option("--run-dir", run_dir_flag, "exact output directory");

  // embed
  std::string embed_ckpt, embed_manifest, embed_split = "test", embed_out, gate_flag = "auto";
  CLI::App* embed = app.add_subcommand("embed", "extract inference features for a split");
  embed->add_option("--checkpoint", embed_ckpt, "trained checkpoint")->required();
  embed->add_option("--manifest", embed_manifest, "dataset manifest (default: from checkpoint)");
  embed->add_option("--split", embed_split, "train or test")
      ->check(CLI::IsMember({"train", "test"}));
  embed->add_option("--out", embed_out, "output feature file")->required();
  embed->add_option("--gate", gate_flag, "attention gate: auto, on, off")
      ->check(CLI::IsMember({"auto", "on", "off"}));

  // eval-retrieval
  std::string retr_features, retr_labels;
  CLI::App* retr = app.add_subcommand("eval-retrieval", "rank-1/rank-5/mAP over a feature file");
  retr->add_option("--features", retr_features, "feature file")->required();
  retr->add_option("--labels", retr_labels, "label sidecar (default: next to features)");

  // eval-probe
  std::string probe_train, probe_test;
  eval::ProbeConfig probe_cfg;
  CLI::App* probe = app.add_subcommand("eval-probe", "linear probe at a label fraction");
  probe->add_option("--train-features", probe_train, "training feature file")->required();
  probe->add_option("--test-features", probe_test, "test feature file")->required();
  probe->add_option("--fraction", probe_cfg.fraction, "per-class labeled share");
  probe->add_option("--probe-lr", probe_cfg.lr, "probe learning rate");
  probe->add_option("--probe-epochs", probe_cfg.epochs, "probe epochs");
  probe->add_option("--seed", probe_cfg.seed, "subsampling seed");

  // visualize
  std::string viz_ckpt, viz_manifest, viz_split = "test", viz_out;
  viz::VizConfig viz_cfg;
  CLI::App* vis = app.add_subcommand("visualize", "write attention and saliency maps");
  vis->add_option("--checkpoint", viz_ckpt, "trained checkpoint")->required();
  vis->add_option("--manifest", viz_manifest, "dataset manifest (default: from checkpoint)");
  vis->add_option("--split", viz_split, "train or test")
      ->check(CLI::IsMember({"train", "test"}));
  vis->add_option("--out", viz_out, "output directory")->required();
  vis->add_option("--count", viz_cfg.count, "images to sample");
  vis->add_option("--seed", viz_cfg.seed, "sampling seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (make->parsed()) return run_make_synthetic(spec, synth_out);
    if (cache->parsed())
      return run_cache_teacher(resolve_settings(cache_args), from_images, from_texts,
                               external_cmd);
    if (train_cmd->parsed())
      return run_train(resolve_settings(train_args), resume_path, run_dir_flag);
    if (embed->parsed())
      return run_embed(embed_ckpt, embed_manifest, embed_split, embed_out, gate_flag);
    if (retr->parsed()) return run_eval_retrieval(retr_features, retr_labels);
    if (probe->parsed()) return run_eval_probe(probe_train, probe_test, probe_cfg);
    if (vis->parsed()) return run_visualize(viz_ckpt, viz_manifest, viz_split, viz_out, viz_cfg);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << format_error(e) << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
