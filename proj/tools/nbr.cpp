// Command-line front end. Exit codes: 0 success, 1 usage, 2 runtime error,
// 3 evaluation regression.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "nbr/attributes.hpp"
#include "nbr/chain_dsl.hpp"
#include "nbr/codec.hpp"
#include "nbr/dataset.hpp"
#include "nbr/degradation.hpp"
#include "nbr/error.hpp"
#include "nbr/evaluation.hpp"
#include "nbr/metrics.hpp"
#include "nbr/model.hpp"
#include "nbr/service.hpp"
#include "nbr/training.hpp"
#include "nbr/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitRegression = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// JSON config files: top-level keys are global flags, nested objects are
// subcommand sections keyed by long flag name, e.g.
// {"seed": 7, "train": {"stage1-epochs": 5, "lr-decay-at": [0.5, 0.75]}}.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j = section(app, default_also);
    for (const CLI::App* sub : app->get_subcommands())
      j[sub->get_name()] = section(sub, default_also);
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw CLI::ConversionError("config file is not a JSON object");
    std::vector<CLI::ConfigItem> items;
    walk(j, {}, items);
    return items;
  }

 private:
  // Numbers stay numbers so the banner reads back with the same types.
  static json scalar(const std::string& v) {
    const json n = json::parse(v, nullptr, false);
    return !n.is_discarded() && n.is_number() ? n : json(v);
  }

  static json section(const CLI::App* app, bool default_also) {
    json j = json::object();
    for (const CLI::Option* opt : app->get_options()) {
      const std::string& name = opt->get_single_name();
      if (name.empty() || name == "help" || name == "config" || !opt->get_configurable()) continue;
      if (opt->get_items_expected_max() == 0) {
        j[name] = opt->count() > 0;
      } else if (opt->count() > 0) {
        const auto& r = opt->results();
        if (opt->get_items_expected_max() <= 1 && r.size() == 1) {
          j[name] = scalar(r.front());
        } else {
          j[name] = json::array();
          for (const auto& v : r) j[name].push_back(scalar(v));
        }
      } else if (default_also) {
        const std::string d = opt->get_default_str();
        if (d.empty()) continue;
        if (d.front() == '[') {
          const json arr = json::parse(d, nullptr, false);
          j[name] = arr.is_discarded() ? json(d) : arr;
        } else {
          j[name] = scalar(d);
        }
      }
    }
    return j;
  }

  static void walk(const json& j, std::vector<std::string> parents,
                   std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto p = parents;
        p.push_back(key);
        walk(value, p, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      auto text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
      if (value.is_array())
        for (const auto& e : value) item.inputs.push_back(text(e));
      else
        item.inputs.push_back(text(value));
      items.push_back(std::move(item));
    }
  }
};

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  nbr::write_file_atomic(p, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

void print_banner(const CLI::App& app) {
  std::cout << "# resolved configuration (usable as --config)\n"
            << app.config_to_str(true, false) << "\n";
}

json attributes_json(const nbr::AttributeVector& a) {
  return {{"noise", a.noise}, {"scale", a.scale}, {"jpeg", a.jpeg}};
}

std::optional<int> channel_index(const std::string& name) {
  for (int c = 0; c < nbr::kAttributeChannels; ++c)
    if (nbr::kChannelOrder[c] == name) return c;
  return std::nullopt;
}

// ---- degrade ----------------------------------------------------------------

struct DegradeArgs {
  std::string input, output, chain;
};

void run_degrade(const DegradeArgs& a, std::uint64_t seed) {
  nbr::DegradationChain chain;
  try {
    chain = nbr::parse_chain(a.chain, seed);
  } catch (const nbr::ParseError& e) {
    throw UsageError(std::string("--chain: ") + e.what());
  }
  const nbr::Image img = nbr::read_image(a.input);
  const nbr::Image out = nbr::apply_chain(img, chain);
  nbr::write_image(a.output, out);
  json steps = json::array();
  for (const auto& s : chain.steps)
    steps.push_back({{"kind", std::string(nbr::to_string(s.kind))}, {"param", s.param},
                     {"seed", s.seed}});
  const json sidecar = {{"input", a.input},
                        {"output", a.output},
                        {"chain", nbr::render_chain(chain)},
                        {"seed", seed},
                        {"steps", steps},
                        {"true_attributes", attributes_json(nbr::true_attributes(chain))},
                        {"input_size", img.shape_string()},
                        {"output_size", out.shape_string()},
                        {"toolkit_version", nbr::kToolkitVersion}};
  write_text(a.output + ".json", sidecar.dump(2) + "\n");
  std::cout << "wrote " << a.output << " (" << out.shape_string() << ") and " << a.output
            << ".json\n";
}

// ---- make-dataset -----------------------------------------------------------

struct DatasetArgs {
  std::string corpus, out, shards;
  double split_ratio = 0.95;
  std::uint64_t samples = nbr::kDeskSamplesPerEpoch;
  int patch_size = nbr::kDefaultPatchSize;
  std::vector<std::string> kinds{"awgn", "scale", "jpeg"};
  bool color = false;
  std::uint64_t shard_size = 4096;
};

void run_make_dataset(const DatasetArgs& a, std::uint64_t seed) {
  nbr::DatasetManifest m = nbr::ingest_corpus(a.corpus, a.split_ratio, seed);
  m.sample_count = a.samples;
  m.patch_size = a.patch_size;
  m.master_seed = seed;
  m.color = a.color;
  m.kinds.clear();
  for (const auto& k : a.kinds) {
    const auto kind = nbr::parse_kind(k);
    if (!kind || (*kind != nbr::DegradationKind::awgn && *kind != nbr::DegradationKind::scale &&
                  *kind != nbr::DegradationKind::jpeg))
      throw UsageError("--kinds accepts awgn, scale and jpeg, got '" + k + "'");
    m.kinds.push_back(*kind);
  }
  // Source paths are relative to the root, which is stored absolute.
  m.root = fs::absolute(a.corpus).lexically_normal().string();
  nbr::save_manifest(m, a.out);
  std::cout << "manifest " << a.out << ": " << m.sources_in("train").size() << " train / "
            << m.sources_in("val").size() << " val sources, hash " << m.hash() << "\n";
  if (!a.shards.empty()) {
    const nbr::Dataset data(m);
    const auto files = nbr::write_shards(data, a.shard_size, a.shards);
    std::cout << "wrote " << files.size() << " shard file(s) to " << a.shards << "\n";
  }
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string manifest, out, resume;
  nbr::ModelConfig model{8, 32, 3, 1, nbr::kAttributeChannels};
  nbr::TrainConfig cfg;
};

void run_train(TrainArgs a, std::uint64_t seed) {
  const nbr::Dataset data(nbr::load_manifest(a.manifest));
  a.cfg.seed = seed;
  nbr::ModelCheckpoint model;
  if (!a.resume.empty()) {
    model = nbr::load_checkpoint(a.resume);
    std::cout << "resuming " << a.resume << " after epoch " << model.provenance.epochs_completed
              << "\n";
  } else {
    a.model.image_channels = data.manifest().color ? 3 : 1;
    model = nbr::build_model(a.model, seed);
  }
  auto result = nbr::train(std::move(model), data, a.cfg);
  nbr::save_checkpoint(result.model, a.out);
  std::cout << "wrote " << a.out << " (" << result.log.epochs.size() << " epoch(s) run, "
            << result.model.provenance.epochs_completed << " completed, id "
            << nbr::checkpoint_id(result.model) << ")\n";
  if (!result.log.epochs.empty()) {
    const auto& last = result.log.epochs.back();
    std::cout << fmt::format("final validation PSNR {:.2f} dB (degraded input {:.2f} dB)\n",
                             last.val_psnr, last.val_input_psnr);
  }
}

// ---- restore ----------------------------------------------------------------

struct RestoreArgs {
  std::string input, checkpoint, output, reference, residual, attr_map;
  std::optional<std::string> noise_sigma;
  std::optional<double> scale_factor, jpeg_quality, noise_attr, scale_attr, jpeg_attr;
};

nbr::AttributeVector scalar_attributes(const RestoreArgs& a) {
  if (a.noise_sigma && a.noise_attr) throw UsageError("give --noise-sigma or --noise-attr, not both");
  if (a.scale_factor && a.scale_attr) throw UsageError("give --scale-factor or --scale-attr, not both");
  if (a.jpeg_quality && a.jpeg_attr) throw UsageError("give --jpeg-quality or --jpeg-attr, not both");
  nbr::AttributeVector v;
  if (a.noise_sigma) {
    try {
      v.noise = nbr::encode_noise(nbr::parse_rational(*a.noise_sigma));
    } catch (const nbr::ParseError& e) {
      throw UsageError(std::string("--noise-sigma: ") + e.what());
    }
  }
  if (a.scale_factor) v.scale = nbr::encode_scale(*a.scale_factor);
  if (a.jpeg_quality) v.jpeg = nbr::encode_jpeg(*a.jpeg_quality);
  if (a.noise_attr) v.noise = *a.noise_attr;
  if (a.scale_attr) v.scale = *a.scale_attr;
  if (a.jpeg_attr) v.jpeg = *a.jpeg_attr;
  return v;
}

void run_restore(const RestoreArgs& a) {
  const bool scalar = a.noise_sigma || a.scale_factor || a.jpeg_quality || a.noise_attr ||
                      a.scale_attr || a.jpeg_attr;
  const bool map = !a.attr_map.empty();
  if (scalar == map)
    throw UsageError("give exactly one attribute source: scalar attribute flags or --attr-map");
  const auto model = nbr::load_checkpoint(a.checkpoint);
  nbr::Image img = nbr::read_image(a.input);
  if (model.config.image_channels == 1) img = nbr::to_luma(img);
  nbr::AttributeMap attrs;
  if (map) {
    attrs = nbr::load_attribute_map(a.attr_map);
  } else {
    const auto v = scalar_attributes(a);
    std::cout << fmt::format("attributes (noise, scale, jpeg) = ({}, {}, {})\n", v.noise, v.scale,
                             v.jpeg);
    attrs = nbr::constant_map(v, img.height(), img.width());
  }
  const auto result = nbr::forward(model, img, attrs);
  nbr::write_image(a.output, result.restored);
  std::cout << "wrote " << a.output << "\n";
  if (!a.residual.empty()) {
    nbr::Image vis(img.height(), img.width(), img.channels());
    for (std::size_t k = 0; k < vis.size(); ++k) vis.pixels()[k] = result.residual[k] * 0.5f + 0.5f;
    nbr::clip_unit(vis);
    nbr::write_image(a.residual, vis);
  }
  if (!a.reference.empty()) {
    nbr::Image ref = nbr::read_image(a.reference);
    if (model.config.image_channels == 1) ref = nbr::to_luma(ref);
    const auto in = nbr::measure(ref, img);
    const auto out = nbr::measure(ref, result.restored);
    std::cout << fmt::format("input    PSNR {:.4f} dB  SSIM {:.4f}\n", in.psnr_db, in.ssim)
              << fmt::format("restored PSNR {:.4f} dB  SSIM {:.4f}\n", out.psnr_db, out.ssim);
  }
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string checkpoint, out = "report", data_root, dataset = "local", dataset_path, policy;
  std::vector<std::string> suite_files, builtins;
};

int run_evaluate(const EvaluateArgs& a, std::uint64_t seed, bool seed_given) {
  std::vector<nbr::SuiteDefinition> suites;
  for (const auto& f : a.suite_files) {
    auto loaded = nbr::load_suite_file(f);
    suites.insert(suites.end(), loaded.begin(), loaded.end());
  }
  for (const auto& name : a.builtins)
    suites.push_back(nbr::builtin_suite(name, a.dataset, a.dataset_path));
  if (suites.empty()) throw UsageError("evaluate needs at least one suite file or --builtin");
  for (auto& s : suites) {
    if (seed_given) s.seed = seed;
    if (!a.policy.empty()) {
      if (a.policy == "zeros") {
        s.policy = nbr::AttributePolicy::zeros;
      } else if (a.policy == "true") {
        s.policy = nbr::AttributePolicy::true_params;
      } else {
        throw UsageError("--policy accepts true or zeros");
      }
      s.name += "[" + a.policy + "]";
    }
  }
  const auto model = nbr::load_checkpoint(a.checkpoint);
  const fs::path root = a.data_root.empty() ? nbr::default_data_root() : fs::path(a.data_root);
  std::vector<nbr::EvalReport> reports;
  for (const auto& s : suites) reports.push_back(nbr::run_suite(model, s, root));
  const auto files = nbr::emit_report(reports, a.out);
  std::cout << nbr::render_table(reports);
  for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
  const auto failed = nbr::regressions(reports);
  for (const auto& r : failed) std::cerr << "regression: " << r << "\n";
  return failed.empty() ? 0 : kExitRegression;
}

// ---- sweep ------------------------------------------------------------------

struct SweepArgs {
  std::string input, checkpoint, channel = "noise", out_dir = "sweep", reference;
  std::vector<double> values{0.0, 0.25, 0.5, 0.75, 1.0};
};

void run_sweep(const SweepArgs& a) {
  const auto channel = channel_index(a.channel);
  if (!channel) throw UsageError("--channel accepts noise, scale or jpeg");
  const auto model = nbr::load_checkpoint(a.checkpoint);
  nbr::Image img = nbr::read_image(a.input);
  if (model.config.image_channels == 1) img = nbr::to_luma(img);
  std::optional<nbr::Image> ref;
  if (!a.reference.empty()) {
    ref = nbr::read_image(a.reference);
    if (model.config.image_channels == 1) ref = nbr::to_luma(*ref);
  }
  const auto points = nbr::attribute_sweep(model, img, *channel, a.values, ref ? &*ref : nullptr);
  fs::create_directories(a.out_dir);
  json index = {{"input", a.input},
                {"checkpoint_id", nbr::checkpoint_id(model)},
                {"channel", a.channel},
                {"metrics_against", ref ? "reference" : "input"},
                {"points", json::array()}};
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    const std::string name = fmt::format("{}-{:02d}.png", a.channel, i);
    nbr::write_image(fs::path(a.out_dir) / name, p.restored);
    index["points"].push_back({{"value", p.value},
                               {"file", name},
                               {"psnr", std::isinf(p.metrics.psnr_db) ? json("inf")
                                                                      : json(p.metrics.psnr_db)},
                               {"ssim", p.metrics.ssim},
                               {"total_variation", p.total_variation}});
    std::cout << fmt::format("{} = {:.3f}: PSNR {:.2f} dB, SSIM {:.4f}, TV {:.1f} -> {}\n",
                             a.channel, p.value, p.metrics.psnr_db, p.metrics.ssim,
                             p.total_variation, name);
  }
  write_text(fs::path(a.out_dir) / "index.json", index.dump(2) + "\n");
}

// ---- serve ------------------------------------------------------------------

void run_serve(const nbr::ServiceOptions& opt) {
  nbr::Service service(opt);
  service.load_initial();
  service.run();
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("nbr");
  spdlog::set_default_logger(logger);

  CLI::App app{"Non-blind CNN image restoration toolkit"};
  app.set_version_flag("--version", nbr::kToolkitVersion);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file of flag values; command-line flags take precedence");
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 0;
  bool verbose = false;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every random choice")->capture_default_str();
  app.add_flag("--verbose,-v", verbose, "Debug logging");

  DegradeArgs degrade;
  auto* c_degrade = app.add_subcommand("degrade", "Apply a degradation chain to an image");
  c_degrade->add_option("-i,--input", degrade.input, "Clean image")->required()->check(CLI::ExistingFile);
  c_degrade->add_option("-c,--chain", degrade.chain, "Chain, e.g. awgn:50/255|jpeg:30")->required();
  c_degrade->add_option("-o,--output", degrade.output, "Degraded image (.png/.jpg)")->required();

  DatasetArgs ds;
  auto* c_dataset = app.add_subcommand("make-dataset", "Ingest a corpus and write a manifest");
  c_dataset->add_option("--corpus", ds.corpus, "Folder of clean images")->required()->check(CLI::ExistingDirectory);
  c_dataset->add_option("-o,--out", ds.out, "Manifest path")->required();
  c_dataset->add_option("--split-ratio", ds.split_ratio, "Fraction of sources in the train split")->capture_default_str();
  c_dataset->add_option("--samples", ds.samples, "Declared sample count")->capture_default_str();
  c_dataset->add_option("--patch-size", ds.patch_size, "Square patch side")->capture_default_str();
  c_dataset->add_option("--kinds", ds.kinds, "Degradation kinds to draw from")->capture_default_str();
  c_dataset->add_flag("--color", ds.color, "Keep RGB instead of BT.601 luminance");
  c_dataset->add_option("--shards", ds.shards, "Also write samples into this shard directory");
  c_dataset->add_option("--shard-size", ds.shard_size, "Samples per shard")->capture_default_str();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Two-stage training");
  // Existence is checked when training starts: a config file names the manifest
  // that its own make-dataset section has yet to write.
  c_train->add_option("--manifest", tr.manifest, "Dataset manifest")->required();
  c_train->add_option("-o,--out", tr.out, "Final checkpoint path")->required();
  c_train->add_option("--resume", tr.resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  c_train->add_option("--layers", tr.model.layers, "Convolution layers")->capture_default_str();
  c_train->add_option("--features", tr.model.features, "Feature maps per hidden layer")->capture_default_str();
  c_train->add_option("--kernel", tr.model.kernel, "Kernel side")->capture_default_str();
  c_train->add_option("--stage1-epochs", tr.cfg.stage1_epochs)->capture_default_str();
  c_train->add_option("--stage2-epochs", tr.cfg.stage2_epochs)->capture_default_str();
  c_train->add_option("--samples-per-epoch", tr.cfg.samples_per_epoch)->capture_default_str();
  c_train->add_option("--batch-size", tr.cfg.batch_size)->capture_default_str();
  c_train->add_option("--learning-rate", tr.cfg.learning_rate)->capture_default_str();
  c_train->add_option("--beta1", tr.cfg.beta1)->capture_default_str();
  c_train->add_option("--beta2", tr.cfg.beta2)->capture_default_str();
  c_train->add_option("--epsilon", tr.cfg.epsilon)->capture_default_str();
  c_train->add_option("--lr-decay-at", tr.cfg.lr_decay_at, "Fractions of stage 2")->capture_default_str();
  c_train->add_option("--lr-decay-factor", tr.cfg.lr_decay_factor)->capture_default_str();
  c_train->add_option("--stage1-layers", tr.cfg.stage1_layers, "1-based layers trained in stage 1")->capture_default_str();
  c_train->add_option("--checkpoint-every", tr.cfg.checkpoint_every, "Epochs between checkpoints, 0 = off")->capture_default_str();
  c_train->add_option("--checkpoint-dir", tr.cfg.checkpoint_dir);
  c_train->add_option("--threads", tr.cfg.threads)->capture_default_str();
  c_train->add_option("--validation-images", tr.cfg.validation_images)->capture_default_str();
  c_train->add_option("--log", tr.cfg.log_path, "JSON-lines training log");

  RestoreArgs rs;
  auto* c_restore = app.add_subcommand("restore", "Restore one image");
  c_restore->add_option("-i,--input", rs.input, "Degraded image")->required()->check(CLI::ExistingFile);
  c_restore->add_option("--checkpoint", rs.checkpoint)->required()->check(CLI::ExistingFile);
  c_restore->add_option("-o,--output", rs.output, "Restored image")->required();
  c_restore->add_option("--noise-sigma", rs.noise_sigma, "AWGN sigma, e.g. 50/255 or 0.196");
  c_restore->add_option("--scale-factor", rs.scale_factor, "Scale factor 1..4");
  c_restore->add_option("--jpeg-quality", rs.jpeg_quality, "JPEG quality 0..100");
  c_restore->add_option("--noise-attr", rs.noise_attr, "Encoded noise attribute")->check(CLI::Range(0.0, 1.0));
  c_restore->add_option("--scale-attr", rs.scale_attr, "Encoded scale attribute")->check(CLI::Range(0.0, 1.0));
  c_restore->add_option("--jpeg-attr", rs.jpeg_attr, "Encoded JPEG attribute")->check(CLI::Range(0.0, 1.0));
  c_restore->add_option("--attr-map", rs.attr_map, "Saved attribute map (16-bit PNG + sidecar)")->check(CLI::ExistingFile);
  c_restore->add_option("--reference", rs.reference, "Clean image; prints PSNR/SSIM")->check(CLI::ExistingFile);
  c_restore->add_option("--residual", rs.residual, "Write the residual (0.5 = zero)");

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Run benchmark suites");
  c_eval->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
  c_eval->add_option("suites", ev.suite_files, "Suite files")->check(CLI::ExistingFile);
  c_eval->add_option("--builtin", ev.builtins, "Built-in suite names");
  c_eval->add_option("--dataset", ev.dataset, "Dataset id for --builtin suites")->capture_default_str();
  c_eval->add_option("--dataset-path", ev.dataset_path, "Local folder for --builtin suites");
  c_eval->add_option("--data-root", ev.data_root, "Benchmark root (default NBR_DATA_ROOT or data/benchmarks)");
  c_eval->add_option("--policy", ev.policy, "Override every suite's attribute policy: true or zeros");
  c_eval->add_option("-o,--out", ev.out, "Report prefix (.json and .txt)")->capture_default_str();

  SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep", "Restore with a range of constant attribute values");
  c_sweep->add_option("-i,--input", sw.input)->required()->check(CLI::ExistingFile);
  c_sweep->add_option("--checkpoint", sw.checkpoint)->required()->check(CLI::ExistingFile);
  c_sweep->add_option("--channel", sw.channel, "noise, scale or jpeg")->capture_default_str();
  c_sweep->add_option("--values", sw.values, "Attribute values in [0,1]")->capture_default_str();
  c_sweep->add_option("--reference", sw.reference)->check(CLI::ExistingFile);
  c_sweep->add_option("-o,--out-dir", sw.out_dir)->capture_default_str();

  nbr::ServiceOptions so;
  std::string serve_checkpoint;
  auto* c_serve = app.add_subcommand("serve", "HTTP inference service under /v1/");
  c_serve->add_option("--checkpoint", serve_checkpoint)->check(CLI::ExistingFile);
  c_serve->add_option("--host", so.host)->capture_default_str();
  c_serve->add_option("--port", so.port)->capture_default_str();
  c_serve->add_option("--max-pixels", so.max_pixels)->capture_default_str();
  c_serve->add_option("--workers", so.workers)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  print_banner(app);

  try {
    if (c_degrade->parsed()) run_degrade(degrade, seed);
    else if (c_dataset->parsed()) run_make_dataset(ds, seed);
    else if (c_train->parsed()) run_train(tr, seed);
    else if (c_restore->parsed()) run_restore(rs);
    else if (c_eval->parsed()) return run_evaluate(ev, seed, seed_opt->count() > 0);
    else if (c_sweep->parsed()) run_sweep(sw);
    else if (c_serve->parsed()) {
      so.checkpoint = serve_checkpoint;
      run_serve(so);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
