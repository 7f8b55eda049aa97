#include "nbr/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "nbr/error.hpp"
#include "nbr/metrics.hpp"
#include "nbr/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace nbr {

namespace {

constexpr int kValidationCrop = 128;
constexpr double kValidationSigma = 25.0 / 255.0;
constexpr int kValidationScale = 3;
constexpr int kValidationQuality = 20;

json config_json(const TrainConfig& c) {
  return {
      {"stage1_epochs", c.stage1_epochs},
      {"stage2_epochs", c.stage2_epochs},
      {"samples_per_epoch", c.samples_per_epoch},
      {"batch_size", c.batch_size},
      {"learning_rate", c.learning_rate},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"epsilon", c.epsilon},
      {"lr_decay_at", c.lr_decay_at},
      {"lr_decay_factor", c.lr_decay_factor},
      {"stage1_layers", c.stage1_layers},
      {"seed", c.seed},
      {"checkpoint_every", c.checkpoint_every},
      {"checkpoint_dir", c.checkpoint_dir},
      {"threads", c.threads},
      {"validation_images", c.validation_images},
      {"log_path", c.log_path},
  };
}

void append_line(const std::string& path, const json& j) {
  if (path.empty()) return;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::app);
  if (!out) throw IoError("cannot append to training log " + path);
  out << j.dump() << '\n';
}

// Adam moments sized for `net`, zeroed.
OptimizerState fresh_optimizer(const Network<float>& net) {
  OptimizerState s;
  for (const auto& l : net.layers()) {
    OptimizerState::Layer o;
    o.m_w.assign(l.weights.size(), 0.0f);
    o.v_w.assign(l.weights.size(), 0.0f);
    o.m_b.assign(l.bias.size(), 0.0f);
    o.v_b.assign(l.bias.size(), 0.0f);
    s.layers.push_back(std::move(o));
  }
  return s;
}

void adam_update(std::vector<float>& param, const std::vector<float>& grad, std::vector<float>& m,
                 std::vector<float>& v, double lr_t, const TrainConfig& cfg) {
  const float b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
  const float eps = static_cast<float>(cfg.epsilon), step = static_cast<float>(lr_t);
  for (std::size_t k = 0; k < param.size(); ++k) {
    const float g = grad[k];
    m[k] = b1 * m[k] + (1.0f - b1) * g;
    v[k] = b2 * v[k] + (1.0f - b2) * g * g;
    param[k] -= step * m[k] / (std::sqrt(v[k]) + eps);
  }
}

struct ChunkResult {
  Gradients<float> grads;
  double loss_sum = 0.0;
};

// Forward/backward over samples [first, last) of the epoch stream.
void run_chunk(const Network<float>& net, const Dataset& data, std::uint64_t first,
               std::uint64_t last, double grad_scale, const std::vector<bool>& trainable,
               Workspace<float>& ws, ChunkResult& out) {
  for (std::uint64_t idx = first; idx < last; ++idx) {
    const TrainingSample s = draw_sample(data, idx);
    const int h = s.input.height(), w = s.input.width();
    const AttributeMap attrs = constant_map(s.attribute, h, w);
    const std::vector<float> input = assemble_input(s.input, attrs);
    const std::vector<float> residual = net.forward(input, h, w, ws, true);
    std::vector<float> grad(residual.size());
    double sq = 0.0;
    const auto& in_px = s.input.pixels();
    const auto& tgt = s.target.pixels();
    for (std::size_t k = 0; k < residual.size(); ++k) {
      const double diff = static_cast<double>(in_px[k]) + residual[k] - tgt[k];
      sq += diff * diff;
      grad[k] = static_cast<float>(2.0 * diff * grad_scale / static_cast<double>(residual.size()));
    }
    out.loss_sum += sq / static_cast<double>(residual.size());
    net.backward(grad, h, w, ws, out.grads, trainable);
  }
}

}  // namespace

void TrainConfig::validate(const ModelConfig& model) const {
  if (stage1_epochs < 0 || stage2_epochs < 0) throw InvalidParameter("epoch counts must be >= 0");
  if (batch_size < 1) throw InvalidParameter("batch size must be >= 1");
  if (samples_per_epoch < 1) throw InvalidParameter("samples per epoch must be >= 1");
  if (threads < 1) throw InvalidParameter("threads must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidParameter("learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw InvalidParameter("Adam moment decays must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw InvalidParameter("Adam epsilon must be > 0");
  if (!(lr_decay_factor > 0.0)) throw InvalidParameter("decay factor must be > 0");
  for (double f : lr_decay_at)
    if (!(f >= 0.0 && f <= 1.0)) throw InvalidParameter("decay points are fractions in [0, 1]");
  if (validation_images < 0) throw InvalidParameter("validation image count must be >= 0");
  if (checkpoint_every < 0) throw InvalidParameter("checkpoint cadence must be >= 0");
  if (checkpoint_every > 0 && checkpoint_dir.empty())
    throw InvalidParameter("checkpoint cadence set without a checkpoint directory");
  if (stage1_epochs > 0) {
    bool any = false;
    for (int l : stage1_layers) {
      if (l < 1 || l > model.layers)
        throw InvalidParameter("stage-1 layer " + std::to_string(l) + " outside 1.." +
                               std::to_string(model.layers));
      any = true;
    }
    if (!any) throw InvalidParameter("stage-1 trainable layer set is empty");
  }
}

std::string train_config_to_text(const TrainConfig& cfg) { return config_json(cfg).dump(2) + "\n"; }

TrainConfig train_config_from_text(const std::string& text) {
  const auto j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw FormatError("training config is not a JSON object");
  TrainConfig c;
  const json defaults = config_json(c);
  for (const auto& [key, _] : j.items())
    if (!defaults.contains(key)) throw FormatError("unknown training config field '" + key + "'");
  try {
    c.stage1_epochs = j.value("stage1_epochs", c.stage1_epochs);
    c.stage2_epochs = j.value("stage2_epochs", c.stage2_epochs);
    c.samples_per_epoch = j.value("samples_per_epoch", c.samples_per_epoch);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.lr_decay_at = j.value("lr_decay_at", c.lr_decay_at);
    c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
    c.stage1_layers = j.value("stage1_layers", c.stage1_layers);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.checkpoint_dir = j.value("checkpoint_dir", c.checkpoint_dir);
    c.threads = j.value("threads", c.threads);
    c.validation_images = j.value("validation_images", c.validation_images);
    c.log_path = j.value("log_path", c.log_path);
  } catch (const json::exception& e) {
    throw FormatError(std::string("training config: ") + e.what());
  }
  return c;
}

std::string epoch_record_to_text(const EpochRecord& r) {
  return json{{"type", "epoch"},
              {"epoch", r.epoch},
              {"stage", r.stage},
              {"train_loss", r.train_loss},
              {"val_psnr", r.val_psnr},
              {"val_input_psnr", r.val_input_psnr},
              {"wall_seconds", r.wall_seconds},
              {"learning_rate", r.learning_rate}}
      .dump();
}

double loss(std::span<const float> pred, const Image& target) {
  if (pred.size() != target.size())
    throw ShapeMismatch("prediction has " + std::to_string(pred.size()) + " values, target " +
                        target.shape_string() + " has " + std::to_string(target.size()));
  if (pred.empty()) throw InvalidParameter("loss of an empty prediction");
  double sum = 0.0;
  const auto& t = target.pixels();
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double d = static_cast<double>(pred[k]) - t[k];
    sum += d * d;
  }
  return sum / static_cast<double>(pred.size());
}

double learning_rate_at(const TrainConfig& cfg, int epoch) {
  if (epoch < cfg.stage1_epochs) return cfg.learning_rate;
  const int j = epoch - cfg.stage1_epochs;
  double lr = cfg.learning_rate;
  for (double f : cfg.lr_decay_at)
    if (j >= f * cfg.stage2_epochs) lr *= cfg.lr_decay_factor;
  return lr;
}

std::vector<ValidationItem> make_validation_set(const Dataset& data, int count,
                                                std::uint64_t seed) {
  std::vector<ValidationItem> out;
  if (count <= 0) return out;
  const auto& m = data.manifest();
  const auto* pool = &data.split_indices("val");
  if (pool->empty()) pool = &data.split_indices("train");
  if (pool->empty()) throw InvalidParameter("dataset has no sources for validation");
  for (int i = 0; i < count; ++i) {
    const std::uint32_t src_index = (*pool)[static_cast<std::size_t>(i) % pool->size()];
    const Image& src = data.source(src_index);
    SplitMix64 rng(derive_key(seed, "val", static_cast<std::uint64_t>(i)));
    const int h = std::min(kValidationCrop, src.height());
    const int w = std::min(kValidationCrop, src.width());
    const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(src.height() - h + 1)));
    const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(src.width() - w + 1)));
    ValidationItem item;
    item.name = m.sources[src_index].path + "#" + std::to_string(i);
    item.clean = crop(src, y, x, h, w);
    const DegradationKind kind = m.kinds[static_cast<std::size_t>(i) % m.kinds.size()];
    DegradationSpec spec{kind, 0.0, rng.next()};
    switch (kind) {
      case DegradationKind::awgn: spec.param = kValidationSigma; break;
      case DegradationKind::scale: spec.param = kValidationScale; break;
      case DegradationKind::jpeg: spec.param = kValidationQuality; break;
      default: throw InvalidParameter("validation set supports awgn, scale and jpeg only");
    }
    item.degraded = apply(item.clean, spec);
    item.attribute = from_spec(spec);
    out.push_back(std::move(item));
  }
  return out;
}

ValidationScore score_validation(const ModelCheckpoint& model,
                                 const std::vector<ValidationItem>& items) {
  ValidationScore s;
  if (items.empty()) return s;
  for (const auto& it : items) {
    const auto attrs = constant_map(it.attribute, it.degraded.height(), it.degraded.width());
    s.psnr += psnr(it.clean, forward(model, it.degraded, attrs).restored);
    s.input_psnr += psnr(it.clean, it.degraded);
  }
  s.psnr /= static_cast<double>(items.size());
  s.input_psnr /= static_cast<double>(items.size());
  return s;
}

std::vector<EvalReport> validate(const ModelCheckpoint& model, const Dataset& data,
                                 const std::vector<SuiteDefinition>& suites) {
  std::vector<NamedImage> images;
  for (auto idx : data.split_indices("val"))
    images.push_back({data.manifest().sources[idx].path, to_luma(data.source(idx))});
  if (images.empty()) throw InvalidParameter("dataset has no val-split sources");
  std::vector<EvalReport> out;
  for (const auto& s : suites) out.push_back(run_suite_on_images(model, s, images));
  return out;
}

TrainResult train(ModelCheckpoint model, const Dataset& data, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate(model.config);
  const auto& manifest = data.manifest();
  if (manifest.patch_size < model.config.kernel)
    throw InvalidParameter("patch size " + std::to_string(manifest.patch_size) +
                           " is smaller than the kernel");
  const int data_channels = manifest.color ? 3 : 1;
  if (data_channels != model.config.image_channels)
    throw ShapeMismatch("dataset yields " + std::to_string(data_channels) +
                        "-channel images, model expects " +
                        std::to_string(model.config.image_channels));

  TrainResult result;
  const int total_epochs = cfg.stage1_epochs + cfg.stage2_epochs;
  const int start = model.provenance.epochs_completed;
  if (start >= total_epochs) {
    result.model = std::move(model);
    return result;
  }

  const std::size_t n_layers = model.network.layers().size();
  if (!model.optimizer || model.optimizer->layers.size() != n_layers)
    model.optimizer = fresh_optimizer(model.network);
  const auto val_set = make_validation_set(data, cfg.validation_images, cfg.seed);
  const std::string manifest_hash = manifest.hash();

  append_line(cfg.log_path, {{"type", "run"},
                             {"start_epoch", start},
                             {"total_epochs", total_epochs},
                             {"model_seed", model.provenance.seed},
                             {"layers", model.config.layers},
                             {"features", model.config.features},
                             {"manifest_hash", manifest_hash},
                             {"config", config_json(cfg)}});

  std::vector<bool> stage1_mask(n_layers, false);
  for (int l : cfg.stage1_layers) stage1_mask[static_cast<std::size_t>(l - 1)] = true;
  const std::vector<bool> all_mask(n_layers, true);

  std::vector<Workspace<float>> workspaces(static_cast<std::size_t>(cfg.threads));
  std::vector<ChunkResult> chunks(static_cast<std::size_t>(cfg.threads));
  std::string last_good = "none";

  for (int epoch = start; epoch < total_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const int stage = epoch < cfg.stage1_epochs ? 1 : 2;
    const auto& trainable = stage == 1 ? stage1_mask : all_mask;
    const double lr = learning_rate_at(cfg, epoch);
    const std::uint64_t epoch_first = static_cast<std::uint64_t>(epoch) * cfg.samples_per_epoch;
    double epoch_loss = 0.0;
    std::uint64_t batches = 0;

    for (std::uint64_t b0 = 0; b0 < cfg.samples_per_epoch; b0 += cfg.batch_size) {
      const std::uint64_t b1 = std::min<std::uint64_t>(cfg.samples_per_epoch, b0 + cfg.batch_size);
      const std::uint64_t batch = b1 - b0;
      const double grad_scale = 1.0 / static_cast<double>(batch);
      const std::uint64_t n_chunks = std::min<std::uint64_t>(batch, cfg.threads);
      auto chunk_range = [&](std::uint64_t c) {
        return std::pair{epoch_first + b0 + batch * c / n_chunks,
                         epoch_first + b0 + batch * (c + 1) / n_chunks};
      };
      for (std::uint64_t c = 0; c < n_chunks; ++c) {
        chunks[c].grads = model.network.zero_gradients();
        chunks[c].loss_sum = 0.0;
      }
      if (n_chunks == 1) {
        const auto [f, l] = chunk_range(0);
        run_chunk(model.network, data, f, l, grad_scale, trainable, workspaces[0], chunks[0]);
      } else {
        std::vector<std::exception_ptr> errors(n_chunks);
        std::vector<std::thread> pool;
        for (std::uint64_t c = 0; c < n_chunks; ++c)
          pool.emplace_back([&, c] {
            try {
              const auto [f, l] = chunk_range(c);
              run_chunk(model.network, data, f, l, grad_scale, trainable, workspaces[c], chunks[c]);
            } catch (...) {
              errors[c] = std::current_exception();
            }
          });
        for (auto& t : pool) t.join();
        for (auto& e : errors)
          if (e) std::rethrow_exception(e);
      }
      // Fixed-order reduction into chunk 0.
      double batch_loss = chunks[0].loss_sum;
      for (std::uint64_t c = 1; c < n_chunks; ++c) {
        batch_loss += chunks[c].loss_sum;
        for (std::size_t li = 0; li < n_layers; ++li) {
          if (!trainable[li]) continue;
          auto& dst = chunks[0].grads[li];
          const auto& src = chunks[c].grads[li];
          for (std::size_t k = 0; k < dst.weights.size(); ++k) dst.weights[k] += src.weights[k];
          for (std::size_t k = 0; k < dst.bias.size(); ++k) dst.bias[k] += src.bias[k];
        }
      }
      batch_loss /= static_cast<double>(batch);
      if (!std::isfinite(batch_loss))
        throw TrainingDiverged(fmt::format(
            "non-finite loss in epoch {} at sample {}; last good checkpoint: {}", epoch + 1,
            epoch_first + b0, last_good));

      auto& layers = model.network.layers();
      for (std::size_t li = 0; li < n_layers; ++li) {
        if (!trainable[li]) continue;
        auto& st = model.optimizer->layers[li];
        ++st.step;
        const double t = static_cast<double>(st.step);
        const double lr_t =
            lr * std::sqrt(1.0 - std::pow(cfg.beta2, t)) / (1.0 - std::pow(cfg.beta1, t));
        adam_update(layers[li].weights, chunks[0].grads[li].weights, st.m_w, st.v_w, lr_t, cfg);
        adam_update(layers[li].bias, chunks[0].grads[li].bias, st.m_b, st.v_b, lr_t, cfg);
      }
      epoch_loss += batch_loss;
      ++batches;
    }

    model.provenance.epochs_completed = epoch + 1;
    model.provenance.stage = stage == 1 ? "stage1" : "stage2";
    model.provenance.manifest_hash = manifest_hash;
    model.provenance.notes = fmt::format(
        "adam lr={} betas=({}, {}) eps={} batch={} decay x{} at {} of stage 2; "
        "stage-1 layers {}; samples/epoch={}",
        cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon, cfg.batch_size, cfg.lr_decay_factor,
        fmt::join(cfg.lr_decay_at, ","), fmt::join(cfg.stage1_layers, ","), cfg.samples_per_epoch);

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.stage = stage;
    rec.train_loss = epoch_loss / static_cast<double>(batches);
    const auto score = score_validation(model, val_set);
    rec.val_psnr = score.psnr;
    rec.val_input_psnr = score.input_psnr;
    rec.learning_rate = lr;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    spdlog::info("epoch {}/{} stage {} loss {:.6g} val {:.2f} dB (input {:.2f} dB) lr {:g} {:.1f}s",
                 rec.epoch, total_epochs, stage, rec.train_loss, rec.val_psnr, rec.val_input_psnr,
                 lr, rec.wall_seconds);

    if (cfg.checkpoint_every > 0 &&
        (rec.epoch % cfg.checkpoint_every == 0 || rec.epoch == total_epochs)) {
      const fs::path dir(cfg.checkpoint_dir);
      fs::create_directories(dir);
      const fs::path path = dir / fmt::format("epoch-{:04d}.nbrm", rec.epoch);
      save_checkpoint(model, path);
      save_checkpoint(model, dir / "latest.nbrm");
      last_good = path.string();
    }
    append_line(cfg.log_path, json::parse(epoch_record_to_text(rec)));
    result.log.epochs.push_back(rec);
    if (hooks.on_epoch_end) hooks.on_epoch_end(rec, model);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace nbr
