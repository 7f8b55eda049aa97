#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nbr/dataset.hpp"
#include "nbr/evaluation.hpp"
#include "nbr/image.hpp"
#include "nbr/model.hpp"

namespace nbr {

struct TrainConfig {
  int stage1_epochs = 10;
  int stage2_epochs = 80;
  std::uint64_t samples_per_epoch = kDeskSamplesPerEpoch;
  int batch_size = 64;
  // Adam.
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Fractions of stage 2 after which the step size is multiplied by
  // lr_decay_factor.
  std::vector<double> lr_decay_at{0.5, 0.75};
  double lr_decay_factor = 0.1;
  // 1-based layer indices updated during stage 1.
  std::vector<int> stage1_layers{1, 2, 3, 4, 5};
  // Seeds the validation set.
  std::uint64_t seed = 0;
  // Save every N epochs (and after the last); 0 disables checkpoints.
  int checkpoint_every = 0;
  std::string checkpoint_dir;
  // Workers per batch. Gradients are reduced in worker order, so results are
  // reproducible for a fixed value.
  int threads = 1;
  int validation_images = 8;
  // JSON lines appended per run and per epoch; empty disables.
  std::string log_path;

  void validate(const ModelConfig& model) const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

std::string train_config_to_text(const TrainConfig& cfg);
TrainConfig train_config_from_text(const std::string& text);

struct EpochRecord {
  int epoch = 0;  // 1-based, continues across resumes
  int stage = 1;
  double train_loss = 0.0;
  double val_psnr = 0.0;
  double val_input_psnr = 0.0;
  double wall_seconds = 0.0;
  double learning_rate = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

std::string epoch_record_to_text(const EpochRecord& r);

struct TrainHooks {
  std::function<void(const EpochRecord&, const ModelCheckpoint&)> on_epoch_end;
};

struct TrainResult {
  ModelCheckpoint model;
  TrainLog log;
};

// Mean of squared differences between a planar prediction and the target.
double loss(std::span<const float> pred, const Image& target);

// Step size in effect for a 0-based global epoch.
double learning_rate_at(const TrainConfig& cfg, int epoch);

// Runs the epochs after model.provenance.epochs_completed: stage 1 updates
// only cfg.stage1_layers, stage 2 updates every layer. Epoch e trains on
// samples [e * samples_per_epoch, (e + 1) * samples_per_epoch) of the
// dataset's stream. Throws TrainingDiverged on a non-finite loss.
TrainResult train(ModelCheckpoint model, const Dataset& data, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

struct ValidationItem {
  std::string name;
  Image clean;
  Image degraded;
  AttributeVector attribute;
};

// Fixed degraded crops (at most 128 x 128) from the val split, cycling
// through the manifest's kinds at sigma 25/255, scale 3 and JPEG quality 20.
std::vector<ValidationItem> make_validation_set(const Dataset& data, int count,
                                                std::uint64_t seed);

struct ValidationScore {
  double psnr = 0.0;
  double input_psnr = 0.0;
};

ValidationScore score_validation(const ModelCheckpoint& model,
                                 const std::vector<ValidationItem>& items);

// Runs each suite over the val-split sources of `data`.
std::vector<EvalReport> validate(const ModelCheckpoint& model, const Dataset& data,
                                 const std::vector<SuiteDefinition>& suites);

}  // namespace nbr
