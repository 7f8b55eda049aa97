#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "nbr/error.hpp"
#include "nbr/training.hpp"
#include "support.hpp"

using namespace nbr;
using nbr::testing::corpus_dir;
using nbr::testing::random_image;
using nbr::testing::TempDir;

namespace {

const Dataset& awgn_data() {
  static const Dataset data = [] {
    DatasetManifest m = ingest_corpus(corpus_dir("train"), 0.75, 4);
    m.kinds = {DegradationKind::awgn};
    m.patch_size = 24;
    return Dataset(m);
  }();
  return data;
}

ModelConfig tiny_model(int layers = 3) {
  ModelConfig c;
  c.layers = layers;
  c.features = 4;
  return c;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.stage1_epochs = 1;
  c.stage2_epochs = 1;
  c.samples_per_epoch = 48;
  c.batch_size = 16;
  c.stage1_layers = {1, 2};
  c.validation_images = 2;
  c.seed = 3;
  return c;
}

ModelCheckpoint zero_residual(ModelConfig c) {
  auto m = build_model(c, 1);
  auto& last = m.network.layers().back();
  std::fill(last.weights.begin(), last.weights.end(), 0.0f);
  std::fill(last.bias.begin(), last.bias.end(), 0.0f);
  return m;
}

}  // namespace

TEST(Loss, Examples) {
  const Image target = random_image(9, 11, 1);
  EXPECT_EQ(loss(target.pixels(), target), 0.0);
  Image offset = target;
  for (auto& v : offset.pixels()) v += 0.1f;
  EXPECT_NEAR(loss(offset.pixels(), target), 0.01, 1e-7);
}

// Independent two-pass formulation: squared differences stored first, then
// a compensated sum.
TEST(Loss, MatchesTwoPassOracle) {
  const Image target = random_image(40, 37, 2);
  const Image pred = random_image(40, 37, 3);
  std::vector<double> sq(pred.size());
  for (std::size_t i = 0; i < sq.size(); ++i) {
    const double d = static_cast<double>(pred.pixels()[i]) - static_cast<double>(target.pixels()[i]);
    sq[i] = d * d;
  }
  double sum = 0, comp = 0;
  for (double v : sq) {
    const double y = v - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  EXPECT_NEAR(loss(pred.pixels(), target), sum / static_cast<double>(sq.size()), 1e-12);
}

TEST(Loss, ShapeMismatchThrows) {
  std::vector<float> pred(10, 0.0f);
  EXPECT_THROW(loss(pred, Image(3, 3)), ShapeMismatch);
}

TEST(Config, TextRoundTripAndUnknownKeys) {
  TrainConfig c = tiny_config();
  c.lr_decay_at = {0.3};
  c.log_path = "x.jsonl";
  EXPECT_EQ(train_config_from_text(train_config_to_text(c)), c);
  EXPECT_THROW(train_config_from_text(R"({"stage1_epochs": 1, "momentum": 0.9})"), FormatError);
  EXPECT_THROW(train_config_from_text("[1,2]"), FormatError);
}

TEST(Config, Validation) {
  TrainConfig c = tiny_config();
  c.batch_size = 0;
  EXPECT_THROW(c.validate(tiny_model()), InvalidParameter);
  c = tiny_config();
  c.stage1_epochs = -1;
  EXPECT_THROW(c.validate(tiny_model()), InvalidParameter);
  c = tiny_config();
  c.stage1_layers = {};
  EXPECT_THROW(c.validate(tiny_model()), InvalidParameter);
  c = tiny_config();
  c.stage1_layers = {1, 2, 3, 4, 5};
  EXPECT_THROW(c.validate(tiny_model(4)), InvalidParameter);
  EXPECT_NO_THROW(c.validate(tiny_model(5)));
}

TEST(Schedule, DecaysWithinStageTwo) {
  TrainConfig c;
  c.stage1_epochs = 10;
  c.stage2_epochs = 80;
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 0), 1e-3);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 9), 1e-3);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 49), 1e-3);
  EXPECT_NEAR(learning_rate_at(c, 50), 1e-4, 1e-18);
  EXPECT_NEAR(learning_rate_at(c, 69), 1e-4, 1e-18);
  EXPECT_NEAR(learning_rate_at(c, 70), 1e-5, 1e-18);
}

TEST(Train, ZeroEpochsReturnsInputModel) {
  TrainConfig c = tiny_config();
  c.stage1_epochs = 0;
  c.stage2_epochs = 0;
  const auto m = build_model(tiny_model(), 2);
  const auto r = train(m, awgn_data(), c);
  EXPECT_EQ(r.model, m);
  EXPECT_TRUE(r.log.epochs.empty());
}

TEST(Train, StageOneFreezesUpperLayers) {
  TrainConfig c = tiny_config();
  c.stage1_epochs = 2;
  c.stage2_epochs = 0;
  c.stage1_layers = {1, 2, 3, 4, 5};
  const auto init = build_model(tiny_model(7), 5);
  const auto r = train(init, awgn_data(), c);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NE(r.model.network.layers()[i], init.network.layers()[i]) << i;
  for (std::size_t i = 5; i < 7; ++i) EXPECT_EQ(r.model.network.layers()[i], init.network.layers()[i]) << i;
  EXPECT_EQ(r.model.provenance.stage, "stage1");
}

TEST(Train, LogRecordsPerEpoch) {
  TempDir dir("train");
  TrainConfig c = tiny_config();
  c.log_path = (dir / "log.jsonl").string();
  int hook_calls = 0;
  const auto r = train(build_model(tiny_model(), 2), awgn_data(), c,
                       {[&](const EpochRecord&, const ModelCheckpoint&) { ++hook_calls; }});
  ASSERT_EQ(r.log.epochs.size(), 2u);
  EXPECT_EQ(hook_calls, 2);
  EXPECT_EQ(r.log.epochs[0].epoch, 1);
  EXPECT_EQ(r.log.epochs[0].stage, 1);
  EXPECT_EQ(r.log.epochs[1].epoch, 2);
  EXPECT_EQ(r.log.epochs[1].stage, 2);
  for (const auto& e : r.log.epochs) {
    EXPECT_TRUE(std::isfinite(e.train_loss));
    EXPECT_GT(e.val_input_psnr, 0.0);
  }
  std::ifstream in(c.log_path);
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 3);  // run header + two epochs
  EXPECT_EQ(r.model.provenance.epochs_completed, 2);
  EXPECT_EQ(r.model.provenance.manifest_hash, awgn_data().manifest().hash());
}

TEST(Train, Reproducible) {
  const auto m = build_model(tiny_model(), 2);
  const auto a = train(m, awgn_data(), tiny_config());
  const auto b = train(m, awgn_data(), tiny_config());
  EXPECT_EQ(a.model, b.model);
  ASSERT_EQ(a.log.epochs.size(), b.log.epochs.size());
  for (std::size_t i = 0; i < a.log.epochs.size(); ++i) EXPECT_EQ(a.log.epochs[i].train_loss, b.log.epochs[i].train_loss);
}

TEST(Train, ThreadedRunIsReproducible) {
  TrainConfig c = tiny_config();
  c.threads = 3;
  const auto m = build_model(tiny_model(), 2);
  const auto a = train(m, awgn_data(), c);
  const auto b = train(m, awgn_data(), c);
  EXPECT_EQ(a.model, b.model);
  const auto serial = train(m, awgn_data(), tiny_config());
  for (std::size_t i = 0; i < a.log.epochs.size(); ++i)
    EXPECT_NEAR(a.log.epochs[i].train_loss, serial.log.epochs[i].train_loss,
                1e-4 * serial.log.epochs[i].train_loss);
}

TEST(Train, ResumeContinuesBitIdentically) {
  TempDir dir("train");
  TrainConfig c = tiny_config();
  c.stage1_epochs = 2;
  c.stage2_epochs = 2;
  c.checkpoint_every = 1;
  c.checkpoint_dir = (dir / "ckpt").string();
  const auto init = build_model(tiny_model(), 2);
  const auto full = train(init, awgn_data(), c);
  ASSERT_TRUE(std::filesystem::exists(dir / "ckpt" / "epoch-0002.nbrm"));
  ASSERT_TRUE(std::filesystem::exists(dir / "ckpt" / "latest.nbrm"));
  const auto mid = load_checkpoint(dir / "ckpt" / "epoch-0002.nbrm");
  EXPECT_EQ(mid.provenance.epochs_completed, 2);
  c.checkpoint_dir = (dir / "resume").string();
  const auto resumed = train(mid, awgn_data(), c);
  EXPECT_EQ(resumed.model, full.model);
  ASSERT_EQ(resumed.log.epochs.size(), 2u);
  EXPECT_EQ(resumed.log.epochs[0].epoch, 3);
  EXPECT_EQ(resumed.log.epochs[0].train_loss, full.log.epochs[2].train_loss);
  EXPECT_EQ(resumed.log.epochs[1].train_loss, full.log.epochs[3].train_loss);
}

TEST(Train, DivergenceIsReported) {
  TrainConfig c = tiny_config();
  c.learning_rate = 1e30;
  c.stage1_epochs = 0;
  c.stage2_epochs = 3;
  EXPECT_THROW(train(build_model(tiny_model(), 2), awgn_data(), c), TrainingDiverged);
}

TEST(Train, LossDecreasesOnEasyProblem) {
  TrainConfig c = tiny_config();
  c.stage1_epochs = 0;
  c.stage2_epochs = 4;
  c.samples_per_epoch = 256;
  c.learning_rate = 3e-3;
  c.lr_decay_at = {};
  const auto r = train(build_model(tiny_model(4), 8), awgn_data(), c);
  EXPECT_LT(r.log.epochs.back().train_loss, r.log.epochs.front().train_loss);
}

TEST(ValidationSet, FixedAndCycled) {
  DatasetManifest m = awgn_data().manifest();
  m.kinds = {DegradationKind::awgn, DegradationKind::scale, DegradationKind::jpeg};
  const Dataset data(m);
  const auto a = make_validation_set(data, 6, 9);
  const auto b = make_validation_set(data, 6, 9);
  ASSERT_EQ(a.size(), 6u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].degraded, b[i].degraded);
    EXPECT_LE(a[i].clean.height(), 128);
    EXPECT_LE(a[i].clean.width(), 128);
  }
  EXPECT_NEAR(a[0].attribute.noise, encode_noise(25.0 / 255.0), 1e-12);
  EXPECT_NEAR(a[1].attribute.scale, encode_scale(3), 1e-12);
  EXPECT_NEAR(a[2].attribute.jpeg, encode_jpeg(20), 1e-12);
}

TEST(Validate, ZeroResidualReproducesInputPsnr) {
  const auto m = zero_residual(tiny_model());
  auto suite = builtin_suite("awgn25", "val");
  const auto reports = validate(m, awgn_data(), {suite});
  ASSERT_EQ(reports.size(), 1u);
  ASSERT_FALSE(reports[0].images.empty());
  for (const auto& img : reports[0].images) EXPECT_NEAR(img.psnr, img.input_psnr, 1e-9);
}

TEST(Validate, CleanInputsGiveInfinitePsnr) {
  const auto m = zero_residual(tiny_model());
  SuiteDefinition suite;
  suite.name = "clean";
  suite.dataset = "val";
  suite.chain = "awgn:0";
  suite.policy = AttributePolicy::zeros;
  const auto reports = validate(m, awgn_data(), {suite});
  for (const auto& img : reports[0].images) EXPECT_TRUE(std::isinf(img.psnr));
}

TEST(Validate, SuiteOrderDoesNotMatter) {
  const auto m = build_model(tiny_model(), 6);
  const auto a = builtin_suite("awgn25", "val");
  const auto b = builtin_suite("jpeg10", "val");
  const auto ab = validate(m, awgn_data(), {a, b});
  const auto ba = validate(m, awgn_data(), {b, a});
  EXPECT_EQ(ab[0].images, ba[1].images);
  EXPECT_EQ(ab[1].images, ba[0].images);
}
