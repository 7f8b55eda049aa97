#include <array>
#include <cstdio>
#include <fstream>
#include <sys/wait.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "nbr/attributes.hpp"
#include "nbr/codec.hpp"
#include "nbr/dataset.hpp"
#include "nbr/model.hpp"
#include "support.hpp"

using namespace nbr;
using nlohmann::json;
using nbr::testing::corpus_dir;
using nbr::testing::synthetic_scene;
using nbr::testing::TempDir;

namespace {

struct Run {
  int status = -1;
  std::string output;  // stdout and stderr interleaved
};

Run nbr_cli(const std::string& args) {
  const std::string cmd = std::string(NBR_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::filesystem::path tiny_checkpoint(const TempDir& dir) {
  ModelConfig c;
  c.layers = 3;
  c.features = 4;
  const auto path = dir / "tiny.nbrm";
  save_checkpoint(build_model(c, 5), path);
  return path;
}

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(nbr_cli("").status, 1);
  EXPECT_EQ(nbr_cli("frobnicate").status, 1);
  TempDir dir("cli-usage");
  write_image(dir / "in.png", synthetic_scene(16, 16));
  const auto bad = nbr_cli("degrade -i " + q(dir / "in.png") + " -c '' -o " + q(dir / "out.png"));
  EXPECT_EQ(bad.status, 1) << bad.output;
  const auto unknown = nbr_cli("degrade -i " + q(dir / "in.png") + " -c 'blur:3' -o " + q(dir / "out.png"));
  EXPECT_EQ(unknown.status, 1);
  EXPECT_NE(unknown.output.find("column 1"), std::string::npos) << unknown.output;
  const auto ckpt = tiny_checkpoint(dir);
  EXPECT_EQ(nbr_cli("evaluate --checkpoint " + q(ckpt)).status, 1);
  EXPECT_EQ(nbr_cli("restore -i " + q(dir / "in.png") + " --checkpoint " + q(ckpt) + " -o " +
                    q(dir / "r.png"))
                .status,
            1);
}

TEST(Cli, VersionPrints) {
  const auto r = nbr_cli("--version");
  EXPECT_EQ(r.status, 0);
  EXPECT_FALSE(r.output.empty());
}

TEST(Cli, DegradeWritesImageAndSidecar) {
  TempDir dir("cli-degrade");
  write_image(dir / "in.png", synthetic_scene(40, 30));
  const auto r = nbr_cli("--seed 9 degrade -i " + q(dir / "in.png") + " -c 'awgn:25/255|jpeg:30' -o " +
                         q(dir / "out.png"));
  ASSERT_EQ(r.status, 0) << r.output;
  const auto side = read_json(dir / "out.png.json");
  EXPECT_EQ(side["chain"], "awgn:25/255|jpeg:30");
  EXPECT_EQ(side["seed"], 9);
  EXPECT_EQ(side["steps"].size(), 2u);
  EXPECT_EQ(read_image(dir / "out.png").height(), 40);

  const auto again = nbr_cli("--seed 9 degrade -i " + q(dir / "in.png") + " -c 'awgn:25/255|jpeg:30' -o " +
                             q(dir / "again.png"));
  ASSERT_EQ(again.status, 0);
  EXPECT_EQ(read_image(dir / "out.png").pixels(), read_image(dir / "again.png").pixels());
}

TEST(Cli, ZeroNoiseIsIdentity) {
  TempDir dir("cli-ident");
  write_image(dir / "in.png", synthetic_scene(20, 20));
  ASSERT_EQ(nbr_cli("degrade -i " + q(dir / "in.png") + " -c awgn:0 -o " + q(dir / "out.png")).status, 0);
  EXPECT_EQ(read_image(dir / "out.png").pixels(), read_image(dir / "in.png").pixels());
}

TEST(Cli, RestoreMapMismatchNamesBothSizes) {
  TempDir dir("cli-map");
  write_image(dir / "in.png", synthetic_scene(20, 24));
  save_attribute_map(dir / "map.png", constant_map({0.5, 0, 0}, 21, 24));
  const auto ckpt = tiny_checkpoint(dir);
  const auto r = nbr_cli("restore -i " + q(dir / "in.png") + " --checkpoint " + q(ckpt) +
                         " --attr-map " + q(dir / "map.png") + " -o " + q(dir / "r.png"));
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.output.find("21x24"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("20x24"), std::string::npos) << r.output;
  EXPECT_FALSE(std::filesystem::exists(dir / "r.png"));
}

TEST(Cli, RestoreScalarWritesOutputs) {
  TempDir dir("cli-restore");
  write_image(dir / "in.png", synthetic_scene(20, 24));
  const auto ckpt = tiny_checkpoint(dir);
  const auto r = nbr_cli("restore -i " + q(dir / "in.png") + " --checkpoint " + q(ckpt) +
                         " --noise-sigma 25/255 --reference " + q(dir / "in.png") + " --residual " +
                         q(dir / "res.png") + " -o " + q(dir / "r.png"));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("restored PSNR"), std::string::npos);
  EXPECT_EQ(read_image(dir / "r.png").width(), 24);
  EXPECT_EQ(read_image(dir / "res.png").width(), 24);
}

TEST(Cli, SweepWritesIndex) {
  TempDir dir("cli-sweep");
  write_image(dir / "in.png", synthetic_scene(16, 16));
  const auto ckpt = tiny_checkpoint(dir);
  const auto r = nbr_cli("sweep -i " + q(dir / "in.png") + " --checkpoint " + q(ckpt) +
                         " --channel noise --values 0 0.5 1 -o " + q(dir / "sw"));
  ASSERT_EQ(r.status, 0) << r.output;
  const auto index = read_json(dir / "sw" / "index.json");
  ASSERT_EQ(index["points"].size(), 3u);
  for (const auto& p : index["points"])
    EXPECT_TRUE(std::filesystem::exists(dir / "sw" / p["file"].get<std::string>()));
  EXPECT_EQ(nbr_cli("sweep -i " + q(dir / "in.png") + " --checkpoint " + q(ckpt) +
                    " --channel blur -o " + q(dir / "sw2"))
                .status,
            1);
}

TEST(Cli, EvaluateLocalSuite) {
  TempDir dir("cli-eval");
  const auto ckpt = tiny_checkpoint(dir);
  const auto r = nbr_cli("evaluate --checkpoint " + q(ckpt) + " --builtin awgn25 --dataset local --dataset-path " +
                         q(corpus_dir("eval")) + " -o " + q(dir / "rep"));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(std::filesystem::exists(dir / "rep.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "rep.txt"));
  const auto missing = nbr_cli("evaluate --checkpoint " + q(ckpt) + " --builtin awgn25 --dataset BSD68 --data-root " +
                               q(dir / "nothing") + " -o " + q(dir / "rep2"));
  EXPECT_NE(missing.status, 0);
}

TEST(Cli, TrainAndResumeContinueNumbering) {
  TempDir dir("cli-train");
  const auto manifest = dir / "m.json";
  ASSERT_EQ(nbr_cli("--seed 2 make-dataset --corpus " + q(corpus_dir("train")) + " -o " + q(manifest) +
                    " --samples 32 --patch-size 20 --kinds awgn")
                .status,
            0);
  const std::string common = " --layers 3 --features 4 --samples-per-epoch 32 --batch-size 16 "
                             "--stage1-layers 1 2 --validation-images 2 --checkpoint-every 1 --checkpoint-dir " +
                             q(dir / "ck");
  const auto first = nbr_cli("--seed 2 train --manifest " + q(manifest) + " -o " + q(dir / "a.nbrm") +
                             " --stage1-epochs 1 --stage2-epochs 1" + common);
  ASSERT_EQ(first.status, 0) << first.output;
  EXPECT_EQ(load_checkpoint(dir / "a.nbrm").provenance.epochs_completed, 2);
  const auto resumed = nbr_cli("--seed 2 train --manifest " + q(manifest) + " -o " + q(dir / "b.nbrm") +
                               " --resume " + q(dir / "a.nbrm") + " --stage1-epochs 1 --stage2-epochs 2" + common);
  ASSERT_EQ(resumed.status, 0) << resumed.output;
  EXPECT_EQ(load_checkpoint(dir / "b.nbrm").provenance.epochs_completed, 3);
  EXPECT_TRUE(std::filesystem::exists(dir / "ck" / "epoch-0003.nbrm"));
}

TEST(Cli, ConfigFileSuppliesFlags) {
  TempDir dir("cli-config");
  write_image(dir / "in.png", synthetic_scene(16, 16));
  {
    std::ofstream cfg(dir / "cfg.json");
    cfg << json{{"seed", 11}, {"degrade", {{"chain", "awgn:10/255"}}}}.dump();
  }
  const auto r = nbr_cli("--config " + q(dir / "cfg.json") + " degrade -i " + q(dir / "in.png") + " -o " +
                         q(dir / "out.png"));
  ASSERT_EQ(r.status, 0) << r.output;
  const auto side = read_json(dir / "out.png.json");
  EXPECT_EQ(side["seed"], 11);
  EXPECT_EQ(side["chain"], "awgn:10/255");
}

TEST(Cli, ShippedConfigsDriveCommands) {
  TempDir dir("cli-shipped");
  const std::string in_source = "cd " + q(NBR_SOURCE_DIR) + " && ";
  for (const char* cfg : {"configs/desk.json", "configs/full_scale.json"}) {
    // Only the desk corpus ships; the full-scale one is replaced on the command line.
    const std::string cmd = in_source + NBR_CLI_PATH + " --config " + cfg +
                            " make-dataset --corpus data/corpus/train -o " + q(dir / "m.json") +
                            " --samples 16 > /dev/null 2>&1";
    ASSERT_EQ(std::system(cmd.c_str()), 0) << cfg;
    const auto m = load_manifest(dir / "m.json");
    EXPECT_EQ(m.sample_count, 16u);
    EXPECT_EQ(m.patch_size, 50);
  }
  const std::string train = in_source + NBR_CLI_PATH +
                            " --config configs/desk.json train --manifest " + q(dir / "m.json") + " -o " +
                            q(dir / "t.nbrm") + " --layers 3 --features 4 --stage1-epochs 1 --stage2-epochs 0"
                            " --samples-per-epoch 16 --batch-size 8 --stage1-layers 1 --validation-images 1"
                            " --checkpoint-dir " + q(dir / "ck") + " --log " + q(dir / "log.jsonl") +
                            " > /dev/null 2>&1";
  ASSERT_EQ(std::system(train.c_str()), 0);
  const auto model = load_checkpoint(dir / "t.nbrm");
  EXPECT_EQ(model.config.layers, 3);
  EXPECT_EQ(model.provenance.epochs_completed, 1);
}
