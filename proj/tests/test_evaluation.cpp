#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "nbr/chain_dsl.hpp"
#include "nbr/codec.hpp"
#include "nbr/error.hpp"
#include "nbr/evaluation.hpp"
#include "support.hpp"

using namespace nbr;
using nbr::testing::corpus_dir;
using nbr::testing::synthetic_scene;
using nbr::testing::TempDir;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.layers = 3;
  c.features = 6;
  return c;
}

ModelCheckpoint zero_residual() {
  auto m = build_model(small_config(), 1);
  auto& last = m.network.layers().back();
  std::fill(last.weights.begin(), last.weights.end(), 0.0f);
  std::fill(last.bias.begin(), last.bias.end(), 0.0f);
  return m;
}

std::vector<NamedImage> three_images() {
  return {{"a", synthetic_scene(40, 48, 1)}, {"b", synthetic_scene(36, 36, 2)}, {"c", synthetic_scene(50, 30, 3)}};
}

std::filesystem::path suites_dir() { return std::filesystem::path(NBR_SOURCE_DIR) / "suites"; }

EvalReport without_timestamp(EvalReport r) {
  r.timestamp.clear();
  return r;
}

}  // namespace

TEST(TrueAttributes, CompositeRules) {
  const auto v = true_attributes(parse_chain("awgn:50/255|jpeg:30"));
  EXPECT_NEAR(v.noise, 50.0 / 55.0, 1e-12);
  EXPECT_EQ(v.scale, 0.0);
  EXPECT_NEAR(v.jpeg, 0.7, 1e-12);
  const auto two = true_attributes(parse_chain("awgn:30/255|awgn:40/255|jpeg:50|jpeg:20|scale:2|scale:3"));
  EXPECT_NEAR(two.noise, 50.0 / 55.0, 1e-12);
  EXPECT_NEAR(two.jpeg, 0.8, 1e-12);
  EXPECT_NEAR(two.scale, 2.0 / 3.0, 1e-12);
  EXPECT_EQ(true_attributes(parse_chain("salt_pepper:0.05|upscale_percent:1")), AttributeVector{});
}

TEST(Builtin, AwgnPlusJpeg) {
  const auto s = builtin_suite("awgn50+jpeg30", "Set5");
  const auto chain = s.resolved_chain();
  ASSERT_EQ(chain.steps.size(), 2u);
  EXPECT_EQ(chain.steps[0].kind, DegradationKind::awgn);
  EXPECT_EQ(chain.steps[0].param, 50.0 / 255.0);
  EXPECT_EQ(chain.steps[1].kind, DegradationKind::jpeg);
  EXPECT_EQ(chain.steps[1].param, 30.0);
  EXPECT_EQ(s.policy, AttributePolicy::true_params);
}

TEST(Builtin, SaltPepperAsGaussian) {
  const auto s = builtin_suite("snp05-as-gauss50", "Set5");
  const auto chain = s.resolved_chain();
  ASSERT_EQ(chain.steps.size(), 1u);
  EXPECT_EQ(chain.steps[0].kind, DegradationKind::salt_pepper);
  EXPECT_EQ(chain.steps[0].param, 0.05);
  EXPECT_EQ(s.policy, AttributePolicy::vector);
  EXPECT_NEAR(s.attributes.noise, 50.0 / 55.0, 1e-12);
  EXPECT_EQ(s.attributes.scale, 0.0);
  EXPECT_EQ(s.attributes.jpeg, 0.0);
}

TEST(Builtin, FamiliesAndUnknown) {
  EXPECT_EQ(builtin_suite("sr3", "Set14").border_crop, 3);
  EXPECT_EQ(builtin_suite("sr3", "Set14").chain, "scale:3");
  EXPECT_EQ(builtin_suite("awgn15", "BSD68").chain, "awgn:15/255");
  EXPECT_EQ(builtin_suite("jpeg10+up1", "LIVE1").chain, "jpeg:10|upscale_percent:1");
  EXPECT_EQ(builtin_suite("awgn50+up1", "LIVE1").size_rule, SizeRule::resize_back);
  EXPECT_THROW(builtin_suite("blur3", "Set5"), InvalidParameter);
}

// Every shipped suite file agrees with the built-in definition of the same name.
TEST(SuiteFiles, MatchBuiltins) {
  int checked = 0;
  for (const auto& e : std::filesystem::directory_iterator(suites_dir())) {
    if (e.path().extension() != ".json") continue;
    for (const auto& s : load_suite_file(e.path())) {
      const auto b = builtin_suite(s.name, s.dataset, s.dataset_path);
      EXPECT_EQ(s.resolved_chain(), b.resolved_chain()) << e.path() << " " << s.name;
      EXPECT_EQ(s.policy, b.policy) << s.name;
      EXPECT_EQ(s.border_crop, b.border_crop) << s.name;
      EXPECT_EQ(s.size_rule, b.size_rule) << s.name;
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(s.attributes[c], b.attributes[c], 1e-12) << s.name;
      ++checked;
    }
  }
  // 3 gaussian + 6 sr + 8 jpeg + 4 x 3 composite + 3 desk.
  EXPECT_EQ(checked, 32);
}

TEST(SuiteFiles, DatasetsExpand) {
  const auto suites = load_suite_file(suites_dir() / "table1_sr.json");
  ASSERT_EQ(suites.size(), 6u);
  EXPECT_EQ(suites[0].dataset, "Set14");
  EXPECT_EQ(suites[1].dataset, "Urban100");
}

TEST(SuiteText, RoundTrip) {
  auto s = builtin_suite("snp05-as-gauss50", "Set5");
  s.min_psnr = 21.5;
  s.seed = 99;
  EXPECT_EQ(suite_from_text(suite_to_text(s)), s);
  auto m = builtin_suite("awgn25", "", "/tmp/x");
  m.policy = AttributePolicy::map;
  m.attribute_map = "ramp.png";
  EXPECT_EQ(suite_from_text(suite_to_text(m)), m);
  EXPECT_THROW(suite_from_text(R"({"name":"x","chain":"awgn:0.1","attributes":{"policy":"guess"}})"), FormatError);
  EXPECT_THROW(suite_from_text(R"({"name":"x","chain":"blur:1"})"), ParseError);
}

TEST(RunSuite, IdentityModelOracle) {
  const auto model = zero_residual();
  const auto images = three_images();
  const auto suite = builtin_suite("awgn25", "local");
  const auto r = run_suite_on_images(model, suite, images);
  ASSERT_EQ(r.images.size(), 3u);
  const auto chain = suite.resolved_chain();
  for (std::size_t i = 0; i < 3; ++i) {
    // Same per-image seed derivation as the runner.
    DegradationChain c = chain;
    for (auto& step : c.steps) step.seed = derive_key(step.seed, "image", i);
    const Image noisy = apply_chain(images[i].image, c);
    EXPECT_NEAR(r.images[i].psnr, psnr(images[i].image, noisy), 1e-9);
    EXPECT_NEAR(r.images[i].input_psnr, psnr(images[i].image, noisy), 1e-9);
    EXPECT_NEAR(r.images[i].ssim, r.images[i].input_ssim, 1e-12);
  }
  double mean = 0;
  for (const auto& im : r.images) mean += im.psnr;
  EXPECT_NEAR(r.mean_psnr, mean / 3, 1e-12);
}

TEST(RunSuite, IdentityOracleAcrossBuiltins) {
  const auto model = zero_residual();
  const auto images = three_images();
  for (const char* name : {"awgn50+jpeg30", "awgn50+up1", "snp05-as-gauss50", "jpeg10+up1", "sr2", "jpeg20"}) {
    const auto r = run_suite_on_images(model, builtin_suite(name, "local"), images);
    for (const auto& im : r.images) EXPECT_NEAR(im.psnr, im.input_psnr, 1e-9) << name;
  }
}

TEST(RunSuite, ResizeBackRestoresShape) {
  const auto r = run_suite_on_images(zero_residual(), builtin_suite("awgn50+up1", "local"), three_images());
  EXPECT_EQ(r.images.size(), 3u);
  EXPECT_TRUE(r.failures.empty());
  auto strict = builtin_suite("awgn50+up1", "local");
  strict.size_rule = SizeRule::none;
  // Only the 50-row image grows under a 1% upscale (50.5 rounds up).
  const auto none = run_suite_on_images(zero_residual(), strict, three_images());
  EXPECT_EQ(none.images.size(), 2u);
  ASSERT_EQ(none.failures.size(), 1u);
  EXPECT_EQ(none.failures[0].name, "c");
  EXPECT_NE(none.failures[0].error.find("51x30"), std::string::npos) << none.failures[0].error;
}

TEST(RunSuite, AttributePolicies) {
  const auto model = zero_residual();
  auto s = builtin_suite("awgn50+jpeg30", "local");
  EXPECT_NEAR(run_suite_on_images(model, s, three_images()).attributes_used.jpeg, 0.7, 1e-12);
  s.policy = AttributePolicy::zeros;
  EXPECT_EQ(run_suite_on_images(model, s, three_images()).attributes_used, AttributeVector{});
}

TEST(RunSuite, MapPolicyUsesFile) {
  TempDir dir("eval");
  save_attribute_map(dir / "m.png", constant_map({0.5, 0, 0}, 36, 36));
  auto s = builtin_suite("awgn25", "local");
  s.policy = AttributePolicy::map;
  s.attribute_map = (dir / "m.png").string();
  const auto r = run_suite_on_images(zero_residual(), s, three_images());
  // Only the 36x36 image matches the map.
  EXPECT_EQ(r.images.size(), 1u);
  EXPECT_EQ(r.failures.size(), 2u);
}

TEST(RunSuite, MissingDatasetExplainsFetch) {
  TempDir dir("eval");
  try {
    run_suite(zero_residual(), builtin_suite("awgn25", "BSD68"), dir.path());
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("fetch_datasets.py"), std::string::npos);
  }
}

TEST(RunSuite, DecodeFailuresRecorded) {
  TempDir dir("eval");
  write_image(dir / "good.png", synthetic_scene(32, 32));
  std::ofstream(dir / "bad.png") << "garbage";
  const auto r = run_suite(zero_residual(), builtin_suite("awgn25", "x", dir.path().string()));
  EXPECT_EQ(r.images.size(), 1u);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].name, "bad.png");
}

TEST(RunSuite, DeterministicModuloTimestamp) {
  const auto model = build_model(small_config(), 4);
  const auto suite = builtin_suite("awgn50+jpeg30", "eval", corpus_dir("eval").string());
  const auto a = without_timestamp(run_suite(model, suite));
  const auto b = without_timestamp(run_suite(model, suite));
  EXPECT_EQ(report_to_text(a), report_to_text(b));
  EXPECT_EQ(a.images.size(), 5u);
}

TEST(Report, TextRoundTrip) {
  auto r = run_suite_on_images(zero_residual(), builtin_suite("awgn25", "local"), three_images());
  r.images[0].psnr = std::numeric_limits<double>::infinity();
  r.failures.push_back({"z.png", "broken"});
  r.suite.min_psnr = 20.0;
  EXPECT_EQ(report_from_text(report_to_text(r)), r);
  EXPECT_NE(report_to_text(r).find("\"inf\""), std::string::npos);
}

TEST(Report, EmitWritesBothFormats) {
  TempDir dir("eval");
  const auto model = zero_residual();
  std::vector<EvalReport> reports;
  for (const char* ds : {"Set5", "Set14", "LIVE1"}) {
    auto s = builtin_suite("awgn50+jpeg30", ds);
    reports.push_back(run_suite_on_images(model, s, three_images()));
  }
  const auto files = emit_report(reports, dir / "out/report");
  ASSERT_EQ(files.size(), 2u);
  const auto json_bytes = read_file(dir / "out/report.json");
  EXPECT_EQ(reports_from_text(std::string(json_bytes.begin(), json_bytes.end())), reports);
  const auto table_bytes = read_file(dir / "out/report.txt");
  const std::string table(table_bytes.begin(), table_bytes.end());
  for (const char* ds : {"Set5", "Set14", "LIVE1"}) {
    std::size_t rows = 0;
    for (std::size_t p = table.find(std::string("| ") + ds + " "); p != std::string::npos;
         p = table.find(std::string("| ") + ds + " ", p + 1))
      ++rows;
    EXPECT_EQ(rows, 1u) << ds;
  }
  EXPECT_EQ(render_table(reports), table);
}

TEST(Report, EmptyEmitThrows) {
  TempDir dir("eval");
  EXPECT_THROW(emit_report({}, dir / "r"), InvalidParameter);
}

TEST(Regressions, MinPsnr) {
  auto r = run_suite_on_images(zero_residual(), builtin_suite("awgn25", "local"), three_images());
  EXPECT_TRUE(regressions({r}).empty());
  r.suite.min_psnr = r.mean_psnr + 1.0;
  EXPECT_EQ(regressions({r}).size(), 1u);
  r.suite.min_psnr = r.mean_psnr - 1.0;
  EXPECT_TRUE(regressions({r}).empty());
}

TEST(Sweep, SingleZeroEqualsPlainRestore) {
  const auto model = build_model(small_config(), 5);
  const Image img = apply_awgn(synthetic_scene(32, 32), 0.1, 2);
  const auto pts = attribute_sweep(model, img, 0, {0.0});
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts[0].restored, forward(model, img, constant_map({}, 32, 32)).restored);
}

TEST(Sweep, OrderedPointsAndErrors) {
  const auto model = build_model(small_config(), 5);
  const Image clean = synthetic_scene(32, 32);
  const Image img = apply_awgn(clean, 0.1, 2);
  const auto pts = attribute_sweep(model, img, 2, {0.0, 0.5, 1.0}, &clean, {0.3, 0, 0});
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_EQ(pts[1].value, 0.5);
  EXPECT_EQ(pts[1].restored, forward(model, img, constant_map({0.3, 0, 0.5}, 32, 32)).restored);
  EXPECT_NEAR(pts[1].metrics.psnr_db, psnr(clean, pts[1].restored), 1e-12);
  EXPECT_NEAR(pts[1].total_variation, total_variation(pts[1].restored), 1e-9);
  EXPECT_THROW(attribute_sweep(model, img, 0, {}), InvalidParameter);
  EXPECT_THROW(attribute_sweep(model, img, 0, {1.5}), InvalidParameter);
  EXPECT_THROW(attribute_sweep(model, img, 3, {0.5}), InvalidParameter);
}
