#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nbr/attributes.hpp"
#include "nbr/degradation.hpp"
#include "nbr/image.hpp"
#include "nbr/metrics.hpp"
#include "nbr/model.hpp"

namespace nbr {

enum class AttributePolicy { true_params, vector, map, zeros };
enum class SizeRule { resize_back, none };

std::string_view to_string(AttributePolicy p) noexcept;
std::string_view to_string(SizeRule r) noexcept;

// Benchmark ids resolved as <data root>/<id>/.
inline constexpr std::array<std::string_view, 6> kBenchmarkIds{"Set5",     "Set14", "BSD68",
                                                               "Urban100", "Classic5", "LIVE1"};

struct SuiteDefinition {
  std::string name;
  // Benchmark id, or any label when dataset_path is set.
  std::string dataset;
  std::string dataset_path;
  // Chain text; step seeds derive from `seed`, then per image.
  std::string chain;
  std::uint64_t seed = 0;
  AttributePolicy policy = AttributePolicy::true_params;
  AttributeVector attributes;   // vector policy
  std::string attribute_map;    // map policy, path to a saved AttributeMap
  int border_crop = 0;
  SizeRule size_rule = SizeRule::resize_back;
  // Mean restored PSNR below this is reported as a regression.
  std::optional<double> min_psnr;

  DegradationChain resolved_chain() const;
  friend bool operator==(const SuiteDefinition&, const SuiteDefinition&) = default;
};

// Channel values implied by a chain: AWGN steps combine as the root sum of
// squares of sigma, scale takes the largest factor and JPEG the lowest
// quality. Other kinds leave every channel untouched.
AttributeVector true_attributes(const DegradationChain& chain);

// "awgnN" (sigma N/255), "srN", "jpegN", plus the composite suites
// "awgn50+jpeg30", "awgn50+up1", "snp05-as-gauss50" and "jpeg10+up1".
SuiteDefinition builtin_suite(const std::string& name, const std::string& dataset,
                              const std::string& dataset_path = {});

std::string suite_to_text(const SuiteDefinition& s);
SuiteDefinition suite_from_text(const std::string& text);
// A suite file holds {"suites": [...]}; an entry with a "datasets" array
// expands to one suite per dataset.
std::vector<SuiteDefinition> load_suite_file(const std::filesystem::path& path);

// NBR_DATA_ROOT if set, else data/benchmarks under the working directory.
std::filesystem::path default_data_root();

struct NamedImage {
  std::string name;
  Image image;
};

struct ImageFailure {
  std::string name;
  std::string error;
  friend bool operator==(const ImageFailure&, const ImageFailure&) = default;
};

// Decodes every PNG/JPEG of the suite's dataset as luminance, sorted by file
// name. Undecodable files land in `failures`. A missing dataset throws
// IoError with fetch instructions.
std::vector<NamedImage> load_suite_images(const SuiteDefinition& suite,
                                          const std::filesystem::path& data_root,
                                          std::vector<ImageFailure>& failures);

struct ImageResult {
  std::string name;
  int height = 0;
  int width = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double input_psnr = 0.0;
  double input_ssim = 0.0;
  friend bool operator==(const ImageResult&, const ImageResult&) = default;
};

struct EvalReport {
  SuiteDefinition suite;
  std::string chain_rendered;
  AttributeVector attributes_used;  // unset for the map policy
  std::vector<ImageResult> images;
  std::vector<ImageFailure> failures;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_input_psnr = 0.0;
  double mean_input_ssim = 0.0;
  std::string checkpoint_id;
  Provenance provenance;
  std::string toolkit_version;
  std::string timestamp;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport run_suite(const ModelCheckpoint& model, const SuiteDefinition& suite,
                     const std::filesystem::path& data_root = default_data_root());

// Same as run_suite() on already-decoded clean images.
EvalReport run_suite_on_images(const ModelCheckpoint& model, const SuiteDefinition& suite,
                               const std::vector<NamedImage>& images,
                               std::vector<ImageFailure> failures = {});

// Suites whose min_psnr is set and not met.
std::vector<std::string> regressions(const std::vector<EvalReport>& reports);

struct SweepPoint {
  double value = 0.0;
  Image restored;
  MetricResult metrics;  // against the reference, or the input without one
  double total_variation = 0.0;
};

// One forward pass per value with a constant map whose `channel` is the
// value and whose other channels come from `base`.
std::vector<SweepPoint> attribute_sweep(const ModelCheckpoint& model, const Image& img,
                                        int channel, const std::vector<double>& values,
                                        const Image* reference = nullptr,
                                        const AttributeVector& base = {});

std::string report_to_text(const EvalReport& r);
EvalReport report_from_text(const std::string& text);

// Aligned table, one row per report.
std::string render_table(const std::vector<EvalReport>& reports);

enum class ReportFormat { json, table };

// Writes <prefix>.json (a JSON array of reports) and/or <prefix>.txt.
std::vector<std::filesystem::path> emit_report(const std::vector<EvalReport>& reports,
                                               const std::filesystem::path& prefix,
                                               const std::vector<ReportFormat>& formats = {
                                                   ReportFormat::json, ReportFormat::table});
std::vector<EvalReport> reports_from_text(const std::string& text);

}  // namespace nbr
