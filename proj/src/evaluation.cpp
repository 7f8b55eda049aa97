#include "nbr/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <limits>
#include <regex>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "nbr/chain_dsl.hpp"
#include "nbr/codec.hpp"
#include "nbr/error.hpp"
#include "nbr/resample.hpp"
#include "nbr/rng.hpp"
#include "nbr/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace nbr {

namespace {

bool has_image_extension(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Non-finite metric values travel as the tokens "inf", "-inf" and "nan".
json metric_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double metric_value(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw FormatError("unexpected metric token '" + s + "'");
  }
  return j.get<double>();
}

std::optional<AttributePolicy> parse_policy(std::string_view s) {
  if (s == "true") return AttributePolicy::true_params;
  if (s == "vector") return AttributePolicy::vector;
  if (s == "map") return AttributePolicy::map;
  if (s == "zeros") return AttributePolicy::zeros;
  return std::nullopt;
}

std::optional<SizeRule> parse_size_rule(std::string_view s) {
  if (s == "resize-back") return SizeRule::resize_back;
  if (s == "none") return SizeRule::none;
  return std::nullopt;
}

json attributes_json(const AttributeVector& a) {
  return {{"noise", a.noise}, {"scale", a.scale}, {"jpeg", a.jpeg}};
}

AttributeVector attributes_from(const json& j) {
  return {j.value("noise", 0.0), j.value("scale", 0.0), j.value("jpeg", 0.0)};
}

json suite_json(const SuiteDefinition& s) {
  json attrs = {{"policy", std::string(to_string(s.policy))}};
  if (s.policy == AttributePolicy::vector) attrs.update(attributes_json(s.attributes));
  if (s.policy == AttributePolicy::map) attrs["path"] = s.attribute_map;
  json j = {
      {"name", s.name},
      {"dataset", s.dataset},
      {"chain", s.chain},
      {"seed", s.seed},
      {"attributes", attrs},
      {"border_crop", s.border_crop},
      {"size_rule", std::string(to_string(s.size_rule))},
  };
  if (!s.dataset_path.empty()) j["dataset_path"] = s.dataset_path;
  if (s.min_psnr) j["min_psnr"] = *s.min_psnr;
  return j;
}

SuiteDefinition suite_from_json(const json& j) {
  SuiteDefinition s;
  try {
    s.name = j.at("name");
    s.dataset = j.value("dataset", std::string());
    s.dataset_path = j.value("dataset_path", std::string());
    s.chain = j.at("chain");
    s.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("attributes")) {
      const auto& a = j.at("attributes");
      const std::string policy = a.value("policy", std::string("true"));
      const auto p = parse_policy(policy);
      if (!p) throw FormatError("suite '" + s.name + "': unknown attribute policy '" + policy + "'");
      s.policy = *p;
      if (s.policy == AttributePolicy::vector) s.attributes = attributes_from(a);
      if (s.policy == AttributePolicy::map) s.attribute_map = a.at("path");
    }
    s.border_crop = j.value("border_crop", 0);
    const std::string rule = j.value("size_rule", std::string("resize-back"));
    const auto r = parse_size_rule(rule);
    if (!r) throw FormatError("suite '" + s.name + "': unknown size rule '" + rule + "'");
    s.size_rule = *r;
    if (j.contains("min_psnr")) s.min_psnr = j.at("min_psnr").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("suite definition: ") + e.what());
  }
  if (s.border_crop < 0) throw FormatError("suite '" + s.name + "': border_crop must be >= 0");
  s.resolved_chain();
  return s;
}

json report_json(const EvalReport& r) {
  json images = json::array();
  for (const auto& im : r.images)
    images.push_back({{"name", im.name},
                      {"height", im.height},
                      {"width", im.width},
                      {"psnr", metric_json(im.psnr)},
                      {"ssim", metric_json(im.ssim)},
                      {"input_psnr", metric_json(im.input_psnr)},
                      {"input_ssim", metric_json(im.input_ssim)}});
  json failures = json::array();
  for (const auto& f : r.failures) failures.push_back({{"name", f.name}, {"error", f.error}});
  const auto& p = r.provenance;
  return {
      {"suite", suite_json(r.suite)},
      {"chain_rendered", r.chain_rendered},
      {"attributes_used", attributes_json(r.attributes_used)},
      {"images", images},
      {"failures", failures},
      {"aggregate",
       {{"psnr", metric_json(r.mean_psnr)},
        {"ssim", metric_json(r.mean_ssim)},
        {"input_psnr", metric_json(r.mean_input_psnr)},
        {"input_ssim", metric_json(r.mean_input_ssim)}}},
      {"checkpoint",
       {{"id", r.checkpoint_id},
        {"init", p.init},
        {"seed", p.seed},
        {"stage", p.stage},
        {"epochs_completed", p.epochs_completed},
        {"manifest_hash", p.manifest_hash},
        {"notes", p.notes}}},
      {"toolkit_version", r.toolkit_version},
      {"timestamp", r.timestamp},
  };
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  try {
    r.suite = suite_from_json(j.at("suite"));
    r.chain_rendered = j.at("chain_rendered");
    r.attributes_used = attributes_from(j.at("attributes_used"));
    for (const auto& im : j.at("images"))
      r.images.push_back({im.at("name"), im.at("height"), im.at("width"),
                          metric_value(im.at("psnr")), metric_value(im.at("ssim")),
                          metric_value(im.at("input_psnr")), metric_value(im.at("input_ssim"))});
    for (const auto& f : j.at("failures")) r.failures.push_back({f.at("name"), f.at("error")});
    const auto& a = j.at("aggregate");
    r.mean_psnr = metric_value(a.at("psnr"));
    r.mean_ssim = metric_value(a.at("ssim"));
    r.mean_input_psnr = metric_value(a.at("input_psnr"));
    r.mean_input_ssim = metric_value(a.at("input_ssim"));
    const auto& c = j.at("checkpoint");
    r.checkpoint_id = c.at("id");
    r.provenance.init = c.at("init");
    r.provenance.seed = c.at("seed");
    r.provenance.stage = c.at("stage");
    r.provenance.epochs_completed = c.at("epochs_completed");
    r.provenance.manifest_hash = c.at("manifest_hash");
    r.provenance.notes = c.at("notes");
    r.toolkit_version = j.at("toolkit_version");
    r.timestamp = j.at("timestamp");
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
  return r;
}

DegradationChain per_image_chain(const DegradationChain& chain, std::size_t image_index) {
  DegradationChain out = chain;
  for (auto& step : out.steps) step.seed = derive_key(step.seed, "image", image_index);
  return out;
}

std::string fixed(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.{}f}", v, digits);
}

}  // namespace

std::string_view to_string(AttributePolicy p) noexcept {
  switch (p) {
    case AttributePolicy::true_params: return "true";
    case AttributePolicy::vector: return "vector";
    case AttributePolicy::map: return "map";
    case AttributePolicy::zeros: return "zeros";
  }
  return "?";
}

std::string_view to_string(SizeRule r) noexcept {
  return r == SizeRule::resize_back ? "resize-back" : "none";
}

DegradationChain SuiteDefinition::resolved_chain() const { return parse_chain(chain, seed); }

AttributeVector true_attributes(const DegradationChain& chain) {
  double noise_var = 0.0;
  std::optional<double> scale, quality;
  for (const auto& s : chain.steps) {
    switch (s.kind) {
      case DegradationKind::awgn: noise_var += s.param * s.param; break;
      case DegradationKind::scale: scale = std::max(scale.value_or(1.0), s.param); break;
      case DegradationKind::jpeg: quality = std::min(quality.value_or(100.0), s.param); break;
      default: break;
    }
  }
  AttributeVector v;
  v.noise = encode_noise(std::sqrt(noise_var));
  if (scale) v.scale = encode_scale(*scale);
  if (quality) v.jpeg = encode_jpeg(*quality);
  return v;
}

SuiteDefinition builtin_suite(const std::string& name, const std::string& dataset,
                              const std::string& dataset_path) {
  SuiteDefinition s;
  s.name = name;
  s.dataset = dataset;
  s.dataset_path = dataset_path;
  std::smatch m;
  if (name == "awgn50+jpeg30") {
    s.chain = "awgn:50/255|jpeg:30";
  } else if (name == "awgn50+up1") {
    s.chain = "awgn:50/255|upscale_percent:1";
  } else if (name == "snp05-as-gauss50") {
    s.chain = "salt_pepper:0.05";
    s.policy = AttributePolicy::vector;
    s.attributes = {encode_noise(50.0 / 255.0), 0.0, 0.0};
  } else if (name == "jpeg10+up1") {
    s.chain = "jpeg:10|upscale_percent:1";
  } else if (std::regex_match(name, m, std::regex(R"(awgn(\d+))"))) {
    s.chain = "awgn:" + m[1].str() + "/255";
  } else if (std::regex_match(name, m, std::regex(R"(sr([1-4]))"))) {
    s.chain = "scale:" + m[1].str();
    s.border_crop = std::stoi(m[1].str());
  } else if (std::regex_match(name, m, std::regex(R"(jpeg(\d+))"))) {
    s.chain = "jpeg:" + m[1].str();
  } else {
    throw InvalidParameter("unknown built-in suite '" + name + "'");
  }
  s.resolved_chain();
  return s;
}

std::string suite_to_text(const SuiteDefinition& s) { return suite_json(s).dump(2) + "\n"; }

SuiteDefinition suite_from_text(const std::string& text) {
  const auto j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError("suite definition is not valid JSON");
  return suite_from_json(j);
}

std::vector<SuiteDefinition> load_suite_file(const fs::path& path) {
  const Bytes bytes = read_file(path);
  const auto j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded()) throw FormatError(path.string() + " is not valid JSON");
  std::vector<SuiteDefinition> out;
  const json entries = j.contains("suites") ? j.at("suites") : json::array({j});
  for (const auto& e : entries) {
    if (e.contains("datasets")) {
      for (const auto& d : e.at("datasets")) {
        json one = e;
        one.erase("datasets");
        one["dataset"] = d;
        out.push_back(suite_from_json(one));
      }
    } else {
      out.push_back(suite_from_json(e));
    }
  }
  if (out.empty()) throw FormatError(path.string() + " defines no suites");
  return out;
}

fs::path default_data_root() {
  if (const char* env = std::getenv("NBR_DATA_ROOT"); env && *env) return env;
  return fs::path("data") / "benchmarks";
}

std::vector<NamedImage> load_suite_images(const SuiteDefinition& suite, const fs::path& data_root,
                                          std::vector<ImageFailure>& failures) {
  fs::path dir;
  if (!suite.dataset_path.empty()) {
    dir = suite.dataset_path;
    if (!fs::is_directory(dir))
      throw IoError("suite '" + suite.name + "': dataset folder " + dir.string() + " not found");
  } else {
    if (suite.dataset.empty()) throw InvalidParameter("suite '" + suite.name + "' names no dataset");
    dir = data_root / suite.dataset;
    if (!fs::is_directory(dir))
      throw IoError("suite '" + suite.name + "': dataset '" + suite.dataset + "' not found at " +
                    dir.string() + ". Fetch it with `python3 tools/fetch_datasets.py --mirror <url> " +
                    "--dest " + data_root.string() + " " + suite.dataset +
                    "`, set NBR_DATA_ROOT, or point the suite at a local folder via dataset_path.");
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && has_image_extension(e.path())) files.push_back(e.path());
  std::ranges::sort(files);
  std::vector<NamedImage> out;
  for (const auto& f : files) {
    try {
      out.push_back({f.filename().string(), to_luma(read_image(f))});
    } catch (const Error& e) {
      spdlog::warn("skipping {}: {}", f.string(), e.what());
      failures.push_back({f.filename().string(), e.what()});
    }
  }
  return out;
}

EvalReport run_suite(const ModelCheckpoint& model, const SuiteDefinition& suite,
                     const fs::path& data_root) {
  std::vector<ImageFailure> failures;
  auto images = load_suite_images(suite, data_root, failures);
  return run_suite_on_images(model, suite, images, std::move(failures));
}

EvalReport run_suite_on_images(const ModelCheckpoint& model, const SuiteDefinition& suite,
                               const std::vector<NamedImage>& images,
                               std::vector<ImageFailure> failures) {
  const DegradationChain chain = suite.resolved_chain();
  EvalReport r;
  r.suite = suite;
  r.chain_rendered = render_chain(chain);
  r.checkpoint_id = checkpoint_id(model);
  r.provenance = model.provenance;
  r.toolkit_version = kToolkitVersion;
  r.timestamp = utc_timestamp();

  std::optional<AttributeMap> fixed_map;
  switch (suite.policy) {
    case AttributePolicy::true_params: r.attributes_used = true_attributes(chain); break;
    case AttributePolicy::vector: r.attributes_used = suite.attributes; break;
    case AttributePolicy::zeros: break;
    case AttributePolicy::map: fixed_map = load_attribute_map(suite.attribute_map); break;
  }

  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& [name, clean] = images[i];
    try {
      Image degraded = apply_chain(clean, per_image_chain(chain, i));
      const AttributeMap attrs =
          fixed_map ? *fixed_map
                    : constant_map(r.attributes_used, degraded.height(), degraded.width());
      Image restored = forward(model, degraded, attrs).restored;
      if (!degraded.same_shape(clean)) {
        if (suite.size_rule == SizeRule::none)
          throw ShapeMismatch("degraded size " + degraded.shape_string() + " differs from clean " +
                              clean.shape_string() + " and the suite's size rule is none");
        restored = resize_bicubic(restored, clean.height(), clean.width());
        degraded = resize_bicubic(degraded, clean.height(), clean.width());
      }
      const Image ref = crop_border(clean, suite.border_crop);
      const auto out = measure(ref, crop_border(restored, suite.border_crop));
      const auto in = measure(ref, crop_border(degraded, suite.border_crop));
      r.images.push_back({name, clean.height(), clean.width(), out.psnr_db, out.ssim, in.psnr_db,
                          in.ssim});
    } catch (const Error& e) {
      spdlog::warn("suite '{}': image {} failed: {}", suite.name, name, e.what());
      failures.push_back({name, e.what()});
    }
  }
  r.failures = std::move(failures);
  if (r.images.empty())
    throw InvalidParameter("suite '" + suite.name + "' produced no results (" +
                           std::to_string(r.failures.size()) + " failures)");
  const double n = static_cast<double>(r.images.size());
  for (const auto& im : r.images) {
    r.mean_psnr += im.psnr;
    r.mean_ssim += im.ssim;
    r.mean_input_psnr += im.input_psnr;
    r.mean_input_ssim += im.input_ssim;
  }
  r.mean_psnr /= n;
  r.mean_ssim /= n;
  r.mean_input_psnr /= n;
  r.mean_input_ssim /= n;
  return r;
}

std::vector<std::string> regressions(const std::vector<EvalReport>& reports) {
  std::vector<std::string> out;
  for (const auto& r : reports)
    if (r.suite.min_psnr && !(r.mean_psnr >= *r.suite.min_psnr))
      out.push_back(fmt::format("{} on {}: mean PSNR {} dB < required {} dB", r.suite.name,
                                r.suite.dataset, fixed(r.mean_psnr, 2), *r.suite.min_psnr));
  return out;
}

std::vector<SweepPoint> attribute_sweep(const ModelCheckpoint& model, const Image& img,
                                        int channel, const std::vector<double>& values,
                                        const Image* reference, const AttributeVector& base) {
  if (values.empty()) throw InvalidParameter("attribute sweep needs at least one value");
  if (channel < 0 || channel >= kAttributeChannels)
    throw InvalidParameter("attribute channel must be 0, 1 or 2");
  if (reference && !reference->same_shape(img))
    throw ShapeMismatch("sweep reference " + reference->shape_string() + " vs image " +
                        img.shape_string());
  std::vector<SweepPoint> out;
  out.reserve(values.size());
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0))
      throw InvalidParameter("sweep value " + std::to_string(v) + " outside [0,1]");
    AttributeVector attrs = base;
    attrs[channel] = v;
    SweepPoint p;
    p.value = v;
    p.restored = forward(model, img, constant_map(attrs, img.height(), img.width())).restored;
    p.metrics = measure(reference ? *reference : img, p.restored);
    p.total_variation = total_variation(p.restored);
    out.push_back(std::move(p));
  }
  return out;
}

std::string report_to_text(const EvalReport& r) { return report_json(r).dump(2) + "\n"; }

EvalReport report_from_text(const std::string& text) {
  const auto j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError("report is not valid JSON");
  return report_from_json(j);
}

std::vector<EvalReport> reports_from_text(const std::string& text) {
  const auto j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_array()) throw FormatError("report file is not a JSON array");
  std::vector<EvalReport> out;
  for (const auto& e : j) out.push_back(report_from_json(e));
  return out;
}

std::string render_table(const std::vector<EvalReport>& reports) {
  const std::vector<std::string> head1{"Suite", "Dataset", "Degradation", "Attributes",
                                       "Input", "Restored"};
  const std::vector<std::string> head2{"", "", "", "(noise, scale, jpeg)", "PSNR / SSIM",
                                       "PSNR / SSIM"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : reports) {
    const std::string attrs =
        r.suite.policy == AttributePolicy::map
            ? "map " + r.suite.attribute_map
            : fmt::format("{:.3f}, {:.3f}, {:.3f}", r.attributes_used.noise,
                          r.attributes_used.scale, r.attributes_used.jpeg);
    rows.push_back({r.suite.name, r.suite.dataset, r.chain_rendered, attrs,
                    fixed(r.mean_input_psnr, 2) + " / " + fixed(r.mean_input_ssim, 4),
                    fixed(r.mean_psnr, 2) + " / " + fixed(r.mean_ssim, 4)});
  }
  std::vector<std::size_t> width(head1.size());
  for (std::size_t c = 0; c < width.size(); ++c) {
    width[c] = std::max(head1[c].size(), head2[c].size());
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  std::string rule = "+";
  for (auto w : width) rule += std::string(w + 2, '-') + "+";
  rule += "\n";
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s = "|";
    for (std::size_t c = 0; c < cells.size(); ++c) s += fmt::format(" {:<{}} |", cells[c], width[c]);
    return s + "\n";
  };
  std::string out = rule + line(head1) + line(head2) + rule;
  for (const auto& row : rows) out += line(row);
  return out + rule;
}

std::vector<fs::path> emit_report(const std::vector<EvalReport>& reports, const fs::path& prefix,
                                  const std::vector<ReportFormat>& formats) {
  if (reports.empty()) throw InvalidParameter("no reports to emit");
  if (formats.empty()) throw InvalidParameter("no report formats requested");
  std::vector<fs::path> written;
  for (auto f : formats) {
    std::string text;
    fs::path path = prefix;
    if (f == ReportFormat::json) {
      json arr = json::array();
      for (const auto& r : reports) arr.push_back(report_json(r));
      text = arr.dump(2) + "\n";
      path += ".json";
    } else {
      text = render_table(reports);
      path += ".txt";
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
    written.push_back(path);
  }
  return written;
}

}  // namespace nbr
