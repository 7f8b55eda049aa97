#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nbr/attributes.hpp"
#include "nbr/degradation.hpp"
#include "nbr/image.hpp"

namespace nbr {

inline constexpr const char* kGeneratorVersion = "nbr-dataset/1";
inline constexpr int kDefaultPatchSize = 50;
inline constexpr std::uint64_t kDeskSamplesPerEpoch = 8192;
inline constexpr std::uint64_t kFullSamplesPerEpoch = 1048576;

struct SourceEntry {
  std::string path;  // relative to DatasetManifest::root
  std::string hash;  // crc32 of the file bytes, hex
  std::string split;  // "train" or "val"
  friend bool operator==(const SourceEntry&, const SourceEntry&) = default;
};

struct DatasetManifest {
  int schema_version = 1;
  std::string generator_version = kGeneratorVersion;
  std::string root;
  std::vector<SourceEntry> sources;
  int patch_size = kDefaultPatchSize;
  std::uint64_t sample_count = kDeskSamplesPerEpoch;
  std::uint64_t master_seed = 0;
  double split_ratio = 0.95;
  // Which split generate_sample() draws from.
  std::string split = "train";
  // Degradation families a sample may draw from, one per sample.
  std::vector<DegradationKind> kinds{DegradationKind::awgn, DegradationKind::scale,
                                     DegradationKind::jpeg};
  bool color = false;

  std::vector<SourceEntry> sources_in(const std::string& split_name) const;
  // crc32 of the canonical serialized form.
  std::string hash() const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

std::string manifest_to_text(const DatasetManifest& m);
DatasetManifest manifest_from_text(const std::string& text);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Scans `directory` for PNG/JPEG files, verifies they decode, and splits them
// into train/val by a seeded hash of the filename: floor(n * split_ratio)
// files go to train, the rest to val. Both splits must be non-empty.
DatasetManifest ingest_corpus(const std::filesystem::path& directory, double split_ratio,
                              std::uint64_t seed);

struct SampleProvenance {
  std::uint32_t source_index = 0;  // index into the manifest's sources
  std::string source_id;
  int y = 0;
  int x = 0;
  DegradationSpec spec;
  friend bool operator==(const SampleProvenance&, const SampleProvenance&) = default;
};

struct TrainingSample {
  Image input;
  AttributeVector attribute;
  Image target;
  SampleProvenance provenance;
  friend bool operator==(const TrainingSample&, const TrainingSample&) = default;
};

// Decoded corpus for a manifest. Immutable after construction, so
// generate_sample() may be called from any number of threads.
class Dataset {
 public:
  explicit Dataset(DatasetManifest manifest);

  const DatasetManifest& manifest() const noexcept { return manifest_; }
  // Clean (grayscale unless manifest.color) source by manifest index.
  const Image& source(std::size_t index) const;
  // Indices into manifest.sources for a split.
  const std::vector<std::uint32_t>& split_indices(const std::string& split) const;
  // Full source image after scale degradation by `factor` (cached).
  const Image& scaled_source(std::size_t index, int factor) const;

 private:
  DatasetManifest manifest_;
  std::vector<Image> images_;
  std::map<std::string, std::vector<std::uint32_t>> splits_;
  std::vector<std::array<Image, 4>> scaled_;
};

// Sample `index` of the manifest's split. All randomness comes from
// (master_seed, index): the degradation family is uniform over
// manifest.kinds, sigma uniform in [5/255, 55/255], scale uniform in {1..4},
// JPEG quality uniform in [5, 95], and the crop offset uniform over valid
// positions. AWGN and JPEG are applied to the clean crop; scale degradation
// is applied to the whole source and then cropped.
TrainingSample generate_sample(const Dataset& data, std::uint64_t index);

// Same draw as generate_sample() without the sample_count bound; training
// epochs address fresh samples past the declared count.
TrainingSample draw_sample(const Dataset& data, std::uint64_t index);

// Re-derives a sample's input from its recorded provenance.
Image replay_degradation(const Dataset& data, const TrainingSample& sample);

// ---- shards ---------------------------------------------------------------

struct ShardIndex {
  int version = 1;
  std::string manifest_hash;
  std::uint64_t total = 0;
  std::uint64_t shard_size = 0;
  std::vector<std::pair<std::string, std::uint64_t>> shards;  // file name, count
};

// Writes samples [0, sample_count) into fixed-size shards plus index.json.
std::vector<std::filesystem::path> write_shards(const Dataset& data, std::uint64_t shard_size,
                                                const std::filesystem::path& out_dir);

ShardIndex read_shard_index(const std::filesystem::path& dir);

// Streams samples in index order from a shard directory.
class ShardReader {
 public:
  explicit ShardReader(const std::filesystem::path& dir);
  std::optional<TrainingSample> next();
  const ShardIndex& index() const noexcept { return index_; }

 private:
  bool open_next_shard();

  std::filesystem::path dir_;
  ShardIndex index_;
  std::size_t shard_ = 0;
  std::uint64_t remaining_in_shard_ = 0;
  std::ifstream in_;
};

}  // namespace nbr
