#include "nbr/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "nbr/codec.hpp"
#include "nbr/error.hpp"
#include "nbr/hash.hpp"
#include "nbr/rng.hpp"

namespace fs = std::filesystem;

namespace nbr {

namespace {

constexpr int kMaxSourceRetries = 16;
constexpr char kShardMagic[8] = {'N', 'B', 'R', 'S', 'H', 'R', 'D', '1'};
constexpr std::uint32_t kShardVersion = 1;

bool has_image_extension(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json sources = nlohmann::json::array();
  for (const auto& s : m.sources)
    sources.push_back({{"path", s.path}, {"hash", s.hash}, {"split", s.split}});
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : m.kinds) kinds.push_back(std::string(to_string(k)));
  return {
      {"schema_version", m.schema_version},
      {"generator_version", m.generator_version},
      {"root", m.root},
      {"patch_size", m.patch_size},
      {"sample_count", m.sample_count},
      {"master_seed", m.master_seed},
      {"split_ratio", m.split_ratio},
      {"split", m.split},
      {"kinds", kinds},
      {"color", m.color},
      {"sources", sources},
  };
}

// ---- binary record helpers ---------------------------------------------------

static_assert(std::endian::native == std::endian::little, "shards are little-endian");

template <typename T>
void put(Bytes& b, T v) {
  const auto* p = reinterpret_cast<const unsigned char*>(&v);
  b.insert(b.end(), p, p + sizeof(T));
}

void put_image(Bytes& b, const Image& img) {
  put<std::uint32_t>(b, static_cast<std::uint32_t>(img.height()));
  put<std::uint32_t>(b, static_cast<std::uint32_t>(img.width()));
  put<std::uint32_t>(b, static_cast<std::uint32_t>(img.channels()));
  const auto* p = reinterpret_cast<const unsigned char*>(img.pixels().data());
  b.insert(b.end(), p, p + img.size() * sizeof(float));
}

class Cursor {
 public:
  explicit Cursor(const Bytes& b) : b_(b) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const unsigned char* take(std::size_t n) {
    if (pos_ + n > b_.size()) throw FormatError("shard record is truncated");
    const unsigned char* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  Image image() {
    const auto h = get<std::uint32_t>(), w = get<std::uint32_t>(), c = get<std::uint32_t>();
    Image img(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    std::memcpy(img.pixels().data(), take(img.size() * sizeof(float)), img.size() * sizeof(float));
    return img;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const Bytes& b_;
  std::size_t pos_ = 0;
};

Bytes encode_record(const TrainingSample& s) {
  Bytes b;
  const auto& p = s.provenance;
  put<std::uint8_t>(b, static_cast<std::uint8_t>(p.spec.kind));
  put<double>(b, p.spec.param);
  put<std::uint64_t>(b, p.spec.seed);
  put<std::uint32_t>(b, p.source_index);
  put<std::uint32_t>(b, static_cast<std::uint32_t>(p.y));
  put<std::uint32_t>(b, static_cast<std::uint32_t>(p.x));
  put<std::uint32_t>(b, static_cast<std::uint32_t>(p.source_id.size()));
  b.insert(b.end(), p.source_id.begin(), p.source_id.end());
  put<double>(b, s.attribute.noise);
  put<double>(b, s.attribute.scale);
  put<double>(b, s.attribute.jpeg);
  put_image(b, s.input);
  put_image(b, s.target);
  return b;
}

TrainingSample decode_record(const Bytes& b) {
  Cursor c(b);
  TrainingSample s;
  auto& p = s.provenance;
  const auto kind = c.get<std::uint8_t>();
  if (kind > static_cast<std::uint8_t>(DegradationKind::upscale_percent))
    throw FormatError("shard record has unknown degradation kind");
  p.spec.kind = static_cast<DegradationKind>(kind);
  p.spec.param = c.get<double>();
  p.spec.seed = c.get<std::uint64_t>();
  p.source_index = c.get<std::uint32_t>();
  p.y = static_cast<int>(c.get<std::uint32_t>());
  p.x = static_cast<int>(c.get<std::uint32_t>());
  const auto id_len = c.get<std::uint32_t>();
  const auto* id = c.take(id_len);
  p.source_id.assign(reinterpret_cast<const char*>(id), id_len);
  s.attribute.noise = c.get<double>();
  s.attribute.scale = c.get<double>();
  s.attribute.jpeg = c.get<double>();
  s.input = c.image();
  s.target = c.image();
  if (!c.done()) throw FormatError("shard record has trailing bytes");
  return s;
}

}  // namespace

std::vector<SourceEntry> DatasetManifest::sources_in(const std::string& split_name) const {
  std::vector<SourceEntry> out;
  for (const auto& s : sources)
    if (s.split == split_name) out.push_back(s);
  return out;
}

std::string DatasetManifest::hash() const { return hex32(crc32_of(to_json(*this).dump())); }

std::string manifest_to_text(const DatasetManifest& m) { return to_json(m).dump(2) + "\n"; }

DatasetManifest manifest_from_text(const std::string& text) {
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError("manifest is not valid JSON");
  DatasetManifest m;
  try {
    m.schema_version = j.at("schema_version");
    if (m.schema_version != 1)
      throw FormatError("unsupported manifest schema " + std::to_string(m.schema_version));
    m.generator_version = j.at("generator_version");
    m.root = j.at("root");
    m.patch_size = j.at("patch_size");
    m.sample_count = j.at("sample_count");
    m.master_seed = j.at("master_seed");
    m.split_ratio = j.at("split_ratio");
    m.split = j.at("split");
    m.color = j.value("color", false);
    m.kinds.clear();
    for (const auto& k : j.at("kinds")) {
      const auto kind = parse_kind(k.get<std::string>());
      if (!kind) throw FormatError("manifest lists unknown degradation kind " + k.dump());
      m.kinds.push_back(*kind);
    }
    m.sources.clear();
    for (const auto& s : j.at("sources"))
      m.sources.push_back({s.at("path"), s.at("hash"), s.at("split")});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  const std::string text = manifest_to_text(m);
  write_file_atomic(path, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

DatasetManifest load_manifest(const fs::path& path) {
  const Bytes b = read_file(path);
  return manifest_from_text(std::string(b.begin(), b.end()));
}

DatasetManifest ingest_corpus(const fs::path& directory, double split_ratio, std::uint64_t seed) {
  if (!(split_ratio > 0.0 && split_ratio < 1.0))
    throw InvalidParameter("split ratio must lie strictly between 0 and 1");
  if (!fs::is_directory(directory)) throw IoError("corpus directory not found: " + directory.string());

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(directory))
    if (e.is_regular_file() && has_image_extension(e.path())) files.push_back(e.path());
  std::ranges::sort(files);

  struct Candidate {
    std::uint64_t key;
    SourceEntry entry;
  };
  std::vector<Candidate> ok;
  for (const auto& f : files) {
    Bytes bytes;
    try {
      bytes = read_file(f);
      decode_image(bytes);
    } catch (const Error& e) {
      spdlog::warn("skipping {}: {}", f.string(), e.what());
      continue;
    }
    const std::string name = f.filename().string();
    ok.push_back({derive_key(seed, name), {name, hex32(crc32_of(bytes)), ""}});
  }
  if (ok.empty()) throw IoError("no decodable images in " + directory.string());

  const std::size_t n = ok.size();
  const auto n_train = static_cast<std::size_t>(std::floor(n * split_ratio + 1e-9));
  if (n_train == 0 || n_train == n)
    throw InvalidParameter("split ratio " + std::to_string(split_ratio) + " over " +
                           std::to_string(n) + " images leaves an empty split");
  std::ranges::sort(ok, [](const Candidate& a, const Candidate& b) {
    return a.key != b.key ? a.key < b.key : a.entry.path < b.entry.path;
  });
  DatasetManifest m;
  m.root = fs::absolute(directory).lexically_normal().string();
  m.master_seed = seed;
  m.split_ratio = split_ratio;
  for (std::size_t i = 0; i < n; ++i) {
    ok[i].entry.split = i < n_train ? "train" : "val";
    m.sources.push_back(ok[i].entry);
  }
  std::ranges::sort(m.sources, {}, &SourceEntry::path);
  return m;
}

Dataset::Dataset(DatasetManifest manifest) : manifest_(std::move(manifest)) {
  if (manifest_.patch_size < 3) throw InvalidParameter("patch size must be at least 3");
  if (manifest_.kinds.empty()) throw InvalidParameter("manifest lists no degradation kinds");
  for (auto k : manifest_.kinds)
    if (k != DegradationKind::awgn && k != DegradationKind::scale && k != DegradationKind::jpeg)
      throw InvalidParameter("training samples support only awgn, scale and jpeg, not " +
                             std::string(to_string(k)));
  images_.reserve(manifest_.sources.size());
  for (std::uint32_t i = 0; i < manifest_.sources.size(); ++i) {
    const auto& s = manifest_.sources[i];
    const fs::path p = fs::path(manifest_.root) / s.path;
    const Bytes bytes = read_file(p);
    if (hex32(crc32_of(bytes)) != s.hash)
      throw FormatError("content hash of " + p.string() + " differs from the manifest");
    Image img = decode_image(bytes);
    images_.push_back(manifest_.color ? std::move(img) : to_luma(img));
    splits_[s.split].push_back(i);
  }
  scaled_.resize(images_.size());
  const bool uses_scale = std::ranges::find(manifest_.kinds, DegradationKind::scale) !=
                          manifest_.kinds.end();
  if (uses_scale)
    for (std::size_t i = 0; i < images_.size(); ++i)
      for (int f = 1; f <= 4; ++f)
        if (images_[i].height() >= f && images_[i].width() >= f)
          scaled_[i][f - 1] = apply_scale_degradation(images_[i], f);
}

const Image& Dataset::source(std::size_t index) const { return images_.at(index); }

const std::vector<std::uint32_t>& Dataset::split_indices(const std::string& split) const {
  static const std::vector<std::uint32_t> empty;
  const auto it = splits_.find(split);
  return it == splits_.end() ? empty : it->second;
}

const Image& Dataset::scaled_source(std::size_t index, int factor) const {
  const Image& img = scaled_.at(index).at(static_cast<std::size_t>(factor - 1));
  if (img.empty())
    throw InvalidParameter("no scale-degraded copy of source " + std::to_string(index) +
                           " for factor " + std::to_string(factor));
  return img;
}

TrainingSample generate_sample(const Dataset& data, std::uint64_t index) {
  const auto& m = data.manifest();
  if (index >= m.sample_count)
    throw InvalidParameter("sample index " + std::to_string(index) + " >= sample count " +
                           std::to_string(m.sample_count));
  return draw_sample(data, index);
}

TrainingSample draw_sample(const Dataset& data, std::uint64_t index) {
  const auto& m = data.manifest();
  const auto& pool = data.split_indices(m.split);
  if (pool.empty()) throw InvalidParameter("manifest split '" + m.split + "' has no sources");

  SplitMix64 rng(derive_key(m.master_seed, "sample", index));
  DegradationSpec spec;
  spec.kind = m.kinds[rng.below(m.kinds.size())];
  switch (spec.kind) {
    case DegradationKind::awgn:
      spec.param = (5.0 + 50.0 * rng.uniform()) / 255.0;
      break;
    case DegradationKind::scale:
      spec.param = static_cast<double>(1 + rng.below(4));
      break;
    case DegradationKind::jpeg:
      spec.param = static_cast<double>(5 + rng.below(91));
      break;
    default:
      throw InvalidParameter("unsupported training degradation");
  }
  spec.seed = rng.next();

  const int p = m.patch_size;
  for (int attempt = 0; attempt < kMaxSourceRetries; ++attempt) {
    const std::uint32_t src = pool[rng.below(pool.size())];
    const Image& clean = data.source(src);
    if (clean.height() < p || clean.width() < p) continue;
    TrainingSample s;
    s.provenance.source_index = src;
    s.provenance.source_id = m.sources[src].path;
    s.provenance.spec = spec;
    s.provenance.y = static_cast<int>(rng.below(static_cast<std::uint64_t>(clean.height() - p + 1)));
    s.provenance.x = static_cast<int>(rng.below(static_cast<std::uint64_t>(clean.width() - p + 1)));
    s.target = crop(clean, s.provenance.y, s.provenance.x, p, p);
    s.attribute = from_spec(spec);
    s.input = replay_degradation(data, s);
    return s;
  }
  throw InvalidParameter("no source image of at least " + std::to_string(p) + "x" +
                         std::to_string(p) + " found after " + std::to_string(kMaxSourceRetries) +
                         " draws");
}

Image replay_degradation(const Dataset& data, const TrainingSample& s) {
  const auto& pv = s.provenance;
  if (pv.spec.kind == DegradationKind::scale) {
    const Image& scaled = data.scaled_source(pv.source_index, static_cast<int>(pv.spec.param));
    return crop(scaled, pv.y, pv.x, s.target.height(), s.target.width());
  }
  return apply(s.target, pv.spec);
}

std::vector<fs::path> write_shards(const Dataset& data, std::uint64_t shard_size,
                                   const fs::path& out_dir) {
  const auto& m = data.manifest();
  if (shard_size < 1) throw InvalidParameter("shard size must be at least 1");
  if (m.sample_count == 0) throw InvalidParameter("manifest declares no samples");
  fs::create_directories(out_dir);

  ShardIndex idx;
  idx.manifest_hash = m.hash();
  idx.total = m.sample_count;
  idx.shard_size = shard_size;
  std::vector<fs::path> files;
  for (std::uint64_t start = 0, shard = 0; start < m.sample_count; start += shard_size, ++shard) {
    const std::uint64_t count = std::min(shard_size, m.sample_count - start);
    Bytes out(kShardMagic, kShardMagic + 8);
    put<std::uint32_t>(out, kShardVersion);
    put<std::uint64_t>(out, count);
    for (std::uint64_t i = start; i < start + count; ++i) {
      const Bytes rec = encode_record(generate_sample(data, i));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(rec.size()));
      out.insert(out.end(), rec.begin(), rec.end());
    }
    char name[32];
    std::snprintf(name, sizeof name, "shard-%05llu.bin", static_cast<unsigned long long>(shard));
    const fs::path path = out_dir / name;
    try {
      write_file_atomic(path, out);
    } catch (const IoError& e) {
      throw IoError("shard " + std::to_string(shard) + ": " + e.what());
    }
    files.push_back(path);
    idx.shards.emplace_back(name, count);
  }

  nlohmann::json j = {{"version", idx.version},
                      {"manifest_hash", idx.manifest_hash},
                      {"total", idx.total},
                      {"shard_size", idx.shard_size},
                      {"shards", nlohmann::json::array()}};
  for (const auto& [name, count] : idx.shards) j["shards"].push_back({{"file", name}, {"count", count}});
  const std::string text = j.dump(2) + "\n";
  write_file_atomic(out_dir / "index.json",
                    {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
  return files;
}

ShardIndex read_shard_index(const fs::path& dir) {
  const Bytes b = read_file(dir / "index.json");
  const auto j = nlohmann::json::parse(b.begin(), b.end(), nullptr, false);
  if (j.is_discarded()) throw FormatError("shard index is not valid JSON");
  ShardIndex idx;
  try {
    idx.version = j.at("version");
    if (idx.version != 1) throw FormatError("unsupported shard index version");
    idx.manifest_hash = j.at("manifest_hash");
    idx.total = j.at("total");
    idx.shard_size = j.at("shard_size");
    for (const auto& s : j.at("shards")) idx.shards.emplace_back(s.at("file"), s.at("count"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("shard index: ") + e.what());
  }
  return idx;
}

ShardReader::ShardReader(const fs::path& dir) : dir_(dir), index_(read_shard_index(dir)) {}

bool ShardReader::open_next_shard() {
  if (shard_ >= index_.shards.size()) return false;
  const auto& [name, count] = index_.shards[shard_++];
  in_ = std::ifstream(dir_ / name, std::ios::binary);
  if (!in_) throw IoError("cannot open shard " + (dir_ / name).string());
  char magic[8];
  in_.read(magic, 8);
  std::uint32_t version = 0;
  std::uint64_t stored = 0;
  in_.read(reinterpret_cast<char*>(&version), 4);
  in_.read(reinterpret_cast<char*>(&stored), 8);
  if (!in_ || !std::equal(magic, magic + 8, kShardMagic) || version != kShardVersion)
    throw FormatError("bad shard header in " + name);
  if (stored != count) throw FormatError("shard " + name + " record count differs from index");
  remaining_in_shard_ = count;
  return true;
}

std::optional<TrainingSample> ShardReader::next() {
  while (remaining_in_shard_ == 0)
    if (!open_next_shard()) return std::nullopt;
  std::uint32_t len = 0;
  in_.read(reinterpret_cast<char*>(&len), 4);
  Bytes rec(len);
  in_.read(reinterpret_cast<char*>(rec.data()), len);
  if (!in_) throw FormatError("shard is truncated");
  --remaining_in_shard_;
  return decode_record(rec);
}

}  // namespace nbr
