#include "nbr/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "nbr/codec.hpp"
#include "nbr/error.hpp"
#include "nbr/hash.hpp"

namespace nbr {

namespace {

constexpr char kMagic[8] = {'N', 'B', 'R', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void put_u32(Bytes& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u64(Bytes& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_floats(Bytes& b, const std::vector<float>& v) {
  const auto* p = reinterpret_cast<const unsigned char*>(v.data());
  b.insert(b.end(), p, p + v.size() * sizeof(float));
}

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> d) : data_(d) {}

  std::span<const unsigned char> take(std::size_t n) {
    if (pos_ + n > data_.size()) throw FormatError("checkpoint is truncated");
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(s[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return v;
  }
  void floats(std::vector<float>& out, std::size_t n) {
    auto s = take(n * sizeof(float));
    out.resize(n);
    std::memcpy(out.data(), s.data(), s.size());
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const unsigned char> data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(std::span<const unsigned char> d) { return crc32_of(d); }

std::vector<std::string> split_tag(const std::string& tag) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : tag) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

// Permutes the attribute-channel filter slices of layer 1 from the stored
// order into the runtime order.
void remap_channels(ModelCheckpoint& ckpt, const std::vector<std::string>& stored) {
  const auto runtime = split_tag(channel_order_tag());
  auto& first = ckpt.network.layers().front();
  const int ic = ckpt.config.image_channels;
  const std::size_t kk = static_cast<std::size_t>(first.kernel) * first.kernel;
  std::vector<float> remapped = first.weights;
  for (int co = 0; co < first.out_channels; ++co)
    for (std::size_t r = 0; r < runtime.size(); ++r) {
      const auto it = std::find(stored.begin(), stored.end(), runtime[r]);
      const std::size_t s = static_cast<std::size_t>(it - stored.begin());
      const std::size_t base = static_cast<std::size_t>(co) * first.in_channels;
      std::copy_n(first.weights.begin() + (base + ic + s) * kk, kk,
                  remapped.begin() + (base + ic + r) * kk);
    }
  first.weights = std::move(remapped);
  ckpt.channel_order = channel_order_tag();
}

}  // namespace

void ModelConfig::validate() const {
  if (layers < 2) throw InvalidParameter("model needs at least 2 layers, got " + std::to_string(layers));
  if (features < 1) throw InvalidParameter("features must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw InvalidParameter("kernel size must be odd");
  if (image_channels != 1 && image_channels != 3)
    throw InvalidParameter("image_channels must be 1 or 3");
  if (attribute_channels != kAttributeChannels)
    throw InvalidParameter("attribute_channels must be " + std::to_string(kAttributeChannels));
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t kk = static_cast<std::size_t>(c.kernel) * c.kernel;
  const std::size_t first = (c.image_channels + c.attribute_channels) * kk * c.features + c.features;
  const std::size_t middle = (c.features * kk * c.features + c.features) * (c.layers - 2);
  const std::size_t last = c.features * kk * c.image_channels + c.image_channels;
  return first + middle + last;
}

ModelCheckpoint build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelCheckpoint ckpt;
  ckpt.config = config;
  ckpt.network = make_network<float>(config.shape(), seed);
  ckpt.provenance.seed = seed;
  ckpt.provenance.notes = "random initialisation (no pretrained import)";
  return ckpt;
}

std::vector<float> assemble_input(const Image& img, const AttributeMap& attrs) {
  check_matches(attrs, img);
  std::vector<float> input;
  input.reserve(img.size() + attrs.planes().size());
  input.insert(input.end(), img.pixels().begin(), img.pixels().end());
  input.insert(input.end(), attrs.planes().pixels().begin(), attrs.planes().pixels().end());
  return input;
}

ForwardResult forward(const ModelCheckpoint& ckpt, const Image& img, const AttributeMap& attrs) {
  if (ckpt.channel_order != channel_order_tag())
    throw FormatError("checkpoint attribute order '" + ckpt.channel_order +
                      "' differs from runtime order '" + channel_order_tag() + "'");
  if (img.channels() != ckpt.config.image_channels)
    throw ShapeMismatch("model expects " + std::to_string(ckpt.config.image_channels) +
                        "-channel images, got " + std::to_string(img.channels()));
  const std::vector<float> input = assemble_input(img, attrs);
  Workspace<float> ws;
  ForwardResult r;
  r.residual = ckpt.network.forward(input, img.height(), img.width(), ws);
  r.restored = img;
  auto& px = r.restored.pixels();
  for (std::size_t i = 0; i < px.size(); ++i)
    px[i] = std::clamp(px[i] + r.residual[i], 0.0f, 1.0f);
  return r;
}

Bytes serialize_checkpoint(const ModelCheckpoint& ckpt) {
  const auto& c = ckpt.config;
  const auto& p = ckpt.provenance;
  nlohmann::json header = {
      {"format", "nbr-checkpoint"},
      {"config",
       {{"layers", c.layers},
        {"features", c.features},
        {"kernel", c.kernel},
        {"image_channels", c.image_channels},
        {"attribute_channels", c.attribute_channels}}},
      {"channel_order", ckpt.channel_order},
      {"provenance",
       {{"init", p.init},
        {"seed", p.seed},
        {"stage", p.stage},
        {"epochs_completed", p.epochs_completed},
        {"manifest_hash", p.manifest_hash},
        {"notes", p.notes}}},
      {"optimizer", ckpt.optimizer.has_value()},
      {"weight_layout", "per layer: float32 weights [out][in][ky][kx], then float32 bias"},
  };
  if (ckpt.optimizer) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& l : ckpt.optimizer->layers) steps.push_back(l.step);
    header["optimizer_steps"] = steps;
  }
  const std::string text = header.dump(2);

  Bytes out(kMagic, kMagic + 8);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  Bytes blob;
  for (const auto& l : ckpt.network.layers()) {
    put_floats(blob, l.weights);
    put_floats(blob, l.bias);
  }
  if (ckpt.optimizer)
    for (const auto& l : ckpt.optimizer->layers) {
      put_floats(blob, l.m_w);
      put_floats(blob, l.v_w);
      put_floats(blob, l.m_b);
      put_floats(blob, l.v_b);
    }
  put_u64(out, blob.size());
  out.insert(out.end(), blob.begin(), blob.end());
  put_u32(out, crc(out));
  return out;
}

ModelCheckpoint deserialize_checkpoint(std::span<const unsigned char> data, const LoadOptions& opt) {
  if (data.size() < 8 + 4 + 4 + 8 + 4 || !std::equal(kMagic, kMagic + 8, data.begin()))
    throw FormatError("not a checkpoint file");
  const auto body = data.first(data.size() - 4);
  Reader tail(data.last(4));
  if (tail.u32() != crc(body)) throw FormatError("checkpoint checksum mismatch (file is corrupt)");

  Reader r(body);
  r.take(8);
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto text = r.take(r.u32());
  const auto header = nlohmann::json::parse(text.begin(), text.end(), nullptr, false);
  if (header.is_discarded()) throw FormatError("checkpoint header is not valid JSON");

  ModelCheckpoint ckpt;
  try {
    const auto& c = header.at("config");
    ckpt.config.layers = c.at("layers");
    ckpt.config.features = c.at("features");
    ckpt.config.kernel = c.at("kernel");
    ckpt.config.image_channels = c.at("image_channels");
    ckpt.config.attribute_channels = c.at("attribute_channels");
    ckpt.channel_order = header.at("channel_order");
    const auto& p = header.at("provenance");
    ckpt.provenance.init = p.at("init");
    ckpt.provenance.seed = p.at("seed");
    ckpt.provenance.stage = p.at("stage");
    ckpt.provenance.epochs_completed = p.at("epochs_completed");
    ckpt.provenance.manifest_hash = p.at("manifest_hash");
    ckpt.provenance.notes = p.at("notes");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  ckpt.config.validate();

  // Layer shapes follow entirely from the configuration.
  ckpt.network = make_network<float>(ckpt.config.shape(), 0);
  const std::uint64_t blob_size = r.u64();
  const std::size_t blob_start = r.pos();
  for (auto& l : ckpt.network.layers()) {
    r.floats(l.weights, l.weights.size());
    r.floats(l.bias, l.bias.size());
  }
  if (header.value("optimizer", false)) {
    const auto steps = header.at("optimizer_steps").get<std::vector<std::uint64_t>>();
    if (steps.size() != ckpt.network.layers().size())
      throw FormatError("optimizer state does not match layer count");
    OptimizerState st;
    st.layers.resize(steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const auto& l = ckpt.network.layers()[i];
      auto& s = st.layers[i];
      s.step = steps[i];
      r.floats(s.m_w, l.weights.size());
      r.floats(s.v_w, l.weights.size());
      r.floats(s.m_b, l.bias.size());
      r.floats(s.v_b, l.bias.size());
    }
    ckpt.optimizer = std::move(st);
  }
  if (r.pos() - blob_start != blob_size || r.pos() != body.size())
    throw FormatError("checkpoint weight blob size does not match its configuration");

  if (ckpt.channel_order != channel_order_tag()) {
    auto stored = split_tag(ckpt.channel_order);
    auto sorted_stored = stored;
    auto runtime = split_tag(channel_order_tag());
    std::ranges::sort(sorted_stored);
    std::ranges::sort(runtime);
    if (opt.strict || sorted_stored != runtime)
      throw FormatError("checkpoint attribute order '" + ckpt.channel_order +
                        "' differs from runtime order '" + channel_order_tag() + "'");
    spdlog::warn("checkpoint attribute order '{}' remapped to '{}'", ckpt.channel_order,
                 channel_order_tag());
    remap_channels(ckpt, stored);
  }
  return ckpt;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path, const LoadOptions& opt) {
  try {
    return deserialize_checkpoint(read_file(path), opt);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string checkpoint_id(const ModelCheckpoint& ckpt) {
  Bytes blob;
  for (const auto& l : ckpt.network.layers()) {
    put_floats(blob, l.weights);
    put_floats(blob, l.bias);
  }
  return hex32(crc(blob));
}

}  // namespace nbr
