#include "nbr/service.hpp"

#include <chrono>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "nbr/version.hpp"

using nlohmann::json;

namespace nbr {

namespace {

constexpr std::size_t kMaxPayloadBytes = std::size_t{256} << 20;
constexpr const char* kBoundary = "nbr-restore-7f3a9c1e";

json error_body(const std::string& message, int status) {
  return {{"error", message}, {"status", status}};
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, error_body(message, status));
}

std::string as_string(const Bytes& b) { return {b.begin(), b.end()}; }
Bytes as_bytes(const std::string& s) { return {s.begin(), s.end()}; }

std::string base64(const Bytes& b) { return httplib::detail::base64_encode(as_string(b)); }

json model_info(const ModelCheckpoint& m) {
  const auto& c = m.config;
  const auto& p = m.provenance;
  return {
      {"loaded", true},
      {"checkpoint_id", checkpoint_id(m)},
      {"config",
       {{"layers", c.layers},
        {"features", c.features},
        {"kernel", c.kernel},
        {"image_channels", c.image_channels},
        {"attribute_channels", c.attribute_channels}}},
      {"parameter_count", parameter_count(c)},
      {"channel_order", m.channel_order},
      {"provenance",
       {{"init", p.init},
        {"seed", p.seed},
        {"stage", p.stage},
        {"epochs_completed", p.epochs_completed},
        {"manifest_hash", p.manifest_hash},
        {"notes", p.notes}}},
      {"toolkit_version", kToolkitVersion},
  };
}

json response_metadata(const RestoreResponse& r) {
  json j = {{"height", r.height},
            {"width", r.width},
            {"elapsed_ms", r.elapsed_ms},
            {"checkpoint_id", r.checkpoint_id}};
  if (r.metrics) {
    j["metrics"] = {{"ssim", r.metrics->ssim}};
    j["metrics"]["psnr"] = std::isinf(r.metrics->psnr_db) ? json("inf") : json(r.metrics->psnr_db);
  }
  return j;
}

void append_part(std::string& body, const std::string& name, const std::string& filename,
                 const std::string& type, const std::string& content) {
  body += "--";
  body += kBoundary;
  body += "\r\nContent-Disposition: form-data; name=\"" + name + "\"";
  if (!filename.empty()) body += "; filename=\"" + filename + "\"";
  body += "\r\nContent-Type: " + type + "\r\n\r\n";
  body += content;
  body += "\r\n";
}

Image to_model_channels(const Image& img, int channels, const char* what) {
  if (img.channels() == channels) return img;
  if (channels == 1) return to_luma(img);
  throw ServiceError(400, std::string(what) + " has " + std::to_string(img.channels()) +
                              " channel(s), the model expects " + std::to_string(channels));
}

Image decode_part(const Bytes& bytes, const char* what) {
  if (bytes.empty()) throw ServiceError(400, std::string(what) + " is empty");
  try {
    return decode_image(bytes);
  } catch (const Error& e) {
    throw ServiceError(400, std::string(what) + " does not decode: " + e.what());
  }
}

}  // namespace

void apply_metadata(const std::string& json_text, RestoreRequest& req) {
  if (json_text.empty()) return;
  const auto j = json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ServiceError(400, "metadata is not a JSON object");
  try {
    if (j.contains("attributes")) {
      const auto& a = j.at("attributes");
      AttributeVector v;
      if (a.is_array()) {
        if (a.size() != kAttributeChannels)
          throw ServiceError(400, "attributes array needs 3 values (noise, scale, jpeg)");
        for (int c = 0; c < kAttributeChannels; ++c) v[c] = a.at(c).get<double>();
      } else {
        for (const auto& [key, _] : a.items())
          if (key != "noise" && key != "scale" && key != "jpeg")
            throw ServiceError(400, "unknown attribute channel '" + key + "'");
        v = {a.value("noise", 0.0), a.value("scale", 0.0), a.value("jpeg", 0.0)};
      }
      for (int c = 0; c < kAttributeChannels; ++c)
        if (!(v[c] >= 0.0 && v[c] <= 1.0))
          throw ServiceError(400, "attribute values must lie in [0,1]");
      req.attributes = v;
    }
    req.return_residual = j.value("return_residual", req.return_residual);
  } catch (const json::exception& e) {
    throw ServiceError(400, std::string("metadata: ") + e.what());
  }
}

RestoreResponse restore(const ModelCheckpoint& model, const RestoreRequest& req,
                        std::size_t max_pixels) {
  const auto t0 = std::chrono::steady_clock::now();
  if (req.attributes.has_value() == req.attribute_map.has_value())
    throw ServiceError(400, "give exactly one attribute source: metadata attributes or an "
                            "attribute_map part");
  const Image decoded = decode_part(req.image, "image");
  const std::size_t pixels = decoded.plane_size();
  if (pixels > max_pixels)
    throw ServiceError(413, "image " + decoded.shape_string() + " has " + std::to_string(pixels) +
                                " pixels, limit is " + std::to_string(max_pixels));
  const Image img = to_model_channels(decoded, model.config.image_channels, "image");

  AttributeMap attrs;
  if (req.attributes) {
    attrs = constant_map(*req.attributes, img.height(), img.width());
  } else {
    try {
      attrs = decode_attribute_map(*req.attribute_map);
      check_matches(attrs, img);
    } catch (const Error& e) {
      throw ServiceError(400, std::string("attribute_map: ") + e.what());
    }
  }

  const ForwardResult fr = forward(model, img, attrs);
  RestoreResponse out;
  out.restored_png = encode_png(fr.restored);
  out.height = img.height();
  out.width = img.width();
  out.checkpoint_id = checkpoint_id(model);
  if (req.return_residual) {
    Image vis(img.height(), img.width(), img.channels());
    for (std::size_t k = 0; k < vis.size(); ++k) vis.pixels()[k] = fr.residual[k] * 0.5f + 0.5f;
    clip_unit(vis);
    out.residual_png = encode_png(vis);
  }
  if (req.reference) {
    const Image ref =
        to_model_channels(decode_part(*req.reference, "reference"), img.channels(), "reference");
    if (!ref.same_shape(img))
      throw ServiceError(400, "reference " + ref.shape_string() + " does not match image " +
                                  img.shape_string());
    out.metrics = measure(ref, fr.restored);
  }
  out.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

Service::Service(ServiceOptions opt) : opt_(std::move(opt)), server_(std::make_unique<httplib::Server>()) {
  if (opt_.workers < 1) throw InvalidParameter("service needs at least one worker");
  if (opt_.max_pixels < 1) throw InvalidParameter("max pixels must be >= 1");
  const int workers = opt_.workers;
  server_->new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
  server_->set_payload_max_length(kMaxPayloadBytes);
  install_routes();
}

Service::~Service() { stop(); }

void Service::load_initial() {
  if (opt_.checkpoint.empty()) {
    spdlog::warn("no checkpoint configured; /v1/restore answers 503 until a reload");
    return;
  }
  auto m = std::make_shared<const ModelCheckpoint>(load_checkpoint(opt_.checkpoint));
  std::lock_guard lock(model_mutex_);
  model_ = std::move(m);
  model_path_ = opt_.checkpoint;
}

void Service::set_model(std::shared_ptr<const ModelCheckpoint> model) {
  std::lock_guard lock(model_mutex_);
  model_ = std::move(model);
}

std::shared_ptr<const ModelCheckpoint> Service::model() const {
  std::lock_guard lock(model_mutex_);
  return model_;
}

void Service::reload(const std::filesystem::path& path) {
  std::lock_guard serial(reload_mutex_);
  reloading_ = true;
  struct Clear {
    std::atomic<bool>& flag;
    ~Clear() { flag = false; }
  } clear{reloading_};
  if (reload_hook_) reload_hook_();
  auto next = std::make_shared<const ModelCheckpoint>(load_checkpoint(path));
  {
    std::lock_guard lock(model_mutex_);
    model_ = std::move(next);
    model_path_ = path;
  }
  spdlog::info("serving checkpoint {}", path.string());
}

void Service::install_routes() {
  auto& s = *server_;

  s.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
  });
  s.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.body.empty())
      send_error(res, res.status,
                 res.status == 404 ? "no route for " + req.method + " " + req.path
                                   : "request failed");
  });

  s.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    const auto m = model();
    std::string state = reloading_ ? "reloading" : (m ? "ok" : "no-model");
    json body = {{"status", state}};
    if (m) body["checkpoint_id"] = checkpoint_id(*m);
    send_json(res, 200, body);
  });

  s.Get("/v1/model/info", [this](const httplib::Request&, httplib::Response& res) {
    const auto m = model();
    send_json(res, 200, m ? model_info(*m) : json{{"loaded", false}});
  });

  s.Post("/v1/restore", [this](const httplib::Request& req, httplib::Response& res) {
    const auto m = model();
    if (!m) return send_error(res, 503, "no model loaded");
    try {
      if (!req.is_multipart_form_data())
        throw ServiceError(400, "expected a multipart/form-data body");
      if (!req.has_file("image")) throw ServiceError(400, "missing 'image' part");
      RestoreRequest r;
      r.image = as_bytes(req.get_file_value("image").content);
      if (req.has_file("metadata")) apply_metadata(req.get_file_value("metadata").content, r);
      if (req.has_file("attribute_map"))
        r.attribute_map = as_bytes(req.get_file_value("attribute_map").content);
      if (req.has_file("reference")) r.reference = as_bytes(req.get_file_value("reference").content);
      const RestoreResponse out = restore(*m, r, opt_.max_pixels);
      json meta = response_metadata(out);
      if (req.get_param_value("format") == "json") {
        meta["restored_png"] = base64(out.restored_png);
        if (out.residual_png) meta["residual_png"] = base64(*out.residual_png);
        return send_json(res, 200, meta);
      }
      std::string body;
      append_part(body, "metadata", "", "application/json", meta.dump());
      append_part(body, "restored", "restored.png", "image/png", as_string(out.restored_png));
      if (out.residual_png)
        append_part(body, "residual", "residual.png", "image/png", as_string(*out.residual_png));
      body += "--";
      body += kBoundary;
      body += "--\r\n";
      res.status = 200;
      res.set_content(body, std::string("multipart/form-data; boundary=") + kBoundary);
    } catch (const ServiceError& e) {
      send_error(res, e.status(), e.what());
    } catch (const Error& e) {
      send_error(res, 400, e.what());
    }
  });

  s.Post("/v1/admin/reload", [this](const httplib::Request& req, httplib::Response& res) {
    std::filesystem::path path;
    {
      std::lock_guard lock(model_mutex_);
      path = model_path_;
    }
    if (!req.body.empty()) {
      const auto j = json::parse(req.body, nullptr, false);
      if (j.is_discarded() || !j.is_object())
        return send_error(res, 400, "reload body must be a JSON object");
      if (j.contains("checkpoint") && j.at("checkpoint").is_string())
        path = j.at("checkpoint").get<std::string>();
    }
    if (path.empty()) return send_error(res, 400, "no checkpoint path given");
    try {
      reload(path);
    } catch (const Error& e) {
      return send_error(res, 400, std::string("reload failed, previous model kept: ") + e.what());
    }
    send_json(res, 200, model_info(*model()));
  });

  s.Post("/v1/debug/echo-map", [](const httplib::Request& req, httplib::Response& res) {
    try {
      std::string payload;
      if (req.is_multipart_form_data()) {
        if (!req.has_file("attribute_map")) throw ServiceError(400, "missing 'attribute_map' part");
        payload = req.get_file_value("attribute_map").content;
      } else {
        payload = req.body;
      }
      const AttributeMap map = decode_attribute_map(as_bytes(payload));
      const Bytes png = encode_attribute_map(map);
      res.status = 200;
      res.set_content(as_string(png), "image/png");
    } catch (const ServiceError& e) {
      send_error(res, e.status(), e.what());
    } catch (const Error& e) {
      send_error(res, 400, std::string("attribute_map: ") + e.what());
    }
  });
}

int Service::bind() {
  if (opt_.port == 0) {
    port_ = server_->bind_to_any_port(opt_.host);
  } else {
    port_ = server_->bind_to_port(opt_.host, opt_.port) ? opt_.port : -1;
  }
  if (port_ < 0)
    throw IoError("cannot bind " + opt_.host + ":" + std::to_string(opt_.port));
  return port_;
}

int Service::start() {
  bind();
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  spdlog::info("listening on http://{}:{}/v1/", opt_.host, port_);
  return port_;
}

void Service::run() {
  bind();
  spdlog::info("listening on http://{}:{}/v1/", opt_.host, port_);
  server_->listen_after_bind();
}

void Service::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace nbr
