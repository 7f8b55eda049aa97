#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "nbr/attributes.hpp"
#include "nbr/codec.hpp"
#include "nbr/error.hpp"
#include "nbr/metrics.hpp"
#include "nbr/model.hpp"

namespace httplib {
class Server;
}

namespace nbr {

inline constexpr std::size_t kDefaultMaxPixels = 4'000'000;

// A request failure with the HTTP status it maps to.
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

struct RestoreRequest {
  Bytes image;                         // PNG or JPEG
  std::optional<AttributeVector> attributes;
  std::optional<Bytes> attribute_map;  // 16-bit 3-plane PNG
  std::optional<Bytes> reference;      // clean image for metrics
  bool return_residual = false;
};

struct RestoreResponse {
  Bytes restored_png;
  std::optional<Bytes> residual_png;  // residual * 0.5 + 0.5
  int height = 0;
  int width = 0;
  double elapsed_ms = 0.0;
  std::string checkpoint_id;
  std::optional<MetricResult> metrics;
};

// Request validation and inference without the transport. Throws
// ServiceError: 400 for malformed or mismatched inputs, 413 past max_pixels.
RestoreResponse restore(const ModelCheckpoint& model, const RestoreRequest& req,
                        std::size_t max_pixels = kDefaultMaxPixels);

// Parses the "metadata" part: {"attributes": {"noise", "scale", "jpeg"},
// "return_residual": bool}. Every key is optional.
void apply_metadata(const std::string& json_text, RestoreRequest& req);

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::size_t max_pixels = kDefaultMaxPixels;
  int workers = 4;
  std::filesystem::path checkpoint;
};

// HTTP front end under /v1/: POST restore, GET model/info, GET health,
// POST admin/reload, POST debug/echo-map.
class Service {
 public:
  explicit Service(ServiceOptions opt);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Loads opt.checkpoint when set; otherwise serves 503 until reload.
  void load_initial();
  void set_model(std::shared_ptr<const ModelCheckpoint> model);
  std::shared_ptr<const ModelCheckpoint> model() const;

  // Loads a checkpoint and swaps it in; the old model keeps serving meanwhile
  // and on failure.
  void reload(const std::filesystem::path& path);

  // Binds and serves on a background thread; returns the bound port.
  int start();
  // Binds and serves on the calling thread.
  void run();
  void stop();

  // Called after the state turns "reloading", before the checkpoint is read.
  void set_reload_hook(std::function<void()> hook) { reload_hook_ = std::move(hook); }

 private:
  void install_routes();
  int bind();

  ServiceOptions opt_;
  std::unique_ptr<httplib::Server> server_;
  mutable std::mutex model_mutex_;
  std::shared_ptr<const ModelCheckpoint> model_;
  std::filesystem::path model_path_;
  std::mutex reload_mutex_;
  std::atomic<bool> reloading_{false};
  std::function<void()> reload_hook_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace nbr
