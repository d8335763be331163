#pragma once
// HTTP inference service.
//
//   GET  /api/v1/health   {status, model_hash}; 503 while the model loads
//   GET  /api/v1/config   model metadata
//   POST /api/v1/stylize  {content_b64, style_b64, alpha, beta} -> image/png
//
// Errors are JSON {code, message}. Requests beyond max_concurrent get 429,
// bodies beyond max_payload get 413.

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "quantart/inference.hpp"

namespace httplib {
class Server;
}

namespace quantart {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::size_t max_concurrent = 4;
  std::size_t max_payload = 32u << 20;
  InferenceOptions inference;
};

class StylizeService {
 public:
  explicit StylizeService(ServiceOptions opt);
  ~StylizeService();
  StylizeService(const StylizeService&) = delete;
  StylizeService& operator=(const StylizeService&) = delete;

  // Binds the port; throws IoError when it is taken. Returns the bound port.
  int bind();
  // Serves until stop(). bind() must have succeeded.
  void listen();
  void start_background();
  void stop();

  // Model management. Until a model is set, every endpoint answers 503.
  void set_model(ModelBundle<float> bundle, std::string model_hash);
  void load_async(const std::filesystem::path& checkpoint);
  void set_load_error(std::string message);
  bool ready() const;

  int port() const { return port_; }

 private:
  struct Model {
    ModelBundle<float> bundle;
    std::string hash;
  };
  std::shared_ptr<const Model> model() const;
  void routes();

  ServiceOptions opt_;
  std::unique_ptr<httplib::Server> server_;
  int port_ = 0;
  mutable std::mutex mu_;
  std::shared_ptr<const Model> model_;
  std::string load_error_;
  std::atomic<std::size_t> inflight_{0};
  std::thread listener_;
  std::thread loader_;
};

}  // namespace quantart
