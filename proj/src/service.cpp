#include "quantart/service.hpp"

#include <httplib.h>

#include "quantart/checkpoint.hpp"
#include "quantart/hash.hpp"

namespace quantart {

namespace {

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  res.status = status;
  res.set_content(nlohmann::json{{"code", code}, {"message", message}}.dump(), "application/json");
}

class InflightSlot {
 public:
  InflightSlot(std::atomic<std::size_t>& n, std::size_t limit) : n_(n) {
    ok_ = n_.fetch_add(1) < limit;
  }
  ~InflightSlot() { n_.fetch_sub(1); }
  bool ok() const { return ok_; }

 private:
  std::atomic<std::size_t>& n_;
  bool ok_;
};

double read_unit(const nlohmann::json& body, const char* key) {
  if (!body.contains(key)) return 1.0;
  const auto& v = body.at(key);
  if (!v.is_number()) throw std::invalid_argument(std::string(key) + " must be a number");
  return v.get<double>();
}

}  // namespace

StylizeService::StylizeService(ServiceOptions opt) : opt_(std::move(opt)), server_(std::make_unique<httplib::Server>()) {
  server_->set_payload_max_length(opt_.max_payload);
  // SO_REUSEADDR only; httplib's default SO_REUSEPORT would let a second server share a busy port.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  // Statuses httplib produces itself (404, 413, ...) get the same JSON shape.
  server_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
    const std::string code = res.status == 413 ? "payload_too_large" : res.status == 404 ? "not_found" : "http_error";
    send_error(res, res.status, code, httplib::status_message(res.status));
    return httplib::Server::HandlerResponse::Handled;
  });
  routes();
}

StylizeService::~StylizeService() {
  stop();
  if (loader_.joinable()) loader_.join();
}

int StylizeService::bind() {
  if (opt_.port == 0) {
    port_ = server_->bind_to_any_port(opt_.host);
    if (port_ <= 0) throw IoError("cannot bind any port on " + opt_.host);
  } else {
    if (!server_->bind_to_port(opt_.host, opt_.port))
      throw IoError("cannot bind " + opt_.host + ":" + std::to_string(opt_.port) + " (port busy?)");
    port_ = opt_.port;
  }
  return port_;
}

void StylizeService::listen() { server_->listen_after_bind(); }

void StylizeService::start_background() {
  listener_ = std::thread([this] { listen(); });
  server_->wait_until_ready();
}

void StylizeService::stop() {
  if (server_) server_->stop();
  if (listener_.joinable()) listener_.join();
}

void StylizeService::set_model(ModelBundle<float> bundle, std::string model_hash) {
  auto m = std::make_shared<const Model>(Model{std::move(bundle), std::move(model_hash)});
  std::lock_guard lock(mu_);
  model_ = std::move(m);
  load_error_.clear();
}

void StylizeService::set_load_error(std::string message) {
  std::lock_guard lock(mu_);
  load_error_ = std::move(message);
}

void StylizeService::load_async(const std::filesystem::path& checkpoint) {
  loader_ = std::thread([this, checkpoint] {
    try {
      const auto bytes = read_file(checkpoint);
      auto bundle = deserialize_bundle<float>(bytes);
      set_model(std::move(bundle), sha256_hex(bytes));
    } catch (const std::exception& e) {
      set_load_error(checkpoint.string() + ": " + e.what());
    }
  });
}

bool StylizeService::ready() const { return model() != nullptr; }

std::shared_ptr<const StylizeService::Model> StylizeService::model() const {
  std::lock_guard lock(mu_);
  return model_;
}

void StylizeService::routes() {
  auto unavailable = [this](httplib::Response& res) {
    std::string err;
    {
      std::lock_guard lock(mu_);
      err = load_error_;
    }
    if (err.empty())
      send_error(res, 503, "loading", "model is still loading");
    else
      send_error(res, 503, "model_unavailable", err);
  };

  server_->Get("/api/v1/health", [this, unavailable](const httplib::Request&, httplib::Response& res) {
    const auto m = model();
    if (!m) {
      res.status = 503;
      res.set_content(nlohmann::json{{"status", "loading"}, {"model_hash", nullptr}}.dump(), "application/json");
      return;
    }
    res.set_content(nlohmann::json{{"status", "ok"}, {"model_hash", m->hash}}.dump(), "application/json");
  });

  server_->Get("/api/v1/config", [this, unavailable](const httplib::Request&, httplib::Response& res) {
    const auto m = model();
    if (!m) return unavailable(res);
    nlohmann::json j = {{"model", to_json(m->bundle.config)},
                        {"stage", m->bundle.stage},
                        {"stage1_hash", m->bundle.stage1_hash},
                        {"model_hash", m->hash},
                        {"provenance", m->bundle.provenance},
                        {"fusion", opt_.inference.mode == DecoderFusion::parameters ? "parameters" : "outputs"},
                        {"max_side", opt_.inference.max_side},
                        {"max_concurrent", opt_.max_concurrent},
                        {"max_payload_bytes", opt_.max_payload}};
    res.set_content(j.dump(), "application/json");
  });

  server_->Post("/api/v1/stylize", [this, unavailable](const httplib::Request& req, httplib::Response& res) {
    InflightSlot slot(inflight_, opt_.max_concurrent);
    if (!slot.ok()) return send_error(res, 429, "too_many_requests", "concurrent request limit reached");
    const auto m = model();
    if (!m) return unavailable(res);

    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const std::exception& e) {
      return send_error(res, 400, "invalid_json", e.what());
    }
    if (!body.is_object()) return send_error(res, 400, "invalid_json", "request body must be a JSON object");
    for (const char* key : {"content_b64", "style_b64"})
      if (!body.contains(key) || !body.at(key).is_string())
        return send_error(res, 400, "missing_field", std::string(key) + " (base64 string) is required");
    FusionParams params;
    try {
      params.alpha = read_unit(body, "alpha");
      params.beta = read_unit(body, "beta");
    } catch (const std::exception& e) {
      return send_error(res, 400, "invalid_param", e.what());
    }
    try {
      params.validate();
    } catch (const ValueError& e) {
      return send_error(res, 400, "param_out_of_range", e.what());
    }
    if (params.alpha != 0.0 && !m->bundle.quantized())
      return send_error(res, 400, "param_out_of_range", "this model has no quantized path; alpha must be 0");

    Image content, style;
    try {
      content = decode_image(base64_decode(body.at("content_b64").get<std::string>()));
      style = decode_image(base64_decode(body.at("style_b64").get<std::string>()));
    } catch (const std::exception& e) {
      return send_error(res, 400, "invalid_image", e.what());
    }
    try {
      const auto out = stylize_image(content, style, params, m->bundle, opt_.inference);
      const auto png = encode_png(out);
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  });
}

}  // namespace quantart
