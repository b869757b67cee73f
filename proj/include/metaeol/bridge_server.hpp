#ifndef METAEOL_BRIDGE_SERVER_HPP
#define METAEOL_BRIDGE_SERVER_HPP

#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "metaeol/backend.hpp"
#include "metaeol/http_backend.hpp"

namespace metaeol {

// Serves any Backend over the bridge wire protocol. Used to stand in for the
// model sidecar in tests and local runs.
class BridgeServer {
 public:
  explicit BridgeServer(Backend& backend) : backend_(backend) {
    server_.Get("/v1/info", [this](const httplib::Request&, httplib::Response& res) {
      const auto info = backend_.info();
      nlohmann::json body{{"model_id", info.model_id}, {"num_layers", info.num_layers}, {"hidden_dim", info.hidden_dim}};
      res.set_content(body.dump(), "application/json");
    });
    server_.Post("/v1/hidden_states", [this](const httplib::Request& req, httplib::Response& res) {
      handle_hidden_states(req, res);
    });
    server_.Post("/v1/topk", [this](const httplib::Request& req, httplib::Response& res) { handle_topk(req, res); });
  }

  BridgeServer(const BridgeServer&) = delete;
  BridgeServer& operator=(const BridgeServer&) = delete;

  ~BridgeServer() { stop(); }

  // Binds (port 0 picks a free one) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw Error(ErrorKind::IoError, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  // Serves on the calling thread until stopped.
  void listen(const std::string& host, int port) {
    if (!server_.listen(host, port)) throw Error(ErrorKind::IoError, "cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const noexcept { return port_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  static void fail(httplib::Response& res, int status, const std::string& message) {
    res.status = status;
    res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
  }

  void handle_hidden_states(const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const std::exception&) {
      return fail(res, 400, "invalid JSON");
    }
    if (!body.contains("prompts") || !body["prompts"].is_array() || body["prompts"].empty() ||
        !body.contains("layer_index") || !body["layer_index"].is_number_integer()) {
      return fail(res, 400, "expected {prompts: [str], layer_index: int}");
    }
    const auto prompts = body["prompts"].get<std::vector<std::string>>();
    const int layer = body["layer_index"].get<int>();
    const auto info = backend_.info();
    if (layer >= 0 || -layer > info.num_layers) return fail(res, 400, "layer_index out of range");
    std::vector<PromptResult> results;
    try {
      results = backend_.hidden_states(prompts, layer);
    } catch (const std::exception& e) {
      return fail(res, 503, e.what());
    }
    json_f32 out;
    out["dim"] = info.hidden_dim;
    out["vectors"] = json_f32::array();
    json_f32 errors = json_f32::array();
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (results[i].ok()) {
        out["vectors"].push_back(results[i].values);
      } else {
        out["vectors"].push_back(nullptr);
        errors.push_back({{"index", i}, {"error", results[i].diagnostic}});
      }
    }
    if (!errors.empty()) {
      out["errors"] = errors;
      res.status = 422;
    }
    res.set_content(out.dump(), "application/json");
  }

  void handle_topk(const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const std::exception&) {
      return fail(res, 400, "invalid JSON");
    }
    if (!body.contains("prompt") || !body.contains("k") || !body["k"].is_number_integer()) {
      return fail(res, 400, "expected {prompt: str, k: int}");
    }
    const int k = body["k"].get<int>();
    if (k < 0) return fail(res, 400, "k must be >= 0");
    TopKPrediction pred;
    try {
      pred = backend_.top_k(body["prompt"].get<std::string>(), k);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::NotSupported) return fail(res, 501, e.what());
      return fail(res, 503, e.what());
    }
    nlohmann::json out{{"entries", nlohmann::json::array()}};
    for (const auto& e : pred.entries) out["entries"].push_back({{"token", e.token}, {"p", e.probability}, {"id", e.token_id}});
    res.set_content(out.dump(), "application/json");
  }

  Backend& backend_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace metaeol

#endif  // METAEOL_BRIDGE_SERVER_HPP
