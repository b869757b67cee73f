#ifndef METAEOL_HTTP_BACKEND_HPP
#define METAEOL_HTTP_BACKEND_HPP

#include <chrono>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "metaeol/backend.hpp"
#include "metaeol/error.hpp"

namespace metaeol {

// JSON flavour whose floating-point type is float, so vector entries are
// parsed straight from their decimal text into 32-bit values.
using json_f32 = nlohmann::basic_json<std::map, std::vector, std::string, bool, std::int64_t, std::uint64_t, float>;

struct HttpOptions {
  std::string base_url = "http://127.0.0.1:8000";
  int timeout_ms = 60000;
  int retries = 2;  // extra attempts on transport failure or 503
};

// Client for the inference bridge:
//   GET  /v1/info           -> {model_id, num_layers, hidden_dim}
//   POST /v1/hidden_states  {prompts, layer_index} -> {dim, vectors}
//   POST /v1/topk           {prompt, k} -> {entries: [{token, p}]}
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpOptions options) : options_(std::move(options)) {}

  ModelInfo info() const override {
    std::lock_guard lock(info_mutex_);
    if (!info_) {
      const auto body = nlohmann::json::parse(request("GET", "/v1/info", ""));
      ModelInfo info{body.at("model_id").get<std::string>(), body.at("num_layers").get<int>(),
                     body.at("hidden_dim").get<int>()};
      if (info.num_layers < 1 || info.hidden_dim < 1) {
        throw Error(ErrorKind::BackendUnavailable, "bridge reported an invalid model shape");
      }
      info_ = info;
    }
    return *info_;
  }

  std::vector<PromptResult> hidden_states(std::span<const std::string> prompts, int layer_index) override {
    nlohmann::json req{{"prompts", std::vector<std::string>(prompts.begin(), prompts.end())},
                       {"layer_index", layer_index}};
    int status = 0;
    const auto text = request("POST", "/v1/hidden_states", req.dump(), &status);
    json_f32 body;
    try {
      body = json_f32::parse(text);
    } catch (const std::exception& e) {
      throw Error(ErrorKind::BackendUnavailable, std::string("unparseable bridge response: ") + e.what());
    }
    std::vector<PromptResult> out(prompts.size());
    if (status == 422) {
      // Per-prompt failures; anything listed in "errors" overflowed, any
      // non-null entry in "vectors" is still valid.
      std::vector<bool> failed(prompts.size(), !body.contains("errors"));
      if (body.contains("errors")) {
        for (const auto& e : body["errors"]) {
          const auto i = e.at("index").get<std::size_t>();
          if (i < failed.size()) {
            failed[i] = true;
            out[i].diagnostic = e.value("error", std::string("context overflow"));
          }
        }
      }
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (failed[i]) {
          out[i].context_overflow = true;
          if (out[i].diagnostic.empty()) out[i].diagnostic = "context overflow";
        } else if (body.contains("vectors") && i < body["vectors"].size() && !body["vectors"][i].is_null()) {
          out[i].values = body["vectors"][i].get<std::vector<float>>();
        } else {
          out[i].context_overflow = true;
          out[i].diagnostic = "no vector returned";
        }
      }
      return out;
    }
    const auto& vectors = body.at("vectors");
    if (vectors.size() != prompts.size()) {
      throw Error(ErrorKind::BackendUnavailable, "bridge returned " + std::to_string(vectors.size()) + " vectors for " +
                                                     std::to_string(prompts.size()) + " prompts");
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i].values = vectors[i].get<std::vector<float>>();
    return out;
  }

  TopKPrediction top_k(const std::string& prompt, int k) override {
    nlohmann::json req{{"prompt", prompt}, {"k", k}};
    int status = 0;
    const auto text = request("POST", "/v1/topk", req.dump(), &status, /*allow_not_supported=*/true);
    if (status == 404 || status == 501) throw Error(ErrorKind::NotSupported, "bridge does not serve /v1/topk");
    const auto body = nlohmann::json::parse(text);
    TopKPrediction pred;
    for (const auto& e : body.at("entries")) {
      pred.entries.push_back({e.at("token").get<std::string>(), e.at("p").get<double>(), e.value("id", std::int64_t{-1})});
    }
    return pred;
  }

  const HttpOptions& options() const noexcept { return options_; }

 private:
  std::string request(const std::string& method, const std::string& path, const std::string& body,
                      int* status_out = nullptr, bool allow_not_supported = false) const {
    std::string last_error;
    for (int attempt = 0; attempt <= options_.retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(100 * attempt));
      httplib::Client client(options_.base_url);
      const auto timeout = std::chrono::milliseconds(options_.timeout_ms);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      auto res = method == "GET" ? client.Get(path) : client.Post(path, body, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 503) {
        last_error = "bridge unavailable (503): " + res->body;
        continue;
      }
      if (status_out != nullptr) *status_out = res->status;
      if (res->status == 200 || res->status == 422) return res->body;
      if (allow_not_supported && (res->status == 404 || res->status == 501)) return res->body;
      if (res->status == 400) {
        throw Error(path == "/v1/hidden_states" ? ErrorKind::LayerOutOfRange : ErrorKind::Usage,
                    "bridge rejected request to " + path + ": " + res->body);
      }
      throw Error(ErrorKind::BackendUnavailable, path + " returned HTTP " + std::to_string(res->status));
    }
    throw Error(ErrorKind::BackendUnavailable, options_.base_url + path + ": " + last_error);
  }

  HttpOptions options_;
  mutable std::mutex info_mutex_;
  mutable std::optional<ModelInfo> info_;
};

}  // namespace metaeol

#endif  // METAEOL_HTTP_BACKEND_HPP
