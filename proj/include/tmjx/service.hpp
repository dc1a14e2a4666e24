/*
 * Copyright 2026 The tmjx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// HTTP JSON API over one loaded model:
//   GET  /schema        raw-entry feature descriptors and merged layout
//   POST /predict       probabilities, conformal set, SHAP attributions
//   POST /whatif        baseline plus one response per override
//   GET  /model/info    strategy, conformal settings, digests
//   POST /admin/reload  swap in a model file
// Handlers are pure over an immutable model snapshot; requests that arrive
// while a reload is running get 503.

#ifndef TMJX_SERVICE_HPP_
#define TMJX_SERVICE_HPP_

#include <atomic>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "json.hpp"
#include "tmjx/model.hpp"

namespace httplib {
class Server;
}

namespace tmjx {

struct HttpResult {
  int status = 200;
  nlohmann::json body;
};

// Field-level problems found while decoding a request.
struct FieldError {
  std::string field;
  std::string message;
};

class RequestError : public ValidationError {
 public:
  RequestError(int status, std::string message, std::vector<FieldError> fields = {});
  int status() const { return status_; }
  const std::vector<FieldError>& fields() const { return fields_; }

 private:
  int status_;
  std::vector<FieldError> fields_;
};

// Decodes a PredictRequest body against `model`. Throws RequestError with
// 400 for schema violations and 422 when lag blocks are missing.
PredictInput parse_predict_request(const nlohmann::json& body, const TrainedModel& model);

nlohmann::json prediction_to_json(const Prediction& p, const TrainedModel& model);
nlohmann::json model_info_json(const TrainedModel& model);
nlohmann::json schema_json(const TrainedModel& model);

class ModelService {
 public:
  explicit ModelService(std::optional<double> alpha_override = std::nullopt);

  // Applies the alpha override, if any, then swaps the model in.
  void set_model(TrainedModel model, std::string path = {});
  void load(const std::string& path);
  bool has_model() const;
  std::shared_ptr<const TrainedModel> snapshot() const;

  HttpResult handle_schema() const;
  HttpResult handle_predict(const std::string& body) const;
  HttpResult handle_whatif(const std::string& body) const;
  HttpResult handle_model_info() const;
  HttpResult handle_reload(const std::string& body);

 private:
  // Null with a 503 result when no model is usable right now.
  std::shared_ptr<const TrainedModel> acquire(HttpResult& unavailable) const;
  HttpResult predict_body(const nlohmann::json& request, const TrainedModel& model) const;

  mutable std::mutex mu_;
  std::mutex reload_mu_;
  std::shared_ptr<const TrainedModel> model_;
  std::string model_path_;
  std::optional<double> alpha_override_;
  std::atomic<bool> reloading_{false};
};

class HttpServer {
 public:
  explicit HttpServer(ModelService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host, int port);
  // Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

 private:
  ModelService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace tmjx

#endif  // TMJX_SERVICE_HPP_
