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

#include "tmjx/service.hpp"

#include <cmath>
#include <set>

#include "httplib.h"
#include "spdlog/spdlog.h"

namespace tmjx {

namespace {

nlohmann::json error_body(const std::string& message, const std::vector<FieldError>& fields = {}) {
  nlohmann::json j = {{"error", message}};
  if (!fields.empty()) {
    nlohmann::json details = nlohmann::json::array();
    for (const auto& f : fields) details.push_back({{"field", f.field}, {"message", f.message}});
    j["details"] = details;
  }
  return j;
}

nlohmann::json descriptor(const FeatureSpec& spec) {
  nlohmann::json j = {{"name", spec.name},
                      {"kind", std::string(kind_name(spec.kind))},
                      {"side", std::string(side_name(spec.side))},
                      {"expert", spec.expert}};
  switch (spec.kind) {
    case FeatureKind::kBinary:
    case FeatureKind::kOrdinal: j["levels"] = spec.levels; break;
    case FeatureKind::kNominal: j["categories"] = spec.categories; break;
    case FeatureKind::kContinuous: j["unit"] = spec.unit; break;
  }
  if (spec.mirror_of) j["mirror_of"] = *spec.mirror_of;
  return j;
}

// Decodes one values object; problems are appended to `errors`.
RawValues parse_values(const nlohmann::json& obj, const std::string& where, const TrainedModel& model,
                       std::vector<FieldError>& errors) {
  RawValues out;
  if (!obj.is_object()) {
    errors.push_back({where, "must be an object of feature -> value"});
    return out;
  }
  const auto& subset = model.encoder.feature_subset;
  const std::set<std::string> allowed(subset.begin(), subset.end());
  for (const auto& [name, value] : obj.items()) {
    const std::string field = where + "." + name;
    const FeatureSpec* spec = model.schema.find(name);
    if (spec == nullptr) {
      errors.push_back({field, "unknown feature '" + name + "'"});
      continue;
    }
    if (!allowed.contains(name)) {
      errors.push_back({field, "feature '" + name + "' is not an input of this model"});
      continue;
    }
    try {
      if (value.is_null()) continue;
      if (value.is_string()) {
        if (auto v = parse_raw_value(*spec, value.get<std::string>(), true)) out[name] = *v;
      } else if (value.is_number()) {
        RawValue v = value.get<double>();
        validate_raw_value(*spec, v);
        out[name] = v;
      } else if (value.is_boolean() && spec->kind == FeatureKind::kBinary) {
        out[name] = value.get<bool>() ? 1.0 : 0.0;
      } else {
        errors.push_back({field, "feature '" + name + "' has a value of the wrong JSON type"});
      }
    } catch (const ValidationError& e) {
      errors.push_back({field, e.what()});
    }
  }
  return out;
}

double parse_age(const nlohmann::json& obj, const std::string& field, std::vector<FieldError>& errors) {
  if (!obj.contains("age_years")) {
    errors.push_back({field, "required"});
    return 0.0;
  }
  const auto& v = obj["age_years"];
  if (!v.is_number() || !std::isfinite(v.get<double>()) || v.get<double>() < 0.0) {
    errors.push_back({field, "must be a finite number >= 0"});
    return 0.0;
  }
  return v.get<double>();
}

HttpResult from_exception(const std::exception& e) {
  if (const auto* r = dynamic_cast<const RequestError*>(&e)) return {r->status(), error_body(r->what(), r->fields())};
  if (dynamic_cast<const InvariantError*>(&e)) return {500, error_body(std::string("internal invariant breach: ") + e.what())};
  if (dynamic_cast<const ValidationError*>(&e)) return {400, error_body(e.what())};
  return {500, error_body(e.what())};
}

}  // namespace

RequestError::RequestError(int status, std::string message, std::vector<FieldError> fields)
    : ValidationError(std::move(message)), status_(status), fields_(std::move(fields)) {}

PredictInput parse_predict_request(const nlohmann::json& body, const TrainedModel& model) {
  if (!body.is_object()) throw RequestError(400, "request body must be a JSON object");
  static const std::set<std::string> kKnown = {"values", "gender", "age_years", "previous_exams"};
  std::vector<FieldError> errors;
  for (const auto& [key, _] : body.items()) {
    if (!kKnown.contains(key)) errors.push_back({key, "unknown request field"});
  }
  PredictInput in;
  if (!body.contains("values")) {
    errors.push_back({"values", "required"});
  } else {
    in.current.values = parse_values(body["values"], "values", model, errors);
  }
  if (!body.contains("gender") || !body["gender"].is_string()) {
    errors.push_back({"gender", "required: female or male"});
  } else {
    try {
      in.gender = parse_gender(body["gender"].get<std::string>());
    } catch (const ValidationError& e) {
      errors.push_back({"gender", e.what()});
    }
  }
  in.current.age_years = parse_age(body, "age_years", errors);

  const int required = model.previous_exams_required();
  std::size_t given = 0;
  if (body.contains("previous_exams")) {
    const auto& prev = body["previous_exams"];
    if (!prev.is_array()) {
      errors.push_back({"previous_exams", "must be an array"});
    } else {
      given = prev.size();
      for (std::size_t i = 0; i < prev.size(); ++i) {
        const std::string where = "previous_exams[" + std::to_string(i) + "]";
        ExamInput exam;
        if (!prev[i].is_object()) {
          errors.push_back({where, "must be an object with values and age_years"});
          continue;
        }
        exam.values = parse_values(prev[i].value("values", nlohmann::json::object()), where + ".values", model,
                                   errors);
        exam.age_years = parse_age(prev[i], where + ".age_years", errors);
        in.previous.push_back(std::move(exam));
      }
    }
  }
  if (given > static_cast<std::size_t>(required)) {
    errors.push_back({"previous_exams", "model takes exactly " + std::to_string(required) + " previous exams"});
  }
  if (!errors.empty()) throw RequestError(400, "schema violation", std::move(errors));
  if (given < static_cast<std::size_t>(required)) {
    throw RequestError(422, "missing lag block: model requires " + std::to_string(required) +
                                " previous exams, request has " + std::to_string(given),
                       {{"previous_exams", "expected " + std::to_string(required) + " entries"}});
  }
  return in;
}

nlohmann::json model_info_json(const TrainedModel& model) {
  return {{"strategy", model.strategy.to_string()},
          {"alpha", model.conformal.alpha},
          {"lambda_reg", model.conformal.lambda_reg},
          {"k_reg", model.conformal.k_reg},
          {"randomized", model.conformal.randomized},
          {"allow_empty_sets", model.conformal.allow_empty_sets},
          {"tau_hat", model.threshold.tau_hat},
          {"tau_capped", model.threshold.capped()},
          {"d", model.forest.d()},
          {"n_trees", model.forest.trees().size()},
          {"previous_exams_required", model.previous_exams_required()},
          {"schema_hash", model.schema_hash()},
          {"train_report_digest", model.train_report_digest()},
          {"model_tool_version", model.tool_version},
          {"version", std::string(kVersion)}};
}

nlohmann::json schema_json(const TrainedModel& model) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& name : model.encoder.feature_subset) features.push_back(descriptor(model.schema.at(name)));
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& c : model.encoder.layout) {
    layout.push_back({{"name", c.name}, {"base", c.base}, {"block", c.block}, {"merged_from", c.merged_from}});
  }
  return {{"strategy", model.strategy.to_string()},
          {"previous_exams_required", model.previous_exams_required()},
          {"schema_hash", model.schema_hash()},
          {"features", features},
          {"layout", layout},
          {"request_fields", {{"gender", {"female", "male"}}, {"age_years", "number >= 0"}}}};
}

nlohmann::json prediction_to_json(const Prediction& p, const TrainedModel& model) {
  nlohmann::json set = nlohmann::json::array();
  for (Label l : p.set.labels) set.push_back(label_name(l));
  nlohmann::json attributions = nlohmann::json::array();
  const auto& layout = model.encoder.layout;
  for (std::size_t c = 0; c < layout.size(); ++c) {
    const auto& raw = p.encoded.merged_raw[c];
    attributions.push_back({{"feature", layout[c].name},
                            {"shap_value", p.attribution.per_feature[c]},
                            {"raw_value", raw ? raw_value_to_json(*raw) : nlohmann::json(nullptr)},
                            {"encoded_value", p.encoded.values[c]}});
  }
  return {{"probabilities", {{"TMJ0", p.probs[0]}, {"TMJ1", p.probs[1]}}},
          {"point_label", label_name(p.point)},
          {"prediction_set", set},
          {"alpha", model.conformal.alpha},
          {"attributions", attributions},
          {"base_value", p.attribution.base_value},
          {"model_info",
           {{"strategy", model.strategy.to_string()},
            {"d", model.forest.d()},
            {"schema_hash", model.schema_hash()},
            {"version", std::string(kVersion)}}}};
}

ModelService::ModelService(std::optional<double> alpha_override) : alpha_override_(alpha_override) {
  if (alpha_override_ && !(*alpha_override_ > 0.0 && *alpha_override_ < 1.0)) {
    throw ValidationError("alpha override must be in (0, 1)");
  }
}

void ModelService::set_model(TrainedModel model, std::string path) {
  if (alpha_override_) {
    model.threshold = recalibrate(model.threshold, *alpha_override_);
    model.conformal.alpha = *alpha_override_;
  }
  auto next = std::make_shared<const TrainedModel>(std::move(model));
  std::lock_guard lock(mu_);
  model_ = std::move(next);
  if (!path.empty()) model_path_ = std::move(path);
}

void ModelService::load(const std::string& path) { set_model(TrainedModel::load(path), path); }

bool ModelService::has_model() const {
  std::lock_guard lock(mu_);
  return model_ != nullptr;
}

std::shared_ptr<const TrainedModel> ModelService::snapshot() const {
  std::lock_guard lock(mu_);
  return model_;
}

std::shared_ptr<const TrainedModel> ModelService::acquire(HttpResult& unavailable) const {
  if (reloading_.load()) {
    unavailable = {503, error_body("model reload in progress")};
    return nullptr;
  }
  auto m = snapshot();
  if (!m) unavailable = {503, error_body("no model loaded")};
  return m;
}

HttpResult ModelService::handle_schema() const {
  HttpResult r;
  const auto model = acquire(r);
  if (!model) return r;
  return {200, schema_json(*model)};
}

HttpResult ModelService::handle_model_info() const {
  HttpResult r;
  const auto model = acquire(r);
  if (!model) return r;
  return {200, model_info_json(*model)};
}

HttpResult ModelService::predict_body(const nlohmann::json& request, const TrainedModel& model) const {
  try {
    const PredictInput input = parse_predict_request(request, model);
    const Prediction p = predict_one(model, to_sample_row(input));
    return {200, prediction_to_json(p, model)};
  } catch (const std::exception& e) {
    return from_exception(e);
  }
}

HttpResult ModelService::handle_predict(const std::string& body) const {
  HttpResult r;
  const auto model = acquire(r);
  if (!model) return r;
  nlohmann::json request;
  try {
    request = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return {400, error_body(std::string("request body is not valid JSON: ") + e.what())};
  }
  return predict_body(request, *model);
}

HttpResult ModelService::handle_whatif(const std::string& body) const {
  HttpResult r;
  const auto model = acquire(r);
  if (!model) return r;
  nlohmann::json request;
  try {
    request = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return {400, error_body(std::string("request body is not valid JSON: ") + e.what())};
  }
  if (!request.is_object() || !request.contains("base") || !request["base"].is_object()) {
    return {400, error_body("what-if request needs a 'base' predict request object")};
  }
  const nlohmann::json overrides = request.value("overrides", nlohmann::json::array());
  if (!overrides.is_array()) return {400, error_body("'overrides' must be an array")};

  nlohmann::json results = nlohmann::json::array();
  const auto emit = [&](const nlohmann::json& item_request, const nlohmann::json& override_spec) {
    const HttpResult item = predict_body(item_request, *model);
    nlohmann::json entry = {{"status", item.status}, {"override", override_spec}};
    entry[item.status == 200 ? "response" : "error"] = item.body;
    results.push_back(std::move(entry));
  };
  emit(request["base"], nullptr);
  for (const auto& ov : overrides) {
    nlohmann::json item = request["base"];
    if (!ov.is_object()) {
      results.push_back({{"status", 400}, {"override", ov}, {"error", error_body("override must be an object")}});
      continue;
    }
    if (!item.contains("values") || !item["values"].is_object()) item["values"] = nlohmann::json::object();
    for (const auto& [name, value] : ov.items()) item["values"][name] = value;
    emit(item, ov);
  }
  return {200, {{"results", results}}};
}

HttpResult ModelService::handle_reload(const std::string& body) {
  std::unique_lock guard(reload_mu_, std::try_to_lock);
  if (!guard.owns_lock()) return {503, error_body("model reload in progress")};
  std::string path;
  {
    std::lock_guard lock(mu_);
    path = model_path_;
  }
  if (!body.empty()) {
    try {
      const auto j = nlohmann::json::parse(body);
      if (j.contains("model_path")) path = j.at("model_path").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      return {400, error_body(std::string("reload body is not valid JSON: ") + e.what())};
    }
  }
  if (path.empty()) return {400, error_body("no model path to reload from")};
  reloading_.store(true);
  HttpResult result;
  try {
    load(path);
    result = {200, model_info_json(*snapshot())};
    spdlog::info("reloaded model from {}", path);
  } catch (const IoError& e) {
    result = {400, error_body(e.what())};
  } catch (const std::exception& e) {
    result = from_exception(e);
  }
  reloading_.store(false);
  return result;
}

HttpServer::HttpServer(ModelService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  const auto reply = [](httplib::Response& res, const HttpResult& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server_->Get("/schema", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service_.handle_schema());
  });
  server_->Get("/model/info", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service_.handle_model_info());
  });
  server_->Post("/predict", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service_.handle_predict(req.body));
  });
  server_->Post("/whatif", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service_.handle_whatif(req.body));
  });
  server_->Post("/admin/reload", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service_.handle_reload(req.body));
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void HttpServer::run(const std::string& host, int port) {
  if (!server_->bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  spdlog::info("serving on http://{}:{}", host, port);
  server_->listen_after_bind();
}

void HttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace tmjx
