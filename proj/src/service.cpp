// SPDX-License-Identifier: Apache-2.0
#include "protoedit/service.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>

#include "httplib.h"
#include "protoedit/error.hpp"

namespace protoedit::service {

namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

Reply error_reply(int status, const std::string& message) {
  return {status, json{{"error", message}}, {}};
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()) % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof(out), "%s.%03dZ", buf, static_cast<int>(ms.count()));
  return out;
}

std::string server_timing(const pipeline::Timing& t) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "retrieval;dur=%.3f, edit;dur=%.3f, rerank;dur=%.3f, total;dur=%.3f",
                t.retrieval_ms, t.edit_ms, t.rerank_ms, t.total_ms);
  return buf;
}

}  // namespace

Service::Service(pipeline::PipelineConfig config, ServiceOptions options)
    : config_(std::move(config)), options_(std::move(options)) {
  config_.validate();
  if (!options_.request_log.empty()) {
    log_.open(options_.request_log, std::ios::app);
    if (!log_) throw IoError("cannot open request log " + options_.request_log.string());
  }
}

Service::~Service() { stop(); }

void Service::reload() {
  loading_ = true;
  try {
    auto fresh = pipeline::Snapshot::load(config_);
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(fresh);
  } catch (...) {
    loading_ = false;
    throw;
  }
  loading_ = false;
}

std::shared_ptr<const pipeline::Snapshot> Service::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

Reply Service::health() const {
  const auto snap = snapshot();
  if (!snap) return {503, json{{"status", "loading"}, {"model_hashes", json::object()}}, {}};
  json hashes{{"editor", snap->editor_hash}, {"vocab", snap->vocab_hash}};
  hashes["matcher"] = snap->matcher ? json(snap->matcher_hash) : json(nullptr);
  return {200, json{{"status", loading_ ? "reloading" : "ok"}, {"model_hashes", hashes}}, {}};
}

Reply Service::config() const {
  const auto snap = snapshot();
  if (!snap) return error_reply(503, "model is loading");
  return {200, json(snap->config), {}};
}

Reply Service::chat(const std::string& body) {
  const auto started = Clock::now();
  std::string variant_name;
  Reply reply;
  auto finish = [&](Reply r) {
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - started).count();
    log_request(variant_name, r.status, ms);
    return r;
  };

  const auto snap = snapshot();
  if (!snap) return finish(error_reply(503, "model is loading"));

  json request = json::parse(body, nullptr, false);
  if (request.is_discarded() || !request.is_object()) {
    return finish(error_reply(400, "request body must be a JSON object"));
  }
  if (!request.contains("context") || !request["context"].is_string()) {
    return finish(error_reply(400, "'context' must be a string"));
  }
  std::optional<pipeline::Variant> variant;
  variant_name = std::string(pipeline::to_string(snap->config.variant));
  if (request.contains("variant") && !request["variant"].is_null()) {
    if (!request["variant"].is_string()) return finish(error_reply(400, "'variant' must be a string"));
    variant_name = request["variant"].get<std::string>();
    try {
      variant = pipeline::variant_from_string(variant_name);
    } catch (const InvalidArgument& e) {
      return finish(error_reply(400, e.what()));
    }
  }
  std::optional<int> k;
  if (request.contains("k") && !request["k"].is_null()) {
    if (!request["k"].is_number_integer() || request["k"].get<long long>() < 1 ||
        request["k"].get<long long>() > 1000) {
      return finish(error_reply(400, "'k' must be an integer in [1, 1000]"));
    }
    k = request["k"].get<int>();
  }
  const bool with_timing = request.value("timing", false);

  try {
    const pipeline::Pipeline pipe(snap);
    const auto trace = pipe.run(request["context"].get<std::string>(), variant, k);
    json out = trace;
    if (!with_timing) out.erase("timing_ms");
    return finish({200, std::move(out), server_timing(trace.timing)});
  } catch (const InvalidArgument& e) {
    return finish(error_reply(400, e.what()));
  } catch (const std::exception& e) {
    return finish(error_reply(500, e.what()));
  }
}

Reply Service::reload_request() {
  try {
    reload();
  } catch (const std::exception& e) {
    return error_reply(500, std::string("reload failed: ") + e.what());
  }
  return health();
}

void Service::log_request(std::string_view variant, int status, double latency_ms) {
  if (!log_.is_open()) return;
  const json line{{"timestamp", utc_timestamp()},
                  {"variant", std::string(variant)},
                  {"status", status},
                  {"latency_ms", latency_ms}};
  std::lock_guard lock(log_mutex_);
  log_ << line.dump() << '\n';
  log_.flush();
}

void Service::install_routes() {
  server_ = std::make_unique<httplib::Server>();
  auto send = [](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    if (!r.server_timing.empty()) res.set_header("Server-Timing", r.server_timing);
    res.set_content(r.body.dump(), "application/json");
  };
  server_->Get("/health", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, health());
  });
  server_->Get("/config", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, config());
  });
  server_->Post("/chat", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, chat(req.body));
  });
  server_->Post("/reload", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, reload_request());
  });
  server_->set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server_->Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

int Service::start() {
  if (server_) throw InvalidArgument("service already started");
  install_routes();
  int port = options_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(options_.host);
  } else if (!server_->bind_to_port(options_.host, port)) {
    port = -1;
  }
  if (port < 0) {
    server_.reset();
    throw IoError("cannot bind " + options_.host + ":" + std::to_string(options_.port));
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void Service::run() {
  if (server_) throw InvalidArgument("service already started");
  install_routes();
  if (!server_->bind_to_port(options_.host, options_.port)) {
    server_.reset();
    throw IoError("cannot bind " + options_.host + ":" + std::to_string(options_.port));
  }
  server_->listen_after_bind();
}

void Service::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace protoedit::service
