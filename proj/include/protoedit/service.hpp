// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "json.hpp"
#include "protoedit/pipeline.hpp"

namespace httplib {
class Server;
}

namespace protoedit::service {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path request_log;  // JSON lines; empty disables
};

/// A handled request, independent of the transport.
struct Reply {
  int status = 200;
  nlohmann::json body;
  std::string server_timing;  // Server-Timing header value, may be empty
};

class Service {
 public:
  Service(pipeline::PipelineConfig config, ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Loads a snapshot from the current config and installs it. On failure the
  /// previous snapshot (if any) stays active and the exception propagates.
  void reload();

  /// Binds and serves on a background thread. Returns the bound port.
  int start();
  /// Binds and serves on the calling thread until stop().
  void run();
  void stop();

  [[nodiscard]] std::shared_ptr<const pipeline::Snapshot> snapshot() const;
  [[nodiscard]] bool ready() const { return snapshot() != nullptr; }

  // Request handlers, usable without a socket.
  [[nodiscard]] Reply health() const;
  [[nodiscard]] Reply config() const;
  /// `body` is the raw request body of POST /chat.
  [[nodiscard]] Reply chat(const std::string& body);
  [[nodiscard]] Reply reload_request();

 private:
  void install_routes();
  void log_request(std::string_view variant, int status, double latency_ms);

  pipeline::PipelineConfig config_;
  ServiceOptions options_;
  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const pipeline::Snapshot> snapshot_;
  std::atomic<bool> loading_{false};
  std::mutex log_mutex_;
  std::ofstream log_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace protoedit::service
