#pragma once

#include <atomic>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "gimt/core/error.hpp"
#include "gimt/service/session.hpp"

namespace gimt::service {

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

// Transport-free REST routing:
//   POST /sessions, GET /sessions, GET /sessions/{id},
//   POST /sessions/{id}/classes, /active_class, /mode, /lambda_blend, /train,
//   GET /sessions/{id}/events, GET /jobs/{id}, GET /config, GET /health.
// Library errors become {"v":1,"error":{"code","message"}} with a matching
// HTTP status.
HttpReply HandleHttp(SessionManager& manager, std::string_view method, std::string_view target,
                     std::string_view body);

int HttpStatusFor(Errc code);

// HTTP + WebSocket front end (WS /sessions/{id}/stream). One thread per
// connection; frames of a session are processed latest-wins on a per-connection
// worker.
class Server {
 public:
  explicit Server(SessionManager& manager, std::filesystem::path static_dir = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Port 0 picks a free port; see port().
  void Start(const std::string& address, unsigned short port);
  void Stop();
  unsigned short port() const { return port_; }

  struct Impl;

 private:
  SessionManager& manager_;
  std::filesystem::path static_dir_;
  std::unique_ptr<Impl> impl_;
  unsigned short port_ = 0;
};

}  // namespace gimt::service
