#include "gimt/service/server.hpp"

#include <sys/socket.h>

#include <condition_variable>
#include <fstream>
#include <sstream>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "gimt/core/error.hpp"

namespace gimt::service {
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

int HttpStatusFor(Errc code) {
  switch (code) {
    case Errc::kNotFound: return 404;
    case Errc::kConflict:
    case Errc::kState: return 409;
    case Errc::kInitialization:
    case Errc::kInference:
    case Errc::kIo: return 500;
    default: return 400;
  }
}

namespace {

std::vector<std::string> SplitPath(std::string_view target) {
  const auto q = target.find('?');
  if (q != std::string_view::npos) target = target.substr(0, q);
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= target.size()) {
    const auto slash = target.find('/', start);
    const auto end = slash == std::string_view::npos ? target.size() : slash;
    if (end > start) parts.emplace_back(target.substr(start, end - start));
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  return parts;
}

json ErrorBody(std::string_view code, std::string_view message) {
  return {{"v", kProtocolVersion},
          {"error", {{"code", std::string(code)}, {"message", std::string(message)}}}};
}

json ParseBody(std::string_view body) {
  if (body.empty()) return json::object();
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw Error(Errc::kValidation, std::string("request body is not JSON: ") + e.what());
  }
}

template <typename T>
T BodyField(const json& body, const char* name) {
  const auto it = body.find(name);
  if (it == body.end()) throw Error(Errc::kValidation, std::string("missing field '") + name + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::kValidation, std::string("field '") + name + "' has the wrong type");
  }
}

json EventsJson(const std::vector<SessionEvent>& events) {
  json out = json::array();
  for (const auto& e : events) out.push_back({{"seq", e.seq}, {"type", e.type}, {"data", e.data}});
  return out;
}

HttpReply Route(SessionManager& m, std::string_view method, std::string_view target,
                std::string_view raw_body) {
  const auto p = SplitPath(target);
  const bool get = method == "GET";
  const bool post = method == "POST";
  if (get && p.size() == 1 && p[0] == "health") return {200, {{"ok", true}}};
  if (get && p.size() == 1 && p[0] == "config") return {200, ToJson(m.config())};
  if (p.size() == 2 && p[0] == "jobs" && get) return {200, ToJson(m.Job(p[1]))};
  if (!p.empty() && p[0] == "sessions") {
    if (p.size() == 1 && post) {
      const json body = ParseBody(raw_body);
      std::optional<double> lambda;
      if (body.contains("lambda_blend")) lambda = BodyField<double>(body, "lambda_blend");
      return {201, m.Create(lambda)->Describe()};
    }
    if (p.size() == 1 && get) return {200, {{"sessions", m.SessionIds()}}};
    if (p.size() >= 2) {
      auto session = m.Get(p[1]);
      if (p.size() == 2 && get) return {200, session->Describe()};
      if (p.size() == 3 && get && p[2] == "events") return {200, EventsJson(session->Events())};
      if (p.size() == 3 && post) {
        const json body = ParseBody(raw_body);
        if (p[2] == "classes") {
          const auto c = session->AddClass(BodyField<std::string>(body, "label"));
          return {201, {{"id", c.class_id}, {"label", c.label}, {"sample_count", c.sample_count}}};
        }
        if (p[2] == "active_class") {
          session->SetActiveClass(BodyField<int>(body, "class_id"));
          return {200, session->Describe()};
        }
        if (p[2] == "mode") {
          const auto mode = data::ParseMode(BodyField<std::string>(body, "mode"));
          if (!mode) throw Error(Errc::kValidation, "mode must be 'teaching' or 'assessment'");
          session->SetMode(*mode);
          return {200, session->Describe()};
        }
        if (p[2] == "lambda_blend") {
          session->SetLambdaBlend(BodyField<double>(body, "lambda_blend"));
          return {200, session->Describe()};
        }
        if (p[2] == "train") return {202, ToJson(m.StartTraining(session->id(), body))};
      }
    }
  }
  return {404, ErrorBody("not_found", "no route for " + std::string(method) + " " +
                                          std::string(target))};
}

}  // namespace

HttpReply HandleHttp(SessionManager& manager, std::string_view method, std::string_view target,
                     std::string_view body) {
  try {
    return Route(manager, method, target, body);
  } catch (const Error& e) {
    return {HttpStatusFor(e.code()), ErrorBody(ErrcName(e.code()), e.what())};
  } catch (const std::exception& e) {
    return {500, ErrorBody("internal", e.what())};
  }
}

struct Server::Impl {
  net::io_context ioc{1};
  std::unique_ptr<tcp::acceptor> acceptor;
  std::thread accept_thread;
  std::atomic<bool> stopping{false};

  struct Conn {
    std::thread thread;
    std::atomic<bool> done{false};
    int fd = -1;
  };
  std::mutex conns_mu;
  std::list<std::unique_ptr<Conn>> conns;
};

namespace {

std::string ContentType(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html") return "text/html";
  if (ext == ".js") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".png") return "image/png";
  if (ext == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

// Serves a file below `root`, or returns false.
bool ServeStatic(const std::filesystem::path& root, std::string_view target,
                 http::response<http::string_body>& res) {
  if (root.empty()) return false;
  std::string rel(target.substr(0, target.find('?')));
  if (rel.find("..") != std::string::npos) return false;
  if (rel.empty() || rel == "/") rel = "/index.html";
  const auto path = root / rel.substr(1);
  if (!std::filesystem::is_regular_file(path)) return false;
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  res.result(http::status::ok);
  res.set(http::field::content_type, ContentType(path));
  res.body() = ss.str();
  return true;
}

class StreamConnection {
 public:
  StreamConnection(websocket::stream<tcp::socket>& ws, std::shared_ptr<Session> session)
      : ws_(ws), session_(std::move(session)), worker_([this] { Work(); }) {}

  ~StreamConnection() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    worker_.join();
  }

  void Run() {
    beast::flat_buffer buffer;
    while (true) {
      buffer.clear();
      beast::error_code ec;
      ws_.read(buffer, ec);
      if (ec) return;
      Handle(beast::buffers_to_string(buffer.data()));
    }
  }

 private:
  void Send(const json& msg) {
    std::lock_guard lock(write_mu_);
    beast::error_code ec;
    ws_.text(true);
    ws_.write(net::buffer(msg.dump()), ec);
  }

  void Handle(const std::string& text) {
    std::optional<std::int64_t> ref;
    try {
      json msg;
      try {
        msg = json::parse(text);
      } catch (const json::exception&) {
        throw Error(Errc::kProtocol, "message is not JSON");
      }
      if (msg.is_object() && msg.contains("id") && msg["id"].is_number_integer()) {
        ref = msg["id"].get<std::int64_t>();
      }
      ValidateClientMessage(msg);
      if (msg["type"] == "frame") {
        if (!session_->TryBeginFrame()) return;  // latest-wins: dropped
        {
          std::lock_guard lock(mu_);
          pending_ = std::move(msg);
        }
        cv_.notify_one();
      } else {
        CaptureMessage capture;
        capture.id = msg["id"].get<std::int64_t>();
        capture.frame = DecodeFramePayload(msg["data"].get<std::string>());
        Send(ToJson(session_->Capture(capture)));
      }
    } catch (const Error& e) {
      Send(MakeErrorMessage(ErrcName(e.code()), e.what(), ref));
    } catch (const std::exception& e) {
      Send(MakeErrorMessage("internal", e.what(), ref));
    }
  }

  void Work() {
    while (true) {
      json msg;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stop_ || pending_; });
        if (stop_) {
          if (pending_) session_->EndFrame();
          return;
        }
        msg = std::move(*pending_);
        pending_.reset();
      }
      const std::int64_t id = msg["id"].get<std::int64_t>();
      try {
        FrameMessage frame;
        frame.id = id;
        frame.ts = msg["ts"].get<std::int64_t>();
        if (msg.contains("saliency_class")) frame.saliency_class = msg["saliency_class"].get<int>();
        frame.frame = DecodeFramePayload(msg["data"].get<std::string>());
        const auto reply = session_->ProcessFrame(frame);
        session_->EndFrame();
        if (reply) std::visit([&](const auto& r) { Send(ToJson(r)); }, *reply);
      } catch (const Error& e) {
        session_->EndFrame();
        Send(MakeErrorMessage(ErrcName(e.code()), e.what(), id));
      } catch (const std::exception& e) {
        session_->EndFrame();
        Send(MakeErrorMessage("internal", e.what(), id));
      }
    }
  }

  websocket::stream<tcp::socket>& ws_;
  std::shared_ptr<Session> session_;
  std::mutex write_mu_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::optional<json> pending_;
  bool stop_ = false;
  std::thread worker_;
};

void ServeConnection(tcp::socket socket, SessionManager& manager,
                     const std::filesystem::path& static_dir) {
  beast::flat_buffer buffer;
  beast::error_code ec;
  while (true) {
    http::request<http::string_body> req;
    http::read(socket, buffer, req, ec);
    if (ec) return;

    if (websocket::is_upgrade(req)) {
      const auto p = SplitPath(std::string(req.target()));
      std::shared_ptr<Session> session;
      int status = 404;
      std::string why = "not a stream endpoint";
      if (p.size() == 3 && p[0] == "sessions" && p[2] == "stream") {
        try {
          session = manager.Get(p[1]);
        } catch (const Error& e) {
          why = e.what();
        }
      }
      if (!session) {
        http::response<http::string_body> res{static_cast<http::status>(status), req.version()};
        res.set(http::field::content_type, "application/json");
        res.body() = ErrorBody("not_found", why).dump();
        res.prepare_payload();
        http::write(socket, res, ec);
        return;
      }
      websocket::stream<tcp::socket> ws(std::move(socket));
      ws.accept(req, ec);
      if (ec) return;
      {
        StreamConnection conn(ws, session);
        conn.Run();
      }
      ws.close(websocket::close_code::normal, ec);
      return;
    }

    http::response<http::string_body> res{http::status::ok, req.version()};
    res.keep_alive(req.keep_alive());
    const bool api = req.method() != http::verb::get ||
                     !ServeStatic(static_dir, std::string(req.target()), res);
    if (api) {
      const HttpReply reply = HandleHttp(manager, std::string(req.method_string()),
                                         std::string(req.target()), req.body());
      res.result(static_cast<http::status>(reply.status));
      res.set(http::field::content_type, "application/json");
      res.body() = reply.body.dump();
    }
    res.prepare_payload();
    http::write(socket, res, ec);
    if (ec || !res.keep_alive()) break;
  }
  socket.shutdown(tcp::socket::shutdown_send, ec);
}

}  // namespace

Server::Server(SessionManager& manager, std::filesystem::path static_dir)
    : manager_(manager), static_dir_(std::move(static_dir)) {}

Server::~Server() { Stop(); }

void Server::Start(const std::string& address, unsigned short port) {
  if (impl_) throw Error(Errc::kState, "server already started");
  impl_ = std::make_unique<Impl>();
  try {
    const tcp::endpoint endpoint(net::ip::make_address(address), port);
    impl_->acceptor = std::make_unique<tcp::acceptor>(impl_->ioc);
    impl_->acceptor->open(endpoint.protocol());
    impl_->acceptor->set_option(net::socket_base::reuse_address(true));
    impl_->acceptor->bind(endpoint);
    impl_->acceptor->listen();
  } catch (const boost::system::system_error& e) {
    impl_.reset();
    throw Error(Errc::kIo, "cannot listen on " + address + ":" + std::to_string(port) + ": " +
                               e.what());
  }
  port_ = impl_->acceptor->local_endpoint().port();
  Impl* impl = impl_.get();
  impl->accept_thread = std::thread([this, impl] {
    while (!impl->stopping) {
      beast::error_code ec;
      tcp::socket socket(impl->ioc);
      impl->acceptor->accept(socket, ec);
      if (ec) {
        if (impl->stopping) return;
        continue;
      }
      std::lock_guard lock(impl->conns_mu);
      for (auto it = impl->conns.begin(); it != impl->conns.end();) {
        if ((*it)->done) {
          (*it)->thread.join();
          it = impl->conns.erase(it);
        } else {
          ++it;
        }
      }
      auto conn = std::make_unique<Impl::Conn>();
      conn->fd = socket.native_handle();
      Impl::Conn* c = conn.get();
      conn->thread = std::thread([this, c, s = std::move(socket)]() mutable {
        ServeConnection(std::move(s), manager_, static_dir_);
        c->done = true;
      });
      impl->conns.push_back(std::move(conn));
    }
  });
}

void Server::Stop() {
  if (!impl_) return;
  impl_->stopping = true;
  ::shutdown(impl_->acceptor->native_handle(), SHUT_RDWR);
  impl_->accept_thread.join();
  {
    std::lock_guard lock(impl_->conns_mu);
    for (auto& c : impl_->conns) {
      if (!c->done) ::shutdown(c->fd, SHUT_RDWR);
    }
  }
  for (auto& c : impl_->conns) c->thread.join();
  impl_.reset();
}

}  // namespace gimt::service
