#include <condition_variable>
#include <fstream>
#include <iterator>
#include <list>

#include <sys/socket.h>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "crafter/harness.hpp"

namespace crafter::harness {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

std::string_view content_type(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript; charset=utf-8";
  if (ext == ".css") return "text/css; charset=utf-8";
  if (ext == ".json") return "application/json";
  if (ext == ".png") return "image/png";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".ico") return "image/x-icon";
  if (ext == ".map" || ext == ".txt") return "text/plain; charset=utf-8";
  return "application/octet-stream";
}

std::optional<std::filesystem::path> resolve_static(const std::filesystem::path& root, std::string_view target) {
  std::string_view path = target.substr(0, target.find_first_of("?#"));
  if (path.empty() || path.front() != '/') return std::nullopt;
  if (path.find('\\') != std::string_view::npos || path.find('\0') != std::string_view::npos) return std::nullopt;
  std::filesystem::path rel;
  std::size_t pos = 1;
  while (pos <= path.size()) {
    const std::size_t end = std::min(path.find('/', pos), path.size());
    const std::string_view part = path.substr(pos, end - pos);
    if (part == "..") return std::nullopt;
    if (!part.empty() && part != ".") rel /= std::string(part);
    pos = end + 1;
  }
  if (rel.empty() || path.back() == '/') rel /= "index.html";
  return root / rel;
}

struct PlayServer::Impl {
  ServerConfig config;
  std::shared_ptr<const agents::Policy<float>> policy;
  std::string default_preset;
  std::shared_ptr<StatsLog> stats;
  asio::io_context ioc;
  std::optional<tcp::acceptor> acceptor;
  std::thread accept_thread;
  std::mutex mu;
  std::condition_variable stopped_cv;
  bool stopped = false;
  struct Conn {
    std::shared_ptr<tcp::socket> socket;
    std::thread thread;
  };
  std::list<Conn> conns;

  void serve(const std::shared_ptr<tcp::socket>& socket, std::int64_t session_no);
  void serve_http(tcp::socket& socket, const http::request<http::string_body>& req);
};

namespace {

template <class Body>
void finish(http::response<Body>& res, const http::request<http::string_body>& req) {
  res.version(req.version());
  res.keep_alive(false);
  res.set(http::field::server, "crafter-play");
  res.prepare_payload();
}

}  // namespace

void PlayServer::Impl::serve_http(tcp::socket& socket, const http::request<http::string_body>& req) {
  const auto reply = [&](http::status status, std::string body, std::string_view type) {
    http::response<http::string_body> res{status, req.version()};
    res.set(http::field::content_type, std::string(type));
    res.body() = std::move(body);
    finish(res, req);
    http::write(socket, res);
  };
  if (req.method() != http::verb::get && req.method() != http::verb::head) {
    reply(http::status::method_not_allowed, "method not allowed\n", "text/plain");
    return;
  }
  const std::string target(req.target());
  if (target == "/presets") {
    nlohmann::json names = nlohmann::json::array();
    for (const auto& p : builtin_presets()) names.push_back(p.name);
    reply(http::status::ok, nlohmann::json{{"presets", names}, {"default", default_preset}}.dump(),
          "application/json");
    return;
  }
  const auto file = resolve_static(config.static_dir, target);
  if (!file) {
    reply(http::status::bad_request, "bad path\n", "text/plain");
    return;
  }
  std::ifstream in(*file, std::ios::binary);
  if (!in || std::filesystem::is_directory(*file)) {
    reply(http::status::not_found, "not found\n", "text/plain");
    return;
  }
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (req.method() == http::verb::head) body.clear();
  reply(http::status::ok, std::move(body), content_type(*file));
}

void PlayServer::Impl::serve(const std::shared_ptr<tcp::socket>& socket, std::int64_t session_no) {
  beast::error_code ec;
  beast::flat_buffer buffer;
  http::request<http::string_body> req;
  http::read(*socket, buffer, req, ec);
  if (ec) return;
  if (!websocket::is_upgrade(req) || req.target() != "/ws") {
    try {
      serve_http(*socket, req);
    } catch (const beast::system_error&) {
    }
    socket->shutdown(tcp::socket::shutdown_both, ec);
    return;
  }
  websocket::stream<tcp::socket&> ws(*socket);
  ws.accept(req, ec);
  if (ec) return;
  ws.text(true);
  PlaySession::Options opts;
  opts.default_preset = default_preset;
  opts.seed = config.seed;
  opts.stats = stats;
  opts.policy = policy;
  PlaySession session("s" + std::to_string(session_no), opts);
  for (;;) {
    beast::flat_buffer in;
    ws.read(in, ec);
    if (ec) break;
    for (const auto& reply : session.handle(beast::buffers_to_string(in.data()))) {
      ws.write(asio::buffer(reply), ec);
      if (ec) break;
    }
    if (ec) break;
  }
  session.disconnect();
}

PlayServer::PlayServer(ServerConfig config, std::shared_ptr<const agents::Policy<float>> policy,
                       std::string default_preset)
    : impl_(std::make_unique<Impl>()) {
  impl_->config = std::move(config);
  impl_->policy = std::move(policy);
  impl_->default_preset = std::move(default_preset);
  resolve_preset(impl_->default_preset);
  if (impl_->config.stats_log) impl_->stats = std::make_shared<StatsLog>(*impl_->config.stats_log);
}

PlayServer::~PlayServer() { stop(); }

void PlayServer::start() {
  Impl& im = *impl_;
  const auto address = asio::ip::make_address(im.config.host);
  im.acceptor.emplace(im.ioc);
  const tcp::endpoint ep(address, static_cast<unsigned short>(im.config.port));
  im.acceptor->open(ep.protocol());
  im.acceptor->set_option(asio::socket_base::reuse_address(true));
  im.acceptor->bind(ep);
  im.acceptor->listen();
  port_ = im.acceptor->local_endpoint().port();
  im.accept_thread = std::thread([this] {
    Impl& im = *impl_;
    for (;;) {
      auto socket = std::make_shared<tcp::socket>(im.ioc);
      beast::error_code ec;
      im.acceptor->accept(*socket, ec);
      std::lock_guard lock(im.mu);
      if (im.stopped) return;
      if (ec) continue;
      const std::int64_t n = ++sessions_;
      im.conns.push_back({socket, std::thread([&im, socket, n] { im.serve(socket, n); })});
    }
  });
}

void PlayServer::stop() {
  Impl& im = *impl_;
  {
    std::lock_guard lock(im.mu);
    if (im.stopped || !im.acceptor) {
      im.stopped = true;
      return;
    }
    im.stopped = true;
    beast::error_code ec;
    // Unblocks the accept call; shutdown unblocks reads on live sessions.
    im.acceptor->cancel(ec);
    ::shutdown(im.acceptor->native_handle(), SHUT_RDWR);
    for (auto& c : im.conns) c.socket->shutdown(tcp::socket::shutdown_both, ec);
  }
  im.stopped_cv.notify_all();
  if (im.accept_thread.joinable()) im.accept_thread.join();
  for (auto& c : im.conns)
    if (c.thread.joinable()) c.thread.join();
  im.conns.clear();
  beast::error_code ec;
  im.acceptor->close(ec);
}

void PlayServer::wait() {
  std::unique_lock lock(impl_->mu);
  impl_->stopped_cv.wait(lock, [this] { return impl_->stopped; });
}

}  // namespace crafter::harness
