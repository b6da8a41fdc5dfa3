// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "latentprobe/protocol.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <httplib.h>
#include <thread>

namespace latentprobe {

namespace {

void ignore_sigpipe_once() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

void write_all(int fd, std::string_view bytes) {
  std::size_t written = 0;
  while (written < bytes.size()) {
    const auto n = ::write(fd, bytes.data() + written, bytes.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("write to oracle failed: ") + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
}

}  // namespace

SubprocessTransport::SubprocessTransport(std::string command) : command_(std::move(command)) {
  ignore_sigpipe_once();
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw TransportError("pipe() failed");
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw TransportError("pipe() failed");
  }
  pid_ = ::fork();
  if (pid_ < 0) throw TransportError("fork() failed");
  if (pid_ == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

SubprocessTransport::~SubprocessTransport() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    using namespace std::chrono_literals;
    for (int i = 0; i < 200; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) == pid_) return;
      std::this_thread::sleep_for(10ms);
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
  }
}

std::string SubprocessTransport::exchange(const std::string& request_line) {
  std::lock_guard lock(mutex_);
  write_all(to_child_, request_line + "\n");
  for (;;) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    char chunk[65536];
    const auto n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw TransportError("oracle process '" + command_ + "' closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

HttpTransport::HttpTransport(std::string base_url) : base_url_(std::move(base_url)) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

std::string HttpTransport::exchange(const std::string& request_line) {
  httplib::Client client(base_url_);
  client.set_connection_timeout(5);
  client.set_read_timeout(600);
  auto res = client.Post("/v1/oracle", request_line, "application/json");
  if (!res) throw TransportError("oracle at " + base_url_ + " unreachable: " + httplib::to_string(res.error()));
  auto body = res->body;
  while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();
  return body;
}

std::unique_ptr<Transport> make_transport(const std::string& descriptor) {
  if (descriptor.rfind("exec:", 0) == 0) return std::make_unique<SubprocessTransport>(descriptor.substr(5));
  if (descriptor.rfind("http://", 0) == 0 || descriptor.rfind("https://", 0) == 0) {
    return std::make_unique<HttpTransport>(descriptor);
  }
  throw ValidationError("oracle endpoint must be 'exec:<command>' or 'http://host:port', got '" + descriptor + "'");
}

RemoteOracle::RemoteOracle(std::unique_ptr<Transport> transport, Eigen::Index dim)
    : transport_(std::move(transport)), dim_(dim) {
  if (!transport_) throw ValidationError("RemoteOracle needs a transport");
}

protocol::Response RemoteOracle::call(const protocol::Request& request) {
  const auto line = transport_->exchange(protocol::encode(request));
  auto response = protocol::decode_response(line);
  if (const auto* err = std::get_if<protocol::ErrorReply>(&response.body)) {
    throw ProtocolError(err->code, err->message);
  }
  if (response.id != protocol::request_id(request)) {
    throw ProtocolError("desync", "response id " + std::to_string(response.id) + " does not match request " +
                                      std::to_string(protocol::request_id(request)));
  }
  return response;
}

ImageRef RemoteOracle::generate(const LatentVector& latent) {
  validate_latent(latent, dim_);
  auto response = call(protocol::GenerateRequest{next_id_++, latent});
  const auto* reply = std::get_if<protocol::ImageReply>(&response.body);
  if (!reply) throw ProtocolError("bad_response", "generate answered without an image");
  if (!is_safe_image_ref(reply->image.path)) throw ProtocolError("bad_response", "unsafe image ref");
  return reply->image;
}

double RemoteOracle::distance(std::string_view model, const ImageRef& a, const ImageRef& b) {
  auto response = call(protocol::DistanceRequest{next_id_++, std::string(model), a, b});
  const auto* reply = std::get_if<protocol::DistanceReply>(&response.body);
  if (!reply) throw ProtocolError("bad_response", "distance answered without a distance");
  return reply->distance;
}

namespace {

void install_oracle_routes(httplib::Server& server, std::mutex& serial, GeneratorOracle* generator,
                           DecisionBackend* decision) {
  server.Post("/v1/oracle", [&serial, generator, decision](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(serial);
    res.set_content(protocol::handle_line(req.body, generator, decision) + "\n", "application/json");
  });
  server.Get("/health", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });
}

}  // namespace

struct OracleHttpServer::Impl {
  httplib::Server server;
  std::mutex serial;
  std::thread thread;
};

OracleHttpServer::OracleHttpServer(GeneratorOracle* generator, DecisionBackend* decision)
    : impl_(std::make_unique<Impl>()) {
  install_oracle_routes(impl_->server, impl_->serial, generator, decision);
}

OracleHttpServer::~OracleHttpServer() { stop(); }

int OracleHttpServer::start(const std::string& host, int port) {
  if (impl_->thread.joinable()) throw Error("oracle server already running");
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw TransportError("cannot listen on " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void OracleHttpServer::stop() {
  if (!impl_->thread.joinable()) return;
  impl_->server.stop();
  impl_->thread.join();
}

void run_oracle_http_server(GeneratorOracle* generator, DecisionBackend* decision, const std::string& host,
                            int port) {
  httplib::Server server;
  std::mutex serial;
  install_oracle_routes(server, serial, generator, decision);
  if (!server.listen(host, port)) throw TransportError("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace latentprobe
