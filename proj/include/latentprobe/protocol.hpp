#pragma once

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <variant>

#include "latentprobe/oracle.hpp"

namespace latentprobe {

/// Newline-delimited JSON oracle protocol, one object per line:
///
///   {"id": 1, "op": "generate", "latent": [...]}
///   {"id": 2, "op": "distance", "model": "dlib", "a": "<ref>", "b": "<ref>"}
///   {"id": 1, "ok": {"image": "<ref>"}}
///   {"id": 2, "ok": {"distance": 0.41}}
///   {"id": 2, "err": {"code": "no_face", "message": "..."}}
namespace protocol {

struct GenerateRequest {
  std::uint64_t id = 0;
  LatentVector latent;
};

struct DistanceRequest {
  std::uint64_t id = 0;
  std::string model;
  ImageRef a;
  ImageRef b;
};

using Request = std::variant<GenerateRequest, DistanceRequest>;

struct ImageReply {
  ImageRef image;
};
struct DistanceReply {
  double distance = 0.0;
};
struct ErrorReply {
  std::string code;
  std::string message;
};

struct Response {
  std::uint64_t id = 0;
  std::variant<ImageReply, DistanceReply, ErrorReply> body;
};

std::uint64_t request_id(const Request& request);

/// Single-line JSON without the trailing newline.
std::string encode(const Request& request);
std::string encode(const Response& response);

/// ProtocolError("bad_request" / "bad_response") on malformed input.
Request decode_request(std::string_view line);
Response decode_response(std::string_view line);

/// Serves one request; exceptions from the oracles become ErrorReply.
Response handle(const Request& request, GeneratorOracle* generator, DecisionBackend* decision);

/// Decodes, serves and encodes one line; malformed lines produce an error line with id 0.
std::string handle_line(std::string_view line, GeneratorOracle* generator, DecisionBackend* decision);

/// Reads request lines until EOF and writes one response line per request.
void serve_stream(std::istream& in, std::ostream& out, GeneratorOracle* generator,
                  DecisionBackend* decision);

}  // namespace protocol

/// Moves one request line to an oracle and returns its response line.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string exchange(const std::string& request_line) = 0;
  virtual std::string describe() const = 0;
};

/// Talks to a child process over its stdin/stdout; one request in flight at a time.
class SubprocessTransport final : public Transport {
 public:
  explicit SubprocessTransport(std::string command);
  ~SubprocessTransport() override;
  SubprocessTransport(const SubprocessTransport&) = delete;
  SubprocessTransport& operator=(const SubprocessTransport&) = delete;

  std::string exchange(const std::string& request_line) override;
  std::string describe() const override { return "exec:" + command_; }

 private:
  std::string command_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::mutex mutex_;
};

/// POSTs each request line to <base_url>/v1/oracle.
class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(std::string base_url);
  std::string exchange(const std::string& request_line) override;
  std::string describe() const override { return base_url_; }

 private:
  std::string base_url_;
};

/// "exec:<shell command>" or "http://host:port".
std::unique_ptr<Transport> make_transport(const std::string& descriptor);

/// Generator and decision backend reached through a Transport.
class RemoteOracle final : public GeneratorOracle, public DecisionBackend {
 public:
  RemoteOracle(std::unique_ptr<Transport> transport, Eigen::Index dim);

  Eigen::Index dim() const override { return dim_; }
  std::string identity() const override { return transport_->describe(); }
  ImageRef generate(const LatentVector& latent) override;
  double distance(std::string_view model, const ImageRef& a, const ImageRef& b) override;

  std::uint64_t requests_sent() const { return next_id_.load() - 1; }

 private:
  protocol::Response call(const protocol::Request& request);

  std::unique_ptr<Transport> transport_;
  Eigen::Index dim_;
  std::atomic<std::uint64_t> next_id_{1};
};

/// Serves POST /v1/oracle and GET /health on a background thread.
class OracleHttpServer {
 public:
  OracleHttpServer(GeneratorOracle* generator, DecisionBackend* decision);
  ~OracleHttpServer();
  OracleHttpServer(const OracleHttpServer&) = delete;
  OracleHttpServer& operator=(const OracleHttpServer&) = delete;

  /// Binds and starts serving; port 0 picks a free port. Returns the bound port.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocks serving POST /v1/oracle on host:port until the process exits.
void run_oracle_http_server(GeneratorOracle* generator, DecisionBackend* decision, const std::string& host,
                            int port);

}  // namespace latentprobe
