#include "latentprobe/protocol.hpp"

#include <json.hpp>
#include <istream>
#include <ostream>

namespace latentprobe::protocol {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

json latent_to_json(const LatentVector& latent) {
  if (!latent.allFinite()) throw ValidationError("cannot encode a non-finite latent");
  return json(std::vector<double>(latent.data(), latent.data() + latent.size()));
}

std::uint64_t read_id(const json& j) {
  if (!j.contains("id") || !j["id"].is_number_unsigned()) throw std::invalid_argument("missing unsigned id");
  return j["id"].get<std::uint64_t>();
}

std::string read_string(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) throw std::invalid_argument(std::string("missing string ") + key);
  return j[key].get<std::string>();
}

}  // namespace

std::uint64_t request_id(const Request& request) {
  return std::visit([](const auto& r) { return r.id; }, request);
}

std::string encode(const Request& request) {
  json j = std::visit(overloaded{
                          [](const GenerateRequest& r) {
                            return json{{"id", r.id}, {"op", "generate"}, {"latent", latent_to_json(r.latent)}};
                          },
                          [](const DistanceRequest& r) {
                            return json{{"id", r.id}, {"op", "distance"}, {"model", r.model},
                                        {"a", r.a.path},  {"b", r.b.path}};
                          },
                      },
                      request);
  return j.dump();
}

std::string encode(const Response& response) {
  json j{{"id", response.id}};
  std::visit(overloaded{
                 [&](const ImageReply& r) { j["ok"] = {{"image", r.image.path}}; },
                 [&](const DistanceReply& r) { j["ok"] = {{"distance", r.distance}}; },
                 [&](const ErrorReply& r) { j["err"] = {{"code", r.code}, {"message", r.message}}; },
             },
             response.body);
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

Request decode_request(std::string_view line) {
  try {
    const json j = json::parse(line);
    const auto id = read_id(j);
    const auto op = read_string(j, "op");
    if (op == "generate") {
      if (!j.contains("latent") || !j["latent"].is_array()) throw std::invalid_argument("missing latent array");
      const auto& arr = j["latent"];
      LatentVector latent(static_cast<Eigen::Index>(arr.size()));
      for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number()) throw std::invalid_argument("latent component is not a number");
        latent[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
      }
      return GenerateRequest{id, std::move(latent)};
    }
    if (op == "distance") {
      return DistanceRequest{id, read_string(j, "model"), ImageRef{read_string(j, "a")},
                             ImageRef{read_string(j, "b")}};
    }
    throw std::invalid_argument("unknown op '" + op + "'");
  } catch (const json::exception& e) {
    throw ProtocolError("bad_request", e.what());
  } catch (const std::invalid_argument& e) {
    throw ProtocolError("bad_request", e.what());
  }
}

Response decode_response(std::string_view line) {
  try {
    const json j = json::parse(line);
    Response response{read_id(j), ErrorReply{}};
    if (j.contains("ok") && j.contains("err")) throw std::invalid_argument("response has both ok and err");
    if (j.contains("ok")) {
      const auto& ok = j["ok"];
      if (ok.contains("image")) {
        response.body = ImageReply{ImageRef{read_string(ok, "image")}};
      } else if (ok.contains("distance") && ok["distance"].is_number()) {
        response.body = DistanceReply{ok["distance"].get<double>()};
      } else {
        throw std::invalid_argument("ok object has neither image nor distance");
      }
    } else if (j.contains("err")) {
      const auto& err = j["err"];
      response.body = ErrorReply{read_string(err, "code"), read_string(err, "message")};
    } else {
      throw std::invalid_argument("response has neither ok nor err");
    }
    return response;
  } catch (const json::exception& e) {
    throw ProtocolError("bad_response", e.what());
  } catch (const std::invalid_argument& e) {
    throw ProtocolError("bad_response", e.what());
  }
}

Response handle(const Request& request, GeneratorOracle* generator, DecisionBackend* decision) {
  const auto id = request_id(request);
  try {
    return std::visit(overloaded{
                          [&](const GenerateRequest& r) -> Response {
                            if (!generator) return {id, ErrorReply{"unsupported", "no generator configured"}};
                            return {id, ImageReply{generator->generate(r.latent)}};
                          },
                          [&](const DistanceRequest& r) -> Response {
                            if (!decision) return {id, ErrorReply{"unsupported", "no decision model configured"}};
                            return {id, DistanceReply{decision->distance(r.model, r.a, r.b)}};
                          },
                      },
                      request);
  } catch (const ProtocolError& e) {
    return {id, ErrorReply{e.code(), e.what()}};
  } catch (const DimensionError& e) {
    return {id, ErrorReply{"dimension", e.what()}};
  } catch (const std::exception& e) {
    return {id, ErrorReply{"internal", e.what()}};
  }
}

std::string handle_line(std::string_view line, GeneratorOracle* generator, DecisionBackend* decision) {
  try {
    return encode(handle(decode_request(line), generator, decision));
  } catch (const ProtocolError& e) {
    return encode(Response{0, ErrorReply{e.code(), e.what()}});
  }
}

void serve_stream(std::istream& in, std::ostream& out, GeneratorOracle* generator, DecisionBackend* decision) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out << handle_line(line, generator, decision) << '\n';
    out.flush();
  }
}

}  // namespace latentprobe::protocol
