#include "hierprobe/protocol.hpp"

#include <sstream>

#include "hierprobe/error.hpp"

namespace hierprobe::protocol {

namespace {

Json codes_json(std::span<const LayerwiseCode> codes) {
  Json all = Json::array();
  for (const auto& c : codes) {
    Json layers = Json::array();
    for (std::size_t l = 0; l < c.num_layers(); ++l) layers.push_back(to_json(Vector(c.layer(l))));
    all.push_back(std::move(layers));
  }
  return all;
}

bool is_id(const Json& j) { return j.is_number_integer(); }

bool is_positive_int(const Json& j, const char* key) {
  return j.contains(key) && j.at(key).is_number_integer() && j.at(key).get<std::int64_t>() >= 1;
}

std::optional<std::string> check_codes(const Json& request) {
  if (!request.contains("codes") || !request.at("codes").is_array()) return "'codes' must be an array";
  for (const auto& code : request.at("codes")) {
    if (!code.is_array() || code.empty()) return "each code must be a non-empty list of layers";
    const auto width = code.front().size();
    for (const auto& layer : code) {
      if (!layer.is_array() || layer.size() != width || width == 0) return "code layers must be equal-length arrays";
      for (const auto& v : layer) {
        if (!v.is_number()) return "code entries must be numbers";
      }
    }
  }
  return std::nullopt;
}

std::optional<std::string> check_string_list(const Json& j, const char* key, std::size_t expected) {
  if (!j.contains(key) || !j.at(key).is_array()) return std::string("'") + key + "' must be an array";
  if (j.at(key).size() != expected) {
    return std::string("'") + key + "' has " + std::to_string(j.at(key).size()) + " entries, expected " +
           std::to_string(expected);
  }
  for (const auto& p : j.at(key)) {
    if (!p.is_string() || p.get<std::string>().empty()) return std::string("'") + key + "' entries must be paths";
  }
  return std::nullopt;
}

}  // namespace

Json spec_request(std::int64_t id) { return {{"id", id}, {"cmd", "spec"}}; }

Json score_request(std::int64_t id, std::span<const LayerwiseCode> codes) {
  return {{"id", id}, {"cmd", "score"}, {"codes", codes_json(codes)}};
}

Json generate_request(std::int64_t id, std::span<const LayerwiseCode> codes, const std::filesystem::path& out_dir) {
  return {{"id", id}, {"cmd", "generate"}, {"codes", codes_json(codes)}, {"out_dir", out_dir.string()}};
}

Json segment_request(std::int64_t id, std::span<const std::filesystem::path> images) {
  Json paths = Json::array();
  for (const auto& p : images) paths.push_back(p.string());
  return {{"id", id}, {"cmd", "segment"}, {"images", std::move(paths)}};
}

Json error_response(const Json& id, std::string_view code, std::string_view message) {
  return {{"id", id}, {"error", {{"code", std::string(code)}, {"message", std::string(message)}}}};
}

std::vector<LayerwiseCode> codes_from_request(const Json& request) {
  if (const auto problem = check_codes(request)) throw Error(ErrorCode::ProtocolViolation, *problem);
  std::vector<LayerwiseCode> out;
  for (const auto& code : request.at("codes")) {
    std::vector<Vector> layers;
    for (const auto& layer : code) layers.push_back(vector_from_json(layer));
    out.push_back(LayerwiseCode::from_layers(layers));
  }
  return out;
}

WorkerSpec parse_spec_response(const Json& r) {
  const Json req = spec_request(r.value("id", Json(0)).is_number_integer() ? r.at("id").get<std::int64_t>() : 0);
  if (const auto problem = check_response(req, r)) throw Error(ErrorCode::ProtocolViolation, *problem);
  WorkerSpec s;
  s.space.dim = r.at("dim").get<std::size_t>();
  s.space.space = SpaceTag::W;
  s.space.num_layers = r.at("num_layers").get<std::size_t>();
  s.space.per_layer_dim = r.at("per_layer_dim").get<std::size_t>();
  for (const auto& c : r.at("concepts")) {
    const auto id = c.at("id").get<std::string>();
    s.concepts.push_back({id, c.at("name").get<std::string>(), level_from_string(c.at("level").get<std::string>()), id});
  }
  if (r.contains("transform")) {
    const auto& t = r.at("transform");
    try {
      s.transform.emplace(matrix_from_json(t.at("weight")), vector_from_json(t.at("bias")), s.space.num_layers);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::ProtocolViolation, std::string("bad transform in spec response: ") + e.what());
    }
  }
  return s;
}

std::vector<ScoreVector> parse_score_response(const Json& r) {
  if (!r.contains("scores") || !r.at("scores").is_array()) {
    throw Error(ErrorCode::ProtocolViolation, "score response lacks a 'scores' array");
  }
  std::vector<ScoreVector> out;
  for (const auto& entry : r.at("scores")) {
    if (!entry.is_object()) throw Error(ErrorCode::ProtocolViolation, "score entries must be objects");
    ScoreVector sv;
    for (const auto& [id, v] : entry.items()) {
      if (!v.is_number()) throw Error(ErrorCode::ProtocolViolation, "score for '" + id + "' is not a number");
      sv.emplace(id, v.get<double>());
    }
    out.push_back(std::move(sv));
  }
  return out;
}

std::vector<std::filesystem::path> parse_path_list(const Json& r, const char* key) {
  if (!r.contains(key) || !r.at(key).is_array()) {
    throw Error(ErrorCode::ProtocolViolation, std::string("response lacks a '") + key + "' array");
  }
  std::vector<std::filesystem::path> out;
  for (const auto& p : r.at(key)) {
    if (!p.is_string()) throw Error(ErrorCode::ProtocolViolation, std::string("'") + key + "' entries must be strings");
    out.emplace_back(p.get<std::string>());
  }
  return out;
}

std::optional<std::string> check_request(const Json& q) {
  if (!q.is_object()) return "request must be a JSON object";
  if (!q.contains("id") || !is_id(q.at("id"))) return "request lacks an integer 'id'";
  if (!q.contains("cmd") || !q.at("cmd").is_string()) return "request lacks a 'cmd'";
  const auto cmd = q.at("cmd").get<std::string>();
  if (cmd == "spec") return std::nullopt;
  if (cmd == "score") return check_codes(q);
  if (cmd == "generate") {
    if (auto p = check_codes(q)) return p;
    if (q.contains("out_dir") && !q.at("out_dir").is_string()) return "'out_dir' must be a string";
    return std::nullopt;
  }
  if (cmd == "segment") {
    if (!q.contains("images") || !q.at("images").is_array()) return "'images' must be an array";
    return check_string_list(q, "images", q.at("images").size());
  }
  return "unknown cmd '" + cmd + "'";
}

std::optional<std::string> check_response(const Json& q, const Json& r) {
  if (!r.is_object()) return "response must be a JSON object";
  if (!r.contains("id")) return "response lacks 'id'";
  const auto& rid = r.at("id");
  const bool request_ok = !check_request(q).has_value();
  if (r.contains("error")) {
    const auto& e = r.at("error");
    if (!e.is_object() || !e.contains("code") || !e.at("code").is_string() || !e.contains("message") ||
        !e.at("message").is_string()) {
      return "error object needs string 'code' and 'message'";
    }
    if (rid.is_null()) return q.is_object() && q.contains("id") && is_id(q.at("id")) ? "error response dropped the id"
                                                                                       : std::optional<std::string>{};
    if (!is_id(rid)) return "response 'id' must be an integer";
    if (q.is_object() && q.contains("id") && rid != q.at("id")) return "response id does not echo the request id";
    return std::nullopt;
  }
  if (!request_ok) return "malformed request answered without an error object";
  if (!is_id(rid)) return "response 'id' must be an integer";
  if (rid != q.at("id")) {
    return "response id " + rid.dump() + " does not echo request id " + q.at("id").dump();
  }
  const auto cmd = q.at("cmd").get<std::string>();
  if (cmd == "spec") {
    for (const char* key : {"dim", "num_layers", "per_layer_dim"}) {
      if (!is_positive_int(r, key)) return std::string("spec response needs a positive integer '") + key + "'";
    }
    if (!r.contains("concepts") || !r.at("concepts").is_array() || r.at("concepts").empty()) {
      return "spec response needs a non-empty 'concepts' array";
    }
    for (const auto& c : r.at("concepts")) {
      if (!c.is_object()) return "concept entries must be objects";
      for (const char* key : {"id", "name", "level"}) {
        if (!c.contains(key) || !c.at(key).is_string()) return std::string("concept lacks string '") + key + "'";
      }
      try {
        level_from_string(c.at("level").get<std::string>());
      } catch (const Error&) {
        return "unknown concept level '" + c.at("level").get<std::string>() + "'";
      }
    }
    return std::nullopt;
  }
  if (cmd == "score") {
    if (!r.contains("scores") || !r.at("scores").is_array()) return "score response needs a 'scores' array";
    if (r.at("scores").size() != q.at("codes").size()) return "score response has the wrong number of entries";
    for (const auto& s : r.at("scores")) {
      if (!s.is_object()) return "score entries must be objects";
      for (const auto& [id, v] : s.items()) {
        if (!v.is_number()) return "score for '" + id + "' is not a number";
        const double x = v.get<double>();
        if (!(x >= 0.0 && x <= 1.0)) return "score for '" + id + "' is outside [0, 1]";
      }
    }
    return std::nullopt;
  }
  if (cmd == "generate") return check_string_list(r, "images", q.at("codes").size());
  if (cmd == "segment") return check_string_list(r, "masks", q.at("images").size());
  return "unknown cmd";
}

TranscriptCheck check_transcript(std::string_view text) {
  TranscriptCheck result;
  std::istringstream in{std::string(text)};
  std::string line;
  std::optional<Json> pending;
  std::size_t pending_line = 0;
  auto fail = [&](std::size_t n, std::string message) {
    result.ok = false;
    result.line = n;
    result.message = std::move(message);
    return result;
  };
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    Json msg;
    try {
      msg = Json::parse(line);
    } catch (const Json::exception&) {
      return fail(n, "line is not JSON");
    }
    if (!pending) {
      if (!msg.is_object() || !msg.contains("cmd")) return fail(n, "expected a request");
      pending = std::move(msg);
      pending_line = n;
      continue;
    }
    if (const auto problem = check_response(*pending, msg)) return fail(n, *problem);
    ++result.exchanges;
    pending.reset();
  }
  if (pending) return fail(pending_line, "request has no response");
  return result;
}

}  // namespace hierprobe::protocol
