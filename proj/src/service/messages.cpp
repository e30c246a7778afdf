#include "gimt/service/messages.hpp"

#include <boost/beast/core/detail/base64.hpp>

#include "gimt/core/error.hpp"

namespace gimt::service {
namespace b64 = boost::beast::detail::base64;
using nlohmann::json;

std::string Base64Encode(const Bytes& bytes) {
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

Bytes Base64Decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(Errc::kProtocol, "base64 length is not a multiple of 4");
  // The decoder stops at the first '=', so padding is excluded from `read`.
  std::size_t body = text.size();
  for (int i = 0; i < 2 && body > 0 && text[body - 1] == '='; ++i) --body;
  Bytes out(b64::decoded_size(text.size()));
  const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  if (read != body) throw Error(Errc::kProtocol, "invalid base64 payload");
  out.resize(written);
  return out;
}

namespace {

[[noreturn]] void Bad(const std::string& what) { throw Error(Errc::kProtocol, what); }

const json& Field(const json& msg, const char* name) {
  const auto it = msg.find(name);
  if (it == msg.end()) Bad(std::string("missing field '") + name + "'");
  return *it;
}

void RequireInt(const json& msg, const char* name, std::optional<std::int64_t> min = {}) {
  const json& v = Field(msg, name);
  if (!v.is_number_integer()) Bad(std::string("field '") + name + "' must be an integer");
  if (min && v.get<std::int64_t>() < *min) {
    Bad(std::string("field '") + name + "' must be >= " + std::to_string(*min));
  }
}

void RequireNumber(const json& msg, const char* name, double min, double max) {
  const json& v = Field(msg, name);
  if (!v.is_number()) Bad(std::string("field '") + name + "' must be a number");
  const double d = v.get<double>();
  if (!(d >= min && d <= max)) Bad(std::string("field '") + name + "' out of range");
}

void RequireString(const json& msg, const char* name, bool base64 = false,
                   std::size_t min_length = 0) {
  const json& v = Field(msg, name);
  if (!v.is_string()) Bad(std::string("field '") + name + "' must be a string");
  const auto& s = v.get_ref<const std::string&>();
  if (s.size() < min_length) Bad(std::string("field '") + name + "' is empty");
  if (!base64) return;
  std::size_t pad = 0;
  for (char c : s) {
    const bool alnum = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    if (c == '=') {
      ++pad;
    } else if ((alnum || c == '+' || c == '/') && pad == 0) {
      continue;
    } else {
      Bad(std::string("field '") + name + "' is not base64");
    }
  }
  if (pad > 2) Bad(std::string("field '") + name + "' is not base64");
}

void RequireOnly(const json& msg, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : msg.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) Bad("unexpected field '" + key + "'");
  }
}

const std::string& Envelope(const json& msg) {
  if (!msg.is_object()) Bad("message must be a JSON object");
  const json& v = Field(msg, "v");
  if (!v.is_number_integer() || v.get<std::int64_t>() != kProtocolVersion) {
    Bad("unsupported protocol version");
  }
  const json& type = Field(msg, "type");
  if (!type.is_string()) Bad("field 'type' must be a string");
  return type.get_ref<const std::string&>();
}

}  // namespace

void ValidateClientMessage(const json& msg) {
  const std::string& type = Envelope(msg);
  if (type == "frame") {
    RequireOnly(msg, {"v", "type", "id", "ts", "data", "saliency_class"});
    RequireInt(msg, "id");
    RequireInt(msg, "ts");
    RequireString(msg, "data", true);
    if (msg.contains("saliency_class")) RequireInt(msg, "saliency_class", 0);
  } else if (type == "capture") {
    RequireOnly(msg, {"v", "type", "id", "data"});
    RequireInt(msg, "id");
    RequireString(msg, "data", true);
  } else {
    Bad("unknown client message type '" + type + "'");
  }
}

void ValidateServerMessage(const json& msg) {
  const std::string& type = Envelope(msg);
  if (type == "highlight") {
    RequireOnly(msg, {"v", "type", "frame_id", "ts", "width", "height", "mask", "latency_ms",
                      "drops"});
    RequireInt(msg, "frame_id");
    RequireInt(msg, "ts");
    RequireInt(msg, "width", 1);
    RequireInt(msg, "height", 1);
    RequireString(msg, "mask", true);
    RequireNumber(msg, "latency_ms", 0.0, 1e300);
    RequireInt(msg, "drops", 0);
  } else if (type == "prediction") {
    RequireOnly(msg, {"v", "type", "frame_id", "ts", "confidences", "predicted_class",
                      "predicted_label", "saliency", "saliency_class", "width", "height",
                      "latency_ms", "drops"});
    RequireInt(msg, "frame_id");
    RequireInt(msg, "ts");
    const json& conf = Field(msg, "confidences");
    if (!conf.is_array() || conf.size() < 2) Bad("field 'confidences' needs >= 2 entries");
    for (const auto& c : conf) {
      if (!c.is_number() || !(c.get<double>() >= 0.0 && c.get<double>() <= 1.0)) {
        Bad("confidence outside [0,1]");
      }
    }
    RequireInt(msg, "predicted_class", 0);
    RequireString(msg, "predicted_label");
    RequireString(msg, "saliency", true);
    RequireInt(msg, "saliency_class", 0);
    RequireInt(msg, "width", 1);
    RequireInt(msg, "height", 1);
    RequireNumber(msg, "latency_ms", 0.0, 1e300);
    RequireInt(msg, "drops", 0);
  } else if (type == "captured") {
    RequireOnly(msg, {"v", "type", "capture_id", "sample_id", "class_id", "sample_count",
                      "counts"});
    RequireInt(msg, "capture_id");
    RequireString(msg, "sample_id", false, 1);
    RequireInt(msg, "class_id", 0);
    RequireInt(msg, "sample_count", 1);
    const json& counts = Field(msg, "counts");
    if (!counts.is_array()) Bad("field 'counts' must be an array");
    for (const auto& c : counts) {
      if (!c.is_number_integer() || c.get<std::int64_t>() < 0) Bad("bad entry in 'counts'");
    }
  } else if (type == "error") {
    RequireOnly(msg, {"v", "type", "code", "message", "ref_id"});
    RequireString(msg, "code");
    RequireString(msg, "message");
    if (msg.contains("ref_id")) RequireInt(msg, "ref_id");
  } else {
    Bad("unknown server message type '" + type + "'");
  }
}

ImageFrame DecodeFramePayload(std::string_view base64) {
  const Bytes bytes = Base64Decode(base64);
  try {
    return DecodeImage(bytes);
  } catch (const Error& e) {
    throw Error(Errc::kProtocol, std::string("undecodable frame: ") + e.what());
  }
}

json MakeFrameMessage(std::int64_t id, std::int64_t ts, const ImageFrame& frame,
                      std::optional<int> saliency_class, int jpeg_quality) {
  json msg = {{"v", kProtocolVersion},
              {"type", "frame"},
              {"id", id},
              {"ts", ts},
              {"data", Base64Encode(EncodeJpeg(frame, jpeg_quality))}};
  if (saliency_class) msg["saliency_class"] = *saliency_class;
  return msg;
}

json MakeCaptureMessage(std::int64_t id, const ImageFrame& frame, int jpeg_quality) {
  return {{"v", kProtocolVersion},
          {"type", "capture"},
          {"id", id},
          {"data", Base64Encode(EncodeJpeg(frame, jpeg_quality))}};
}

json MakeErrorMessage(std::string_view code, std::string_view message,
                      std::optional<std::int64_t> ref_id) {
  json msg = {{"v", kProtocolVersion},
              {"type", "error"},
              {"code", std::string(code)},
              {"message", std::string(message)}};
  if (ref_id) msg["ref_id"] = *ref_id;
  return msg;
}

json ToJson(const HighlightReply& r) {
  return {{"v", kProtocolVersion},       {"type", "highlight"},
          {"frame_id", r.frame_id},      {"ts", r.ts},
          {"width", r.mask.width()},     {"height", r.mask.height()},
          {"mask", Base64Encode(EncodePng(r.mask))},
          {"latency_ms", r.latency_ms},  {"drops", r.drops}};
}

json ToJson(const PredictionReply& r) {
  return {{"v", kProtocolVersion},
          {"type", "prediction"},
          {"frame_id", r.frame_id},
          {"ts", r.ts},
          {"confidences", r.confidences},
          {"predicted_class", r.predicted_class},
          {"predicted_label", r.predicted_label},
          {"saliency", Base64Encode(EncodePng(r.saliency))},
          {"saliency_class", r.saliency_class},
          {"width", r.saliency.width()},
          {"height", r.saliency.height()},
          {"latency_ms", r.latency_ms},
          {"drops", r.drops}};
}

json ToJson(const CaptureAck& a) {
  return {{"v", kProtocolVersion}, {"type", "captured"},     {"capture_id", a.capture_id},
          {"sample_id", a.sample_id}, {"class_id", a.class_id}, {"sample_count", a.sample_count},
          {"counts", a.counts}};
}

}  // namespace gimt::service
