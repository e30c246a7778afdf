#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gimt/core/codec.hpp"
#include "gimt/core/image.hpp"

namespace gimt::service {

inline constexpr int kProtocolVersion = 1;

std::string Base64Encode(const Bytes& bytes);
// Throws a protocol error on malformed input.
Bytes Base64Decode(std::string_view text);

// Envelope checks against the v1 message schema (schemas/messages.v1.json).
// Throw a protocol error naming the offending field.
void ValidateClientMessage(const nlohmann::json& msg);
void ValidateServerMessage(const nlohmann::json& msg);

// Client -> server.
struct FrameMessage {
  std::int64_t id = 0;
  std::int64_t ts = 0;
  ImageFrame frame;
  std::optional<int> saliency_class;
};
struct CaptureMessage {
  std::int64_t id = 0;
  ImageFrame frame;
};

// Decodes the base64 JPEG/PNG payload; undecodable payloads are protocol
// errors.
ImageFrame DecodeFramePayload(std::string_view base64);

nlohmann::json MakeFrameMessage(std::int64_t id, std::int64_t ts, const ImageFrame& frame,
                                std::optional<int> saliency_class = std::nullopt,
                                int jpeg_quality = 80);
nlohmann::json MakeCaptureMessage(std::int64_t id, const ImageFrame& frame,
                                  int jpeg_quality = 80);
nlohmann::json MakeErrorMessage(std::string_view code, std::string_view message,
                                std::optional<std::int64_t> ref_id = std::nullopt);

}  // namespace gimt::service

namespace gimt::service {

struct HighlightReply {
  std::int64_t frame_id = 0;
  std::int64_t ts = 0;
  SoftMask mask;
  double latency_ms = 0.0;
  std::uint64_t drops = 0;
};

struct PredictionReply {
  std::int64_t frame_id = 0;
  std::int64_t ts = 0;
  std::vector<double> confidences;
  int predicted_class = 0;
  std::string predicted_label;
  SoftMask saliency;
  int saliency_class = 0;
  double latency_ms = 0.0;
  std::uint64_t drops = 0;
};

struct CaptureAck {
  std::int64_t capture_id = 0;
  std::string sample_id;
  int class_id = 0;
  int sample_count = 0;
  std::vector<int> counts;  // per class, in class_id order
};

nlohmann::json ToJson(const HighlightReply& reply);
nlohmann::json ToJson(const PredictionReply& reply);
nlohmann::json ToJson(const CaptureAck& ack);

}  // namespace gimt::service
