#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "peec/bytes.hpp"
#include "peec/errors.hpp"
#include "peec/matrix.hpp"

namespace peec::wire {

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::uint8_t kMagic[4] = {0x50, 0x45, 0x45, 0x43}; // "PEEC"
inline constexpr size_t kHeaderSize = 4 + 1 + 1 + 4;

enum class MsgType : std::uint8_t {
  Features = 1,
  Latent = 2,
  Prediction = 3,
  Error = 4,
  Ping = 5,
  Pong = 6,
};

inline const char* to_string(MsgType t) {
  switch (t) {
  case MsgType::Features: return "FEATURES";
  case MsgType::Latent: return "LATENT";
  case MsgType::Prediction: return "PREDICTION";
  case MsgType::Error: return "ERROR";
  case MsgType::Ping: return "PING";
  case MsgType::Pong: return "PONG";
  }
  return "UNKNOWN";
}

struct WireFrame {
  MsgType type = MsgType::Ping;
  std::vector<std::uint8_t> payload;

  friend bool operator==(const WireFrame&, const WireFrame&) = default;
};

/// magic | version u8 | msg_type u8 | payload_len u32 LE | payload
inline std::vector<std::uint8_t> encode_frame(const WireFrame& frame) {
  bytes::Writer w;
  w.raw(std::span<const std::uint8_t>(kMagic, 4));
  w.u8(kProtocolVersion);
  w.u8(static_cast<std::uint8_t>(frame.type));
  w.u32(static_cast<std::uint32_t>(frame.payload.size()));
  w.raw(frame.payload);
  return w.take();
}

/// Decode one frame from the head of `data`; `consumed` reports exactly how
/// many bytes the frame occupied so callers can iterate over concatenated
/// captures.
inline WireFrame decode_frame(std::span<const std::uint8_t> data,
                              size_t* consumed = nullptr) {
  bytes::Reader r(data);
  const auto magic = r.raw(4, "frame magic");
  for (size_t i = 0; i < 4; ++i) {
    if (magic[i] != kMagic[i]) {
      throw BadMagicError("frame does not start with PEEC magic");
    }
  }
  const std::uint8_t version = r.u8("frame version");
  if (version != kProtocolVersion) {
    throw VersionError("frame version " + std::to_string(version) +
                       ", expected " + std::to_string(kProtocolVersion));
  }
  const std::uint8_t raw_type = r.u8("frame type");
  if (raw_type < 1 || raw_type > 6) {
    throw UnknownTypeError("unknown frame type " + std::to_string(raw_type));
  }
  const std::uint32_t payload_len = r.u32("payload length");
  const auto payload = r.raw(payload_len, "frame payload");
  WireFrame frame;
  frame.type = static_cast<MsgType>(raw_type);
  frame.payload.assign(payload.begin(), payload.end());
  if (consumed) *consumed = kHeaderSize + payload_len;
  return frame;
}

/// Decode every frame in a concatenated capture, in order.
inline std::vector<WireFrame>
decode_all_frames(std::span<const std::uint8_t> data) {
  std::vector<WireFrame> frames;
  size_t offset = 0;
  while (offset < data.size()) {
    size_t consumed = 0;
    frames.push_back(decode_frame(data.subspan(offset), &consumed));
    offset += consumed;
  }
  return frames;
}

// ---------------------------------------------------------------------------
// Payloads
// ---------------------------------------------------------------------------

/// FEATURES and LATENT share one payload shape:
/// id (u16-length-prefixed UTF-8) | dim u32 LE | dim x f32 LE.
struct VectorPayload {
  std::string id;
  std::vector<float> values;

  friend bool operator==(const VectorPayload&, const VectorPayload&) = default;
};

/// id | valence u8 {0=NEG, 1=POS} | score f32 LE (SVM decision value).
struct PredictionPayload {
  std::string id;
  std::uint8_t valence = 0;
  float score = 0.0f;

  friend bool operator==(const PredictionPayload&,
                         const PredictionPayload&) = default;
};

inline std::vector<std::uint8_t>
encode_vector_payload(const VectorPayload& p) {
  bytes::Writer w;
  w.str16(p.id);
  w.u32(static_cast<std::uint32_t>(p.values.size()));
  for (float v : p.values) w.f32(v);
  return w.take();
}

inline VectorPayload
decode_vector_payload(std::span<const std::uint8_t> payload) {
  bytes::Reader r(payload);
  VectorPayload p;
  p.id = r.str16("utterance id");
  const std::uint32_t dim = r.u32("vector dim");
  p.values.resize(dim);
  for (auto& v : p.values) v = r.f32("vector value");
  if (!r.done()) {
    throw TruncationError("vector payload has " +
                          std::to_string(r.remaining()) + " trailing bytes");
  }
  return p;
}

inline std::vector<std::uint8_t>
encode_prediction_payload(const PredictionPayload& p) {
  if (p.valence > 1) throw ValueError("prediction valence must be 0 or 1");
  bytes::Writer w;
  w.str16(p.id);
  w.u8(p.valence);
  w.f32(p.score);
  return w.take();
}

inline PredictionPayload
decode_prediction_payload(std::span<const std::uint8_t> payload) {
  bytes::Reader r(payload);
  PredictionPayload p;
  p.id = r.str16("utterance id");
  p.valence = r.u8("valence");
  if (p.valence > 1) {
    throw ParseError("prediction valence " + std::to_string(p.valence) +
                     " is not 0 or 1");
  }
  p.score = r.f32("score");
  if (!r.done()) {
    throw TruncationError("prediction payload has " +
                          std::to_string(r.remaining()) + " trailing bytes");
  }
  return p;
}

/// ERROR carries a u16-length-prefixed UTF-8 message.
inline std::vector<std::uint8_t> encode_error_payload(const std::string& text) {
  bytes::Writer w;
  w.str16(text);
  return w.take();
}

inline std::string decode_error_payload(std::span<const std::uint8_t> payload) {
  bytes::Reader r(payload);
  std::string text = r.str16("error text");
  if (!r.done()) {
    throw TruncationError("error payload has " + std::to_string(r.remaining()) +
                          " trailing bytes");
  }
  return text;
}

// ---------------------------------------------------------------------------
// Frame constructors
// ---------------------------------------------------------------------------

inline WireFrame make_vector_frame(MsgType type, const std::string& id,
                                   std::span<const double> values) {
  if (type != MsgType::Features && type != MsgType::Latent) {
    throw ValueError("vector frames must be FEATURES or LATENT");
  }
  VectorPayload p;
  p.id = id;
  p.values.reserve(values.size());
  for (double v : values) p.values.push_back(static_cast<float>(v));
  return {type, encode_vector_payload(p)};
}

inline WireFrame make_features_frame(const std::string& id,
                                     std::span<const double> values) {
  return make_vector_frame(MsgType::Features, id, values);
}

inline WireFrame make_latent_frame(const std::string& id,
                                   std::span<const double> values) {
  return make_vector_frame(MsgType::Latent, id, values);
}

inline WireFrame make_prediction_frame(const std::string& id,
                                       std::uint8_t valence, float score) {
  PredictionPayload p;
  p.id = id;
  p.valence = valence;
  p.score = score;
  return {MsgType::Prediction, encode_prediction_payload(p)};
}

inline WireFrame make_error_frame(const std::string& text) {
  return {MsgType::Error, encode_error_payload(text)};
}

inline WireFrame make_ping_frame() { return {MsgType::Ping, {}}; }
inline WireFrame make_pong_frame() { return {MsgType::Pong, {}}; }

/// Latents from a capture, one matrix row per LATENT frame, f32 values
/// widened back to double.
inline Matrix latent_matrix(std::span<const WireFrame> frames) {
  std::vector<VectorPayload> latents;
  for (const auto& f : frames) {
    if (f.type == MsgType::Latent) {
      latents.push_back(decode_vector_payload(f.payload));
    }
  }
  if (latents.empty()) return Matrix(0, 0);
  Matrix out(latents.size(), latents[0].values.size());
  for (size_t i = 0; i < latents.size(); ++i) {
    if (latents[i].values.size() != out.cols()) {
      throw ShapeError("capture mixes latent dims " +
                       std::to_string(out.cols()) + " and " +
                       std::to_string(latents[i].values.size()));
    }
    for (size_t j = 0; j < out.cols(); ++j) {
      out(i, j) = static_cast<double>(latents[i].values[j]);
    }
  }
  return out;
}

} // namespace peec::wire
