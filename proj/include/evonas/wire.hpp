#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evonas/eval_record.hpp"
#include "evonas/genome.hpp"

namespace evonas {

// Master/worker protocol. Payloads are UTF-8 text whose first line names the
// message:
//   HELLO <worker_id>
//   REQUEST
//   WORK <seed>\n<genome text>
//   RESULT\n<EvalRecord JSON>
//   SHUTDOWN
enum class MessageType { hello, request, work, result, shutdown };

struct Message {
  MessageType type = MessageType::request;
  int worker_id = -1;        // hello
  std::uint64_t seed = 0;    // work
  std::optional<Genome> genome;     // work
  std::optional<EvalRecord> record;  // result

  static Message hello(int worker_id);
  static Message request();
  static Message work(Genome genome, std::uint64_t seed);
  static Message result(EvalRecord record);
  static Message shutdown();
};

std::string to_string(MessageType type);

std::string encode_payload(const Message& message);
// Throws FormatError on unknown message names or malformed bodies.
Message decode_payload(std::string_view payload);

inline constexpr std::uint32_t kMaxFrameBytes = 16u << 20;

// u32 big-endian payload length, then the payload bytes.
std::vector<std::uint8_t> encode_frame(const Message& message);

// Incremental decoder for a byte stream carrying back-to-back frames.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  // Next complete message, or nullopt if more bytes are needed.
  std::optional<Message> next();
  std::size_t buffered() const { return buffer_.size() - consumed_; }

 private:
  std::vector<std::uint8_t> buffer_;
  std::size_t consumed_ = 0;
  std::size_t stream_offset_ = 0;
};

}  // namespace evonas
