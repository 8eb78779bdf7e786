#include "evonas/wire.hpp"

#include <charconv>

#include "evonas/format_error.hpp"

namespace evonas {

Message Message::hello(int worker_id) {
  Message m;
  m.type = MessageType::hello;
  m.worker_id = worker_id;
  return m;
}

Message Message::request() { return Message{}; }

Message Message::work(Genome genome, std::uint64_t seed) {
  Message m;
  m.type = MessageType::work;
  m.seed = seed;
  m.genome = std::move(genome);
  return m;
}

Message Message::result(EvalRecord record) {
  Message m;
  m.type = MessageType::result;
  m.record = std::move(record);
  return m;
}

Message Message::shutdown() {
  Message m;
  m.type = MessageType::shutdown;
  return m;
}

std::string to_string(MessageType type) {
  switch (type) {
    case MessageType::hello: return "HELLO";
    case MessageType::request: return "REQUEST";
    case MessageType::work: return "WORK";
    case MessageType::result: return "RESULT";
    case MessageType::shutdown: return "SHUTDOWN";
  }
  return "?";
}

std::string encode_payload(const Message& m) {
  switch (m.type) {
    case MessageType::hello: return "HELLO " + std::to_string(m.worker_id);
    case MessageType::request: return "REQUEST";
    case MessageType::work: return "WORK " + std::to_string(m.seed) + "\n" + to_text(m.genome.value());
    case MessageType::result: return "RESULT\n" + to_json(m.record.value()).dump();
    case MessageType::shutdown: return "SHUTDOWN";
  }
  return {};
}

namespace {

template <typename T>
T parse_number(std::string_view text, std::size_t offset) {
  T value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw FormatError("bad number '" + std::string(text) + "'", offset);
  }
  return value;
}

}  // namespace

Message decode_payload(std::string_view payload) {
  const auto nl = payload.find('\n');
  const std::string_view head = payload.substr(0, nl);
  const std::string_view body = nl == std::string_view::npos ? std::string_view{} : payload.substr(nl + 1);
  const auto sp = head.find(' ');
  const std::string_view name = head.substr(0, sp);
  const std::string_view arg = sp == std::string_view::npos ? std::string_view{} : head.substr(sp + 1);
  auto no_body = [&] {
    if (nl != std::string_view::npos || !arg.empty()) throw FormatError(std::string(name) + " takes no arguments", 0);
  };

  if (name == "HELLO") {
    if (nl != std::string_view::npos) throw FormatError("HELLO takes no body", nl);
    return Message::hello(parse_number<int>(arg, name.size() + 1));
  }
  if (name == "REQUEST") {
    no_body();
    return Message::request();
  }
  if (name == "SHUTDOWN") {
    no_body();
    return Message::shutdown();
  }
  if (name == "WORK") {
    if (nl == std::string_view::npos) throw FormatError("WORK without genome body", payload.size());
    const auto seed = parse_number<std::uint64_t>(arg, name.size() + 1);
    try {
      return Message::work(genome_from_text(std::string(body)), seed);
    } catch (const std::exception& e) {
      throw FormatError(std::string("WORK genome: ") + e.what(), nl + 1);
    }
  }
  if (name == "RESULT") {
    if (nl == std::string_view::npos || !arg.empty()) throw FormatError("RESULT without record body", payload.size());
    try {
      return Message::result(record_from_json(nlohmann::json::parse(body)));
    } catch (const std::exception& e) {
      throw FormatError(std::string("RESULT record: ") + e.what(), nl + 1);
    }
  }
  throw FormatError("unknown message '" + std::string(name) + "'", 0);
}

std::vector<std::uint8_t> encode_frame(const Message& message) {
  const std::string payload = encode_payload(message);
  if (payload.size() > kMaxFrameBytes) throw std::length_error("frame payload too large");
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::vector<std::uint8_t> out{static_cast<std::uint8_t>(n >> 24), static_cast<std::uint8_t>(n >> 16),
                                static_cast<std::uint8_t>(n >> 8), static_cast<std::uint8_t>(n)};
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

void FrameReader::feed(std::span<const std::uint8_t> bytes) {
  if (consumed_ > 0 && consumed_ == buffer_.size()) {
    buffer_.clear();
    consumed_ = 0;
  }
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<Message> FrameReader::next() {
  if (buffered() < 4) return std::nullopt;
  const std::uint8_t* p = buffer_.data() + consumed_;
  const std::uint32_t n = static_cast<std::uint32_t>(p[0]) << 24 | static_cast<std::uint32_t>(p[1]) << 16 |
                          static_cast<std::uint32_t>(p[2]) << 8 | p[3];
  if (n > kMaxFrameBytes) throw FormatError("frame length " + std::to_string(n) + " exceeds limit", stream_offset_);
  if (buffered() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
  const std::string_view payload(reinterpret_cast<const char*>(p + 4), n);
  const std::size_t at = stream_offset_;
  consumed_ += 4 + n;
  stream_offset_ += 4 + n;
  try {
    return decode_payload(payload);
  } catch (const FormatError& e) {
    throw FormatError(std::string("frame: ") + e.what(), at + 4 + e.offset());
  }
}

}  // namespace evonas
