#include "evonas/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace evonas {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::size_t v) {
    if (v > UINT32_MAX) throw std::invalid_argument("MNDL field exceeds u32: " + std::to_string(v));
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void tensor(std::span<const float> data, std::initializer_list<std::size_t> dims) {
    u32(dims.size());
    for (auto d : dims) u32(d);
    for (float f : data) u32(std::bit_cast<std::uint32_t>(f));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  void need(std::size_t n, const std::string& what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("MNDL truncated reading " + what + ": need " + std::to_string(pos_ + n) + " bytes, have " +
                            std::to_string(bytes_.size()),
                        pos_);
    }
  }
  std::uint8_t u8(const std::string& what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  // Reads a tensor and checks its shape against what the hyperparameters imply.
  std::vector<float> tensor(std::initializer_list<std::size_t> expected, const std::string& what) {
    const std::size_t at = pos_;
    const std::uint32_t rank = u32(what + " rank");
    if (rank != expected.size()) {
      throw FormatError(what + ": rank " + std::to_string(rank) + ", expected " + std::to_string(expected.size()), at);
    }
    std::size_t count = 1;
    for (std::size_t want : expected) {
      const std::size_t dim_at = pos_;
      const std::uint32_t got = u32(what + " dim");
      if (got != want) {
        throw FormatError(what + ": dimension " + std::to_string(got) + ", expected " + std::to_string(want), dim_at);
      }
      count *= got;
    }
    need(4 * count, what + " data");
    std::vector<float> data(count);
    for (auto& f : data) f = std::bit_cast<float>(u32(what));
    return data;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_model(const Network<float>& network) {
  Writer w;
  for (char ch : {'M', 'N', 'D', 'L'}) w.u8(static_cast<std::uint8_t>(ch));
  w.u32(kModelVersion);
  w.u32(network.layers().size());
  const Dims& in = network.input_shape();
  w.u32(in.c);
  w.u32(in.h);
  w.u32(in.w);
  for (const auto& layer : network.layers()) {
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv2d<float>>) {
            w.u8(static_cast<std::uint8_t>(LayerTag::conv));
            w.u32(l.in_channels);
            w.u32(l.out_channels);
            w.u32(l.kernel);
            w.u32(l.stride);
            w.tensor(l.weights.values(), {l.out_channels, l.in_channels, l.kernel, l.kernel});
            w.tensor(l.bias, {l.out_channels});
          } else if constexpr (std::is_same_v<L, MaxPool>) {
            w.u8(static_cast<std::uint8_t>(LayerTag::pool));
            w.u32(l.size);
            w.u32(l.stride);
          } else if constexpr (std::is_same_v<L, ReLU>) {
            w.u8(static_cast<std::uint8_t>(LayerTag::relu));
          } else if constexpr (std::is_same_v<L, Flatten>) {
            w.u8(static_cast<std::uint8_t>(LayerTag::flatten));
          } else {
            w.u8(static_cast<std::uint8_t>(LayerTag::dense));
            w.u32(l.in_units);
            w.u32(l.out_units);
            w.tensor(l.weights.values(), {l.out_units, l.in_units});
            w.tensor(l.bias, {l.out_units});
          }
        },
        layer);
  }
  return w.take();
}

Network<float> decode_model(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (!(bytes[0] == 'M' && bytes[1] == 'N' && bytes[2] == 'D' && bytes[3] == 'L')) {
    throw FormatError("bad MNDL magic", 0);
  }
  r.u8("magic");
  r.u8("magic");
  r.u8("magic");
  r.u8("magic");
  const std::uint32_t version = r.u32("version");
  if (version != kModelVersion) throw FormatError("unsupported MNDL version " + std::to_string(version), 4);
  const std::uint32_t count = r.u32("layer count");
  Dims input;
  input.c = r.u32("input channels");
  input.h = r.u32("input height");
  input.w = r.u32("input width");

  std::vector<Layer<float>> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = "layer " + std::to_string(i);
    const std::size_t tag_at = r.pos();
    switch (static_cast<LayerTag>(r.u8(name + " tag"))) {
      case LayerTag::conv: {
        const std::size_t cin = r.u32(name + " in_channels");
        const std::size_t cout = r.u32(name + " out_channels");
        const std::size_t k = r.u32(name + " kernel");
        const std::size_t s = r.u32(name + " stride");
        if (cin == 0 || cout == 0 || k == 0 || s == 0) throw FormatError(name + ": zero conv hyperparameter", tag_at);
        auto conv = Conv2d<float>::zeros(cin, cout, k, s);
        conv.weights = Tensor4<float>({cout, cin, k, k}, r.tensor({cout, cin, k, k}, name + " weights"));
        conv.bias = r.tensor({cout}, name + " bias");
        layers.emplace_back(std::move(conv));
        break;
      }
      case LayerTag::pool: {
        const std::size_t size = r.u32(name + " size");
        const std::size_t stride = r.u32(name + " stride");
        if (size == 0 || stride == 0) throw FormatError(name + ": zero pool hyperparameter", tag_at);
        layers.emplace_back(MaxPool{size, stride});
        break;
      }
      case LayerTag::relu: layers.emplace_back(ReLU{}); break;
      case LayerTag::flatten: layers.emplace_back(Flatten{}); break;
      case LayerTag::dense: {
        const std::size_t in = r.u32(name + " in_units");
        const std::size_t out = r.u32(name + " out_units");
        if (in == 0 || out == 0) throw FormatError(name + ": zero dense hyperparameter", tag_at);
        auto dense = Dense<float>::zeros(in, out);
        dense.weights = Tensor4<float>({out, in, 1, 1}, r.tensor({out, in}, name + " weights"));
        dense.bias = r.tensor({out}, name + " bias");
        layers.emplace_back(std::move(dense));
        break;
      }
      default: throw FormatError(name + ": unknown layer tag " + std::to_string(bytes[tag_at]), tag_at);
    }
  }
  if (!r.done()) {
    throw FormatError("MNDL has " + std::to_string(bytes.size() - r.pos()) + " trailing bytes", r.pos());
  }
  try {
    return Network<float>(input, std::move(layers));
  } catch (const ShapeMismatch& e) {
    throw FormatError(std::string("MNDL layers are inconsistent: ") + e.what(), bytes.size());
  }
}

void save_model(const Network<float>& network, const std::filesystem::path& path) {
  const auto bytes = encode_model(network);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Network<float> load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_model(bytes);
}

}  // namespace evonas
