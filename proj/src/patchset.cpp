#include "evonas/patchset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>

#include "evonas/rng.hpp"

namespace evonas {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t& pos, const char* field) {
  if (bytes.size() < pos + 4) {
    throw FormatError(std::string("PSET truncated reading ") + field + ": need " + std::to_string(pos + 4) +
                          " bytes, have " + std::to_string(bytes.size()),
                      pos);
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

std::uint32_t checked_u32(std::size_t v, const char* field) {
  if (v > UINT32_MAX) throw std::invalid_argument(std::string("PSET field ") + field + " exceeds u32");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::size_t PatchSet::positives() const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1)); }

void PatchSet::validate() const {
  if (pixels.size() != labels.size() * dims.size()) {
    throw std::invalid_argument("patch set: " + std::to_string(pixels.size()) + " pixel bytes for " +
                                std::to_string(labels.size()) + " patches of " + to_string(dims));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 1) throw std::invalid_argument("patch set: label " + std::to_string(labels[i]) + " at " + std::to_string(i));
  }
}

template <typename T>
Tensor4<T> PatchSet::gather(std::span<const std::size_t> indices) const {
  const std::size_t per = dims.size();
  Tensor4<T> out({indices.size(), dims.c, dims.h, dims.w});
  T* dst = out.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw std::out_of_range("patch index " + std::to_string(indices[i]) + " out of range");
    const std::uint8_t* src = pixels.data() + indices[i] * per;
    for (std::size_t j = 0; j < per; ++j) dst[i * per + j] = static_cast<T>(src[j]) / T(255);
  }
  return out;
}

template Tensor4<float> PatchSet::gather<float>(std::span<const std::size_t>) const;
template Tensor4<double> PatchSet::gather<double>(std::span<const std::size_t>) const;

std::vector<int> PatchSet::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

std::vector<std::uint8_t> encode_patchset(const PatchSet& set) {
  set.validate();
  std::vector<std::uint8_t> out;
  out.reserve(24 + set.labels.size() + set.pixels.size());
  for (char ch : {'P', 'S', 'E', 'T'}) out.push_back(static_cast<std::uint8_t>(ch));
  put_u32(out, kPatchSetVersion);
  put_u32(out, checked_u32(set.size(), "n"));
  put_u32(out, checked_u32(set.dims.c, "c"));
  put_u32(out, checked_u32(set.dims.h, "h"));
  put_u32(out, checked_u32(set.dims.w, "w"));
  out.insert(out.end(), set.labels.begin(), set.labels.end());
  out.insert(out.end(), set.pixels.begin(), set.pixels.end());
  return out;
}

PatchSet decode_patchset(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw FormatError("PSET truncated: missing magic", bytes.size());
  if (!(bytes[0] == 'P' && bytes[1] == 'S' && bytes[2] == 'E' && bytes[3] == 'T')) {
    throw FormatError("bad PSET magic", 0);
  }
  std::size_t pos = 4;
  const std::uint32_t version = get_u32(bytes, pos, "version");
  if (version != kPatchSetVersion) {
    throw FormatError("unsupported PSET version " + std::to_string(version), 4);
  }
  PatchSet set;
  const std::uint32_t n = get_u32(bytes, pos, "n");
  set.dims.c = get_u32(bytes, pos, "c");
  set.dims.h = get_u32(bytes, pos, "h");
  set.dims.w = get_u32(bytes, pos, "w");
  const std::uint64_t expected = 24ULL + n + static_cast<std::uint64_t>(n) * set.dims.size();
  if (bytes.size() != expected) {
    throw FormatError("PSET length mismatch: header declares " + std::to_string(expected) + " bytes, file has " +
                          std::to_string(bytes.size()),
                      std::min<std::size_t>(bytes.size(), expected));
  }
  set.labels.assign(bytes.begin() + 24, bytes.begin() + 24 + n);
  for (std::size_t i = 0; i < set.labels.size(); ++i) {
    if (set.labels[i] > 1) throw FormatError("PSET label byte " + std::to_string(set.labels[i]) + " is not 0/1", 24 + i);
  }
  set.pixels.assign(bytes.begin() + 24 + n, bytes.end());
  return set;
}

void save_patchset(const PatchSet& set, const std::filesystem::path& path) {
  const auto bytes = encode_patchset(set);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

PatchSet load_patchset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  PatchSet set = decode_patchset(bytes);
  set.name = path.filename().string();
  set.source = path.string();
  return set;
}

ClassCounts imbalanced_counts(std::size_t total) {
  constexpr double kPos = 21773.0;
  constexpr double kNeg = 64381.0;
  const auto pos = static_cast<std::size_t>(std::llround(static_cast<double>(total) * kPos / (kPos + kNeg)));
  return {pos, total - pos};
}

namespace {

struct Blob {
  int cy, cx, r;
};

void paint_background(Rng& rng, std::size_t h, std::size_t w, std::uint8_t* px) {
  const std::array<double, 3> base{rng.uniform(205, 235), rng.uniform(160, 190), rng.uniform(190, 220)};
  struct Wave {
    double fy, fx, phase, amp;
  };
  std::array<Wave, 3> waves{};
  for (auto& wv : waves) {
    wv = {rng.uniform(0.05, 0.35), rng.uniform(0.05, 0.35), rng.uniform(0, 2 * M_PI), rng.uniform(3, 8)};
  }
  const std::size_t plane = h * w;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double tex = 0.0;
      for (const auto& wv : waves) tex += wv.amp * std::sin(wv.fy * static_cast<double>(y) + wv.fx * static_cast<double>(x) + wv.phase);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = base[c] + tex + rng.uniform(-8, 8);
        // background stays well above the dark threshold
        px[c * plane + y * w + x] = static_cast<std::uint8_t>(std::clamp(v, 150.0, 255.0));
      }
    }
  }
}

void paint_blob(Rng& rng, const Blob& b, std::size_t h, std::size_t w, std::uint8_t* px) {
  const std::array<double, 3> ink{rng.uniform(55, 85), rng.uniform(30, 55), rng.uniform(95, 120)};
  const std::size_t plane = h * w;
  for (int dy = -b.r; dy <= b.r; ++dy) {
    for (int dx = -b.r; dx <= b.r; ++dx) {
      if (dy * dy + dx * dx > b.r * b.r) continue;
      const auto y = static_cast<std::size_t>(b.cy + dy);
      const auto x = static_cast<std::size_t>(b.cx + dx);
      for (std::size_t c = 0; c < 3; ++c) {
        px[c * plane + y * w + x] = static_cast<std::uint8_t>(std::clamp(ink[c] + rng.uniform(-10, 10), 0.0, 140.0));
      }
    }
  }
}

// Non-touching discs fully inside the patch; retries from scratch on crowding.
std::vector<Blob> place_blobs(Rng& rng, std::size_t count, std::size_t h, std::size_t w) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<Blob> blobs;
    int failures = 0;
    while (blobs.size() < count && failures < 200) {
      const int r = static_cast<int>(rng.uniform_int(2, 4));
      if (static_cast<std::size_t>(2 * r + 1) > std::min(h, w)) {
        ++failures;
        continue;
      }
      Blob b{static_cast<int>(rng.uniform_int(r, static_cast<std::int64_t>(h) - 1 - r)),
             static_cast<int>(rng.uniform_int(r, static_cast<std::int64_t>(w) - 1 - r)), r};
      bool clear = true;
      for (const auto& o : blobs) {
        const int dy = b.cy - o.cy;
        const int dx = b.cx - o.cx;
        const int gap = b.r + o.r + 3;
        if (dy * dy + dx * dx < gap * gap) {
          clear = false;
          break;
        }
      }
      if (clear) {
        blobs.push_back(b);
      } else {
        ++failures;
      }
    }
    if (blobs.size() == count) return blobs;
  }
  throw std::invalid_argument("synthetic patches of " + std::to_string(h) + "x" + std::to_string(w) +
                              " are too small for " + std::to_string(count) + " blobs");
}

}  // namespace

PatchSet subset(const PatchSet& set, std::span<const std::size_t> indices, const std::string& name) {
  PatchSet out;
  out.dims = set.dims;
  out.name = name;
  out.seed = set.seed;
  out.source = set.source.empty() ? set.name : set.source;
  const std::size_t per = set.dims.size();
  out.pixels.reserve(indices.size() * per);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= set.size()) throw std::out_of_range("subset index " + std::to_string(i) + " out of range");
    out.labels.push_back(set.labels[i]);
    out.pixels.insert(out.pixels.end(), set.pixels.begin() + static_cast<std::ptrdiff_t>(i * per),
                      set.pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
  }
  return out;
}

PatchSet generate_synthetic(std::size_t n_pos, std::size_t n_neg, std::size_t h, std::size_t w, std::uint64_t seed) {
  if (h < 9 || w < 9) throw std::invalid_argument("synthetic patches need h, w >= 9");
  Rng rng(seed);
  PatchSet set;
  set.dims = {3, h, w};
  set.name = "synthetic";
  set.seed = seed;
  set.source = "generate_synthetic";
  const std::size_t n = n_pos + n_neg;
  set.labels.assign(n_pos, 1);
  set.labels.insert(set.labels.end(), n_neg, 0);
  rng.shuffle(set.labels);
  set.pixels.resize(n * set.dims.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::uint8_t* px = set.pixels.data() + i * set.dims.size();
    paint_background(rng, h, w, px);
    const std::size_t count = set.labels[i] ? static_cast<std::size_t>(rng.uniform_int(5, 7))
                                            : static_cast<std::size_t>(rng.uniform_int(0, 1));
    for (const auto& b : place_blobs(rng, count, h, w)) paint_blob(rng, b, h, w, px);
  }
  return set;
}

Splits stratified_split(std::shared_ptr<const PatchSet> set, const SplitFractions& f, std::uint64_t seed) {
  if (!set) throw std::invalid_argument("stratified_split: null patch set");
  const std::array<double, 3> fr{f.train, f.val, f.test};
  double sum = 0.0;
  for (double x : fr) {
    if (x < 0.0) throw std::invalid_argument("stratified_split: negative fraction");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("stratified_split: fractions sum to " + std::to_string(sum) + ", expected 1");
  }
  const auto nonzero = static_cast<std::size_t>(std::count_if(fr.begin(), fr.end(), [](double x) { return x > 0.0; }));

  Rng rng(seed);
  Splits out;
  out.data = set;
  std::array<std::vector<std::size_t>*, 3> dst{&out.train, &out.val, &out.test};
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < set->size(); ++i) {
      if (set->labels[i] == cls) idx.push_back(i);
    }
    if (idx.size() < nonzero) {
      throw std::invalid_argument("stratified_split: class " + std::to_string(cls) + " has " +
                                  std::to_string(idx.size()) + " samples for " + std::to_string(nonzero) + " splits");
    }
    rng.shuffle(idx);
    // largest remainder: floor shares, then hand leftovers to the largest fractional parts
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = fr[s] * static_cast<double>(idx.size());
      counts[s] = static_cast<std::size_t>(std::floor(exact));
      rem[s] = exact - std::floor(exact);
      assigned += counts[s];
    }
    while (assigned < idx.size()) {
      int best = -1;
      for (int s = 0; s < 3; ++s) {
        if (fr[s] > 0.0 && (best < 0 || rem[s] > rem[best])) best = s;
      }
      ++counts[best];
      rem[best] = -1.0;
      ++assigned;
    }
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s) {
      dst[s]->insert(dst[s]->end(), idx.begin() + static_cast<std::ptrdiff_t>(pos),
                     idx.begin() + static_cast<std::ptrdiff_t>(pos + counts[s]));
      pos += counts[s];
    }
  }
  for (auto* d : dst) std::sort(d->begin(), d->end());
  return out;
}

}  // namespace evonas
