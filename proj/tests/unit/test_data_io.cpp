#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "evonas/patchset.hpp"
#include "evonas/rng.hpp"

using namespace evonas;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("evonas_test_" + name);
}

PatchSet random_set(Rng& rng, std::size_t n, Dims d) {
  PatchSet s;
  s.dims = d;
  for (std::size_t i = 0; i < n; ++i) s.labels.push_back(static_cast<std::uint8_t>(rng.uniform_int(0, 1)));
  s.pixels.resize(n * d.size());
  for (auto& p : s.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return s;
}

// Dark pixels (channel mean below threshold) grouped by 4-connectivity.
int dark_components(const PatchSet& s, std::size_t idx) {
  const std::size_t h = s.dims.h, w = s.dims.w, plane = h * w;
  const std::uint8_t* px = s.pixels.data() + idx * s.dims.size();
  std::vector<char> dark(plane), seen(plane, 0);
  for (std::size_t i = 0; i < plane; ++i) {
    dark[i] = (px[i] + px[plane + i] + px[2 * plane + i]) < 3 * kDarkThreshold;
  }
  int count = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < plane; ++start) {
    if (!dark[start] || seen[start]) continue;
    ++count;
    stack.push_back(start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t y = p / w, x = p % w;
      const std::size_t nb[4] = {y > 0 ? p - w : p, y + 1 < h ? p + w : p, x > 0 ? p - 1 : p, x + 1 < w ? p + 1 : p};
      for (std::size_t q : nb) {
        if (dark[q] && !seen[q]) {
          seen[q] = 1;
          stack.push_back(q);
        }
      }
    }
  }
  return count;
}

}  // namespace

TEST_CASE("PSET: header of a 10-patch 3x100x100 set") {
  Rng rng(1);
  const auto set = random_set(rng, 10, {3, 100, 100});
  const auto bytes = encode_patchset(set);
  REQUIRE(bytes.size() == 24 + 10 + 10 * 30000);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "PSET");
  auto u32 = [&](std::size_t at) {
    return bytes[at] | bytes[at + 1] << 8 | bytes[at + 2] << 16 | static_cast<std::uint32_t>(bytes[at + 3]) << 24;
  };
  CHECK(u32(4) == kPatchSetVersion);
  CHECK(u32(8) == 10);
  CHECK(u32(12) == 3);
  CHECK(u32(16) == 100);
  CHECK(u32(20) == 100);
}

TEST_CASE("PSET: file round trip is byte-identical on re-save") {
  Rng rng(2);
  const auto set = random_set(rng, 7, {3, 5, 9});
  const auto a = temp_file("a.pset"), b = temp_file("b.pset");
  save_patchset(set, a);
  const auto loaded = load_patchset(a);
  CHECK(loaded.pixels == set.pixels);
  CHECK(loaded.labels == set.labels);
  CHECK(loaded.dims == set.dims);
  save_patchset(loaded, b);
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(sa == sb);
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST_CASE("PSET: round trip identity over random sizes") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto set = random_set(rng, rng.uniform_int(0, 12),
                                {static_cast<std::size_t>(rng.uniform_int(1, 3)), static_cast<std::size_t>(rng.uniform_int(1, 9)),
                                 static_cast<std::size_t>(rng.uniform_int(1, 9))});
    const auto bytes = encode_patchset(set);
    const auto back = decode_patchset(bytes);
    CHECK(back.pixels == set.pixels);
    CHECK(back.labels == set.labels);
    CHECK(encode_patchset(back) == bytes);
  }
}

TEST_CASE("PSET: truncation, bad magic, bad version and bad labels report offsets") {
  Rng rng(4);
  const auto bytes = encode_patchset(random_set(rng, 3, {3, 4, 4}));
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 5);
  try {
    decode_patchset(cut);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(std::to_string(bytes.size())) != std::string::npos);
    CHECK(msg.find(std::to_string(cut.size())) != std::string::npos);
  }
  std::vector<std::uint8_t> header_only(bytes.begin(), bytes.begin() + 10);
  CHECK_THROWS_AS(decode_patchset(header_only), FormatError);

  auto magic = bytes;
  magic[0] = 'X';
  try {
    decode_patchset(magic);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }
  auto version = bytes;
  version[4] = 9;
  try {
    decode_patchset(version);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 4);
  }
  auto label = bytes;
  label[25] = 7;
  try {
    decode_patchset(label);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 25);
  }
}

TEST_CASE("gather normalizes u8 pixels to [0, 1]") {
  PatchSet s;
  s.dims = {1, 1, 3};
  s.pixels = {0, 51, 255, 102, 204, 0};
  s.labels = {1, 0};
  const std::vector<std::size_t> idx{1, 0};
  const auto t = s.gather<double>(idx);
  CHECK(t.shape() == Shape4{2, 1, 1, 3});
  CHECK(t.values()[0] == doctest::Approx(0.4));
  CHECK(t.values()[3] == 0.0);
  CHECK(t.values()[5] == 1.0);
  CHECK(s.gather_labels(idx) == std::vector<int>{0, 1});
}

TEST_CASE("synthetic: deterministic per seed, imbalance ratio") {
  const auto a = generate_synthetic(5, 9, 32, 32, 11);
  const auto b = generate_synthetic(5, 9, 32, 32, 11);
  CHECK(encode_patchset(a) == encode_patchset(b));
  CHECK(encode_patchset(a) != encode_patchset(generate_synthetic(5, 9, 32, 32, 12)));
  CHECK(a.positives() == 5);
  CHECK(a.size() == 14);

  const auto full = imbalanced_counts(86154);
  CHECK(full.positives == 21773);
  CHECK(full.negatives == 64381);
  const auto desk = imbalanced_counts(4800);
  CHECK(desk.positives + desk.negatives == 4800);
  CHECK(static_cast<double>(desk.negatives) / desk.positives == doctest::Approx(64381.0 / 21773.0).epsilon(0.01));
}

TEST_CASE("synthetic: blob-count oracle agrees with every label") {
  for (std::size_t side : {32, 48, 100}) {
    const auto set = generate_synthetic(60, 140, side, side, 100 + side);
    int correct = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      const int blobs = dark_components(set, i);
      if (set.labels[i] == 1) {
        CHECK(blobs >= 5);
      } else {
        CHECK(blobs <= 1);
      }
      correct += (blobs >= 3) == (set.labels[i] == 1);
    }
    CHECK(correct == static_cast<int>(set.size()));
  }
}

TEST_CASE("stratified_split: partition, proportions, determinism, errors") {
  auto set = std::make_shared<const PatchSet>(generate_synthetic(23, 67, 32, 32, 5));
  const auto all_train = stratified_split(set, {1, 0, 0}, 1);
  CHECK(all_train.train.size() == 90);
  CHECK(all_train.val.empty());
  CHECK(all_train.test.empty());

  const SplitFractions f{0.7, 0.15, 0.15};
  const auto s = stratified_split(set, f, 2);
  std::set<std::size_t> seen;
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    for (auto i : *part) CHECK(seen.insert(i).second);
  }
  CHECK(seen.size() == 90);
  for (const auto& [part, frac] : {std::pair{&s.train, f.train}, std::pair{&s.val, f.val}, std::pair{&s.test, f.test}}) {
    std::size_t pos = 0;
    for (auto i : *part) pos += set->labels[i];
    CHECK(std::abs(static_cast<double>(pos) - frac * 23) <= 1.0);
    CHECK(std::abs(static_cast<double>(part->size() - pos) - frac * 67) <= 1.0);
  }
  const auto again = stratified_split(set, f, 2);
  CHECK(again.train == s.train);
  CHECK(again.val == s.val);
  CHECK(again.test == s.test);

  auto tiny = std::make_shared<const PatchSet>(generate_synthetic(2, 30, 32, 32, 6));
  CHECK_THROWS_AS(stratified_split(tiny, f, 1), std::invalid_argument);
  CHECK_THROWS_AS(stratified_split(set, {0.5, 0.2, 0.2}, 1), std::invalid_argument);
}

TEST_CASE("stratified_split: random partitions stay exact") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t pos = rng.uniform_int(3, 40), neg = rng.uniform_int(3, 40);
    auto set = std::make_shared<const PatchSet>(generate_synthetic(pos, neg, 32, 32, trial));
    const double a = rng.uniform(0.2, 0.6), b = rng.uniform(0.1, 0.3);
    const auto s = stratified_split(set, {a, b, 1 - a - b}, trial);
    std::vector<std::size_t> all;
    for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(all.end(), part->begin(), part->end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(pos + neg);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(all == expect);
  }
}
