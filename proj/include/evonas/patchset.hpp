#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "evonas/format_error.hpp"
#include "evonas/tensor.hpp"

namespace evonas {

// Binary-labelled image patches. Pixels are kept as u8 (n, c, h, w) and
// normalized to [0, 1] when gathered into a tensor.
struct PatchSet {
  Dims dims;
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint8_t> labels;  // 0 negative, 1 positive
  std::string name;
  std::optional<std::uint64_t> seed;
  std::string source;

  std::size_t size() const { return labels.size(); }
  std::size_t positives() const;

  // Throws std::invalid_argument when lengths or labels are inconsistent.
  void validate() const;

  template <typename T>
  Tensor4<T> gather(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
};

inline constexpr std::uint32_t kPatchSetVersion = 1;

// "PSET", version, n, c, h, w (u32 LE), n label bytes, n*c*h*w pixel bytes.
std::vector<std::uint8_t> encode_patchset(const PatchSet& set);
PatchSet decode_patchset(std::span<const std::uint8_t> bytes);
void save_patchset(const PatchSet& set, const std::filesystem::path& path);
PatchSet load_patchset(const std::filesystem::path& path);

struct ClassCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

// Splits `total` in the reference dataset's 21,773 : 64,381 positive/negative ratio.
ClassCounts imbalanced_counts(std::size_t total);

// Positives carry >= 5 dark compact blobs (radius 2-4 px) over a textured
// background; negatives carry at most one. Deterministic per seed.
// Copies the listed patches (in order) into a new set.
PatchSet subset(const PatchSet& set, std::span<const std::size_t> indices, const std::string& name);

PatchSet generate_synthetic(std::size_t n_pos, std::size_t n_neg, std::size_t h, std::size_t w, std::uint64_t seed);

// Dark-pixel threshold (channel mean) used by the generator's blob/background contract.
inline constexpr int kDarkThreshold = 120;

struct SplitFractions {
  double train = 1.0;
  double val = 0.0;
  double test = 0.0;
};

struct Splits {
  std::shared_ptr<const PatchSet> data;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Per-class largest-remainder allocation after a seeded shuffle.
Splits stratified_split(std::shared_ptr<const PatchSet> set, const SplitFractions& fractions, std::uint64_t seed);

}  // namespace evonas
