#pragma once

#include <cstddef>
#include <span>
#include <string>

#include <json.hpp>

namespace evonas {

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

// Positive class is label 1.
Confusion confusion_from(std::span<const int> labels, std::span<const int> predictions);

struct F1Result {
  double value = 0.0;
  // Precision or recall undefined (no predicted or no actual positives); value is 0.
  bool degenerate = false;
};

F1Result f1_score(const Confusion& c);

// Mann-Whitney AUC: fraction of (positive, negative) pairs ordered correctly, ties 0.5.
// Throws std::invalid_argument unless both classes are present.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

inline constexpr double kPatchesPerSlide = 200000.0;

// Seconds to classify one whole slide at `patches_per_s`.
double slide_time_s(double patches_per_s, double patches = kPatchesPerSlide);

struct MetricsReport {
  double f1 = 0.0;
  bool f1_degenerate = false;
  double auc = 0.0;
  Confusion confusion;
  double prediction_rate_patches_per_s = 0.0;
  std::string model_id;
  std::string dataset_id;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

}  // namespace evonas
