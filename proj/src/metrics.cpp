#include "evonas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace evonas {

Confusion confusion_from(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) {
    throw std::invalid_argument("confusion: " + std::to_string(labels.size()) + " labels vs " +
                                std::to_string(predictions.size()) + " predictions");
  }
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool actual = labels[i] == 1;
    const bool predicted = predictions[i] == 1;
    if (actual && predicted) ++c.tp;
    else if (!actual && predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

F1Result f1_score(const Confusion& c) {
  if (c.tp + c.fp == 0 || c.tp + c.fn == 0) return {0.0, true};
  if (c.tp == 0) return {0.0, false};
  // 2PR/(P+R) rearranged to integer counts: one rounding step.
  return {static_cast<double>(2 * c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn), false};
}

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: scores and labels differ in length");
  for (double s : scores) {
    if (std::isnan(s)) throw std::invalid_argument("auc: NaN score");
  }
  // Rank-sum form of the pairwise count, O(n log n); ties get the average rank.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auc: needs at least one positive and one negative label");
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double slide_time_s(double patches_per_s, double patches) {
  if (!(patches_per_s > 0.0)) throw std::invalid_argument("slide_time: rate must be positive");
  return patches / patches_per_s;
}

nlohmann::json MetricsReport::to_json() const {
  return {{"model_id", model_id},
          {"dataset_id", dataset_id},
          {"f1", f1},
          {"f1_degenerate", f1_degenerate},
          {"auc", auc},
          {"confusion", {{"tp", confusion.tp}, {"fp", confusion.fp}, {"fn", confusion.fn}, {"tn", confusion.tn}}},
          {"prediction_rate_patches_per_s", prediction_rate_patches_per_s},
          {"slide_time_s", prediction_rate_patches_per_s > 0.0 ? slide_time_s(prediction_rate_patches_per_s) : 0.0}};
}

std::string MetricsReport::to_text() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "model       %s\ndataset     %s\nF1          %.4f%s\nAUC         %.4f\n"
                "confusion   tp=%zu fp=%zu fn=%zu tn=%zu\nrate        %.1f patches/s\nslide time  %.1f s per %.0f patches\n",
                model_id.c_str(), dataset_id.c_str(), f1, f1_degenerate ? " (degenerate)" : "", auc, confusion.tp,
                confusion.fp, confusion.fn, confusion.tn, prediction_rate_patches_per_s,
                prediction_rate_patches_per_s > 0.0 ? slide_time_s(prediction_rate_patches_per_s) : 0.0,
                kPatchesPerSlide);
  return buf;
}

}  // namespace evonas
