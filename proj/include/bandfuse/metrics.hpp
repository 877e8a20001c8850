#pragma once

#include "bandfuse/ops.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bandfuse {

/// Pixel counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes = 3);

  int classes() const { return classes_; }
  std::uint64_t count(int truth, int predicted) const;
  std::uint64_t ignored() const { return ignored_; }
  std::uint64_t counted() const;
  /// counted() + ignored(): every pixel ever passed to update_confusion.
  std::uint64_t evaluated() const { return counted() + ignored_; }

  void add(int truth, int predicted, std::uint64_t n = 1);
  void add_ignored(std::uint64_t n) { ignored_ += n; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int classes_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t ignored_ = 0;
};

/// Counts every pixel; truth == 255 goes to the ignored tally.
void update_confusion(ConfusionMatrix& cm, std::span<const Label> predicted, std::span<const Label> truth);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double iou = 0.0;
  /// Class appears in neither truth nor prediction; all three scores are 1.
  bool absent = false;
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  double miou = 0.0;
};

/// Precision TP/(TP+FP), recall TP/(TP+FN), IoU TP/(TP+FP+FN). An empty
/// denominator scores 0 unless the class is absent altogether.
MetricsReport class_metrics(const ConfusionMatrix& cm);

/// Collapses Thick and Thin cloud into a single Cloud class (2 x 2).
ConfusionMatrix collapse_binary(const ConfusionMatrix& cm);

/// Table with Prec/Rec/IoU per class and mIoU, in percent.
std::string format_metrics_table(const MetricsReport& report, const std::vector<std::string>& class_names);
/// One-line JSON record of the same numbers (fractions, not percent).
std::string format_metrics_json(const MetricsReport& report, const std::vector<std::string>& class_names);

const std::vector<std::string>& cloud_class_names();
const std::vector<std::string>& binary_class_names();

}  // namespace bandfuse
