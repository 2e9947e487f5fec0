#pragma once

#include <cstdint>
#include <vector>

namespace protoclass {

/// Square count matrix; rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = 0)
      : classes_(classes), counts_(classes * classes, 0) {}
  ConfusionMatrix(std::size_t classes, std::vector<std::uint64_t> counts);

  void add(std::size_t truth, std::size_t predicted);
  std::uint64_t at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * classes_ + predicted];
  }
  std::size_t classes() const noexcept { return classes_; }
  std::uint64_t total() const noexcept;
  std::uint64_t trace() const noexcept;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;    // true rows of the class
  std::uint64_t predicted = 0;  // rows predicted as the class
};

/// Accuracy and unweighted (macro) means of per-class precision, recall and
/// F1. A zero denominator yields 0 for that class; such classes are listed
/// in `zero_prediction_classes` / `absent_classes`.
struct MetricBundle {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;  // mean of per-class F1
  std::vector<ClassMetrics> per_class;
  std::vector<std::size_t> zero_prediction_classes;
  std::vector<std::size_t> absent_classes;
};

/// Throws ValidationError on an empty matrix.
MetricBundle compute_metrics(const ConfusionMatrix& confusion);

}  // namespace protoclass
