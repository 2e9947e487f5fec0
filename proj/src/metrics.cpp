#include "protoclass/metrics.hpp"

#include "protoclass/error.hpp"

namespace protoclass {

ConfusionMatrix::ConfusionMatrix(std::size_t classes,
                                 std::vector<std::uint64_t> counts)
    : classes_(classes), counts_(std::move(counts)) {
  if (counts_.size() != classes_ * classes_)
    throw ValidationError("confusion matrix must be square");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  if (truth >= classes_ || predicted >= classes_)
    throw ValidationError("confusion matrix index out of range");
  ++counts_[truth * classes_ + predicted];
}

std::uint64_t ConfusionMatrix::total() const noexcept {
  std::uint64_t sum = 0;
  for (auto c : counts_) sum += c;
  return sum;
}

std::uint64_t ConfusionMatrix::trace() const noexcept {
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < classes_; ++i) sum += at(i, i);
  return sum;
}

MetricBundle compute_metrics(const ConfusionMatrix& confusion) {
  const std::size_t m = confusion.classes();
  const std::uint64_t total = confusion.total();
  if (m == 0 || total == 0)
    throw ValidationError("cannot compute metrics on an empty confusion matrix");

  MetricBundle out;
  out.per_class.resize(m);
  for (std::size_t c = 0; c < m; ++c) {
    ClassMetrics& cm = out.per_class[c];
    const std::uint64_t tp = confusion.at(c, c);
    for (std::size_t o = 0; o < m; ++o) {
      cm.support += confusion.at(c, o);
      cm.predicted += confusion.at(o, c);
    }
    cm.precision = cm.predicted ? static_cast<double>(tp) / cm.predicted : 0.0;
    cm.recall = cm.support ? static_cast<double>(tp) / cm.support : 0.0;
    cm.f1 = cm.precision + cm.recall > 0.0
                ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall)
                : 0.0;
    if (cm.predicted == 0) out.zero_prediction_classes.push_back(c);
    if (cm.support == 0) out.absent_classes.push_back(c);
    out.macro_precision += cm.precision;
    out.macro_recall += cm.recall;
    out.macro_f1 += cm.f1;
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  out.macro_precision *= inv_m;
  out.macro_recall *= inv_m;
  out.macro_f1 *= inv_m;
  out.accuracy = static_cast<double>(confusion.trace()) / static_cast<double>(total);
  return out;
}

}  // namespace protoclass
