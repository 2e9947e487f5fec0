#pragma once

// Reference implementations used only by tests. They share no code with the
// library: plain loops, long double accumulation, no SIMD, no dispatch.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

namespace oracle {

using Vec = std::vector<long double>;
// [class][slot][dim]
using Bank = std::vector<std::vector<Vec>>;

inline long double norm(const Vec& a) {
  long double s = 0;
  for (long double v : a) s += v * v;
  return std::sqrt(s);
}

inline long double cosine(const Vec& a, const Vec& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s / (norm(a) * norm(b));
}

inline Vec softmax(const Vec& logits) {
  const long double hi = *std::max_element(logits.begin(), logits.end());
  Vec out(logits.size());
  long double z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += out[i] = std::exp(logits[i] - hi);
  for (auto& v : out) v /= z;
  return out;
}

inline Vec visual_logits(const Vec& x, const Bank& v, long double tau) {
  Vec logits;
  for (const auto& cls : v) {
    long double s = 0;
    for (const auto& p : cls) s += cosine(x, p);
    logits.push_back(s / tau);
  }
  return logits;
}

inline Vec text_max_logits(const Vec& x, const Bank& t, long double tau) {
  Vec logits;
  for (const auto& cls : t) {
    long double best = -std::numeric_limits<long double>::infinity();
    for (const auto& p : cls) best = std::max(best, cosine(x, p));
    logits.push_back(best / tau);
  }
  return logits;
}

inline Vec text_avg_logits(const Vec& x, const Bank& t, long double tau) {
  Vec logits;
  for (const auto& cls : t) {
    long double s = 0;
    for (const auto& p : cls) s += cosine(x, p);
    logits.push_back(s / (tau * static_cast<long double>(cls.size())));
  }
  return logits;
}

inline long double cross_entropy(const Vec& logits, std::size_t label) {
  const long double hi = *std::max_element(logits.begin(), logits.end());
  long double z = 0;
  for (long double l : logits) z += std::exp(l - hi);
  return -(logits[label] - hi - std::log(z));
}

// Batch-mean L_v + lambda1 * L_tmax + lambda2 * L_tavg.
inline long double overall_loss(const std::vector<Vec>& xs,
                                const std::vector<std::size_t>& labels,
                                const Bank& v, const Bank& t, long double tau,
                                long double lambda1, long double lambda2) {
  long double lv = 0, lmax = 0, lavg = 0;
  for (std::size_t n = 0; n < xs.size(); ++n) {
    lv += cross_entropy(visual_logits(xs[n], v, tau), labels[n]);
    lmax += cross_entropy(text_max_logits(xs[n], t, tau), labels[n]);
    lavg += cross_entropy(text_avg_logits(xs[n], t, tau), labels[n]);
  }
  const long double n = static_cast<long double>(xs.size());
  return lv / n + lambda1 * lmax / n + lambda2 * lavg / n;
}

// Index of the most similar prototype of each class, for detecting
// finite-difference steps that cross a max() kink.
inline std::vector<std::size_t> argmax_slots(const Vec& x, const Bank& t) {
  std::vector<std::size_t> out;
  for (const auto& cls : t) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < cls.size(); ++j)
      if (cosine(x, cls[j]) > cosine(x, cls[best])) best = j;
    out.push_back(best);
  }
  return out;
}

// Exhaustive kNN: sort every train row by (cosine distance, index), vote
// over the first n, ties to the smaller label.
inline std::uint32_t knn(const std::vector<Vec>& train,
                         const std::vector<std::uint32_t>& labels,
                         const Vec& query, std::size_t n) {
  std::vector<std::pair<long double, std::size_t>> all;
  for (std::size_t i = 0; i < train.size(); ++i)
    all.emplace_back(1.0L - cosine(query, train[i]), i);
  std::sort(all.begin(), all.end());
  std::map<std::uint32_t, std::size_t> votes;
  for (std::size_t i = 0; i < std::min(n, all.size()); ++i) ++votes[labels[all[i].second]];
  std::uint32_t best = 0;
  std::size_t best_votes = 0;
  for (const auto& [label, count] : votes)
    if (count > best_votes) best = label, best_votes = count;
  return best;
}

// Multiclass perceptron on (x, 1). Returns true once an epoch makes no
// mistakes, which certifies linear separability of the labelled set.
inline bool linearly_separable(const std::vector<Vec>& xs,
                               const std::vector<std::size_t>& labels,
                               std::size_t classes, std::size_t max_epochs = 10000) {
  const std::size_t d = xs.front().size() + 1;
  std::vector<Vec> w(classes, Vec(d, 0));
  auto score = [&](std::size_t c, const Vec& x) {
    long double s = 0;
    for (std::size_t i = 0; i < d; ++i) s += w[c][i] * x[i];
    return s;
  };
  for (std::size_t epoch = 0; epoch < max_epochs; ++epoch) {
    bool clean = true;
    for (std::size_t n = 0; n < xs.size(); ++n) {
      Vec x = xs[n];
      x.push_back(1);
      std::size_t rival = labels[n] == 0 ? 1 : 0;
      for (std::size_t c = 0; c < classes; ++c)
        if (c != labels[n] && score(c, x) > score(rival, x)) rival = c;
      // A tie is a mistake: the certificate needs a strict margin.
      if (score(labels[n], x) <= score(rival, x)) {
        clean = false;
        for (std::size_t i = 0; i < d; ++i) w[labels[n]][i] += x[i], w[rival][i] -= x[i];
      }
    }
    if (clean) return true;
  }
  return false;
}

struct Metrics {
  long double accuracy, macro_precision, macro_recall, macro_f1;
};

// Standard definitions; 0 for a zero denominator.
inline Metrics metrics(const std::vector<std::vector<std::uint64_t>>& cm) {
  const std::size_t m = cm.size();
  long double total = 0, trace = 0, p = 0, r = 0, f = 0;
  for (std::size_t i = 0; i < m; ++i) {
    long double row = 0, col = 0;
    for (std::size_t j = 0; j < m; ++j) row += cm[i][j], col += cm[j][i], total += cm[i][j];
    trace += cm[i][i];
    const long double pi = col > 0 ? cm[i][i] / col : 0;
    const long double ri = row > 0 ? cm[i][i] / row : 0;
    p += pi;
    r += ri;
    f += (pi + ri) > 0 ? 2 * pi * ri / (pi + ri) : 0;
  }
  return {trace / total, p / m, r / m, f / m};
}

}  // namespace oracle
