#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "oracles/oracles.hpp"
#include "protoclass/embedding_store.hpp"
#include "protoclass/prototypes.hpp"
#include "protoclass/rng.hpp"
#include "protoclass/tensor.hpp"

namespace testing_support {

namespace fs = std::filesystem;
using namespace protoclass;

// Directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("protoclass_test_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline ClassManifest class_names(std::size_t m) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < m; ++i) names.push_back("c" + std::to_string(i));
  return ClassManifest(std::move(names));
}

inline Matrix<float> random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix<float> out(rows, cols);
  for (auto& v : out.flat()) v = static_cast<float>(rng.normal());
  return out;
}

inline Tensor3<float> random_tensor(std::size_t m, std::size_t s, std::size_t d,
                                    Rng& rng) {
  Tensor3<float> out(m, s, d);
  for (auto& v : out.flat()) v = static_cast<float>(rng.normal());
  return out;
}

// Gaussian rows, `per_class` rows per class, labels in class-major order.
inline EmbeddingSet random_set(std::size_t classes, std::size_t per_class,
                               std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Matrix<float> x = random_matrix(classes * per_class, dim, rng);
  std::vector<std::uint32_t> labels;
  for (std::size_t c = 0; c < classes; ++c)
    labels.insert(labels.end(), per_class, static_cast<std::uint32_t>(c));
  return EmbeddingSet(std::move(x), std::move(labels), class_names(classes));
}

inline PrototypeBank random_bank(std::size_t m, std::size_t k, std::size_t j,
                                 std::size_t d, Rng& rng) {
  PrototypeBank bank;
  bank.classes = class_names(m);
  if (k > 0) bank.visual = random_tensor(m, k, d, rng);
  if (j > 0) bank.textual = random_tensor(m, j, d, rng);
  return bank;
}

template <typename T>
oracle::Vec to_vec(std::span<const T> values) {
  return oracle::Vec(values.begin(), values.end());
}

template <typename T>
oracle::Bank to_bank(const Tensor3<T>& t) {
  oracle::Bank out(t.classes());
  for (std::size_t m = 0; m < t.classes(); ++m)
    for (std::size_t s = 0; s < t.slots(); ++s) out[m].push_back(to_vec(t.at(m, s)));
  return out;
}

inline std::vector<oracle::Vec> to_rows(const Matrix<float>& x) {
  std::vector<oracle::Vec> out;
  for (std::size_t i = 0; i < x.rows(); ++i) out.push_back(to_vec(x.row(i)));
  return out;
}

}  // namespace testing_support
