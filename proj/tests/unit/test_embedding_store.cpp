#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "protoclass/binary_format.hpp"
#include "protoclass/embedding_store.hpp"
#include "protoclass/error.hpp"
#include "support.hpp"

namespace {

using namespace protoclass;
using testing_support::random_set;
using testing_support::TempDir;

std::string slurp(const std::filesystem::path& p) { return io::read_file(p); }

TEST(EmbeddingStore, LoadsExactValuesFromDirectory) {
  TempDir dir;
  Matrix<float> x(4, 3, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  EmbeddingSet set(x, {0, 0, 1, 1}, ClassManifest({"a", "b"}));
  save_embedding_set(set, dir.path());

  const EmbeddingSet back = load_embedding_set(dir.path());
  EXPECT_EQ(back.size(), 4u);
  EXPECT_EQ(back.dim(), 3u);
  EXPECT_EQ(back.labels(), (std::vector<std::uint32_t>{0, 0, 1, 1}));
  EXPECT_EQ(back.features(), x);
  EXPECT_EQ(back.classes().names(), (std::vector<std::string>{"a", "b"}));
  EXPECT_FALSE(back.has_split_tags());
}

TEST(EmbeddingStore, DimensionMismatchIsADataError) {
  TempDir dir;
  save_embedding_set(random_set(2, 2, 511, 1), dir.path());
  auto manifest = io::read_json(dir / "manifest.json");
  manifest["d"] = 512;
  io::write_json(dir / "manifest.json", manifest);
  try {
    load_embedding_set(dir.path());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("dimension mismatch"), std::string::npos);
  }
}

TEST(EmbeddingStore, TruncatedPayloadIsADataError) {
  TempDir dir;
  save_embedding_set(random_set(2, 3, 4, 2), dir.path());
  std::string bytes = slurp(dir / "features.bin");
  bytes.resize(bytes.size() - 4);
  io::write_file(dir / "features.bin", bytes);
  EXPECT_THROW(load_embedding_set(dir.path()), DataError);
}

TEST(EmbeddingStore, BadMagicIsADataError) {
  TempDir dir;
  save_embedding_set(random_set(2, 3, 4, 2), dir.path());
  std::string bytes = slurp(dir / "labels.bin");
  bytes[0] = 'X';
  io::write_file(dir / "labels.bin", bytes);
  EXPECT_THROW(load_embedding_set(dir.path()), DataError);
}

TEST(EmbeddingStore, MissingManifestIsADataError) {
  TempDir dir;
  EXPECT_THROW(load_embedding_set(dir.path()), DataError);
}

TEST(EmbeddingStore, RejectsZeroRowsAndOutOfRangeLabels) {
  Matrix<float> x(2, 2, std::vector<float>{1, 0, 0, 0});
  EXPECT_THROW(EmbeddingSet(x, {0, 1}, ClassManifest({"a", "b"})), DataError);
  Matrix<float> y(2, 2, std::vector<float>{1, 0, 0, 1});
  EXPECT_THROW(EmbeddingSet(y, {0, 2}, ClassManifest({"a", "b"})), DataError);
  EXPECT_THROW(ClassManifest({"a", "a"}), DataError);
  EXPECT_THROW(ClassManifest({"a", ""}), DataError);
}

TEST(EmbeddingStore, RoundTripIsByteIdentical) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    TempDir a, b;
    EmbeddingSet set = random_set(3 + seed % 3, 5 + seed, 1 + 7 * seed, seed);
    if (seed % 2) set = split_dataset(set, {}, seed);
    save_embedding_set(set, a.path());
    save_embedding_set(load_embedding_set(a.path()), b.path());
    for (const char* f : {"manifest.json", "features.bin", "labels.bin"})
      EXPECT_EQ(slurp(a / f), slurp(b / f)) << f << " seed " << seed;
    if (seed % 2) {
      EXPECT_EQ(slurp(a / "splits.bin"), slurp(b / "splits.bin"));
    }
    EXPECT_EQ(load_embedding_set(b.path()), set);
  }
}

TEST(EmbeddingStore, ExtraManifestKeysArePreserved) {
  TempDir a, b;
  save_embedding_set(random_set(2, 3, 4, 1), a.path());
  auto manifest = io::read_json(a / "manifest.json");
  manifest["encoder"] = {{"name", "vit"}, {"weights_sha", "abc"}};
  io::write_json(a / "manifest.json", manifest);
  const EmbeddingSet set = load_embedding_set(a.path());
  EXPECT_EQ(set.metadata().at("encoder").at("name"), "vit");
  save_embedding_set(set, b.path());
  EXPECT_EQ(io::read_json(b / "manifest.json").at("encoder"), manifest.at("encoder"));
}

TEST(Split, HundredRowsGiveSeventyTenTwenty) {
  const EmbeddingSet set = random_set(1, 100, 4, 3);
  const EmbeddingSet split = split_dataset(set, {0.7, 0.1, 0.2}, 5);
  EXPECT_EQ(split.rows_in(Split::kTrain).size(), 70u);
  EXPECT_EQ(split.rows_in(Split::kVal).size(), 10u);
  EXPECT_EQ(split.rows_in(Split::kTest).size(), 20u);
}

TEST(Split, NonPositiveRatiosAreRejected) {
  EXPECT_THROW(validate_split_ratios({1.0, 0.0, 0.0}), ValidationError);
  EXPECT_THROW(validate_split_ratios({0.5, 0.6, 0.1}), ValidationError);
  EXPECT_THROW(parse_split_ratios("0.7,0.5"), ValidationError);
  EXPECT_THROW(parse_split_ratios("a,b,c"), ValidationError);
  try {
    parse_split_ratios("0.7,0.5");
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("--ratios"), std::string::npos);
  }
  const SplitRatios r = parse_split_ratios("0.6, 0.2, 0.2");
  EXPECT_DOUBLE_EQ(r.train, 0.6);
  EXPECT_DOUBLE_EQ(r.test, 0.2);
}

TEST(Split, SameSeedSameTags) {
  const EmbeddingSet set = random_set(4, 30, 3, 1);
  EXPECT_EQ(split_dataset(set, {}, 9).splits(), split_dataset(set, {}, 9).splits());
  EXPECT_NE(split_dataset(set, {}, 9).splits(), split_dataset(set, {}, 10).splits());
}

TEST(Split, FeaturesAndLabelsAreUntouched) {
  const EmbeddingSet set = random_set(3, 20, 5, 2);
  const EmbeddingSet split = split_dataset(set, {}, 1);
  EXPECT_EQ(split.features(), set.features());
  EXPECT_EQ(split.labels(), set.labels());
}

// Every class keeps its proportions to within one row for large classes.
TEST(Split, StratifiedProportionsPerClass) {
  const EmbeddingSet set = random_set(5, 97, 2, 4);
  const SplitRatios r{0.6, 0.15, 0.25};
  const EmbeddingSet split = split_dataset(set, r, 3);
  for (std::uint32_t c = 0; c < 5; ++c) {
    std::size_t counts[3] = {0, 0, 0};
    for (std::size_t i = 0; i < split.size(); ++i)
      if (split.labels()[i] == c) ++counts[static_cast<int>(split.split_of(i))];
    EXPECT_NEAR(counts[0], 97 * r.train, 1.0);
    EXPECT_NEAR(counts[1], 97 * r.val, 1.0);
    EXPECT_NEAR(counts[2], 97 * r.test, 1.0);
  }
}

TEST(Split, TinyClassIsRejectedByName) {
  Matrix<float> x(5, 1, std::vector<float>{1, 2, 3, 4, 5});
  EmbeddingSet set(x, {0, 0, 0, 1, 1}, ClassManifest({"big", "tiny"}));
  try {
    split_dataset(set, {}, 0);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("tiny"), std::string::npos);
  }
}

EmbeddingSet split_set_with_44_train_rows() {
  // 63 rows per class: lround(6.3) = 6 val, lround(12.6) = 13 test, 44 train.
  return split_dataset(random_set(3, 63, 4, 8), {0.7, 0.1, 0.2}, 2);
}

TEST(FewShot, SixteenShotsFromFortyFourRows) {
  const EmbeddingSet set = split_set_with_44_train_rows();
  ASSERT_EQ(set.only(Split::kTrain).class_counts()[0], 44u);
  const FewShotSample s = sample_few_shot(set, 16, 1);
  EXPECT_EQ(s.subset.class_counts(), (std::vector<std::size_t>{16, 16, 16}));
  EXPECT_TRUE(s.shortages.empty());
  for (std::size_t i = 0; i < s.subset.size(); ++i)
    EXPECT_EQ(s.subset.split_of(i), Split::kTrain);
}

TEST(FewShot, OneShotGivesOneRowPerClass) {
  const FewShotSample s = sample_few_shot(split_set_with_44_train_rows(), 1, 1);
  EXPECT_EQ(s.subset.class_counts(), (std::vector<std::size_t>{1, 1, 1}));
}

TEST(FewShot, HugeShotsReturnTheFullTrainSet) {
  const EmbeddingSet set = split_set_with_44_train_rows();
  const FewShotSample s = sample_few_shot(set, 1000000, 1);
  EXPECT_EQ(s.subset, set.only(Split::kTrain));
  EXPECT_EQ(s.shortages.size(), 3u);
}

TEST(FewShot, SmallerShotsAreASubsetOfLargerShots) {
  const EmbeddingSet set = split_set_with_44_train_rows();
  auto rows_of = [](const EmbeddingSet& s) {
    std::set<std::vector<float>> out;
    for (std::size_t i = 0; i < s.size(); ++i)
      out.insert(std::vector<float>(s.row(i).begin(), s.row(i).end()));
    return out;
  };
  const auto small = rows_of(sample_few_shot(set, 4, 3).subset);
  const auto large = rows_of(sample_few_shot(set, 16, 3).subset);
  EXPECT_TRUE(std::includes(large.begin(), large.end(), small.begin(), small.end()));
}

TEST(FewShot, ZeroShotsAreRejected) {
  EXPECT_THROW(sample_few_shot(random_set(2, 3, 2, 0), 0, 0), ValidationError);
}

TEST(Prompts, TextFileKeepsOrderAndRejectsEmptyPrompts) {
  TempDir dir;
  io::write_file(dir / "p.json", R"({"zeta": ["a z", "b z"], "alpha": ["an alpha"]})");
  const PromptSet p = load_prompt_texts(dir / "p.json");
  EXPECT_EQ(p.classes.names(), (std::vector<std::string>{"zeta", "alpha"}));
  EXPECT_EQ(p.texts[0].size(), 2u);

  const ClassManifest order({"alpha", "zeta"});
  EXPECT_EQ(load_prompt_texts(dir / "p.json", &order).texts[0][0], "an alpha");

  io::write_file(dir / "bad.json", R"({"zeta": [""]})");
  try {
    load_prompt_texts(dir / "bad.json");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("zeta"), std::string::npos);
  }
}

TEST(Prompts, EmbeddingDirectoryRoundTrip) {
  TempDir dir;
  Rng rng(4);
  PromptSet p;
  p.classes = ClassManifest({"x", "y"});
  p.embeddings.push_back(testing_support::random_matrix(3, 5, rng));
  p.embeddings.push_back(testing_support::random_matrix(5, 5, rng));
  save_prompt_embeddings(p, dir.path());
  const PromptSet back = load_prompt_embeddings(dir.path());
  EXPECT_EQ(back.classes, p.classes);
  ASSERT_EQ(back.embeddings.size(), 2u);
  EXPECT_EQ(back.embeddings[0], p.embeddings[0]);
  EXPECT_EQ(back.embeddings[1], p.embeddings[1]);
}

}  // namespace
