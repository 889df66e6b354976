#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include <doctest.h>

#include "hetqfl/data.hpp"

using namespace hetqfl;
using namespace hetqfl::data;

namespace {
namespace fs = std::filesystem;

void put_u32_be(std::ofstream& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8)
    out.put(static_cast<char>((v >> shift) & 0xff));
}

std::string write_idx_fixture(int count, bool mismatched_labels) {
  const auto dir = fs::temp_directory_path() / "hetqfl_idx";
  fs::create_directories(dir);
  {
    std::ofstream img(dir / "images", std::ios::binary);
    put_u32_be(img, 0x00000803);
    put_u32_be(img, static_cast<std::uint32_t>(count));
    put_u32_be(img, 2);
    put_u32_be(img, 2);
    for (int i = 0; i < count * 4; ++i) img.put(static_cast<char>(i));
  }
  {
    std::ofstream lab(dir / "labels", std::ios::binary);
    put_u32_be(lab, 0x00000801);
    const int n = mismatched_labels ? count - 1 : count;
    put_u32_be(lab, static_cast<std::uint32_t>(n));
    for (int i = 0; i < n; ++i) lab.put(static_cast<char>(i % 3));
  }
  return dir.string();
}

std::vector<int> label_counts(const Dataset& ds) {
  std::vector<int> counts(ds.num_classes, 0);
  for (int label : ds.labels) counts[label]++;
  return counts;
}
}  // namespace

TEST_CASE("dataset validation catches shape and label problems") {
  Dataset ds;
  ds.features = Eigen::MatrixXd::Zero(3, 2);
  ds.labels = {0, 1};
  ds.num_classes = 2;
  CHECK_THROWS_AS(ds.validate(), std::invalid_argument);
  ds.labels = {0, 1, 2};
  CHECK_THROWS_AS(ds.validate(), std::invalid_argument);
  ds.labels = {0, 1, 1};
  CHECK_NOTHROW(ds.validate());
}

TEST_CASE("idx files load with byte-to-unit-interval scaling") {
  const auto dir = write_idx_fixture(3, false);
  auto ds = load_idx(dir + "/images", dir + "/labels");
  CHECK(ds.size() == 3);
  CHECK(ds.dim() == 4);
  CHECK(ds.num_classes == 3);
  CHECK(ds.features(0, 0) == 0.0);
  CHECK(std::abs(ds.features(2, 3) - 11.0 / 255.0) < 1e-15);
  CHECK(ds.labels == std::vector<int>{0, 1, 2});

  const auto bad = write_idx_fixture(3, true);
  CHECK_THROWS_AS(load_idx(bad + "/images", bad + "/labels"),
                  std::runtime_error);
  CHECK_THROWS_AS(load_idx(dir + "/nope", dir + "/labels"),
                  std::runtime_error);
}

TEST_CASE("csv loader finds the label column and validates every cell") {
  const auto path = (fs::temp_directory_path() / "hetqfl_ds.csv").string();
  {
    std::ofstream out(path);
    out << "f0,label,f1\n";
    out << "0.5,1,2.25\n";
    out << "-1.0,0,3.5\n";
  }
  auto ds = load_csv(path);
  CHECK(ds.size() == 2);
  CHECK(ds.dim() == 2);
  CHECK(ds.labels == std::vector<int>{1, 0});
  CHECK(ds.features(0, 1) == 2.25);
  CHECK(ds.num_classes == 2);

  {
    std::ofstream out(path);
    out << "f0,label\n0.5,notanumber\n";
  }
  try {
    load_csv(path);
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    // The error message pinpoints the offending line.
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }

  {
    std::ofstream out(path);
    out << "f0,label\n0.5,1.5\n";
  }
  CHECK_THROWS_AS(load_csv(path), std::runtime_error);

  {
    std::ofstream out(path);
    out << "f0,f1\n0.5,1\n";
  }
  CHECK_THROWS_AS(load_csv(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("average pooling reduces square images blockwise") {
  Dataset ds;
  ds.features = Eigen::MatrixXd(1, 16);
  for (int i = 0; i < 16; ++i) ds.features(0, i) = i;
  ds.labels = {0};
  ds.num_classes = 1;

  auto reduced = reduce_dims(ds, 4, ReduceMethod::avgpool);
  CHECK(reduced.dim() == 4);
  CHECK(reduced.features(0, 0) == doctest::Approx(2.5));
  CHECK(reduced.features(0, 1) == doctest::Approx(4.5));
  CHECK(reduced.features(0, 2) == doctest::Approx(10.5));
  CHECK(reduced.features(0, 3) == doctest::Approx(12.5));

  CHECK_THROWS_AS(reduce_dims(ds, 3, ReduceMethod::avgpool),
                  std::invalid_argument);
}

TEST_CASE("pca finds the dominant axis with a deterministic sign") {
  Dataset ds;
  ds.features = Eigen::MatrixXd(4, 2);
  ds.features << -3, -3, -1, -1, 1, 1, 3, 3;
  ds.labels = {0, 0, 1, 1};
  ds.num_classes = 2;

  auto reduced = reduce_dims(ds, 1, ReduceMethod::pca);
  const double s2 = std::sqrt(2.0);
  CHECK(std::abs(reduced.features(0, 0) + 3 * s2) < 1e-9);
  CHECK(std::abs(reduced.features(1, 0) + s2) < 1e-9);
  CHECK(std::abs(reduced.features(2, 0) - s2) < 1e-9);
  CHECK(std::abs(reduced.features(3, 0) - 3 * s2) < 1e-9);

  // Fitting on one set and applying to another keeps the fitted center.
  auto reducer = DimReducer::fit(ds, 1, ReduceMethod::pca);
  Dataset other = ds;
  other.features.array() += 1.0;
  auto shifted = reducer.apply(other);
  CHECK(std::abs(shifted.features(0, 0) - (-3 * s2 + s2)) < 1e-9);
}

TEST_CASE("synthetic blobs balance classes and reproduce by seed") {
  auto a = synth_blobs(103, 4, 6, 0.25, 9);
  auto b = synth_blobs(103, 4, 6, 0.25, 9);
  auto c = synth_blobs(103, 4, 6, 0.25, 10);
  CHECK(a.size() == 103);
  CHECK(a.dim() == 6);
  CHECK(a.num_classes == 4);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  CHECK(a.features != c.features);
  CHECK_FALSE(a.provenance.empty());

  // 103 = 4 * 25 + 3: three classes get one extra sample.
  auto counts = label_counts(a);
  std::sort(counts.begin(), counts.end());
  CHECK(counts == std::vector<int>{25, 26, 26, 26});
}

TEST_CASE("label-skewed partition covers the dataset with disjoint shards") {
  auto ds = synth_blobs(1000, 4, 4, 0.3, 5);
  auto plan = partition_noniid(ds, 8, 2, 5);
  REQUIRE(plan.assignment.size() == 8);

  std::set<Eigen::Index> seen;
  std::set<int> classes_covered;
  for (int c = 0; c < 8; ++c) {
    const auto& shard = plan.assignment[c];
    CHECK(std::is_sorted(shard.begin(), shard.end()));
    for (auto idx : shard) {
      CHECK_FALSE(seen.count(idx));
      seen.insert(idx);
    }
    CHECK(plan.client_classes[c].size() == 2);
    std::set<int> shard_labels;
    for (auto idx : shard) shard_labels.insert(ds.labels[idx]);
    // Every sample matches one of the client's assigned classes.
    for (int label : shard_labels) {
      CHECK(std::count(plan.client_classes[c].begin(),
                       plan.client_classes[c].end(), label) == 1);
      classes_covered.insert(label);
    }
  }
  CHECK(seen.size() == 1000);
  CHECK(classes_covered.size() == 4);

  CHECK_THROWS_AS(partition_noniid(ds, 1, 2, 5), std::invalid_argument);
}

TEST_CASE("partition splits each class evenly among its owners") {
  auto ds = synth_blobs(400, 4, 3, 0.3, 21);
  auto plan = partition_noniid(ds, 6, 2, 21);
  for (int cls = 0; cls < 4; ++cls) {
    std::vector<int> per_owner;
    for (int c = 0; c < 6; ++c) {
      const bool owns = std::count(plan.client_classes[c].begin(),
                                   plan.client_classes[c].end(), cls) > 0;
      int held = 0;
      for (auto idx : plan.assignment[c])
        if (ds.labels[idx] == cls) ++held;
      if (owns)
        per_owner.push_back(held);
      else
        CHECK(held == 0);
    }
    REQUIRE(!per_owner.empty());
    const auto [lo, hi] =
        std::minmax_element(per_owner.begin(), per_owner.end());
    CHECK(*hi - *lo <= 1);
  }
}

TEST_CASE("stratified split takes the exact train fraction per class") {
  auto ds = synth_blobs(1000, 4, 4, 0.3, 77);
  auto [train, test] = split_train_test(ds, 0.8, 77);
  CHECK(train.size() == 800);
  CHECK(test.size() == 200);
  CHECK(label_counts(train) == std::vector<int>{200, 200, 200, 200});
  CHECK(label_counts(test) == std::vector<int>{50, 50, 50, 50});

  CHECK_THROWS_AS(split_train_test(ds, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_train_test(ds, 1.0, 1), std::invalid_argument);

  Dataset tiny;
  tiny.features = Eigen::MatrixXd::Zero(3, 1);
  tiny.labels = {0, 0, 1};
  tiny.num_classes = 2;
  CHECK_THROWS_AS(split_train_test(tiny, 0.5, 1), std::invalid_argument);
}

TEST_CASE("subset gathers rows by index and rejects bad positions") {
  auto ds = synth_blobs(20, 2, 3, 0.3, 1);
  std::vector<Eigen::Index> idx = {3, 7, 11};
  auto sub = subset(ds, idx);
  CHECK(sub.size() == 3);
  CHECK(sub.features.row(1) == ds.features.row(7));
  CHECK(sub.labels[2] == ds.labels[11]);

  std::vector<Eigen::Index> bad = {25};
  CHECK_THROWS_AS(subset(ds, bad), std::out_of_range);
}
