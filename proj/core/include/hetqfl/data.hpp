#pragma once

// Dataset loading, synthesis, and the partitioning schemes used by the
// federation harness: label-skewed client shards and stratified
// train/test splits. All randomized operations take an explicit seed and
// are reproducible across runs and platforms.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace hetqfl::data {

struct Dataset {
  Eigen::MatrixXd features;  // one row per sample
  std::vector<int> labels;
  int num_classes = 0;
  std::string provenance;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  // Throws std::invalid_argument on label/feature inconsistencies.
  void validate() const;
};

// IDX image/label pair (the MNIST container format). Pixels are scaled
// to [0, 1]. Throws std::runtime_error on bad magic numbers, truncated
// files, or image/label count mismatch.
Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path);

// Comma-separated file with a header row; the column named "label" holds
// integer class ids and every other column is a numeric feature.
Dataset load_csv(const std::string& path);

enum class ReduceMethod { avgpool, pca };

// Fitted dimensionality reduction, split into fit and apply so test data
// can be transformed with statistics learned from training data only.
class DimReducer {
 public:
  static DimReducer fit(const Dataset& train, int out_dim,
                        ReduceMethod method);
  Dataset apply(const Dataset& ds) const;

  int out_dim() const { return out_dim_; }
  ReduceMethod method() const { return method_; }

 private:
  ReduceMethod method_ = ReduceMethod::avgpool;
  int out_dim_ = 0;
  int in_dim_ = 0;
  // pca state
  Eigen::VectorXd mean_;
  Eigen::MatrixXd components_;  // in_dim x out_dim
};

// Convenience: fit on ds and transform ds itself.
Dataset reduce_dims(const Dataset& ds, int out_dim, ReduceMethod method);

// Isotropic Gaussian blobs: one uniform[-1,1]^dim center per class,
// samples drawn around it with the given standard deviation. Class
// counts are balanced to within one sample and the row order is shuffled.
Dataset synth_blobs(int n, int num_classes, int dim, double spread,
                    std::uint64_t seed);

// Label-skewed partition: every client holds samples from exactly
// classes_per_client distinct classes, and the samples of each class are
// divided evenly among the clients holding it. The shards cover the
// dataset and are pairwise disjoint. Throws when
// num_clients * classes_per_client < num_classes, since some class would
// otherwise have no owner.
struct PartitionPlan {
  int num_clients = 0;
  int classes_per_client = 0;
  std::vector<std::vector<Eigen::Index>> assignment;  // per client, sorted
  std::vector<std::vector<int>> client_classes;       // per client, sorted
};
PartitionPlan partition_noniid(const Dataset& ds, int num_clients,
                               int classes_per_client, std::uint64_t seed);

// Stratified split: per class, a seeded shuffle and a
// floor(train_fraction * count) cut. Requires at least 2 samples in each
// class and train_fraction in (0, 1).
std::pair<Dataset, Dataset> split_train_test(const Dataset& ds,
                                             double train_fraction,
                                             std::uint64_t seed);

Dataset subset(const Dataset& ds, std::span<const Eigen::Index> indices);

}  // namespace hetqfl::data
