#include "hetqfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hetqfl::data {
namespace {

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error(path + ": truncated header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

int max_label(const std::vector<int>& labels) {
  int m = -1;
  for (int l : labels) m = std::max(m, l);
  return m;
}

bool is_perfect_square(int n, int& root) {
  if (n < 1) return false;
  root = static_cast<int>(std::lround(std::sqrt(double(n))));
  return root * root == n;
}

}  // namespace

void Dataset::validate() const {
  if (features.rows() != static_cast<Eigen::Index>(labels.size()))
    throw std::invalid_argument("feature rows and label count differ");
  if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
  for (int l : labels)
    if (l < 0 || l >= num_classes)
      throw std::invalid_argument("label outside [0, num_classes)");
  if (!features.allFinite())
    throw std::invalid_argument("features contain NaN or Inf");
}

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("cannot open " + images_path);
  if (read_u32_be(img, images_path) != 0x00000803u)
    throw std::runtime_error(images_path + ": bad magic for idx3 images");
  const std::uint32_t count = read_u32_be(img, images_path);
  const std::uint32_t rows = read_u32_be(img, images_path);
  const std::uint32_t cols = read_u32_be(img, images_path);

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("cannot open " + labels_path);
  if (read_u32_be(lab, labels_path) != 0x00000801u)
    throw std::runtime_error(labels_path + ": bad magic for idx1 labels");
  const std::uint32_t label_count = read_u32_be(lab, labels_path);
  if (label_count != count)
    throw std::runtime_error("image count " + std::to_string(count) +
                             " does not match label count " +
                             std::to_string(label_count));

  const std::size_t pixels = std::size_t(rows) * cols;
  Dataset ds;
  ds.features.resize(count, static_cast<Eigen::Index>(pixels));
  std::vector<unsigned char> buf(pixels);
  for (std::uint32_t i = 0; i < count; ++i) {
    if (!img.read(reinterpret_cast<char*>(buf.data()),
                  static_cast<std::streamsize>(pixels)))
      throw std::runtime_error(images_path + ": truncated image data");
    for (std::size_t p = 0; p < pixels; ++p)
      ds.features(i, static_cast<Eigen::Index>(p)) = buf[p] / 255.0;
  }
  ds.labels.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    char c;
    if (!lab.read(&c, 1))
      throw std::runtime_error(labels_path + ": truncated label data");
    ds.labels[i] = static_cast<unsigned char>(c);
  }
  ds.num_classes = max_label(ds.labels) + 1;
  ds.provenance = "idx(" + images_path + ")";
  ds.validate();
  return ds;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");

  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.push_back("");
    return cells;
  };

  const auto header = split(line);
  Eigen::Index label_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == "label") label_col = static_cast<Eigen::Index>(i);
  if (label_col < 0)
    throw std::runtime_error(path + ": no column named 'label'");

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected " + std::to_string(header.size()) +
                               " columns, got " + std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size() - 1);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(cells[i], &used);
      } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": non-numeric cell '" + cells[i] + "'");
      }
      if (used != cells[i].size())
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": non-numeric cell '" + cells[i] + "'");
      if (static_cast<Eigen::Index>(i) == label_col) {
        const int l = static_cast<int>(std::lround(value));
        if (l < 0 || std::abs(value - l) > 1e-9)
          throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                   ": label must be a nonnegative integer");
        labels.push_back(l);
      } else {
        row.push_back(value);
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": no data rows");

  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
  ds.labels = std::move(labels);
  ds.num_classes = max_label(ds.labels) + 1;
  ds.provenance = "csv(" + path + ")";
  ds.validate();
  return ds;
}

DimReducer DimReducer::fit(const Dataset& train, int out_dim,
                           ReduceMethod method) {
  if (out_dim < 1 || out_dim > train.dim())
    throw std::invalid_argument("out_dim must be in [1, input dim]");
  DimReducer r;
  r.method_ = method;
  r.out_dim_ = out_dim;
  r.in_dim_ = static_cast<int>(train.dim());
  if (method == ReduceMethod::avgpool) {
    int side = 0, out_side = 0;
    if (!is_perfect_square(r.in_dim_, side) ||
        !is_perfect_square(out_dim, out_side) || side % out_side != 0)
      throw std::invalid_argument(
          "avgpool needs perfect-square dims with divisible sides");
    return r;
  }
  // PCA on the centered training matrix. Components get a deterministic
  // sign so runs do not differ by a reflection.
  r.mean_ = train.features.colwise().mean();
  Eigen::MatrixXd centered = train.features.rowwise() - r.mean_.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered /
                        std::max<double>(1.0, double(train.size()));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  r.components_.resize(r.in_dim_, out_dim);
  for (int k = 0; k < out_dim; ++k) {
    // eigenvalues are ascending; take the top out_dim
    Eigen::VectorXd v = es.eigenvectors().col(train.dim() - 1 - k);
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0) v = -v;
    r.components_.col(k) = v;
  }
  return r;
}

Dataset DimReducer::apply(const Dataset& ds) const {
  if (ds.dim() != in_dim_)
    throw std::invalid_argument("dataset dim differs from fitted dim");
  Dataset out;
  out.labels = ds.labels;
  out.num_classes = ds.num_classes;
  if (method_ == ReduceMethod::avgpool) {
    int side = 0, out_side = 0;
    is_perfect_square(in_dim_, side);
    is_perfect_square(out_dim_, out_side);
    const int block = side / out_side;
    out.features.resize(ds.size(), out_dim_);
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
      for (int br = 0; br < out_side; ++br) {
        for (int bc = 0; bc < out_side; ++bc) {
          double sum = 0.0;
          for (int r = 0; r < block; ++r)
            for (int c = 0; c < block; ++c)
              sum += ds.features(i, (br * block + r) * side + bc * block + c);
          out.features(i, br * out_side + bc) = sum / (block * block);
        }
      }
    }
    out.provenance = ds.provenance + "+avgpool(" + std::to_string(out_dim_) + ")";
  } else {
    out.features =
        (ds.features.rowwise() - mean_.transpose()) * components_;
    out.provenance = ds.provenance + "+pca(" + std::to_string(out_dim_) + ")";
  }
  return out;
}

Dataset reduce_dims(const Dataset& ds, int out_dim, ReduceMethod method) {
  return DimReducer::fit(ds, out_dim, method).apply(ds);
}

Dataset synth_blobs(int n, int num_classes, int dim, double spread,
                    std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("need at least 2 classes");
  if (n < num_classes) throw std::invalid_argument("need n >= num_classes");
  if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  if (!(spread >= 0.0)) throw std::invalid_argument("spread must be >= 0");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::MatrixXd centers(num_classes, dim);
  for (int c = 0; c < num_classes; ++c)
    for (int j = 0; j < dim; ++j) centers(c, j) = uniform(rng);

  Dataset ds;
  ds.features.resize(n, dim);
  ds.labels.resize(static_cast<std::size_t>(n));
  Eigen::Index row = 0;
  for (int c = 0; c < num_classes; ++c) {
    const int count = n / num_classes + (c < n % num_classes ? 1 : 0);
    for (int s = 0; s < count; ++s, ++row) {
      for (int j = 0; j < dim; ++j)
        ds.features(row, j) = centers(c, j) + spread * normal(rng);
      ds.labels[static_cast<std::size_t>(row)] = c;
    }
  }

  // Interleave classes so batches and partitions see a shuffled order.
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  Dataset shuffled;
  shuffled.features.resize(n, dim);
  shuffled.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    shuffled.features.row(i) = ds.features.row(perm[static_cast<std::size_t>(i)]);
    shuffled.labels[static_cast<std::size_t>(i)] =
        ds.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  shuffled.num_classes = num_classes;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "blobs(n=%d,classes=%d,dim=%d,spread=%g)",
                n, num_classes, dim, spread);
  shuffled.provenance = buf;
  return shuffled;
}

PartitionPlan partition_noniid(const Dataset& ds, int num_clients,
                               int classes_per_client, std::uint64_t seed) {
  ds.validate();
  const int C = ds.num_classes;
  if (num_clients < 1) throw std::invalid_argument("need at least one client");
  if (classes_per_client < 1 || classes_per_client > C)
    throw std::invalid_argument("classes_per_client must be in [1, num_classes]");
  if (num_clients * classes_per_client < C)
    throw std::invalid_argument(
        "num_clients * classes_per_client < num_classes: some class would "
        "have no owner");

  std::mt19937_64 rng(seed);

  // Deal one shuffled pass over all classes first, which guarantees every
  // class gets an owner; fill the remaining slots with draws from the
  // classes a client does not hold yet.
  std::vector<int> deck(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) deck[static_cast<std::size_t>(c)] = c;
  std::shuffle(deck.begin(), deck.end(), rng);

  std::vector<std::set<int>> held(static_cast<std::size_t>(num_clients));
  std::size_t pos = 0;
  for (int i = 0; i < num_clients; ++i) {
    auto& mine = held[static_cast<std::size_t>(i)];
    while (static_cast<int>(mine.size()) < classes_per_client && pos < deck.size())
      mine.insert(deck[pos++]);
    while (static_cast<int>(mine.size()) < classes_per_client) {
      std::vector<int> rest;
      for (int c = 0; c < C; ++c)
        if (!mine.count(c)) rest.push_back(c);
      std::uniform_int_distribution<std::size_t> pick(0, rest.size() - 1);
      mine.insert(rest[pick(rng)]);
    }
  }

  PartitionPlan plan;
  plan.num_clients = num_clients;
  plan.classes_per_client = classes_per_client;
  plan.assignment.resize(static_cast<std::size_t>(num_clients));
  plan.client_classes.resize(static_cast<std::size_t>(num_clients));
  for (int i = 0; i < num_clients; ++i)
    plan.client_classes[static_cast<std::size_t>(i)] =
        std::vector<int>(held[static_cast<std::size_t>(i)].begin(),
                         held[static_cast<std::size_t>(i)].end());

  // Divide each class evenly among its owners.
  for (int c = 0; c < C; ++c) {
    std::vector<int> owners;
    for (int i = 0; i < num_clients; ++i)
      if (held[static_cast<std::size_t>(i)].count(c)) owners.push_back(i);
    std::vector<Eigen::Index> idxs;
    for (Eigen::Index s = 0; s < ds.size(); ++s)
      if (ds.labels[static_cast<std::size_t>(s)] == c) idxs.push_back(s);
    std::shuffle(idxs.begin(), idxs.end(), rng);
    const std::size_t k = owners.size();
    const std::size_t base = idxs.size() / k;
    const std::size_t extra = idxs.size() % k;
    std::size_t at = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t take = base + (j < extra ? 1 : 0);
      auto& shard = plan.assignment[static_cast<std::size_t>(owners[j])];
      shard.insert(shard.end(), idxs.begin() + at, idxs.begin() + at + take);
      at += take;
    }
  }
  for (auto& shard : plan.assignment) std::sort(shard.begin(), shard.end());
  return plan;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds,
                                             double train_fraction,
                                             std::uint64_t seed) {
  ds.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("train_fraction must be in (0, 1)");

  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> train_idx, test_idx;
  for (int c = 0; c < ds.num_classes; ++c) {
    std::vector<Eigen::Index> idxs;
    for (Eigen::Index s = 0; s < ds.size(); ++s)
      if (ds.labels[static_cast<std::size_t>(s)] == c) idxs.push_back(s);
    // Client shards legitimately miss most classes under a non-IID
    // partition, so an absent class is fine; a lone sample is not,
    // because the class would vanish from one side of the split.
    if (idxs.empty()) continue;
    if (idxs.size() < 2)
      throw std::invalid_argument("class " + std::to_string(c) +
                                  " has fewer than 2 samples");
    std::shuffle(idxs.begin(), idxs.end(), rng);
    const auto cut = static_cast<std::size_t>(
        std::floor(train_fraction * double(idxs.size())));
    train_idx.insert(train_idx.end(), idxs.begin(), idxs.begin() + cut);
    test_idx.insert(test_idx.end(), idxs.begin() + cut, idxs.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {subset(ds, train_idx), subset(ds, test_idx)};
}

Dataset subset(const Dataset& ds, std::span<const Eigen::Index> indices) {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), ds.dim());
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= ds.size())
      throw std::out_of_range("subset index out of range");
    out.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(indices[i]);
    out.labels[i] = ds.labels[static_cast<std::size_t>(indices[i])];
  }
  out.num_classes = ds.num_classes;
  out.provenance = ds.provenance;
  return out;
}

}  // namespace hetqfl::data
