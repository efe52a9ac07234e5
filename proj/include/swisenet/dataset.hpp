#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "swisenet/error.hpp"

namespace swisenet {

struct Sample {
  std::filesystem::path path;
  int label = 0;

  bool operator==(const Sample&) const = default;
};

struct DatasetIndex {
  std::filesystem::path root;
  std::vector<std::string> class_names;
  // Class-major, then lexicographic by path within each class.
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  std::vector<std::size_t> counts() const;
  std::vector<int> labels() const;
  DatasetIndex subset(std::span<const std::size_t> indices) const;
};

struct DatasetIssue {
  std::filesystem::path path;
  std::string message;
};

// Carries one entry per offending folder or file.
class DatasetError : public DataError {
 public:
  explicit DatasetError(std::vector<DatasetIssue> issues);
  const std::vector<DatasetIssue>& issues() const { return issues_; }

 private:
  std::vector<DatasetIssue> issues_;
};

// Lowercase with everything but letters and digits removed, so
// "Bacterial Blight" and "bacterial_blight" both map to "bacterialblight".
std::string normalize_class_name(std::string_view name);

enum class VerifyImages { None, Header, Decode };

/// One sub-directory per class, matched to `class_names` through
/// normalize_class_name. Images are collected recursively. A missing class
/// folder, an empty class or a file that fails verification is reported in
/// a single DatasetError listing every problem.
DatasetIndex index_dataset(const std::filesystem::path& root, const std::vector<std::string>& class_names,
                           VerifyImages verify = VerifyImages::Header);

struct SplitConfig {
  double train_fraction = 0.75;
  std::uint64_t seed = 42;
  bool stratified = true;

  void validate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Stratified: class c with n_c samples contributes round(n_c * f) to train
/// (half rounds up), clamped to [1, n_c - 1]; needs n_c >= 2. Otherwise the
/// whole set is shuffled and the first round(N * f) go to train. Both lists
/// are returned in ascending order.
SplitIndices split_indices(std::span<const int> labels, int num_classes, const SplitConfig& cfg);

struct DatasetSplit {
  DatasetIndex train;
  DatasetIndex val;
};

DatasetSplit split(const DatasetIndex& index, const SplitConfig& cfg);

}  // namespace swisenet
