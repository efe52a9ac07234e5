#include "swisenet/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "swisenet/image_io.hpp"
#include "swisenet/rng.hpp"

namespace swisenet {

namespace fs = std::filesystem;

namespace {

std::string summarize(const std::vector<DatasetIssue>& issues) {
  std::string out = std::to_string(issues.size()) + (issues.size() == 1 ? " dataset problem:" : " dataset problems:");
  for (const auto& i : issues) out += "\n  " + i.path.string() + ": " + i.message;
  return out;
}

}  // namespace

DatasetError::DatasetError(std::vector<DatasetIssue> issues) : DataError(summarize(issues)), issues_(std::move(issues)) {}

std::vector<std::size_t> DatasetIndex::counts() const {
  std::vector<std::size_t> c(class_names.size(), 0);
  for (const auto& s : samples) ++c[static_cast<std::size_t>(s.label)];
  return c;
}

std::vector<int> DatasetIndex::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

DatasetIndex DatasetIndex::subset(std::span<const std::size_t> indices) const {
  DatasetIndex out;
  out.root = root;
  out.class_names = class_names;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= samples.size()) throw ArgumentError("subset index " + std::to_string(i) + " out of range");
    out.samples.push_back(samples[i]);
  }
  return out;
}

std::string normalize_class_name(std::string_view name) {
  std::string out;
  for (char ch : name) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u)) out.push_back(static_cast<char>(std::tolower(u)));
  }
  return out;
}

DatasetIndex index_dataset(const fs::path& root, const std::vector<std::string>& class_names, VerifyImages verify) {
  if (class_names.empty()) throw ArgumentError("no class names given");
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DatasetError({{root, "dataset root is not a directory"}});

  std::map<std::string, std::vector<fs::path>> folders;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) folders[normalize_class_name(entry.path().filename().string())].push_back(entry.path());
  }

  DatasetIndex index;
  index.root = root;
  index.class_names = class_names;
  std::vector<DatasetIssue> issues;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    const auto key = normalize_class_name(class_names[c]);
    const auto it = folders.find(key);
    if (it == folders.end()) {
      issues.push_back({root / class_names[c], "missing class '" + class_names[c] + "'"});
      continue;
    }
    if (it->second.size() > 1) {
      issues.push_back({root, "class '" + class_names[c] + "' matches " + std::to_string(it->second.size()) +
                                  " folders"});
      continue;
    }
    const fs::path& dir = it->second.front();
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (entry.is_regular_file() && has_image_extension(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      issues.push_back({dir, "class '" + class_names[c] + "' has no images"});
      continue;
    }
    for (auto& f : files) {
      try {
        if (verify == VerifyImages::Header) probe_image(f);
        if (verify == VerifyImages::Decode) decode_image(f);
      } catch (const DataError& e) {
        issues.push_back({f, e.what()});
        continue;
      }
      index.samples.push_back({std::move(f), static_cast<int>(c)});
    }
  }
  if (!issues.empty()) throw DatasetError(std::move(issues));
  return index;
}

void SplitConfig::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ArgumentError("train_fraction must lie in (0, 1), got " + std::to_string(train_fraction));
  }
}

namespace {

std::size_t round_half_up(std::size_t n, double f) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * f + 0.5));
}

}  // namespace

SplitIndices split_indices(std::span<const int> labels, int num_classes, const SplitConfig& cfg) {
  cfg.validate();
  if (num_classes < 1) throw ArgumentError("num_classes must be positive");
  SplitIndices out;
  if (cfg.stratified) {
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int l = labels[i];
      if (l < 0 || l >= num_classes) throw ArgumentError("label " + std::to_string(l) + " out of range");
      members[static_cast<std::size_t>(l)].push_back(i);
    }
    for (int c = 0; c < num_classes; ++c) {
      auto& m = members[static_cast<std::size_t>(c)];
      if (m.empty()) continue;
      if (m.size() < 2) {
        throw ArgumentError("class " + std::to_string(c) + " has " + std::to_string(m.size()) +
                            " sample; a stratified split needs at least 2");
      }
      Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(c)));
      rng.shuffle(m);
      const std::size_t k = std::clamp<std::size_t>(round_half_up(m.size(), cfg.train_fraction), 1, m.size() - 1);
      out.train.insert(out.train.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(k));
      out.val.insert(out.val.end(), m.begin() + static_cast<std::ptrdiff_t>(k), m.end());
    }
  } else {
    if (labels.size() < 2) throw ArgumentError("a split needs at least 2 samples");
    Rng rng(cfg.seed);
    auto perm = rng.permutation(labels.size());
    const std::size_t k = std::clamp<std::size_t>(round_half_up(labels.size(), cfg.train_fraction), 1, labels.size() - 1);
    out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
    out.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(k), perm.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  return out;
}

DatasetSplit split(const DatasetIndex& index, const SplitConfig& cfg) {
  const auto labels = index.labels();
  const auto s = split_indices(labels, static_cast<int>(index.class_names.size()), cfg);
  return {index.subset(s.train), index.subset(s.val)};
}

}  // namespace swisenet
