#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace swisenet {

enum class Averaging { Macro, Micro };

Averaging averaging_from_string(std::string_view name);
std::string_view to_string(Averaging averaging);

/// Square count matrix, rows = true class, columns = predicted class.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes = 4);

  int num_classes() const { return k_; }
  void add(int truth, int predicted);
  std::int64_t count(int truth, int predicted) const;
  std::int64_t row_total(int truth) const;
  std::int64_t col_total(int predicted) const;
  std::int64_t total() const;
  std::int64_t trace() const;

  // Row-normalized proportions; a row without samples stays all zero.
  std::vector<double> normalized() const;
  double normalized(int truth, int predicted) const;

  // Delimited text: a header of class names, then one row per true class.
  std::string counts_csv(const std::vector<std::string>& class_names) const;
  std::string normalized_csv(const std::vector<std::string>& class_names) const;
  // Normalized matrix rounded to `decimals`, trailing zeros dropped, for a
  // human reader ("0.99, 0.01, 0, 0").
  std::string render(const std::vector<std::string>& class_names, int decimals = 2) const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int k_;
  std::vector<std::int64_t> counts_;
};

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
};

struct MetricsRow {
  double loss = 0.0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Per-class scores with 0/0 taken as 0.
std::vector<ClassScores> class_scores(const ConfusionMatrix& cm);

/// Accuracy = trace / total. Macro averages the per-class scores over every
/// class, present or not; micro pools the counts, which for single-label
/// data makes precision, recall and F1 equal to accuracy. loss is left 0.
MetricsRow compute_metrics(const ConfusionMatrix& cm, Averaging averaging = Averaging::Macro);

ConfusionMatrix confusion_from(std::span<const int> truth, std::span<const int> predicted, int num_classes);

}  // namespace swisenet
