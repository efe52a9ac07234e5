#include "swisenet/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "swisenet/error.hpp"
#include "swisenet/keyvalue.hpp"

namespace swisenet {

Averaging averaging_from_string(std::string_view name) {
  if (name == "macro") return Averaging::Macro;
  if (name == "micro") return Averaging::Micro;
  throw ArgumentError("unknown averaging '" + std::string(name) + "' (expected macro or micro)");
}

std::string_view to_string(Averaging averaging) { return averaging == Averaging::Macro ? "macro" : "micro"; }

ConfusionMatrix::ConfusionMatrix(int num_classes) : k_(num_classes) {
  if (num_classes < 1) throw ArgumentError("confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(k_ * k_), 0);
}

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 0 || truth >= k_ || predicted < 0 || predicted >= k_) {
    throw ArgumentError("class pair (" + std::to_string(truth) + ", " + std::to_string(predicted) + ") out of range");
  }
  ++counts_[static_cast<std::size_t>(truth * k_ + predicted)];
}

std::int64_t ConfusionMatrix::count(int truth, int predicted) const {
  return counts_[static_cast<std::size_t>(truth * k_ + predicted)];
}

std::int64_t ConfusionMatrix::row_total(int truth) const {
  std::int64_t s = 0;
  for (int p = 0; p < k_; ++p) s += count(truth, p);
  return s;
}

std::int64_t ConfusionMatrix::col_total(int predicted) const {
  std::int64_t s = 0;
  for (int t = 0; t < k_; ++t) s += count(t, predicted);
  return s;
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t s = 0;
  for (int c = 0; c < k_; ++c) s += count(c, c);
  return s;
}

double ConfusionMatrix::normalized(int truth, int predicted) const {
  const auto row = row_total(truth);
  return row == 0 ? 0.0 : static_cast<double>(count(truth, predicted)) / static_cast<double>(row);
}

std::vector<double> ConfusionMatrix::normalized() const {
  std::vector<double> out;
  out.reserve(counts_.size());
  for (int t = 0; t < k_; ++t)
    for (int p = 0; p < k_; ++p) out.push_back(normalized(t, p));
  return out;
}

namespace {

std::string header(const std::vector<std::string>& names, int k) {
  std::string out = "true\\predicted";
  for (int p = 0; p < k; ++p) out += "," + (p < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(p)] : std::to_string(p));
  return out + "\n";
}

std::string row_name(const std::vector<std::string>& names, int t) {
  return t < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(t)] : std::to_string(t);
}

}  // namespace

std::string ConfusionMatrix::counts_csv(const std::vector<std::string>& class_names) const {
  std::string out = header(class_names, k_);
  for (int t = 0; t < k_; ++t) {
    out += row_name(class_names, t);
    for (int p = 0; p < k_; ++p) out += "," + std::to_string(count(t, p));
    out += "\n";
  }
  return out;
}

std::string ConfusionMatrix::normalized_csv(const std::vector<std::string>& class_names) const {
  std::string out = header(class_names, k_);
  for (int t = 0; t < k_; ++t) {
    out += row_name(class_names, t);
    for (int p = 0; p < k_; ++p) out += "," + format_double(normalized(t, p));
    out += "\n";
  }
  return out;
}

std::string ConfusionMatrix::render(const std::vector<std::string>& class_names, int decimals) const {
  std::size_t width = 0;
  for (int t = 0; t < k_; ++t) width = std::max(width, row_name(class_names, t).size());
  std::string out;
  char buf[64];
  for (int t = 0; t < k_; ++t) {
    std::string name = row_name(class_names, t);
    name.resize(width, ' ');
    out += name + "  ";
    for (int p = 0; p < k_; ++p) {
      std::snprintf(buf, sizeof buf, "%.*f", decimals, normalized(t, p));
      std::string v = buf;
      if (v.find('.') != std::string::npos) {
        while (v.back() == '0') v.pop_back();
        if (v.back() == '.') v.pop_back();
      }
      out += (p ? ", " : "") + v;
    }
    out += "\n";
  }
  return out;
}

std::vector<ClassScores> class_scores(const ConfusionMatrix& cm) {
  std::vector<ClassScores> out;
  for (int c = 0; c < cm.num_classes(); ++c) {
    const auto tp = static_cast<double>(cm.count(c, c));
    const auto predicted = static_cast<double>(cm.col_total(c));
    const auto actual = static_cast<double>(cm.row_total(c));
    ClassScores s;
    s.precision = predicted > 0 ? tp / predicted : 0.0;
    s.recall = actual > 0 ? tp / actual : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    s.support = cm.row_total(c);
    out.push_back(s);
  }
  return out;
}

MetricsRow compute_metrics(const ConfusionMatrix& cm, Averaging averaging) {
  MetricsRow row;
  const auto total = cm.total();
  row.accuracy = total > 0 ? static_cast<double>(cm.trace()) / static_cast<double>(total) : 0.0;
  if (averaging == Averaging::Micro) {
    row.precision = row.recall = row.f1 = row.accuracy;
    return row;
  }
  const auto scores = class_scores(cm);
  for (const auto& s : scores) {
    row.precision += s.precision;
    row.recall += s.recall;
    row.f1 += s.f1;
  }
  const auto k = static_cast<double>(scores.size());
  row.precision /= k;
  row.recall /= k;
  row.f1 /= k;
  return row;
}

ConfusionMatrix confusion_from(std::span<const int> truth, std::span<const int> predicted, int num_classes) {
  if (truth.size() != predicted.size()) {
    throw ArgumentError("label and prediction counts differ: " + std::to_string(truth.size()) + " vs " +
                        std::to_string(predicted.size()));
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

}  // namespace swisenet
