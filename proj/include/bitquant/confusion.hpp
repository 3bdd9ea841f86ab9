#pragma once

#include <bitquant/error.hpp>

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace bitquant {

inline std::vector<std::string> default_class_names(std::size_t k) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < k; ++i) names.push_back("class" + std::to_string(i));
  return names;
}

// Square count matrix indexed [true label][predicted class].
struct ConfusionMatrix {
  std::vector<std::string> class_names;
  std::vector<std::uint64_t> counts;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<std::string> names)
      : class_names(std::move(names)), counts(class_names.size() * class_names.size(), 0) {}

  std::size_t classes() const noexcept { return class_names.size(); }
  std::uint64_t& at(std::size_t label, std::size_t pred) { return counts[label * classes() + pred]; }
  std::uint64_t at(std::size_t label, std::size_t pred) const { return counts[label * classes() + pred]; }

  std::uint64_t trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < classes(); ++i) t += at(i, i);
    return t;
  }
  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
  std::uint64_t row_sum(std::size_t label) const {
    std::uint64_t t = 0;
    for (std::size_t j = 0; j < classes(); ++j) t += at(label, j);
    return t;
  }
  double accuracy() const { return total() ? double(trace()) / double(total()) : 0.0; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct EvalResult {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
  std::size_t sample_count = 0;
  std::vector<std::uint32_t> predictions;  // per sample, in dataset order

  friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

inline EvalResult make_result(ConfusionMatrix cm, std::vector<std::uint32_t> predictions = {}) {
  EvalResult r;
  r.sample_count = cm.total();
  r.accuracy = cm.accuracy();
  r.confusion = std::move(cm);
  r.predictions = std::move(predictions);
  return r;
}

// CSV layout: a '#' comment line, a header "label,<class names...>", then one
// row per true label.
inline std::string confusion_to_csv(const ConfusionMatrix& cm) {
  std::string out = "# confusion matrix: rows are true labels, columns are predictions\nlabel";
  for (const auto& n : cm.class_names) out += "," + n;
  out += "\n";
  for (std::size_t i = 0; i < cm.classes(); ++i) {
    out += cm.class_names[i];
    for (std::size_t j = 0; j < cm.classes(); ++j) out += "," + std::to_string(cm.at(i, j));
    out += "\n";
  }
  return out;
}

inline ConfusionMatrix confusion_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw ValidationError("confusion CSV has no header");
  const auto& header = rows.front();
  const std::size_t k = header.size() - 1;
  if (k < 2) throw ValidationError("confusion CSV needs at least two classes");
  ConfusionMatrix cm(std::vector<std::string>(header.begin() + 1, header.end()));
  if (rows.size() != k + 1)
    throw ValidationError("confusion CSV has " + std::to_string(rows.size() - 1) + " rows for " +
                          std::to_string(k) + " classes");
  for (std::size_t i = 0; i < k; ++i) {
    const auto& r = rows[i + 1];
    if (r.size() != k + 1) throw ValidationError("confusion CSV row " + std::to_string(i) + " has wrong width");
    if (r[0] != cm.class_names[i])
      throw ValidationError("confusion CSV row '" + r[0] + "' does not match column '" + cm.class_names[i] + "'");
    for (std::size_t j = 0; j < k; ++j) {
      std::size_t used = 0;
      unsigned long long v = 0;
      try {
        v = std::stoull(r[j + 1], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != r[j + 1].size() || r[j + 1][0] == '-')
        throw ValidationError("confusion CSV cell '" + r[j + 1] + "' is not a count");
      cm.at(i, j) = v;
    }
  }
  return cm;
}

}  // namespace bitquant
