#pragma once

#include <bitquant/confusion.hpp>
#include <bitquant/error.hpp>
#include <bitquant/infer.hpp>

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace bitquant {

// Partition of the original classes into super-classes.
struct ClassGrouping {
  std::vector<std::vector<std::uint32_t>> groups;  // each sorted; groups ordered by smallest member
  std::vector<std::uint32_t> mapping;              // class -> group index
  std::vector<std::string> class_names;

  std::size_t classes() const noexcept { return mapping.size(); }

  std::string group_name(std::size_t g) const {
    std::string n;
    for (auto c : groups[g]) n += (n.empty() ? "" : "+") + class_names[c];
    return n;
  }

  void validate() const {
    std::vector<int> seen(classes(), 0);
    for (std::size_t g = 0; g < groups.size(); ++g)
      for (auto c : groups[g]) {
        if (c >= classes()) throw ValidationError("grouping names class " + std::to_string(c) + " out of range");
        if (seen[c]++) throw ValidationError("class '" + class_names[c] + "' appears in two groups");
        if (mapping[c] != g) throw ValidationError("grouping mapping disagrees with group lists");
      }
    for (std::size_t c = 0; c < classes(); ++c)
      if (!seen[c]) throw ValidationError("class '" + class_names[c] + "' belongs to no group");
    if (groups.size() < 2) throw ValidationError("a grouping must keep at least two groups");
  }

  friend bool operator==(const ClassGrouping&, const ClassGrouping&) = default;
};

inline ClassGrouping make_grouping(std::vector<std::vector<std::uint32_t>> groups, std::vector<std::string> names) {
  for (auto& g : groups) std::sort(g.begin(), g.end());
  std::erase_if(groups, [](const auto& g) { return g.empty(); });
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  ClassGrouping out;
  out.class_names = std::move(names);
  out.mapping.assign(out.class_names.size(), 0);
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (auto c : groups[g]) {
      if (c >= out.mapping.size()) throw ValidationError("class index " + std::to_string(c) + " out of range");
      out.mapping[c] = static_cast<std::uint32_t>(g);
    }
  out.groups = std::move(groups);
  out.validate();
  return out;
}

inline ClassGrouping identity_grouping(const std::vector<std::string>& names) {
  std::vector<std::vector<std::uint32_t>> groups;
  for (std::uint32_t c = 0; c < names.size(); ++c) groups.push_back({c});
  return make_grouping(std::move(groups), names);
}

// Confusion between two groups, symmetrized and normalized by each group's
// sample count: C[a][b]/n_a + C[b][a]/n_b over member classes.
inline double merge_score(const ConfusionMatrix& cm, const std::vector<std::uint32_t>& a,
                          const std::vector<std::uint32_t>& b) {
  auto mass = [&](const auto& from, const auto& to) {
    std::uint64_t m = 0;
    for (auto i : from)
      for (auto j : to) m += cm.at(i, j);
    return m;
  };
  auto rows = [&](const auto& g) {
    std::uint64_t n = 0;
    for (auto i : g) n += cm.row_sum(i);
    return n;
  };
  const auto na = rows(a), nb = rows(b);
  double s = 0.0;
  if (na) s += double(mass(a, b)) / double(na);
  if (nb) s += double(mass(b, a)) / double(nb);
  return s;
}

// Greedy agglomeration: k_merges times, merge the pair of current groups with
// the highest merge_score. Ties go to the lowest (i, j) in group order, so an
// all-diagonal matrix merges the first two groups.
inline ClassGrouping propose_merge(const ConfusionMatrix& cm, std::size_t k_merges) {
  const std::size_t k = cm.classes();
  if (k < 2) throw ArgumentError("class clustering needs at least two classes");
  if (k_merges >= k - 1)
    throw ArgumentError("k_merges " + std::to_string(k_merges) + " must be below K-1 = " + std::to_string(k - 1));
  auto g = identity_grouping(cm.class_names);
  auto groups = g.groups;
  for (std::size_t step = 0; step < k_merges; ++step) {
    std::size_t bi = 0, bj = 1;
    double best = -1.0;
    for (std::size_t i = 0; i < groups.size(); ++i)
      for (std::size_t j = i + 1; j < groups.size(); ++j) {
        const double s = merge_score(cm, groups[i], groups[j]);
        if (s > best) best = s, bi = i, bj = j;
      }
    groups[bi].insert(groups[bi].end(), groups[bj].begin(), groups[bj].end());
    std::sort(groups[bi].begin(), groups[bi].end());
    groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(bj));
  }
  return make_grouping(std::move(groups), cm.class_names);
}

// Maps labels and argmax predictions through the grouping; a prediction is
// correct iff its group equals the label's group.
inline EvalResult regroup_eval(const ConfusionMatrix& cm, const ClassGrouping& grouping) {
  if (grouping.classes() != cm.classes())
    throw ArgumentError("grouping covers " + std::to_string(grouping.classes()) + " classes, confusion has " +
                        std::to_string(cm.classes()));
  std::vector<std::string> names;
  for (std::size_t g = 0; g < grouping.groups.size(); ++g) names.push_back(grouping.group_name(g));
  ConfusionMatrix out(names);
  for (std::size_t i = 0; i < cm.classes(); ++i)
    for (std::size_t j = 0; j < cm.classes(); ++j) out.at(grouping.mapping[i], grouping.mapping[j]) += cm.at(i, j);
  return make_result(std::move(out));
}

inline EvalResult regroup_eval(const EvalResult& r, const ClassGrouping& grouping) {
  auto out = regroup_eval(r.confusion, grouping);
  for (auto p : r.predictions) out.predictions.push_back(grouping.mapping.at(p));
  return out;
}

// Alternate scoring: sum the model outputs of each group's members and take
// the argmax over groups (ties to the lowest group).
inline EvalResult regroup_eval_logit_sum(const Network& net, const Dataset& data, const ClassGrouping& grouping) {
  if (data.size() == 0) throw ArgumentError("cannot evaluate on an empty dataset");
  if (grouping.classes() != data.class_count) throw ArgumentError("grouping does not cover the dataset's classes");
  const auto width = element_count(net.output_shape());
  if (width != data.class_count) throw ShapeError("graph output width does not match class count");
  const auto outputs = forward_all(net, data);
  std::vector<std::string> names;
  for (std::size_t g = 0; g < grouping.groups.size(); ++g) names.push_back(grouping.group_name(g));
  ConfusionMatrix cm(names);
  std::vector<std::uint32_t> preds(data.size());
  std::vector<float> sums(grouping.groups.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::fill(sums.begin(), sums.end(), 0.0f);
    for (std::size_t c = 0; c < width; ++c) sums[grouping.mapping[c]] += outputs[i * width + c];
    preds[i] = argmax(sums);
    ++cm.at(grouping.mapping[data.labels[i]], preds[i]);
  }
  return make_result(std::move(cm), std::move(preds));
}

// One line per group, comma-separated class names.
inline std::string grouping_to_text(const ClassGrouping& g) {
  std::string out;
  for (const auto& members : g.groups) {
    for (std::size_t i = 0; i < members.size(); ++i) out += (i ? "," : "") + g.class_names[members[i]];
    out += "\n";
  }
  return out;
}

inline ClassGrouping grouping_from_text(const std::string& text, const std::vector<std::string>& class_names) {
  std::vector<std::vector<std::uint32_t>> groups;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::uint32_t> members;
    std::istringstream ls(line);
    std::string name;
    while (std::getline(ls, name, ',')) {
      auto it = std::find(class_names.begin(), class_names.end(), name);
      if (it == class_names.end()) throw ValidationError("grouping names unknown class '" + name + "'");
      members.push_back(static_cast<std::uint32_t>(it - class_names.begin()));
    }
    groups.push_back(std::move(members));
  }
  return make_grouping(std::move(groups), class_names);
}

}  // namespace bitquant
