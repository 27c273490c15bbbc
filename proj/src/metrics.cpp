// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include "latentaug/metrics.hpp"

#include <cstdio>
#include <map>
#include <sstream>

#include "latentaug/error.hpp"

namespace latentaug {

ClassGroup class_group(std::uint64_t train_count) {
  if (train_count > 100) return ClassGroup::many;
  if (train_count >= 20) return ClassGroup::medium;
  return ClassGroup::small;
}

MetricsReport compute_metrics(std::span<const std::uint32_t> predictions, std::span<const std::uint32_t> labels,
                              std::size_t num_classes, std::span<const std::uint64_t> train_counts,
                              std::optional<std::uint32_t> excluded_class) {
  require(predictions.size() == labels.size(), ErrorKind::DimensionMismatch, "predictions and labels differ in length");
  require(!labels.empty(), ErrorKind::EmptyInput, "no predictions to score");
  require(train_counts.empty() || train_counts.size() == num_classes, ErrorKind::DimensionMismatch,
          "train counts must cover every class");

  MetricsReport r;
  const std::size_t c = num_classes;
  r.n = labels.size();
  r.confusion.assign(c, std::vector<std::uint64_t>(c, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] < c && predictions[i] < c, ErrorKind::DimensionMismatch, "class id out of range");
    ++r.confusion[labels[i]][predictions[i]];
  }

  r.present.assign(c, false);
  r.recall.assign(c, 0.0);
  r.precision.assign(c, 0.0);
  r.f1.assign(c, 0.0);
  std::uint64_t correct = 0;
  std::size_t n_present = 0;
  double recall_sum = 0.0, f1_sum = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < c; ++j) {
      row += r.confusion[k][j];
      col += r.confusion[j][k];
    }
    const auto tp = static_cast<double>(r.confusion[k][k]);
    correct += r.confusion[k][k];
    const double rec = row ? tp / static_cast<double>(row) : 0.0;
    const double prec = col ? tp / static_cast<double>(col) : 0.0;
    r.recall[k] = 100.0 * rec;
    r.precision[k] = 100.0 * prec;
    r.f1[k] = prec + rec > 0.0 ? 100.0 * 2.0 * prec * rec / (prec + rec) : 0.0;
    if (row > 0) {
      r.present[k] = true;
      ++n_present;
      recall_sum += r.recall[k];
      f1_sum += r.f1[k];
    }
  }
  r.ua = recall_sum / static_cast<double>(n_present);
  r.macro_f1 = f1_sum / static_cast<double>(n_present);
  r.wa = 100.0 * static_cast<double>(correct) / static_cast<double>(r.n);

  if (excluded_class) {
    require(*excluded_class < c, ErrorKind::DimensionMismatch, "excluded class out of range");
    r.excluded_class = excluded_class;
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < c; ++k) {
      if (!r.present[k] || k == *excluded_class) continue;
      sum += r.recall[k];
      ++count;
    }
    if (count > 0) r.ua_without_excluded = sum / static_cast<double>(count);
  }

  if (!train_counts.empty()) {
    std::map<ClassGroup, std::pair<std::uint64_t, std::uint64_t>> groups;  // correct, total
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto& g = groups[class_group(train_counts[labels[i]])];
      g.second += 1;
      if (predictions[i] == labels[i]) g.first += 1;
    }
    auto rate = [&](ClassGroup g) -> std::optional<double> {
      auto it = groups.find(g);
      if (it == groups.end()) return std::nullopt;
      return 100.0 * static_cast<double>(it->second.first) / static_cast<double>(it->second.second);
    };
    r.acc_many = rate(ClassGroup::many);
    r.acc_medium = rate(ClassGroup::medium);
    r.acc_small = rate(ClassGroup::small);
  }
  return r;
}

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fixed2(const std::optional<double>& v) { return v ? fixed2(*v) : std::string{}; }

}  // namespace

std::string MetricsReport::to_csv() const {
  std::ostringstream out;
  out << "class,recall,precision,f1\n";
  for (std::size_t k = 0; k < recall.size(); ++k)
    out << k << ',' << fixed2(recall[k]) << ',' << fixed2(precision[k]) << ',' << fixed2(f1[k]) << '\n';
  out << "ua,wa,macro_f1,ua_wo_excluded,acc_many,acc_medium,acc_small\n";
  out << fixed2(ua) << ',' << fixed2(wa) << ',' << fixed2(macro_f1) << ',' << fixed2(ua_without_excluded) << ','
      << fixed2(acc_many) << ',' << fixed2(acc_medium) << ',' << fixed2(acc_small) << '\n';
  return out.str();
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  j["n"] = n;
  j["ua"] = ua;
  j["wa"] = wa;
  j["macro_f1"] = macro_f1;
  j["excluded_class"] = excluded_class ? nlohmann::ordered_json(*excluded_class) : nlohmann::ordered_json();
  j["ua_wo_excluded"] = opt(ua_without_excluded);
  j["acc_many"] = opt(acc_many);
  j["acc_medium"] = opt(acc_medium);
  j["acc_small"] = opt(acc_small);
  j["recall"] = recall;
  j["precision"] = precision;
  j["f1"] = f1;
  j["confusion"] = confusion;
  return j;
}

double mean_intra_class_distance(const Mat<float>& space, std::span<const std::uint32_t> labels) {
  require(static_cast<Index>(labels.size()) == space.cols(), ErrorKind::DimensionMismatch, "one label per sample");
  std::map<std::uint32_t, std::vector<Index>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(static_cast<Index>(i));
  double sum = 0.0;
  std::uint64_t pairs = 0;
  for (const auto& [cls, idx] : members) {
    require(idx.size() >= 2, ErrorKind::InsufficientSupport,
            "class " + std::to_string(cls) + " has a single sample; pairwise distances need two");
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = a + 1; b < idx.size(); ++b) {
        sum += (space.col(idx[a]).cast<double>() - space.col(idx[b]).cast<double>()).norm();
        ++pairs;
      }
  }
  require(pairs > 0, ErrorKind::InsufficientSupport, "no same-class pairs");
  return sum / static_cast<double>(pairs);
}

double compactness_ratio(const Mat<float>& space_a, const Mat<float>& space_b, std::span<const std::uint32_t> labels) {
  require(space_a.cols() == space_b.cols(), ErrorKind::DimensionMismatch, "spaces hold different sample counts");
  return mean_intra_class_distance(space_b, labels) / mean_intra_class_distance(space_a, labels);
}

}  // namespace latentaug
