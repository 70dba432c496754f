#pragma once
// Objective values and between-collective interaction scores.

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "collact/error.hpp"

namespace collact {

// Fraction of predictions equal to the target class.
inline double efficacy(std::span<const int> predictions, int target) {
  if (predictions.empty()) throw Error("efficacy over no predictions");
  std::size_t hits = 0;
  for (int p : predictions) hits += p == target;
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

// Empty when the baseline objective is zero.
inline std::optional<double> relative_hit_ratio(double g_modified, double g_baseline) {
  if (g_baseline < 0.0) throw ValidationError("negative baseline objective");
  if (g_baseline == 0.0) return std::nullopt;
  return g_modified / g_baseline;
}

// Change in a collective's relative objective caused by the others acting too.
// Positive: the others help; negative: they interfere.
inline std::optional<double> constructiveness(std::optional<double> relative_joint,
                                              std::optional<double> relative_alone) {
  if (!relative_joint || !relative_alone) return std::nullopt;
  return *relative_joint - *relative_alone;
}

struct InteractionScore {
  std::optional<double> relative_alone;
  std::optional<double> relative_joint;
  std::optional<double> ct;
};

inline InteractionScore interaction(double g_baseline, double g_alone, double g_joint) {
  InteractionScore s;
  s.relative_alone = relative_hit_ratio(g_alone, g_baseline);
  s.relative_joint = relative_hit_ratio(g_joint, g_baseline);
  s.ct = constructiveness(s.relative_joint, s.relative_alone);
  return s;
}

struct Aggregate {
  double mean = 0.0;
  double sigma = 0.0;   // unbiased sample standard deviation; 0 for one value
  double stderr_ = 0.0;
  std::size_t count = 0;
  std::size_t undefined = 0;
};

inline Aggregate aggregate(std::span<const std::optional<double>> values) {
  Aggregate a;
  double sum = 0.0;
  for (const auto& v : values) {
    if (!v) {
      ++a.undefined;
      continue;
    }
    sum += *v;
    ++a.count;
  }
  if (a.count == 0) throw Error("aggregate over no defined values");
  a.mean = sum / static_cast<double>(a.count);
  if (a.count > 1) {
    double ss = 0.0;
    for (const auto& v : values)
      if (v) ss += (*v - a.mean) * (*v - a.mean);
    a.sigma = std::sqrt(ss / static_cast<double>(a.count - 1));
    a.stderr_ = a.sigma / std::sqrt(static_cast<double>(a.count));
  }
  return a;
}

inline Aggregate aggregate(std::span<const double> values) {
  std::vector<std::optional<double>> v(values.begin(), values.end());
  return aggregate(std::span<const std::optional<double>>(v));
}

}  // namespace collact
