// Copyright 2026 The tatrack Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tatrack/stats.hpp"

#include <algorithm>
#include <cmath>

#include "tatrack/errors.hpp"

namespace tatrack {

namespace {

std::vector<double> sorted(std::span<const double> values, const char* what) {
  if (values.empty()) throw InvalidArgument(std::string(what) + " of an empty sample");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  return v;
}

void check_p(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level outside [0, 1]");
}

double quantile_sorted(const std::vector<double>& v, double p) {
  const double h = static_cast<double>(v.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

double quantile(std::span<const double> values, double p) {
  check_p(p);
  return quantile_sorted(sorted(values, "quantile"), p);
}

double median(std::span<const double> values) { return quantile(values, 0.5); }

double percentile_nearest_rank(std::span<const double> values, double p) {
  check_p(p);
  const auto v = sorted(values, "percentile");
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size())));
  return v[rank == 0 ? 0 : rank - 1];
}

OutlierSplit remove_outliers(std::span<const double> values, double k) {
  const auto v = sorted(values, "outlier removal");
  OutlierSplit out;
  out.median = quantile_sorted(v, 0.5);
  out.iqr = quantile_sorted(v, 0.75) - quantile_sorted(v, 0.25);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::abs(values[i] - out.median) > k * out.iqr) {
      out.removed.push_back(i);
    } else {
      out.kept.push_back(values[i]);
    }
  }
  return out;
}

double mean(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("mean of an empty sample");
  double s = 0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double rms(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("rms of an empty sample");
  double s = 0;
  for (double v : values) s += v * v;
  return std::sqrt(s / static_cast<double>(values.size()));
}

}  // namespace tatrack
