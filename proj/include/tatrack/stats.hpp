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

// Order statistics used by the evaluation.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tatrack {

/// Linear-interpolation quantile (Hyndman-Fan type 7) of unsorted data.
/// Throws InvalidArgument for empty input or p outside [0, 1].
double quantile(std::span<const double> values, double p);
double median(std::span<const double> values);

/// Smallest value with at least p of the data at or below it.
double percentile_nearest_rank(std::span<const double> values, double p);

struct OutlierSplit {
  std::vector<double> kept;
  /// Indices into the input.
  std::vector<std::size_t> removed;
  double median = 0.0;
  double iqr = 0.0;
};

/// Drops values more than k * IQR away from the median.
OutlierSplit remove_outliers(std::span<const double> values, double k = 10.0);

double mean(std::span<const double> values);
double rms(std::span<const double> values);

}  // namespace tatrack
