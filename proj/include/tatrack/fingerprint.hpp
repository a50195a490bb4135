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

// Phone-model identification from the capability vector of an Attach Request,
// and the per-model hardware-error table used to correct distances.
//
// Sign convention: the hardware error is added to the true distance by the
// phone (and the simulator) and subtracted by the corrector.

#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tatrack/errors.hpp"
#include "tatrack/messages.hpp"

namespace tatrack {

/// Thrown by hw_error() for a model without a table value. Callers fall back
/// to no correction.
class UnknownModel : public Error {
 public:
  using Error::Error;
};

struct PhoneEntry {
  std::string model;
  std::string modem;
  CapabilityVector capabilities;
  /// Empty where the table has no measurement.
  std::optional<double> hw_error_m;
  std::optional<double> hw_error_std_m;
};

class FingerprintDb {
 public:
  /// The shipped table with its synthetic capability vectors.
  static const FingerprintDb& builtin();

  /// CSV with header model,modem,capability_hex,hw_error_m,hw_error_std_m.
  /// Empty or "-" hardware-error fields mean no value. Throws InputError.
  static FingerprintDb load_csv(std::istream& in);
  static FingerprintDb load_file(const std::string& path);
  void save_csv(std::ostream& out) const;

  /// Throws InvalidArgument for a duplicate model or a non-finite value.
  void add(PhoneEntry entry);

  const PhoneEntry* find(std::string_view model) const;
  /// Insertion order.
  const std::vector<PhoneEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<PhoneEntry> entries_;
};

/// Modem name with whitespace removed, so "XMM 7480" and "XMM7480" match.
std::string modem_key(std::string_view modem);

/// Deterministic vector for a model that is not in the table.
CapabilityVector unlisted_capabilities(std::string_view model);

struct Classification {
  std::string model;
  std::size_t distance = 0;
  /// Another entry is equally close; `model` is the lexicographically first.
  bool tie = false;
};

/// Nearest entry by Hamming distance. Throws InvalidArgument on an empty db.
Classification classify(const CapabilityVector& v, const FingerprintDb& db);

/// Table value in meters. Throws UnknownModel.
double hw_error(std::string_view model, const FingerprintDb& db);
std::optional<double> find_hw_error(std::string_view model, const FingerprintDb& db);

/// mean(estimated - actual). Throws InvalidArgument for mismatched or empty
/// inputs.
double estimate_hw_error(std::span<const double> estimated, std::span<const double> actual);

inline double correct_distance(double measured_m, double hw_error_m) {
  return measured_m - hw_error_m;
}

struct PcaProjection {
  static constexpr std::size_t kDims = CapabilityVector::kBits;
  /// Unit vectors over the +-1 bit encoding.
  std::array<std::vector<double>, 2> components;
  std::vector<double> mean;
  std::vector<std::array<double, 2>> scores;
  /// Sample variance of each score column; variance[0] >= variance[1].
  std::array<double, 2> variance{};
};

/// Top two principal components of the mean-centred +-1 encoding. Throws
/// InvalidArgument for fewer than 3 vectors or zero variance.
PcaProjection project_pca(std::span<const CapabilityVector> vectors);

}  // namespace tatrack
