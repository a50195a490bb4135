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

#include "tatrack/fingerprint.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <random>

#include "tatrack/csv.hpp"

namespace tatrack {

namespace {

// Synthetic layout of the 256 capability bits:
//   [0, 48)    family axis A      [48, 96)   family axis B
//   [96, 128)  Intel block        [128, 224) 4 bits per modem
//   [224, 256) one bit per extra model sharing a modem
enum class Family { huawei, samsung, qualcomm_old, qualcomm_new, intel };

constexpr std::size_t kAxisA = 0;
constexpr std::size_t kAxisB = 48;
constexpr std::size_t kAxisLen = 48;
constexpr std::size_t kIntel = 96;
constexpr std::size_t kIntelLen = 32;
constexpr std::size_t kModems = 128;
constexpr std::size_t kBitsPerModem = 4;
constexpr std::size_t kModels = 224;

struct Row {
  const char* model;
  const char* modem;
  Family family;
  double hw;   // NaN when not measured
  double std;
};

constexpr double kNone = std::numeric_limits<double>::quiet_NaN();

// clang-format off
const Row kPhones[] = {
    {"Samsung Galaxy s10", "Exynos 9820",      Family::samsung,      11.29, 7.22},
    {"Samsung Galaxy a8",  "Exynos 7885",      Family::samsung,     -26.62, 4.77},
    {"Samsung Galaxy s5",  "Qcom. Gobi 4G",    Family::qualcomm_old, kNone, kNone},
    {"Huawei P20 Lite",    "Kirin 659",        Family::huawei,      -24.47, 2.13},
    {"Huawei P20 Pro",     "Kirin 970",        Family::huawei,       -9.34, 2.90},
    {"Huawei P30 Lite",    "Kirin 710",        Family::huawei,      -10.27, 0.98},
    {"Huawei P30",         "Kirin 980",        Family::huawei,      -24.51, 1.49},
    {"Xiaomi Mi9",         "Qcom. X24 LTE",    Family::qualcomm_new, 10.44, 2.20},
    {"Xiaomi MiX 3",       "Qcom. X24 LTE",    Family::qualcomm_new, 11.57, 1.60},
    {"Nokia 1.3",          "Qcom. X5 LTE",     Family::qualcomm_old, kNone, kNone},
    {"Sony Xperia X",      "Qcom. X8 LTE",     Family::qualcomm_old,-11.20, 4.78},
    {"Google Nexus 5X",    "Qcom. X10 LTE",    Family::qualcomm_old,  5.08, 2.51},
    {"Google Pixel 2",     "Qcom. X16 LTE",    Family::qualcomm_new,-13.52, 2.32},
    {"Google Pixel 3a",    "Qcom. X12 LTE",    Family::qualcomm_old,  4.46, 2.14},
    {"Google Pixel 4",     "Qcom. X24 LTE",    Family::qualcomm_new, 12.88, 1.67},
    {"HTC U12+",           "Qcom. X20 LTE",    Family::qualcomm_new,-13.66, 1.55},
    // Clusters with the older Qualcomm modems despite its X24.
    {"OnePlus 7T",         "Qcom. X24 LTE",    Family::qualcomm_old, 12.66, 1.42},
    {"iPhone 7",           "Intel XMM7360",    Family::intel,       -23.86, 0.88},
    {"iPhone 8",           "Intel XMM 7480",   Family::intel,       -23.65, 2.28},
    {"iPhone X",           "Intel XMM7480",    Family::intel,       -25.64, 3.75},
    {"iPhone 11",          "Intel XMM 7660",   Family::intel,       -23.19, 2.49},
    {"iPhone 11 Pro",      "Intel XMM 7660",   Family::intel,       -25.35, 2.46},
};
// clang-format on

void set_range(CapabilityVector& v, std::size_t from, std::size_t len) {
  for (std::size_t i = from; i < from + len; ++i) v.set(i);
}

FingerprintDb make_builtin() {
  std::map<std::string, std::size_t> modem_slot;
  std::map<std::string, int> modem_users;
  std::size_t model_bit = kModels;
  FingerprintDb db;
  for (const Row& r : kPhones) {
    CapabilityVector v;
    switch (r.family) {
      case Family::huawei: set_range(v, kAxisA, kAxisLen); break;
      case Family::samsung: set_range(v, kAxisB, kAxisLen); break;
      case Family::qualcomm_old:
        set_range(v, kAxisA, kAxisLen);
        set_range(v, kAxisB, kAxisLen);
        break;
      case Family::qualcomm_new: break;
      case Family::intel: set_range(v, kIntel, kIntelLen); break;
    }
    const std::string key = modem_key(r.modem);
    const auto [it, fresh] = modem_slot.try_emplace(key, modem_slot.size());
    set_range(v, kModems + it->second * kBitsPerModem, kBitsPerModem);
    if (modem_users[key]++ > 0) v.set(model_bit++);

    PhoneEntry e{r.model, r.modem, v, std::nullopt, std::nullopt};
    if (!std::isnan(r.hw)) {
      e.hw_error_m = r.hw;
      e.hw_error_std_m = r.std;
    }
    db.add(std::move(e));
  }
  return db;
}

std::optional<double> parse_meters(const std::string& s, const std::string& field, std::size_t row) {
  if (s.empty() || s == "-" || s == "\xE2\x80\x93") return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError("fingerprint db row " + std::to_string(row) + ": bad " + field + " '" + s + "'");
  }
}

std::string format_meters(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

}  // namespace

std::string modem_key(std::string_view modem) {
  std::string out;
  for (char c : modem) {
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  }
  return out;
}

CapabilityVector unlisted_capabilities(std::string_view model) {
  // FNV-1a of the name seeds the generator.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : model) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::mt19937_64 rng(h);
  CapabilityVector v;
  for (std::size_t i = 0; i < CapabilityVector::kBits; i += 64) {
    const std::uint64_t word = rng();
    for (std::size_t b = 0; b < 64; ++b) v.set(i + b, (word >> b) & 1U);
  }
  return v;
}

const FingerprintDb& FingerprintDb::builtin() {
  static const FingerprintDb db = make_builtin();
  return db;
}

void FingerprintDb::add(PhoneEntry entry) {
  if (find(entry.model)) throw InvalidArgument("duplicate model '" + entry.model + "'");
  for (const auto& v : {entry.hw_error_m, entry.hw_error_std_m}) {
    if (v && !std::isfinite(*v)) throw InvalidArgument("non-finite hardware error for " + entry.model);
  }
  entries_.push_back(std::move(entry));
}

const PhoneEntry* FingerprintDb::find(std::string_view model) const {
  const auto it = std::find_if(entries_.begin(), entries_.end(),
                               [&](const PhoneEntry& e) { return e.model == model; });
  return it == entries_.end() ? nullptr : &*it;
}

FingerprintDb FingerprintDb::load_csv(std::istream& in) {
  const csv::Table t = csv::Table::parse(in);
  const std::size_t c_model = t.column("model");
  const std::size_t c_modem = t.column("modem");
  const std::size_t c_caps = t.column("capability_hex");
  const std::size_t c_hw = t.column("hw_error_m");
  const std::size_t c_std = t.column("hw_error_std_m");
  FingerprintDb db;
  std::size_t row = 1;
  for (const auto& r : t.rows()) {
    ++row;
    PhoneEntry e;
    e.model = r[c_model];
    e.modem = r[c_modem];
    try {
      e.capabilities = CapabilityVector::from_hex(r[c_caps]);
      e.hw_error_m = parse_meters(r[c_hw], "hw_error_m", row);
      e.hw_error_std_m = parse_meters(r[c_std], "hw_error_std_m", row);
      db.add(std::move(e));
    } catch (const InputError&) {
      throw;
    } catch (const Error& err) {
      throw InputError("fingerprint db row " + std::to_string(row) + ": " + err.what());
    }
  }
  return db;
}

FingerprintDb FingerprintDb::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open fingerprint db '" + path + "'");
  return load_csv(in);
}

void FingerprintDb::save_csv(std::ostream& out) const {
  csv::write_row(out, {"model", "modem", "capability_hex", "hw_error_m", "hw_error_std_m"});
  for (const auto& e : entries_) {
    csv::write_row(out, {e.model, e.modem, e.capabilities.to_hex(), format_meters(e.hw_error_m),
                         format_meters(e.hw_error_std_m)});
  }
}

Classification classify(const CapabilityVector& v, const FingerprintDb& db) {
  if (db.empty()) throw InvalidArgument("classify on an empty fingerprint db");
  Classification best;
  bool first = true;
  for (const auto& e : db.entries()) {
    const std::size_t d = hamming(v, e.capabilities);
    if (first || d < best.distance) {
      best = {e.model, d, false};
      first = false;
    } else if (d == best.distance) {
      best.tie = true;
      best.model = std::min(best.model, e.model);
    }
  }
  return best;
}

std::optional<double> find_hw_error(std::string_view model, const FingerprintDb& db) {
  const PhoneEntry* e = db.find(model);
  return e ? e->hw_error_m : std::nullopt;
}

double hw_error(std::string_view model, const FingerprintDb& db) {
  const PhoneEntry* e = db.find(model);
  if (!e) throw UnknownModel("model '" + std::string(model) + "' is not in the fingerprint db");
  if (!e->hw_error_m) {
    throw UnknownModel("model '" + std::string(model) + "' has no hardware-error value");
  }
  return *e->hw_error_m;
}

double estimate_hw_error(std::span<const double> estimated, std::span<const double> actual) {
  if (estimated.size() != actual.size()) {
    throw InvalidArgument("estimate_hw_error: " + std::to_string(estimated.size()) + " estimates vs " +
                          std::to_string(actual.size()) + " actual distances");
  }
  if (estimated.empty()) throw InvalidArgument("estimate_hw_error: no distances");
  double sum = 0;
  for (std::size_t i = 0; i < estimated.size(); ++i) sum += estimated[i] - actual[i];
  return sum / static_cast<double>(estimated.size());
}

PcaProjection project_pca(std::span<const CapabilityVector> vectors) {
  const auto n = static_cast<Eigen::Index>(vectors.size());
  constexpr auto dims = static_cast<Eigen::Index>(PcaProjection::kDims);
  if (n < 3) throw InvalidArgument("PCA needs at least 3 vectors");

  Eigen::MatrixXd x(n, dims);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < dims; ++j) {
      x(i, j) = vectors[static_cast<std::size_t>(i)].test(static_cast<std::size_t>(j)) ? 1.0 : -1.0;
    }
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;

  // Eigenvectors of the n x n Gram matrix map onto those of the covariance.
  const Eigen::MatrixXd gram = x * x.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw InvalidArgument("PCA eigen-solver did not converge");
  const Eigen::VectorXd& lambda = eig.eigenvalues();  // ascending
  const double tol = 1e-9 * std::max(1.0, lambda(n - 1));
  if (lambda(n - 1) <= tol) throw InvalidArgument("PCA on vectors with zero variance");

  std::array<Eigen::VectorXd, 2> comp;
  comp[0] = x.transpose() * eig.eigenvectors().col(n - 1) / std::sqrt(lambda(n - 1));
  if (lambda(n - 2) > tol) {
    comp[1] = x.transpose() * eig.eigenvectors().col(n - 2) / std::sqrt(lambda(n - 2));
  } else {
    // Rank one: any direction orthogonal to the first carries no variance.
    Eigen::Index j = 0;
    comp[0].cwiseAbs().minCoeff(&j);
    comp[1] = Eigen::VectorXd::Unit(dims, j);
    comp[1] -= comp[0].dot(comp[1]) * comp[0];
  }

  PcaProjection out;
  out.mean.assign(mean.data(), mean.data() + dims);
  for (std::size_t k = 0; k < 2; ++k) {
    comp[k].normalize();
    Eigen::Index arg = 0;
    comp[k].cwiseAbs().maxCoeff(&arg);
    if (comp[k](arg) < 0) comp[k] = -comp[k];
    out.components[k].assign(comp[k].data(), comp[k].data() + dims);
  }
  const Eigen::MatrixXd scores = x * (Eigen::MatrixXd(dims, 2) << comp[0], comp[1]).finished();
  out.scores.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out.scores[static_cast<std::size_t>(i)] = {scores(i, 0), scores(i, 1)};
  for (Eigen::Index k = 0; k < 2; ++k) {
    out.variance[static_cast<std::size_t>(k)] = scores.col(k).squaredNorm() / static_cast<double>(n - 1);
  }
  return out;
}

}  // namespace tatrack
