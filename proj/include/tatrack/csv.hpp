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

// Minimal RFC 4180 reader and writer.

#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace tatrack::csv {

using Row = std::vector<std::string>;

/// Quotes a field when it holds a comma, quote or line break.
std::string escape(std::string_view field);
void write_row(std::ostream& out, const Row& row);

/// Parses the whole stream. Throws InputError on an unterminated quote.
std::vector<Row> read(std::istream& in);

/// Rows keyed by header name. Throws InputError for a missing column.
class Table {
 public:
  static Table parse(std::istream& in);
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
  const Row& header() const { return header_; }
  const std::vector<Row>& rows() const { return rows_; }

 private:
  Row header_;
  std::vector<Row> rows_;
};

}  // namespace tatrack::csv
