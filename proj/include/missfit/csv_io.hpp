#pragma once

#include <iosfwd>
#include <string>

#include "missfit/core.hpp"

namespace missfit {

// Reads a comma-separated file with a header row. Empty cells and the token
// `NA` become missing (mask 1, stored value 0). The target column is removed
// from the features; if `target` is empty or absent and `require_target` is
// false, y is filled with zeros.
MaskedDataset read_csv(const std::string& path, const std::string& target,
                       bool require_target = true);
MaskedDataset read_csv(std::istream& in, const std::string& target,
                       bool require_target = true);

// Writes features (missing as `NA`) followed by a `target` column.
void write_csv(const std::string& path, const MaskedDataset& data,
               const std::string& target = "y");
void write_csv(std::ostream& out, const MaskedDataset& data,
               const std::string& target = "y");

// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace missfit
