#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace pmdlab {

/// 17 significant digits in scientific notation ("1.0000000000000000e-01"),
/// locale-independent; NaN is written as "nan", infinities as "inf"/"-inf".
std::string format_double(double value);

/// Locale-independent inverse of format_double (accepts any decimal form).
std::optional<double> parse_double(std::string_view text);

}  // namespace pmdlab
