#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dcp {

/// 17 significant digits; round-trips doubles exactly.
std::string format_g17(double x);

/// Writes `header` then one row per index, all values through format_g17.
/// Columns must share one length.
void write_csv(const std::filesystem::path& file,
               const std::vector<std::string>& header,
               const std::vector<const std::vector<double>*>& columns);

void write_text(const std::filesystem::path& file, const std::string& text);

std::string read_text(const std::filesystem::path& file);

}  // namespace dcp
