// Minimal CSV + stable number formatting. All emitted files must be
// byte-identical across reruns, so formatting never goes through locales
// or stream state.
#pragma once

#include <string>
#include <vector>

#include "common.hpp"

namespace lab {

std::string fmt_real(double v);          // shortest round-trip-ish, "%.10g"
std::string fmt_fixed(double v, int dp); // "%.{dp}f"

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

void write_csv(const std::string& path, const CsvTable& t);
CsvTable read_csv(const std::string& path);

std::vector<std::string> split(const std::string& s, char sep);

}  // namespace lab
