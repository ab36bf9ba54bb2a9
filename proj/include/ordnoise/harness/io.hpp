#pragma once

// Output files: number formatting, atomic writes and the per-epoch CSV.

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "ordnoise/error.hpp"
#include "ordnoise/metrics.hpp"
#include "ordnoise/text.hpp"

namespace ordnoise::harness {

inline std::string format_number(double v) { return to_text(v); }

inline std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

// Writes to a sibling temporary file, then renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline constexpr const char* kEpochHeader =
    "epoch,train_loss,acc_net1,acc_net2,acc_mean,mae_mean,mf1_mean,label_precision,selected_count";

inline std::string hash_comment(const std::string& hash) { return "# config_hash=" + hash + "\n"; }

inline std::string epochs_csv(const std::vector<EpochRecord>& epochs, const std::string& hash) {
  std::string out = hash_comment(hash);
  out += kEpochHeader;
  out += '\n';
  for (const auto& r : epochs) {
    out += std::to_string(r.epoch) + ',' + format_number(r.train_loss) + ',' + format_number(r.net1.accuracy) + ',' +
           (r.net2 ? format_number(r.net2->accuracy) : std::string()) + ',' + format_number(r.mean.accuracy) + ',' +
           format_number(r.mean.mae) + ',' + format_number(r.mean.macro_f1) + ',' +
           format_optional(r.label_precision) + ',' + std::to_string(r.selected_count) + '\n';
  }
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

// One row of a per-epoch CSV as read back for plotting.
struct EpochRow {
  int epoch = 0;
  double acc_mean = 0.0;
  double mae_mean = 0.0;
  double mf1_mean = 0.0;
  std::optional<double> label_precision;
};

inline std::vector<EpochRow> parse_epochs_csv(const std::string& text) {
  std::vector<EpochRow> rows;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kEpochHeader) throw ParseError("epochs csv: unexpected header", lineno);
      header = true;
      continue;
    }
    const auto c = split_csv_line(line);
    if (c.size() != 9) throw ParseError("epochs csv: expected 9 columns", lineno);
    try {
      EpochRow r;
      r.epoch = std::stoi(c[0]);
      r.acc_mean = std::stod(c[4]);
      r.mae_mean = std::stod(c[5]);
      r.mf1_mean = std::stod(c[6]);
      if (!c[7].empty()) r.label_precision = std::stod(c[7]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ParseError("epochs csv: bad number", lineno);
    }
  }
  if (!header) throw ParseError("epochs csv: missing header", lineno);
  return rows;
}

}  // namespace ordnoise::harness
