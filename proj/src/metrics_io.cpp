#include "sfa/metrics_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sfa {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

double parse_cell(const std::string& raw, const std::string& path) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (ec != std::errc{} || ptr != raw.data() + raw.size())
    throw std::runtime_error("malformed numeric cell '" + raw + "' in '" + path + "'");
  return v;
}

}  // namespace

std::string format_g6(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 6);
  if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
  return std::string(buf, ptr);
}

void write_step_csv(const std::string& path, const std::vector<StepRecord>& steps) {
  std::ofstream out = open_out(path);
  out << "step,loss,lr\n";
  for (const StepRecord& s : steps)
    out << s.step << ',' << format_g6(s.loss) << ',' << format_g6(s.lr) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void write_eval_csv(const std::string& path, const std::vector<EvalRecord>& evals) {
  std::ofstream out = open_out(path);
  out << "epoch,top1,top5,wall_seconds\n";
  for (const EvalRecord& e : evals)
    out << format_g6(e.epoch) << ',' << format_g6(e.top1) << ',' << format_g6(e.top5) << ','
        << format_g6(e.wall_seconds) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void write_step_jsonl(const std::string& path, const std::vector<StepRecord>& steps) {
  std::ofstream out = open_out(path);
  for (const StepRecord& s : steps)
    out << "{\"step\":" << s.step << ",\"loss\":" << format_g6(s.loss)
        << ",\"lr\":" << format_g6(s.lr) << "}\n";
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void write_eval_jsonl(const std::string& path, const std::vector<EvalRecord>& evals) {
  std::ofstream out = open_out(path);
  for (const EvalRecord& e : evals)
    out << "{\"epoch\":" << format_g6(e.epoch) << ",\"top1\":" << format_g6(e.top1)
        << ",\"top5\":" << format_g6(e.top5) << ",\"wall_seconds\":" << format_g6(e.wall_seconds)
        << "}\n";
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("'" + path + "' is empty");
  std::istringstream head(line);
  for (std::string col; std::getline(head, col, ',');) table.columns.push_back(col);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::vector<double> cells;
    for (std::string cell; std::getline(row, cell, ',');)
      cells.push_back(parse_cell(cell, path));
    if (cells.size() != table.columns.size())
      throw std::runtime_error("ragged row in '" + path + "'");
    table.rows.push_back(std::move(cells));
  }
  return table;
}

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 1469598103934665603ull;
  for (const char c : bytes) {
    h ^= uint64_t(uint8_t(c));
    h *= 1099511628211ull;
  }
  return h;
}

void write_manifest(const std::string& path, uint64_t config_hash, uint64_t seed,
                    const std::vector<std::string>& artifacts) {
  std::ofstream out = open_out(path);
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(config_hash));
  out << "config_hash = " << hex << '\n';
  out << "seed = " << seed << '\n';
  for (const std::string& a : artifacts) out << "artifact = " << a << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace sfa
