#include <charconv>
#include <fstream>
#include <stdexcept>

#include "clof/data_io.hpp"

namespace clof::data {

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::invalid_argument("metrics: bad number " + s);
  return v;
}

}  // namespace

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path, bool append) {
  const bool header = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (header) out << kMetricsHeader << "\r\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << csv_field(r.split) << ',' << csv_field(r.model) << ',' << csv_field(r.system) << ','
        << format_real(r.mse) << ',' << (r.delta_eq ? format_real(*r.delta_eq) : std::string()) << ','
        << format_real(r.wall_seconds) << "\r\n";
  }
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::vector<MetricsRow> rows;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      if (line != kMetricsHeader) throw std::invalid_argument("metrics: unexpected header");
      first = false;
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw std::invalid_argument("metrics: expected 7 fields");
    MetricsRow r;
    r.epoch = std::stoi(f[0]);
    r.split = f[1];
    r.model = f[2];
    r.system = f[3];
    r.mse = parse_double(f[4]);
    if (!f[5].empty()) r.delta_eq = parse_double(f[5]);
    r.wall_seconds = parse_double(f[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace clof::data
