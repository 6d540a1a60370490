#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "clof/data_io.hpp"

namespace clof::data {

std::string format_real(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("format_real: non-finite value");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void CanonicalWriter::separate() {
  if (after_key_) {
    after_key_ = false;
    return;
  }
  if (!first_.empty()) {
    if (!first_.back()) out_ += ',';
    first_.back() = false;
  }
}

CanonicalWriter& CanonicalWriter::begin_object() {
  separate();
  out_ += '{';
  first_.push_back(true);
  return *this;
}

CanonicalWriter& CanonicalWriter::end_object() {
  out_ += '}';
  first_.pop_back();
  return *this;
}

CanonicalWriter& CanonicalWriter::begin_array() {
  separate();
  out_ += '[';
  first_.push_back(true);
  return *this;
}

CanonicalWriter& CanonicalWriter::end_array() {
  out_ += ']';
  first_.pop_back();
  return *this;
}

CanonicalWriter& CanonicalWriter::key(std::string_view k) {
  value(k);
  out_ += ':';
  after_key_ = true;
  return *this;
}

CanonicalWriter& CanonicalWriter::value(double v) {
  separate();
  out_ += format_real(v);
  return *this;
}

CanonicalWriter& CanonicalWriter::value(std::int64_t v) {
  separate();
  out_ += std::to_string(v);
  return *this;
}

CanonicalWriter& CanonicalWriter::value(std::uint64_t v) {
  separate();
  out_ += std::to_string(v);
  return *this;
}

CanonicalWriter& CanonicalWriter::value(bool v) {
  separate();
  out_ += v ? "true" : "false";
  return *this;
}

CanonicalWriter& CanonicalWriter::value(std::string_view v) {
  separate();
  out_ += '"';
  for (char ch : v) {
    switch (ch) {
      case '"': out_ += "\\\""; break;
      case '\\': out_ += "\\\\"; break;
      case '\n': out_ += "\\n"; break;
      case '\t': out_ += "\\t"; break;
      case '\r': out_ += "\\r"; break;
      default:
        if (static_cast<unsigned char>(ch) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", ch);
          out_ += buf;
        } else {
          out_ += ch;
        }
    }
  }
  out_ += '"';
  return *this;
}

CanonicalWriter& CanonicalWriter::value(const Vec3& v) {
  begin_array();
  value(v.x).value(v.y).value(v.z);
  return end_array();
}

CanonicalWriter& CanonicalWriter::value(const std::vector<double>& v) {
  begin_array();
  for (double x : v) value(x);
  return end_array();
}

CanonicalWriter& CanonicalWriter::value(const std::vector<Vec3>& v) {
  begin_array();
  for (const auto& x : v) value(x);
  return end_array();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace clof::data
