#include "noisesteer/numerics/archive.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>

#include "noisesteer/errors.hpp"

namespace noisesteer {

std::string format_hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_real(std::string_view token) {
  // libstdc++'s operator>> does not accept hexfloat input; strtod does.
  std::string s(token);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw FormatError("bad real token '" + s + "'");
  return v;
}

void ArchiveWriter::tag(std::string_view format, int version) { os_ << format << ' ' << version << '\n'; }

void ArchiveWriter::put(std::string_view key, double value) { os_ << key << ' ' << format_hex(value) << '\n'; }

void ArchiveWriter::put_u64(std::string_view key, std::uint64_t value) { os_ << key << ' ' << value << '\n'; }

void ArchiveWriter::put(std::string_view key, std::span<const double> values) {
  os_ << key << ' ' << values.size();
  for (double v : values) os_ << ' ' << format_hex(v);
  os_ << '\n';
}

void ArchiveWriter::put_u64s(std::string_view key, std::span<const std::uint64_t> values) {
  os_ << key << ' ' << values.size();
  for (auto v : values) os_ << ' ' << v;
  os_ << '\n';
}

void ArchiveWriter::put(std::string_view key, std::string_view value) {
  if (value.find('\n') != std::string_view::npos) throw FormatError("archive strings must be single-line");
  os_ << key << ' ' << value << '\n';
}

std::string ArchiveReader::payload(std::string_view key) {
  std::string line;
  if (!std::getline(is_, line)) throw FormatError("archive truncated, expected key '" + std::string(key) + "'");
  const auto sp = line.find(' ');
  const std::string found = line.substr(0, sp);
  if (found != key) throw FormatError("archive key mismatch: expected '" + std::string(key) + "', got '" + found + "'");
  return sp == std::string::npos ? std::string() : line.substr(sp + 1);
}

int ArchiveReader::expect_tag(std::string_view format, int max_version) {
  const std::string p = payload(format);
  int version = 0;
  try {
    version = std::stoi(p);
  } catch (const std::exception&) {
    throw FormatError("bad version for format '" + std::string(format) + "'");
  }
  if (version < 1 || version > max_version) {
    throw FormatError("unsupported version " + std::to_string(version) + " of '" + std::string(format) + "'");
  }
  return version;
}

double ArchiveReader::get_double(std::string_view key) { return parse_real(payload(key)); }

std::uint64_t ArchiveReader::get_u64(std::string_view key) {
  const std::string p = payload(key);
  try {
    return std::stoull(p);
  } catch (const std::exception&) {
    throw FormatError("bad integer for key '" + std::string(key) + "'");
  }
}

std::vector<double> ArchiveReader::get_vector(std::string_view key) {
  std::istringstream ss(payload(key));
  std::size_t n = 0;
  if (!(ss >> n)) throw FormatError("bad vector length for key '" + std::string(key) + "'");
  std::vector<double> out;
  out.reserve(n);
  std::string tok;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(ss >> tok)) throw FormatError("vector '" + std::string(key) + "' truncated");
    out.push_back(parse_real(tok));
  }
  return out;
}

std::vector<std::uint64_t> ArchiveReader::get_u64s(std::string_view key) {
  std::istringstream ss(payload(key));
  std::size_t n = 0;
  if (!(ss >> n)) throw FormatError("bad vector length for key '" + std::string(key) + "'");
  std::vector<std::uint64_t> out(n);
  for (auto& v : out) {
    if (!(ss >> v)) throw FormatError("vector '" + std::string(key) + "' truncated");
  }
  return out;
}

std::string ArchiveReader::get_string(std::string_view key) { return payload(key); }

}  // namespace noisesteer
