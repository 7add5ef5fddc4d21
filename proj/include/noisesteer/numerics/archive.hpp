#pragma once
// Line-oriented text archive used for every checkpoint in the project.
// Reals are written as hexadecimal floating point so a save/load round trip
// is bit-exact. Each line is `key payload`; readers check keys in order.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace noisesteer {

class ArchiveWriter {
 public:
  explicit ArchiveWriter(std::ostream& os) : os_(os) {}

  void tag(std::string_view format, int version);
  void put(std::string_view key, double value);
  void put_u64(std::string_view key, std::uint64_t value);
  void put(std::string_view key, std::span<const double> values);
  void put_u64s(std::string_view key, std::span<const std::uint64_t> values);
  /// Single-line string; must not contain '\n'.
  void put(std::string_view key, std::string_view value);

 private:
  std::ostream& os_;
};

class ArchiveReader {
 public:
  explicit ArchiveReader(std::istream& is) : is_(is) {}

  /// Reads the format tag; throws FormatError on a different format or a
  /// version above `max_version`. Returns the stored version.
  int expect_tag(std::string_view format, int max_version);
  double get_double(std::string_view key);
  std::uint64_t get_u64(std::string_view key);
  std::vector<double> get_vector(std::string_view key);
  std::vector<std::uint64_t> get_u64s(std::string_view key);
  std::string get_string(std::string_view key);

 private:
  std::string payload(std::string_view key);

  std::istream& is_;
};

std::string format_hex(double v);
double parse_real(std::string_view token);

}  // namespace noisesteer
