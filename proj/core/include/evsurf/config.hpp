#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace evsurf {

// Flat key-value configuration. One "key = value" (or "key: value") pair per
// line, '#' starts a comment. Numeric values may be written as fractions
// ("159.0/255.0"), matching the simulator parameter notation.
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& dflt) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double dflt) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;

  /// "260, 346" -> {260, 346}.
  std::pair<int, int> get_int_pair(const std::string& key) const;

  /// Keys in insertion-independent (sorted) order.
  std::vector<std::string> keys() const;

  /// Canonical "key = value" text, sorted by key; used for snapshots and
  /// manifest hashing so formatting differences cannot change the hash.
  std::string canonical_text() const;

  void save(const std::string& path) const;

  /// Parse a numeric literal that may be a fraction like "159.0/255.0".
  static double parse_number(const std::string& text);

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace evsurf
