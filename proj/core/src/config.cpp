#include "evsurf/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "evsurf/types.hpp"

namespace evsurf {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string strip_quotes(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto sep = line.find('=');
    if (sep == std::string::npos) sep = line.find(':');
    if (sep == std::string::npos) {
      throw InvalidArgument("config line " + std::to_string(lineno) +
                            ": expected 'key = value', got '" + line + "'");
    }
    std::string key = strip_quotes(trim(line.substr(0, sep)));
    std::string value = strip_quotes(trim(line.substr(sep + 1)));
    if (key.empty()) {
      throw InvalidArgument("config line " + std::to_string(lineno) + ": empty key");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void Config::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::string Config::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw InvalidArgument("missing config key: " + key);
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& dflt) const {
  auto it = values_.find(key);
  return it == values_.end() ? dflt : it->second;
}

double Config::parse_number(const std::string& text) {
  std::string s = trim(text);
  auto slash = s.find('/');
  try {
    if (slash != std::string::npos) {
      double num = std::stod(trim(s.substr(0, slash)));
      double den = std::stod(trim(s.substr(slash + 1)));
      if (den == 0.0) throw InvalidArgument("zero denominator in '" + text + "'");
      return num / den;
    }
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw InvalidArgument("trailing characters in number '" + text + "'");
    return v;
  } catch (const std::logic_error&) {
    throw InvalidArgument("cannot parse number: '" + text + "'");
  }
}

double Config::get_double(const std::string& key) const {
  return parse_number(get_string(key));
}

double Config::get_double(const std::string& key, double dflt) const {
  return has(key) ? get_double(key) : dflt;
}

std::int64_t Config::get_int(const std::string& key) const {
  double v = get_double(key);
  auto i = static_cast<std::int64_t>(v);
  if (static_cast<double>(i) != v) {
    throw InvalidArgument("config key '" + key + "' is not an integer: " + get_string(key));
  }
  return i;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t dflt) const {
  return has(key) ? get_int(key) : dflt;
}

bool Config::get_bool(const std::string& key, bool dflt) const {
  if (!has(key)) return dflt;
  std::string v = get_string(key);
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InvalidArgument("config key '" + key + "' is not a boolean: " + v);
}

std::pair<int, int> Config::get_int_pair(const std::string& key) const {
  std::string s = get_string(key);
  auto comma = s.find(',');
  if (comma == std::string::npos) {
    throw InvalidArgument("config key '" + key + "' expects 'a, b', got '" + s + "'");
  }
  int a = static_cast<int>(parse_number(trim(s.substr(0, comma))));
  int b = static_cast<int>(parse_number(trim(s.substr(comma + 1))));
  return {a, b};
}

std::vector<std::string> Config::keys() const {
  std::vector<std::string> out;
  out.reserve(values_.size());
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

std::string Config::canonical_text() const {
  std::ostringstream ss;
  for (const auto& [k, v] : values_) ss << k << " = " << v << "\n";
  return ss.str();
}

void Config::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write config file: " + path);
  out << canonical_text();
}

}  // namespace evsurf
