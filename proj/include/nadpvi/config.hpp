// Copyright 2026 The nadpvi Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Flat key-value configuration files with [section] headers. Keys are
// addressed as "section.key"; diagnostics carry the source name and line.

#ifndef NADPVI_CONFIG_HPP_
#define NADPVI_CONFIG_HPP_

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nadpvi {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace detail

// Parsed configuration. Every lookup marks the key as consumed so a caller
// can reject unrecognized (usually misspelled) keys after extraction.
class ParsedConfig {
 public:
  struct Entry {
    std::string value;
    int line = 0;
    mutable bool used = false;
  };

  static ParsedConfig from_text(const std::string& text,
                                const std::string& source = "<config>") {
    ParsedConfig cfg;
    cfg.source_ = source;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      std::string line = detail::trim(raw);
      if (line.empty() || line[0] == '#') continue;
      if (line.front() == '[') {
        if (line.back() != ']' || line.size() < 3)
          throw ConfigError(cfg.where(line_no) + ": malformed section header '" +
                            line + "'");
        section = detail::trim(line.substr(1, line.size() - 2));
        if (section.empty())
          throw ConfigError(cfg.where(line_no) + ": empty section name");
        continue;
      }
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(cfg.where(line_no) +
                          ": expected 'key = value', got '" + line + "'");
      std::string key = detail::trim(line.substr(0, eq));
      const std::string value = detail::trim(line.substr(eq + 1));
      if (key.empty())
        throw ConfigError(cfg.where(line_no) + ": empty key name");
      if (!section.empty()) key = section + "." + key;
      if (cfg.entries_.count(key))
        throw ConfigError(cfg.where(line_no) + ": duplicate key '" + key +
                          "' (first defined on line " +
                          std::to_string(cfg.entries_[key].line) + ")");
      cfg.entries_[key] = Entry{value, line_no, false};
      cfg.order_.push_back(key);
    }
    return cfg;
  }

  static ParsedConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
      throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str(), path);
  }

  const std::string& source() const { return source_; }
  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get_string(const std::string& key) const {
    const Entry* e = find(key);
    if (!e) throw ConfigError("config " + source_ + ": missing required key '" +
                              key + "'");
    return e->value;
  }
  std::string get_string(const std::string& key,
                         const std::string& fallback) const {
    const Entry* e = find(key);
    return e ? e->value : fallback;
  }

  double get_double(const std::string& key) const {
    return parse_double(key, get_string(key));
  }
  double get_double(const std::string& key, double fallback) const {
    const Entry* e = find(key);
    return e ? parse_double(key, e->value) : fallback;
  }

  int64_t get_int(const std::string& key) const {
    return parse_int(key, get_string(key));
  }
  int64_t get_int(const std::string& key, int64_t fallback) const {
    const Entry* e = find(key);
    return e ? parse_int(key, e->value) : fallback;
  }

  uint64_t get_uint(const std::string& key, uint64_t fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    try {
      std::size_t pos = 0;
      const uint64_t v = std::stoull(e->value, &pos);
      if (pos != e->value.size()) throw std::invalid_argument("trailing junk");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(where_key(key) + ": field '" + key +
                        "': expected a nonnegative integer, got '" + e->value +
                        "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
    if (e->value == "false" || e->value == "0" || e->value == "no")
      return false;
    throw ConfigError(where_key(key) + ": field '" + key +
                      "': expected true/false, got '" + e->value + "'");
  }

  // CLI overrides; line 0 marks entries that did not come from the file.
  void set(const std::string& key, const std::string& value) {
    if (!entries_.count(key)) order_.push_back(key);
    entries_[key] = Entry{value, 0, false};
  }

  int line_of(const std::string& key) const {
    const Entry* e = find_silent(key);
    return e ? e->line : 0;
  }

  // Keys present in the file that no lookup consumed.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const std::string& key : order_)
      if (!entries_.at(key).used) out.push_back(key);
    return out;
  }

  void reject_unused() const {
    const std::vector<std::string> leftovers = unused_keys();
    if (leftovers.empty()) return;
    std::string msg = "config " + source_ + ": unknown key";
    if (leftovers.size() > 1) msg += "s";
    for (const std::string& key : leftovers)
      msg += " '" + key + "' (line " +
             std::to_string(entries_.at(key).line) + ")";
    throw ConfigError(msg);
  }

  const std::vector<std::string>& keys() const { return order_; }

 private:
  const Entry* find(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  }
  const Entry* find_silent(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::string where(int line) const {
    return "config " + source_ + ":" + std::to_string(line);
  }
  std::string where_key(const std::string& key) const {
    return where(line_of(key));
  }

  double parse_double(const std::string& key, const std::string& value) const {
    try {
      std::size_t pos = 0;
      const double v = std::stod(value, &pos);
      if (pos != value.size()) throw std::invalid_argument("trailing junk");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(where_key(key) + ": field '" + key +
                        "': expected a number, got '" + value + "'");
    }
  }
  int64_t parse_int(const std::string& key, const std::string& value) const {
    try {
      std::size_t pos = 0;
      const int64_t v = std::stoll(value, &pos);
      if (pos != value.size()) throw std::invalid_argument("trailing junk");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(where_key(key) + ": field '" + key +
                        "': expected an integer, got '" + value + "'");
    }
  }

  std::string source_;
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;  // file order, for deterministic reporting
};

}  // namespace nadpvi

#endif  // NADPVI_CONFIG_HPP_
