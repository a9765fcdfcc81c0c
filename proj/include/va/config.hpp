#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "va/errors.hpp"

namespace va {

// Round-trip text for doubles/floats (shortest form that parses back exactly).
std::string format_double(double v);
std::string format_float(float v);

// Line-oriented `key = value` config. '#' lines are comments. Unknown or
// duplicate keys are errors so typos never pass silently.
class KvConfig {
  public:
    static KvConfig parse_file(const std::string& path);
    static KvConfig parse_string(const std::string& text, const std::string& origin);

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    void set_int(const std::string& key, int64_t v) { values_[key] = std::to_string(v); }
    void set_double(const std::string& key, double v) { values_[key] = format_double(v); }

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key) const;
    int get_int(const std::string& key, int fallback) const;
    int64_t get_int64(const std::string& key, int64_t fallback) const;
    uint64_t get_uint64(const std::string& key, uint64_t fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int> get_int_list(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key) const;

    // ConfigError naming every key outside `allowed`.
    void require_known(const std::set<std::string>& allowed) const;

    void write_file(const std::string& path) const;
    std::string to_string() const;

    const std::map<std::string, std::string>& values() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace va
