#pragma once

// Typed access to a TOML table that remembers which keys were read, so any
// key left over after parsing is reported as unknown.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <toml.hpp>

#include "snmdp/error.hpp"

namespace snmdp::harness {

class Section {
 public:
  Section(const toml::table& table, std::string path) : table_(table), path_(std::move(path)) {}

  bool has(const std::string& key) const { return table_.contains(key); }

  double real(const std::string& key, double def) {
    const toml::node* n = lookup(key);
    if (!n) return def;
    if (auto v = n->value_exact<double>()) return *v;
    if (auto v = n->value_exact<std::int64_t>()) return static_cast<double>(*v);
    fail(key, "a number");
  }

  std::size_t count(const std::string& key, std::size_t def) {
    const toml::node* n = lookup(key);
    if (!n) return def;
    auto v = n->value_exact<std::int64_t>();
    if (!v || *v < 0) fail(key, "a non-negative integer");
    return static_cast<std::size_t>(*v);
  }

  std::uint64_t u64(const std::string& key, std::uint64_t def) {
    const toml::node* n = lookup(key);
    if (!n) return def;
    auto v = n->value_exact<std::int64_t>();
    if (!v || *v < 0) fail(key, "a non-negative integer");
    return static_cast<std::uint64_t>(*v);
  }

  bool flag(const std::string& key, bool def) {
    const toml::node* n = lookup(key);
    if (!n) return def;
    auto v = n->value_exact<bool>();
    if (!v) fail(key, "a boolean");
    return *v;
  }

  std::string text(const std::string& key, const std::string& def) {
    const toml::node* n = lookup(key);
    if (!n) return def;
    auto v = n->value_exact<std::string>();
    if (!v) fail(key, "a string");
    return *v;
  }

  std::optional<double> optional_real(const std::string& key) {
    if (!has(key)) {
      seen_.insert(key);
      return std::nullopt;
    }
    return real(key, 0.0);
  }

  std::vector<double> reals(const std::string& key, const std::vector<double>& def) {
    const toml::node* n = lookup(key);
    if (!n) return def;
    const toml::array* arr = n->as_array();
    if (!arr) fail(key, "an array of numbers");
    std::vector<double> out;
    for (const auto& e : *arr) {
      if (auto v = e.value_exact<double>())
        out.push_back(*v);
      else if (auto i = e.value_exact<std::int64_t>())
        out.push_back(static_cast<double>(*i));
      else
        fail(key, "an array of numbers");
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& key, const std::vector<std::size_t>& def) {
    const toml::node* n = lookup(key);
    if (!n) return def;
    const toml::array* arr = n->as_array();
    if (!arr) fail(key, "an array of non-negative integers");
    std::vector<std::size_t> out;
    for (const auto& e : *arr) {
      auto v = e.value_exact<std::int64_t>();
      if (!v || *v < 0) fail(key, "an array of non-negative integers");
      out.push_back(static_cast<std::size_t>(*v));
    }
    return out;
  }

  std::vector<std::string> texts(const std::string& key, const std::vector<std::string>& def) {
    const toml::node* n = lookup(key);
    if (!n) return def;
    const toml::array* arr = n->as_array();
    if (!arr) fail(key, "an array of strings");
    std::vector<std::string> out;
    for (const auto& e : *arr) {
      auto v = e.value_exact<std::string>();
      if (!v) fail(key, "an array of strings");
      out.push_back(*v);
    }
    return out;
  }

  // Sub-table; an absent table reads as empty so defaults apply.
  Section table(const std::string& key) {
    const toml::node* n = lookup(key);
    if (!n) return Section(empty(), child(key));
    const toml::table* t = n->as_table();
    if (!t) fail(key, "a table");
    return Section(*t, child(key));
  }

  std::vector<Section> tables(const std::string& key) {
    const toml::node* n = lookup(key);
    std::vector<Section> out;
    if (!n) return out;
    const toml::array* arr = n->as_array();
    if (!arr || !arr->is_array_of_tables()) fail(key, "an array of tables ([[" + key + "]])");
    for (std::size_t i = 0; i < arr->size(); ++i)
      out.emplace_back(*(*arr)[i].as_table(), child(key) + "[" + std::to_string(i) + "]");
    return out;
  }

  // Throws on any key that was never read.
  void finish() const {
    for (const auto& [k, v] : table_) {
      const std::string key(k.str());
      if (!seen_.count(key)) throw ConfigError("unknown key '" + child(key) + "'");
    }
  }

  [[noreturn]] void invalid(const std::string& key, const std::string& why) const {
    throw ConfigError("invalid value for '" + child(key) + "': " + why);
  }

 private:
  const toml::node* lookup(const std::string& key) {
    seen_.insert(key);
    return table_.get(key);
  }

  [[noreturn]] void fail(const std::string& key, const std::string& expected) const {
    throw ConfigError("'" + child(key) + "' must be " + expected);
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  static const toml::table& empty() {
    static const toml::table t;
    return t;
  }

  const toml::table& table_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace snmdp::harness
