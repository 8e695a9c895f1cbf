#pragma once

#include <string>
#include <vector>

namespace cppd {

/// Plain-text `key = value` configuration with '#' comments and dotted
/// section keys. Every key must exist in the built-in registry of defaults;
/// unknown keys are hard errors. Flag overrides go through set().
class Config {
 public:
  Config();

  void load_file(const std::string& path);

  /// Accepts "section.key=value" or separate key/value.
  void set(const std::string& key, const std::string& value);
  void set_kv(const std::string& assignment);

  bool has(const std::string& key) const;
  const std::string& gets(const std::string& key) const;
  int geti(const std::string& key) const;
  double getd(const std::string& key) const;
  bool getb(const std::string& key) const;

  /// Canonical `key = value` dump of the full effective configuration.
  std::string dump() const;

 private:
  std::vector<std::pair<std::string, std::string>> values_;
};

}  // namespace cppd
