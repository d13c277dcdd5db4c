#pragma once

// `key=value` configuration files; `#` starts a comment.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace eos {

class ConfigFile {
 public:
  // Throws IoError when unreadable and UsageError on a malformed line.
  static ConfigFile load(const std::filesystem::path& path);
  static ConfigFile parse(std::string_view text, std::string_view origin = "<config>");

  std::optional<std::string> get(std::string_view key) const;
  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

}  // namespace eos
