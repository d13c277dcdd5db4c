#include "eos/config.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "eos/errors.hpp"

namespace eos {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read config '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

ConfigFile ConfigFile::parse(std::string_view text, std::string_view origin) {
  ConfigFile cfg;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError(fmt::format("{}:{}: expected key=value", origin, line_no));
    }
    const std::string_view key = trim(line.substr(0, eq));
    if (key.empty()) throw UsageError(fmt::format("{}:{}: empty key", origin, line_no));
    cfg.entries_[std::string(key)] = std::string(trim(line.substr(eq + 1)));
  }
  return cfg;
}

std::optional<std::string> ConfigFile::get(std::string_view key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

}  // namespace eos
