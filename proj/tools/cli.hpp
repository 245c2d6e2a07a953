// SPDX-License-Identifier: Apache-2.0
#pragma once

// Command-line experiment runner: settings schema, config-file parsing and
// the subcommand dispatcher.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace pdeattn::cli {

enum ExitCode : int { kOk = 0, kVerificationFailed = 1, kConfigError = 2, kDiverged = 3 };

/// Environment variable naming the base output directory; each run goes to
/// <base>/<subcommand> unless --out is given.
inline constexpr const char* kOutDirEnv = "PDEATTN_OUT_DIR";

struct KeySpec {
  std::string key;
  std::string default_value;
  std::string help;
};

/// Sections in file order: global first, then one per subcommand.
const std::vector<std::pair<std::string, std::vector<KeySpec>>>& schema();

/// Flat section.key -> value store, seeded with schema defaults. Every
/// setter rejects keys the schema does not know with InvalidConfig.
class Settings {
 public:
  Settings();

  void set(const std::string& section, const std::string& key, const std::string& value);
  /// "section.key=value"
  void set_assignment(const std::string& assignment);
  /// Flat key = value text with [section] headers; '#' and ';' start
  /// comments. `origin` prefixes error messages.
  void load(std::string_view text, const std::string& origin = "config");
  void load_file(const std::string& path);

  const std::string& str(const std::string& section, const std::string& key) const;
  double real(const std::string& section, const std::string& key) const;
  std::size_t size(const std::string& section, const std::string& key) const;
  std::uint64_t u64(const std::string& section, const std::string& key) const;
  bool flag(const std::string& section, const std::string& key) const;
  std::vector<std::string> list(const std::string& section, const std::string& key) const;
  std::vector<std::size_t> size_list(const std::string& section, const std::string& key) const;

  /// The given sections in schema order, one "key = value" line per key.
  std::string resolved(const std::vector<std::string>& sections) const;

 private:
  std::map<std::string, std::string> values_;
};

/// Parse argv and run one subcommand. Diagnostics go to `err`, summaries
/// to `out`; artifacts are written to the output directory.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pdeattn::cli
