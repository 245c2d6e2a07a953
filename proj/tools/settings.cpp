// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "pdeattn/errors.hpp"

namespace pdeattn::cli {

namespace {

const std::vector<KeySpec> kPdeKeys{
    {"kind", "diffusion", "diffusion | wave | reaction_diffusion | advection_diffusion"},
    {"alpha", "0.1", "diffusion coefficient"},
    {"beta", "0", "reaction rate or advection speed"},
    {"c", "0.15", "wave speed"},
    {"dt", "1", "pseudo-time step"},
    {"steps", "4", "number of pseudo-time steps"},
    {"bc", "periodic", "periodic | zero_flux"},
    {"guard", "true", "reject steps outside the stable region"},
};

std::vector<KeySpec> with_pde(std::vector<KeySpec> keys) {
  keys.insert(keys.begin(), kPdeKeys.begin(), kPdeKeys.end());
  return keys;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string qualified(const std::string& section, const std::string& key) { return section + "." + key; }

}  // namespace

const std::vector<std::pair<std::string, std::vector<KeySpec>>>& schema() {
  static const std::vector<std::pair<std::string, std::vector<KeySpec>>> s{
      {"global",
       {{"seed", "0", "global random seed"},
        {"workers", "0", "worker threads for verify and ablate (0 = all cores)"},
        {"out", "", "output directory"}}},
      {"evolve", with_pde({{"T", "8", "number of keys (columns)"},
                           {"rows", "1", "number of queries (rows)"},
                           {"init", "onehot", "onehot | softmax | uniform | file"},
                           {"index", "0", "one-hot column of row 0; row i uses index + i"},
                           {"input", "", "CSV field for init = file"},
                           {"d", "8", "head dimension for init = softmax"},
                           {"axis", "per_row_1d", "per_row_1d | full_2d"},
                           {"causal", "false", "causal prefix rows"},
                           {"renormalize", "false", "renormalize rows after each step"},
                           {"clamp", "false", "clamp negative entries after each step"},
                           {"range_mass", "0.9", "mass fraction for the effective range"},
                           {"snapshots", "true", "write every snapshot"}})},
      {"verify",
       {{"suites", "all", "all, or a comma list of mode_decay, propagation, smoothness, multilayer, hybrid, pl, negative_control"}}},
      {"train", with_pde({{"dataset", "copy_task", "copy_task | long_range_recall | char_text"},
                          {"text", "", "text file for char_text"},
                          {"seq_len", "32", "sequence length (long_range_recall, char_text)"},
                          {"n_samples", "160", "generated samples"},
                          {"prefix", "8", "copy_task prefix length"},
                          {"n_symbols", "4", "copy_task alphabet size"},
                          {"n_classes", "4", "long_range_recall classes"},
                          {"n_filler", "12", "long_range_recall filler tokens"},
                          {"val_fraction", "0.2", "tail fraction held out"},
                          {"layers", "2", "transformer layers"},
                          {"heads", "2", "attention heads"},
                          {"d_model", "32", "model width"},
                          {"d_hidden", "64", "feed-forward width"},
                          {"variant", "pde", "standard | pde | hybrid"},
                          {"window", "64", "hybrid window half-width"},
                          {"globals", "0,1", "hybrid global token indices"},
                          {"renormalize", "true", "renormalize attention rows after each step"},
                          {"learn_coefficients", "true", "train the PDE coefficients"},
                          {"optimizer", "sgd", "sgd | adam"},
                          {"lr", "0.05", "learning rate"},
                          {"momentum", "0.9", "sgd momentum"},
                          {"batch", "16", "minibatch size"},
                          {"epochs", "20", "maximum epochs"},
                          {"patience", "3", "early-stopping patience (0 disables)"},
                          {"grad_clip", "0", "global-norm clip (0 disables)"}})},
      {"bench",
       {{"kinds", "all", "comma list of PDE kinds"},
        {"T_min", "128", "smallest T"},
        {"T_max", "4096", "largest T (doubling from T_min)"},
        {"min_seconds", "0.2", "minimum timed seconds per point"},
        {"repeats", "5", "timed repeats per point (median reported)"}}},
      {"ablate",
       {{"axis", "steps", "steps | kind"},
        {"steps", "0,1,2,4,8", "N_t values for axis = steps"},
        {"kinds", "all", "PDE kinds for axis = kind"},
        {"kind_steps", "4", "N_t used on the kind axis"},
        {"seeds", "0,1,2", "run seeds"},
        {"n_samples", "256", "long_range_recall samples"},
        {"seq_len", "128", "sequence length"},
        {"n_classes", "4", "classes"},
        {"n_filler", "12", "filler tokens"},
        {"val_fraction", "0.2", "tail fraction held out"},
        {"layers", "2", "transformer layers"},
        {"heads", "2", "attention heads"},
        {"d_model", "32", "model width"},
        {"d_hidden", "64", "feed-forward width"},
        {"alpha", "0.1", "initial diffusion coefficient"},
        {"dt", "1", "pseudo-time step"},
        {"optimizer", "adam", "sgd | adam"},
        {"lr", "0.005", "learning rate"},
        {"batch", "16", "minibatch size"},
        {"epochs", "30", "epochs"},
        {"patience", "0", "early-stopping patience (0 disables)"},
        {"unstable_steps", "0", "N_t that runs the CFL-violating coefficients (0 = none)"},
        {"unstable_alpha", "5", "alpha for the unstable cells"}}},
  };
  return s;
}

Settings::Settings() {
  for (const auto& [section, keys] : schema())
    for (const auto& k : keys) values_[qualified(section, k.key)] = k.default_value;
}

void Settings::set(const std::string& section, const std::string& key, const std::string& value) {
  const auto it = values_.find(qualified(section, key));
  if (it == values_.end()) throw InvalidConfig("unknown key '" + qualified(section, key) + "'");
  it->second = value;
}

void Settings::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw InvalidConfig("expected section.key=value, got '" + assignment + "'");
  set(trim(std::string_view(assignment).substr(0, dot)),
      trim(std::string_view(assignment).substr(dot + 1, eq - dot - 1)),
      trim(std::string_view(assignment).substr(eq + 1)));
}

void Settings::load(std::string_view text, const std::string& origin) {
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const auto cut = raw.find_first_of("#;");
    const std::string line = trim(std::string_view(raw).substr(0, cut));
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw InvalidConfig(where + "malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      const auto& s = schema();
      if (std::none_of(s.begin(), s.end(), [&](const auto& p) { return p.first == section; }))
        throw InvalidConfig(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidConfig(where + "expected key = value");
    if (section.empty()) throw InvalidConfig(where + "key outside a section");
    try {
      set(section, trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)));
    } catch (const InvalidConfig& e) {
      throw InvalidConfig(where + e.what());
    }
  }
}

void Settings::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InvalidConfig("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  load(ss.str(), path);
}

const std::string& Settings::str(const std::string& section, const std::string& key) const {
  const auto it = values_.find(qualified(section, key));
  if (it == values_.end()) throw InvalidConfig("unknown key '" + qualified(section, key) + "'");
  return it->second;
}

double Settings::real(const std::string& section, const std::string& key) const {
  const std::string& s = str(section, key);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    throw InvalidConfig(qualified(section, key) + ": expected a number, got '" + s + "'");
  return v;
}

std::uint64_t Settings::u64(const std::string& section, const std::string& key) const {
  const std::string& s = str(section, key);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw InvalidConfig(qualified(section, key) + ": expected a nonnegative integer, got '" + s + "'");
  return v;
}

std::size_t Settings::size(const std::string& section, const std::string& key) const {
  return static_cast<std::size_t>(u64(section, key));
}

bool Settings::flag(const std::string& section, const std::string& key) const {
  const std::string& s = str(section, key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw InvalidConfig(qualified(section, key) + ": expected a boolean, got '" + s + "'");
}

std::vector<std::string> Settings::list(const std::string& section, const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream in(str(section, key));
  for (std::string item; std::getline(in, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::size_t> Settings::size_list(const std::string& section, const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& item : list(section, key)) {
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size())
      throw InvalidConfig(qualified(section, key) + ": expected integers, got '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::string Settings::resolved(const std::vector<std::string>& sections) const {
  std::ostringstream os;
  bool first = true;
  for (const auto& [section, keys] : schema()) {
    if (std::find(sections.begin(), sections.end(), section) == sections.end()) continue;
    if (!first) os << '\n';
    first = false;
    os << '[' << section << "]\n";
    for (const auto& k : keys) os << k.key << " = " << values_.at(qualified(section, k.key)) << '\n';
  }
  return os.str();
}

}  // namespace pdeattn::cli
