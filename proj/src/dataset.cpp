// SPDX-License-Identifier: Apache-2.0
#include "pdeattn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "pdeattn/errors.hpp"

namespace pdeattn::model {

const char* to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::char_text: return "char_text";
    case DatasetKind::copy_task: return "copy_task";
    case DatasetKind::long_range_recall: return "long_range_recall";
  }
  return "?";
}

DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "char_text") return DatasetKind::char_text;
  if (s == "copy_task") return DatasetKind::copy_task;
  if (s == "long_range_recall") return DatasetKind::long_range_recall;
  throw InvalidConfig("unknown dataset '" + s + "'");
}

std::size_t Dataset::max_length() const {
  std::size_t n = 0;
  for (const auto& s : samples) n = std::max(n, s.tokens.size());
  return n;
}

Dataset copy_task(std::size_t n_samples, std::size_t prefix_len, std::size_t n_symbols, std::uint64_t seed) {
  if (prefix_len < 1 || n_symbols < 2) throw InvalidConfig("copy_task needs prefix_len >= 1 and n_symbols >= 2");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> sym(1, static_cast<int>(n_symbols));
  Dataset ds;
  ds.kind = DatasetKind::copy_task;
  ds.vocab_size = n_symbols + 1;
  for (std::size_t n = 0; n < n_samples; ++n) {
    std::vector<int> seq(2 * prefix_len + 1, 0);
    for (std::size_t i = 0; i < prefix_len; ++i) seq[i] = seq[prefix_len + 1 + i] = sym(rng);
    Sample s;
    s.tokens.assign(seq.begin(), seq.end() - 1);
    s.targets.assign(s.tokens.size(), -1);
    for (std::size_t i = prefix_len; i < s.tokens.size(); ++i) s.targets[i] = seq[i + 1];
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset long_range_recall(std::size_t n_samples, std::size_t seq_len, std::size_t n_classes, std::size_t n_filler,
                          std::uint64_t seed) {
  if (seq_len < 2 || n_classes < 2 || n_filler < 1)
    throw InvalidConfig("long_range_recall needs seq_len >= 2, n_classes >= 2, n_filler >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> filler(static_cast<int>(n_classes), static_cast<int>(n_classes + n_filler) - 1);
  std::uniform_int_distribution<int> key(0, static_cast<int>(n_classes) - 1);
  // Distance from the key to the last position is seq_len - 1 - pos >= seq_len / 2.
  std::uniform_int_distribution<std::size_t> pos(0, seq_len - 1 - seq_len / 2);
  Dataset ds;
  ds.kind = DatasetKind::long_range_recall;
  ds.vocab_size = n_classes + n_filler;
  ds.n_classes = n_classes;
  for (std::size_t n = 0; n < n_samples; ++n) {
    Sample s;
    s.tokens.resize(seq_len);
    for (int& t : s.tokens) t = filler(rng);
    s.label = key(rng);
    s.tokens[pos(rng)] = s.label;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::vector<int> encode(std::string_view text, std::string_view alphabet) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char ch : text) {
    const auto at = alphabet.find(ch);
    if (at == std::string_view::npos) throw InvalidInput("character outside the alphabet");
    ids.push_back(static_cast<int>(at));
  }
  return ids;
}

std::string decode(const std::vector<int>& ids, std::string_view alphabet) {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= alphabet.size()) throw InvalidInput("id outside the alphabet");
    out.push_back(alphabet[static_cast<std::size_t>(id)]);
  }
  return out;
}

Dataset char_text(std::string_view text, std::size_t seq_len) {
  if (seq_len < 2) throw InvalidConfig("char_text needs seq_len >= 2");
  if (text.size() < seq_len + 1) throw InvalidInput("text shorter than one window");
  Dataset ds;
  ds.kind = DatasetKind::char_text;
  std::string alphabet(text);
  std::sort(alphabet.begin(), alphabet.end());
  alphabet.erase(std::unique(alphabet.begin(), alphabet.end()), alphabet.end());
  ds.alphabet = alphabet;
  ds.vocab_size = std::max<std::size_t>(alphabet.size(), 2);
  const auto ids = encode(text, alphabet);
  for (std::size_t start = 0; start + seq_len + 1 <= ids.size(); start += seq_len) {
    Sample s;
    s.tokens.assign(ids.begin() + static_cast<std::ptrdiff_t>(start), ids.begin() + static_cast<std::ptrdiff_t>(start + seq_len));
    s.targets.assign(ids.begin() + static_cast<std::ptrdiff_t>(start + 1),
                     ids.begin() + static_cast<std::ptrdiff_t>(start + seq_len + 1));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset char_text_file(const std::string& path, std::size_t seq_len) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read text file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return char_text(buf.str(), seq_len);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double val_fraction) {
  if (!(val_fraction > 0 && val_fraction < 1)) throw InvalidConfig("val_fraction must lie in (0, 1)");
  if (ds.samples.size() < 2) throw InvalidInput("need at least two samples to split");
  auto n_val = static_cast<std::size_t>(std::round(val_fraction * static_cast<double>(ds.samples.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, ds.samples.size() - 1);
  Dataset train = ds, val = ds;
  const auto cut = ds.samples.begin() + static_cast<std::ptrdiff_t>(ds.samples.size() - n_val);
  train.samples.assign(ds.samples.begin(), cut);
  val.samples.assign(cut, ds.samples.end());
  return {std::move(train), std::move(val)};
}

}  // namespace pdeattn::model
