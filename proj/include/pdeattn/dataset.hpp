// SPDX-License-Identifier: Apache-2.0
#pragma once

// Desk-scale datasets: synthetic copy and long-range recall tasks and
// character-level text.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pdeattn/model.hpp"

namespace pdeattn::model {

enum class DatasetKind { char_text, copy_task, long_range_recall };

const char* to_string(DatasetKind k);
DatasetKind parse_dataset_kind(const std::string& s);

struct Dataset {
  DatasetKind kind = DatasetKind::copy_task;
  std::vector<Sample> samples;
  std::size_t vocab_size = 0;
  std::size_t n_classes = 0;  // long_range_recall only
  std::string alphabet;       // char_text: id -> character

  Task task() const { return kind == DatasetKind::long_range_recall ? Task::classification : Task::causal_lm; }
  std::size_t max_length() const;
};

/// Sequence: prefix of `prefix_len` symbols, separator (id 0), the prefix
/// again. Inputs drop the final token; only positions predicting the copy
/// are scored. Symbols use ids 1..n_symbols.
Dataset copy_task(std::size_t n_samples, std::size_t prefix_len, std::size_t n_symbols, std::uint64_t seed);

/// Length-`seq_len` filler sequences (ids n_classes..n_classes+n_filler-1)
/// with one key token (id = label) placed at least seq_len/2 positions
/// before the end.
Dataset long_range_recall(std::size_t n_samples, std::size_t seq_len, std::size_t n_classes,
                          std::size_t n_filler, std::uint64_t seed);

/// Non-overlapping windows of seq_len + 1 characters; alphabet is the sorted
/// set of bytes in the text.
Dataset char_text(std::string_view text, std::size_t seq_len);
Dataset char_text_file(const std::string& path, std::size_t seq_len);

std::vector<int> encode(std::string_view text, std::string_view alphabet);
std::string decode(const std::vector<int>& ids, std::string_view alphabet);

/// The last `val_fraction` of the samples (at least one) become validation.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double val_fraction);

}  // namespace pdeattn::model
