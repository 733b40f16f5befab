#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "zerodiff/matrix.hpp"

namespace zdiff {

// One feature sample (an audio embedding in the reference setting).
struct EmbeddingRecord {
  std::string id;
  std::string class_label;
  std::vector<double> vector;

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

using FeatureTable = std::vector<EmbeddingRecord>;

// Auxiliary vector for one class, with the synonyms it was averaged from.
struct ClassEmbedding {
  std::string label;
  std::vector<std::string> synonyms;
  std::vector<double> vector;

  friend bool operator==(const ClassEmbedding&, const ClassEmbedding&) = default;
};

using ClassTable = std::vector<ClassEmbedding>;

// ---- feature tables ----------------------------------------------------------
//
// JSON Lines: {"id": "...", "class": "...", "vector": [...]} per line.
// Binary ("ZDEM"): magic, u16 version, u32 dim, u64 count, then per record
// u16 id length + bytes, u16 class length + bytes, dim float32. All integers
// and floats are little-endian.

// Checks uniform dimension and finiteness; errors name the offending id.
void validate_feature_table(const FeatureTable& table);

FeatureTable load_feature_table(const std::filesystem::path& path);  // sniffs the format
FeatureTable load_feature_table_jsonl(const std::filesystem::path& path);
FeatureTable load_feature_table_binary(const std::filesystem::path& path);
void write_feature_table(const std::filesystem::path& path, const FeatureTable& table);
void write_feature_table_binary(const std::filesystem::path& path, const FeatureTable& table);

// ---- class tables --------------------------------------------------------------
//
// JSON Lines: {"label": "...", "synonyms": [...], "vector": [...]}.

void validate_class_table(const ClassTable& table);
ClassTable load_class_table(const std::filesystem::path& path);
void write_class_table(const std::filesystem::path& path, const ClassTable& table);

const ClassEmbedding* find_class(const ClassTable& table, std::string_view label);

// Rows of `labels`' class vectors, in the given order. Throws DataError
// listing any label without an embedding.
Matrix class_matrix(const ClassTable& table, std::span<const std::string> labels);

// ---- class vectors from word embeddings ----------------------------------------

using WordLookup = std::function<const std::vector<double>*(std::string_view token)>;

// Splits on whitespace and underscores and strips surrounding punctuation,
// so "zipper (clothing)" -> {"zipper", "clothing"}.
std::vector<std::string> tokenize_label(std::string_view label);

// Flat mean over the tokens of the label and of every synonym. Throws
// DataError listing all unresolvable tokens.
std::vector<double> class_vector(const ClassEmbedding& cls, const WordLookup& lookup);

using WordVectors = std::unordered_map<std::string, std::vector<double>>;

// Text format, one "token v1 v2 ... vn" per line. A leading "<count> <dim>"
// header line (word2vec text format) is skipped.
WordVectors load_word_vectors(const std::filesystem::path& path);

// {"label": ["synonym", ...], ...}
std::map<std::string, std::vector<std::string>> load_synonyms(const std::filesystem::path& path);

// ---- statistics ------------------------------------------------------------------

struct DatasetStats {
  std::size_t class_count = 0;
  std::size_t total_samples = 0;
  std::map<std::string, std::size_t> samples_per_class;
  double average_samples_per_class = 0.0;
};

DatasetStats dataset_stats(const FeatureTable& table);

// Per-class synthetic sample count: the average class size, rounded.
std::size_t generation_count(const DatasetStats& stats);

// Rows of the record vectors (in table order) as a matrix.
Matrix feature_matrix(const FeatureTable& table);

}  // namespace zdiff
