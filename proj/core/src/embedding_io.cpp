#include "zerodiff/embedding_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "zerodiff/errors.hpp"

namespace zdiff {

namespace {

using nlohmann::json;

constexpr std::uint16_t kFeatureBinaryVersion = 1;

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path,
                       std::ios::openmode mode = std::ios::out | std::ios::trunc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::vector<double> parse_vector(const json& j, const std::string& owner) {
  if (!j.is_array()) throw FormatError(owner + ": \"vector\" must be an array");
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw FormatError(owner + ": non-numeric vector entry");
    v.push_back(x.get<double>());
  }
  return v;
}

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }))
      continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.is_object()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected an object");
    }
    fn(j, lineno);
  }
}

std::string require_string(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw FormatError(where + ": missing string field \"" + key + "\"");
  }
  return it->get<std::string>();
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

void validate_feature_table(const FeatureTable& table) {
  if (table.empty()) return;
  const std::size_t dim = table.front().vector.size();
  for (const auto& r : table) {
    if (r.vector.size() != dim) {
      throw FormatError("record '" + r.id + "' has dimension " + std::to_string(r.vector.size()) +
                        ", table dimension is " + std::to_string(dim));
    }
    if (!all_finite(r.vector)) throw FormatError("record '" + r.id + "' has a non-finite value");
  }
}

FeatureTable load_feature_table_jsonl(const std::filesystem::path& path) {
  FeatureTable table;
  for_each_json_line(path, [&](const json& j, std::size_t lineno) {
    const std::string where = path.string() + ":" + std::to_string(lineno);
    EmbeddingRecord r;
    r.id = require_string(j, "id", where);
    r.class_label = require_string(j, "class", where);
    auto it = j.find("vector");
    if (it == j.end()) throw FormatError(where + ": missing \"vector\"");
    r.vector = parse_vector(*it, "record '" + r.id + "'");
    table.push_back(std::move(r));
  });
  validate_feature_table(table);
  return table;
}

FeatureTable load_feature_table_binary(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  detail::expect_magic(in, "ZDEM");
  const auto version = detail::read_le<std::uint16_t>(in, "version");
  if (version != kFeatureBinaryVersion) {
    throw FormatError("unsupported ZDEM version " + std::to_string(version));
  }
  const auto dim = detail::read_le<std::uint32_t>(in, "dim");
  const auto count = detail::read_le<std::uint64_t>(in, "count");
  FeatureTable table;
  table.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t i = 0; i < count; ++i) {
    EmbeddingRecord r;
    r.id = detail::read_short_string(in, "record id");
    r.class_label = detail::read_short_string(in, "record class");
    r.vector.resize(dim);
    for (auto& v : r.vector) v = detail::read_le<float>(in, "record vector");
    if (!all_finite(r.vector)) throw FormatError("record '" + r.id + "' has a non-finite value");
    table.push_back(std::move(r));
  }
  return table;
}

FeatureTable load_feature_table(const std::filesystem::path& path) {
  char head[4] = {};
  {
    auto in = open_in(path, std::ios::in | std::ios::binary);
    in.read(head, 4);
  }
  if (std::string_view(head, 4) == "ZDEM") return load_feature_table_binary(path);
  return load_feature_table_jsonl(path);
}

void write_feature_table(const std::filesystem::path& path, const FeatureTable& table) {
  validate_feature_table(table);
  auto out = open_out(path);
  for (const auto& r : table) {
    json j = {{"id", r.id}, {"class", r.class_label}, {"vector", r.vector}};
    out << j.dump() << '\n';
  }
}

void write_feature_table_binary(const std::filesystem::path& path, const FeatureTable& table) {
  validate_feature_table(table);
  auto out = open_out(path, std::ios::out | std::ios::binary | std::ios::trunc);
  const std::uint32_t dim = table.empty() ? 0 : static_cast<std::uint32_t>(table.front().vector.size());
  detail::write_magic(out, "ZDEM");
  detail::write_le<std::uint16_t>(out, kFeatureBinaryVersion);
  detail::write_le<std::uint32_t>(out, dim);
  detail::write_le<std::uint64_t>(out, table.size());
  for (const auto& r : table) {
    detail::write_short_string(out, r.id);
    detail::write_short_string(out, r.class_label);
    for (double v : r.vector) detail::write_le<float>(out, static_cast<float>(v));
  }
}

void validate_class_table(const ClassTable& table) {
  if (table.empty()) return;
  const std::size_t dim = table.front().vector.size();
  std::vector<std::string> seen;
  for (const auto& c : table) {
    if (c.vector.size() != dim) {
      throw FormatError("class '" + c.label + "' has dimension " + std::to_string(c.vector.size()) +
                        ", expected " + std::to_string(dim));
    }
    if (!all_finite(c.vector)) throw FormatError("class '" + c.label + "' has a non-finite value");
    if (std::find(seen.begin(), seen.end(), c.label) != seen.end()) {
      throw FormatError("duplicate class label '" + c.label + "'");
    }
    seen.push_back(c.label);
  }
}

ClassTable load_class_table(const std::filesystem::path& path) {
  ClassTable table;
  for_each_json_line(path, [&](const json& j, std::size_t lineno) {
    const std::string where = path.string() + ":" + std::to_string(lineno);
    ClassEmbedding c;
    c.label = require_string(j, "label", where);
    if (auto it = j.find("synonyms"); it != j.end()) {
      if (!it->is_array()) throw FormatError(where + ": \"synonyms\" must be an array");
      for (const auto& s : *it) {
        if (!s.is_string()) throw FormatError(where + ": synonyms must be strings");
        c.synonyms.push_back(s.get<std::string>());
      }
    }
    auto it = j.find("vector");
    if (it == j.end()) throw FormatError(where + ": missing \"vector\"");
    c.vector = parse_vector(*it, "class '" + c.label + "'");
    table.push_back(std::move(c));
  });
  validate_class_table(table);
  return table;
}

void write_class_table(const std::filesystem::path& path, const ClassTable& table) {
  validate_class_table(table);
  auto out = open_out(path);
  for (const auto& c : table) {
    json j = {{"label", c.label}, {"synonyms", c.synonyms}, {"vector", c.vector}};
    out << j.dump() << '\n';
  }
}

const ClassEmbedding* find_class(const ClassTable& table, std::string_view label) {
  for (const auto& c : table)
    if (c.label == label) return &c;
  return nullptr;
}

Matrix class_matrix(const ClassTable& table, std::span<const std::string> labels) {
  std::vector<std::string> missing;
  std::vector<const ClassEmbedding*> rows;
  for (const auto& l : labels) {
    const auto* c = find_class(table, l);
    if (c == nullptr) missing.push_back(l);
    rows.push_back(c);
  }
  if (!missing.empty()) {
    std::string msg = "no class embedding for:";
    for (const auto& m : missing) msg += " '" + m + "'";
    throw DataError(msg);
  }
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front()->vector.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i]->vector.size() != m.cols()) {
      throw DimensionError("class '" + rows[i]->label + "' has inconsistent dimension");
    }
    std::copy(rows[i]->vector.begin(), rows[i]->vector.end(), m.row(i).begin());
  }
  return m;
}

std::vector<std::string> tokenize_label(std::string_view label) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    auto is_punct = [](unsigned char c) { return std::ispunct(c) != 0; };
    auto b = std::find_if_not(current.begin(), current.end(), is_punct);
    auto e = std::find_if_not(current.rbegin(), current.rend(), is_punct).base();
    if (b < e) tokens.emplace_back(b, e);
    current.clear();
  };
  for (unsigned char ch : label) {
    if (std::isspace(ch) || ch == '_') {
      flush();
    } else {
      current.push_back(static_cast<char>(ch));
    }
  }
  flush();
  return tokens;
}

std::vector<double> class_vector(const ClassEmbedding& cls, const WordLookup& lookup) {
  std::vector<std::string> tokens = tokenize_label(cls.label);
  for (const auto& s : cls.synonyms) {
    auto t = tokenize_label(s);
    tokens.insert(tokens.end(), t.begin(), t.end());
  }
  if (tokens.empty()) throw DataError("class '" + cls.label + "' has no tokens");

  std::vector<double> sum;
  std::vector<std::string> missing;
  for (const auto& t : tokens) {
    const auto* v = lookup(t);
    if (v == nullptr) {
      missing.push_back(t);
      continue;
    }
    if (sum.empty()) sum.assign(v->size(), 0.0);
    if (v->size() != sum.size()) throw DimensionError("word vector '" + t + "' has inconsistent dimension");
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += (*v)[i];
  }
  if (!missing.empty()) {
    std::string msg = "class '" + cls.label + "': no word vector for:";
    for (const auto& m : missing) msg += " '" + m + "'";
    throw DataError(msg);
  }
  for (double& x : sum) x /= static_cast<double>(tokens.size());
  return sum;
}

WordVectors load_word_vectors(const std::filesystem::path& path) {
  auto in = open_in(path);
  WordVectors words;
  std::string line;
  std::size_t lineno = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    std::vector<double> v;
    double x = 0.0;
    while (ls >> x) v.push_back(x);
    if (lineno == 1 && v.size() == 1) continue;  // "<count> <dim>" header
    if (v.empty()) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": empty vector");
    if (dim == 0) dim = v.size();
    if (v.size() != dim) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": word '" + token +
                        "' has dimension " + std::to_string(v.size()));
    }
    words.emplace(std::move(token), std::move(v));
  }
  return words;
}

std::map<std::string, std::vector<std::string>> load_synonyms(const std::filesystem::path& path) {
  auto in = open_in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  std::map<std::string, std::vector<std::string>> out;
  if (!j.is_object()) throw FormatError(path.string() + ": expected an object");
  for (const auto& [label, list] : j.items()) {
    if (!list.is_array()) throw FormatError(path.string() + ": synonyms of '" + label + "' must be an array");
    auto& dst = out[label];
    for (const auto& s : list) dst.push_back(s.get<std::string>());
  }
  return out;
}

DatasetStats dataset_stats(const FeatureTable& table) {
  if (table.empty()) throw DataError("dataset_stats: empty table");
  DatasetStats s;
  for (const auto& r : table) ++s.samples_per_class[r.class_label];
  s.total_samples = table.size();
  s.class_count = s.samples_per_class.size();
  s.average_samples_per_class =
      static_cast<double>(s.total_samples) / static_cast<double>(s.class_count);
  return s;
}

std::size_t generation_count(const DatasetStats& stats) {
  return static_cast<std::size_t>(std::llround(stats.average_samples_per_class));
}

Matrix feature_matrix(const FeatureTable& table) {
  if (table.empty()) return {};
  Matrix m(table.size(), table.front().vector.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].vector.size() != m.cols()) {
      throw DimensionError("record '" + table[i].id + "' has inconsistent dimension");
    }
    std::copy(table[i].vector.begin(), table[i].vector.end(), m.row(i).begin());
  }
  return m;
}

}  // namespace zdiff
