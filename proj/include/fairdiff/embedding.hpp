#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fairdiff/error.hpp"
#include "fairdiff/rng.hpp"

namespace fairdiff {

inline constexpr double kUnitTolerance = 1e-6;  // float32 exports round-trip well inside this

/// A finite real vector with its Euclidean norm cached at construction.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;

  explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw InputError("embedding vector must have dimension >= 1");
    double sq = 0.0;
    for (double v : values_) {
      if (!std::isfinite(v)) throw InputError("embedding vector has a non-finite entry");
      sq += v * v;
    }
    norm_ = std::sqrt(sq);
  }

  std::span<const double> values() const { return values_; }
  std::size_t dimension() const { return values_.size(); }
  double norm() const { return norm_; }
  double operator[](std::size_t i) const { return values_[i]; }
  bool is_unit(double tol = kUnitTolerance) const { return std::abs(norm_ - 1.0) <= tol; }

  EmbeddingVector normalized() const {
    if (norm_ == 0.0) throw InputError("cannot normalize a zero-norm vector");
    std::vector<double> out(values_);
    for (double& v : out) v /= norm_;
    return EmbeddingVector(std::move(out));
  }

 private:
  std::vector<double> values_;
  double norm_ = 0.0;
};

enum class StoreKind { kPrompt, kImage };

inline std::string_view to_string(StoreKind kind) { return kind == StoreKind::kPrompt ? "prompt" : "image"; }

inline StoreKind parse_store_kind(std::string_view s) {
  if (s == "prompt") return StoreKind::kPrompt;
  if (s == "image") return StoreKind::kImage;
  throw InputError("unknown store kind '" + std::string(s) + "'");
}

/// Base prompt with an optional attribute; composes as "<attribute> <base>".
struct PromptKey {
  std::string base;
  std::optional<std::string> attribute;

  std::string render() const { return attribute ? *attribute + " " + base : base; }
  static PromptKey composed(std::string attribute, std::string base) {
    return PromptKey{std::move(base), std::move(attribute)};
  }
};

/// Named vectors of one common dimension. Insertion order is kept so that a
/// saved store lists its rows in the order they were read.
class EmbeddingStore {
 public:
  EmbeddingStore(StoreKind kind, std::size_t dimension, bool unit)
      : kind_(kind), dimension_(dimension), unit_(unit) {
    if (dimension == 0) throw InputError("store dimension must be >= 1");
  }

  void insert(std::string key, EmbeddingVector v) {
    if (v.dimension() != dimension_) {
      throw InputError("dimension mismatch for key '" + key + "': expected " + std::to_string(dimension_) +
                       ", got " + std::to_string(v.dimension()));
    }
    if (unit_ && !v.is_unit()) throw InputError("store declares unit=true but '" + key + "' is not unit norm");
    if (index_.contains(key)) throw InputError("duplicate key '" + key + "'");
    index_.emplace(key, entries_.size());
    entries_.emplace_back(std::move(key), std::move(v));
  }

  const EmbeddingVector& at(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw InputError("missing key '" + key + "' in " + std::string(to_string(kind_)) + " store");
    return entries_[it->second].second;
  }
  const EmbeddingVector& at(const PromptKey& key) const { return at(key.render()); }

  bool contains(const std::string& key) const { return index_.contains(key); }
  std::size_t size() const { return entries_.size(); }
  std::size_t dimension() const { return dimension_; }
  StoreKind kind() const { return kind_; }
  bool unit() const { return unit_; }
  const std::vector<std::pair<std::string, EmbeddingVector>>& entries() const { return entries_; }

 private:
  StoreKind kind_;
  std::size_t dimension_;
  bool unit_;
  std::vector<std::pair<std::string, EmbeddingVector>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline void require_same_dimension(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dimension() != v.dimension()) {
    throw InputError("dimension mismatch: " + std::to_string(u.dimension()) + " vs " + std::to_string(v.dimension()));
  }
}

inline double dot(const EmbeddingVector& u, const EmbeddingVector& v) {
  require_same_dimension(u, v);
  double s = 0.0;
  for (std::size_t i = 0; i < u.dimension(); ++i) s += u[i] * v[i];
  return s;
}

inline double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
  require_same_dimension(u, v);
  if (u.norm() == 0.0 || v.norm() == 0.0) throw InputError("cosine of a zero-norm vector is undefined");
  return dot(u, v) / (u.norm() * v.norm());
}

inline double embedding_distance(const EmbeddingVector& u, const EmbeddingVector& v) {
  require_same_dimension(u, v);
  double sq = 0.0;
  for (std::size_t i = 0; i < u.dimension(); ++i) {
    const double d = u[i] - v[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

// Unweighted sum and weighted combination, used by averaging scorers.
inline EmbeddingVector weighted_sum(std::span<const EmbeddingVector* const> vs, std::span<const double> weights) {
  if (vs.empty()) throw InputError("weighted_sum of an empty list");
  std::vector<double> acc(vs.front()->dimension(), 0.0);
  for (std::size_t j = 0; j < vs.size(); ++j) {
    if (vs[j]->dimension() != acc.size()) throw InputError("dimension mismatch in weighted_sum");
    const double w = weights.empty() ? 1.0 : weights[j];
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * (*vs[j])[i];
  }
  return EmbeddingVector(std::move(acc));
}

// ---------------------------------------------------------------------------
// Text store format
//
//   fairdiff-store v1 count=<V> dim=<D> kind=<prompt|image> unit=<b> normalize=<b>
//   "<key>" f1 ... fD
//
// Lines starting with '#' are comments. Keys are double-quoted; '"' and '\'
// inside a key are backslash-escaped.

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string quote_key(const std::string& key) {
  std::string out = "\"";
  for (char c : key) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

inline bool parse_bool(std::string_view s, const std::string& field) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw InputError("header field '" + field + "' must be true or false");
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace detail

struct StoreHeader {
  std::size_t count = 0;
  std::size_t dimension = 0;
  StoreKind kind = StoreKind::kPrompt;
  bool unit = false;
  bool normalize = false;
};

inline StoreHeader parse_store_header(std::string_view line) {
  auto fields = detail::split_ws(line);
  if (fields.size() < 2 || fields[0] != "fairdiff-store" || fields[1] != "v1") {
    throw InputError("not a fairdiff-store v1 header");
  }
  std::map<std::string, std::string> kv;
  for (std::size_t i = 2; i < fields.size(); ++i) {
    auto eq = fields[i].find('=');
    if (eq == std::string_view::npos) throw InputError("malformed header field '" + std::string(fields[i]) + "'");
    kv[std::string(fields[i].substr(0, eq))] = std::string(fields[i].substr(eq + 1));
  }
  for (const char* required : {"count", "dim", "kind", "unit", "normalize"}) {
    if (!kv.contains(required)) throw InputError(std::string("header is missing field '") + required + "'");
  }
  StoreHeader h;
  auto parse_size = [](const std::string& s, const char* name) {
    std::size_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw InputError(std::string("header field '") + name + "' is not a non-negative integer");
    }
    return v;
  };
  h.count = parse_size(kv["count"], "count");
  h.dimension = parse_size(kv["dim"], "dim");
  h.kind = parse_store_kind(kv["kind"]);
  h.unit = detail::parse_bool(kv["unit"], "unit");
  h.normalize = detail::parse_bool(kv["normalize"], "normalize");
  return h;
}

/// Parses a store. With normalize=true every row is L2-normalized and the
/// resulting store is unit; otherwise norms are kept and the unit invariant
/// is asserted only when the header declares unit=true.
inline EmbeddingStore parse_store(std::istream& in, std::optional<StoreKind> expected_kind = std::nullopt) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<StoreHeader> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    header = parse_store_header(line);
    break;
  }
  if (!header) throw InputError("empty store file");
  if (expected_kind && *expected_kind != header->kind) {
    throw InputError("expected a " + std::string(to_string(*expected_kind)) + " store, got " +
                     std::string(to_string(header->kind)));
  }
  EmbeddingStore store(header->kind, header->dimension, header->unit || header->normalize);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto where = [&] { return " (line " + std::to_string(line_no) + ")"; };
    std::size_t pos = line.find_first_not_of(" \t");
    if (pos == std::string::npos) continue;
    if (line[pos] != '"') throw InputError("row key must be double-quoted" + where());
    std::string key;
    ++pos;
    bool closed = false;
    for (; pos < line.size(); ++pos) {
      char c = line[pos];
      if (c == '\\' && pos + 1 < line.size()) {
        key += line[++pos];
      } else if (c == '"') {
        closed = true;
        ++pos;
        break;
      } else {
        key += c;
      }
    }
    if (!closed) throw InputError("unterminated key" + where());
    auto tokens = detail::split_ws(std::string_view(line).substr(pos));
    if (tokens.size() != header->dimension) {
      throw InputError("dimension mismatch for key '" + key + "': header dim " + std::to_string(header->dimension) +
                       ", row has " + std::to_string(tokens.size()) + where());
    }
    std::vector<double> values;
    values.reserve(tokens.size());
    for (auto tok : tokens) {
      auto v = detail::parse_double(tok);
      if (!v) throw InputError("unparseable number '" + std::string(tok) + "'" + where());
      if (!std::isfinite(*v)) throw InputError("non-finite entry for key '" + key + "'" + where());
      values.push_back(*v);
    }
    EmbeddingVector vec(std::move(values));
    if (header->normalize) {
      if (vec.norm() == 0.0) throw InputError("zero-norm vector for key '" + key + "' with normalize=true" + where());
      vec = vec.normalized();
    }
    try {
      store.insert(std::move(key), std::move(vec));
    } catch (const InputError& e) {
      throw InputError(e.what() + where());
    }
    ++rows;
  }
  if (rows != header->count) {
    throw InputError("header count=" + std::to_string(header->count) + " but file has " + std::to_string(rows) + " rows");
  }
  return store;
}

inline EmbeddingStore load_store(const std::string& path, std::optional<StoreKind> expected_kind = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open store file '" + path + "'");
  try {
    return parse_store(in, expected_kind);
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

inline void write_store(std::ostream& out, const EmbeddingStore& store, std::string_view comment = {}) {
  out << "fairdiff-store v1 count=" << store.size() << " dim=" << store.dimension() << " kind=" << to_string(store.kind())
      << " unit=" << (store.unit() ? "true" : "false") << " normalize=false\n";
  if (!comment.empty()) out << "# " << comment << "\n";
  for (const auto& [key, v] : store.entries()) {
    out << detail::quote_key(key);
    for (double x : v.values()) out << ' ' << detail::format_double(x);
    out << '\n';
  }
}

inline void save_store(const EmbeddingStore& store, const std::string& path, std::string_view comment = {}) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write store file '" + path + "'");
  write_store(out, store, comment);
}

/// word2vec text format ("<count> <dim>" then "<token> f1 ... fD"). Word
/// stores are prompt stores with single-token keys.
inline EmbeddingStore parse_word2vec_text(std::istream& in, bool normalize) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty word2vec file");
  auto head = detail::split_ws(line);
  if (head.size() != 2) throw InputError("word2vec header must be '<count> <dim>'");
  std::size_t count = 0;
  std::size_t dim = 0;
  std::from_chars(head[0].data(), head[0].data() + head[0].size(), count);
  std::from_chars(head[1].data(), head[1].data() + head[1].size(), dim);
  EmbeddingStore store(StoreKind::kPrompt, dim, normalize);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = detail::split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.size() != dim + 1) {
      throw InputError("dimension mismatch at line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                       " values");
    }
    std::vector<double> values;
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      auto v = detail::parse_double(tokens[i]);
      if (!v || !std::isfinite(*v)) throw InputError("bad value at line " + std::to_string(line_no));
      values.push_back(*v);
    }
    EmbeddingVector vec(std::move(values));
    if (normalize) vec = vec.normalized();
    store.insert(std::string(tokens[0]), std::move(vec));
  }
  if (store.size() != count) throw InputError("word2vec header count does not match rows");
  return store;
}

/// Loads either format, sniffing the first non-comment line.
inline EmbeddingStore load_any_store(const std::string& path, bool normalize_word2vec = false) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open store file '" + path + "'");
  std::string first;
  std::streampos start = in.tellg();
  while (std::getline(in, first) && (first.empty() || first[0] == '#')) {
  }
  in.clear();
  in.seekg(start);
  if (first.rfind("fairdiff-store", 0) == 0) return parse_store(in);
  return parse_word2vec_text(in, normalize_word2vec);
}

// ---------------------------------------------------------------------------
// Johnson-Lindenstrauss projection

/// Dense k x n Gaussian matrix with N(0, 1/k) entries, row-major, drawn from
/// a Philox stream so that a seed fixes it bitwise.
inline std::vector<double> jl_matrix(std::size_t source_dim, std::size_t target_dim, std::uint64_t seed) {
  NormalStream rng(seed, 0x4a4cULL);
  const double scale = 1.0 / std::sqrt(static_cast<double>(target_dim));
  std::vector<double> m(source_dim * target_dim);
  for (double& x : m) x = rng.normal() * scale;
  return m;
}

inline EmbeddingVector jl_apply(std::span<const double> matrix, std::size_t target_dim, const EmbeddingVector& v) {
  const std::size_t n = v.dimension();
  std::vector<double> out(target_dim, 0.0);
  for (std::size_t r = 0; r < target_dim; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += matrix[r * n + c] * v[c];
    out[r] = s;
  }
  return EmbeddingVector(std::move(out));
}

inline EmbeddingStore jl_project(const EmbeddingStore& store, int target_dim, std::uint64_t seed, bool renormalize = false) {
  if (target_dim <= 0 || static_cast<std::size_t>(target_dim) >= store.dimension()) {
    throw InputError("jl_project: target_dim must be in [1, " + std::to_string(store.dimension() - 1) + "]");
  }
  const auto k = static_cast<std::size_t>(target_dim);
  const auto matrix = jl_matrix(store.dimension(), k, seed);
  std::vector<EmbeddingVector> projected;
  projected.reserve(store.size());
  bool all_unit = renormalize;
  for (const auto& entry : store.entries()) {
    EmbeddingVector p = jl_apply(matrix, k, entry.second);
    if (renormalize && p.norm() > 0.0) p = p.normalized();
    all_unit = all_unit && p.is_unit();
    projected.push_back(std::move(p));
  }
  EmbeddingStore out(store.kind(), k, all_unit);
  for (std::size_t i = 0; i < projected.size(); ++i) out.insert(store.entries()[i].first, std::move(projected[i]));
  return out;
}

}  // namespace fairdiff
