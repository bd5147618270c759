#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "peec/errors.hpp"
#include "peec/matrix.hpp"
#include "peec/random.hpp"

namespace peec {

enum class Valence : std::uint8_t { Neg = 0, Pos = 1 };
enum class Gender : std::uint8_t { F = 0, M = 1 };

inline const char* to_string(Valence v) {
  return v == Valence::Neg ? "NEG" : "POS";
}
inline const char* to_string(Gender g) { return g == Gender::F ? "F" : "M"; }

/// One utterance: a feature vector plus the labels it is annotated with.
struct UtteranceRecord {
  std::string id;
  std::vector<double> features;
  Valence valence = Valence::Neg;
  std::string speaker;
  Gender gender = Gender::F;
  std::string language;

  friend bool operator==(const UtteranceRecord&,
                         const UtteranceRecord&) = default;
};

/// Immutable dataset container. Validates feature-length consistency,
/// finiteness, and id uniqueness at construction; exposes sorted vocabularies
/// so downstream orderings never depend on hash-table iteration.
class Corpus {
public:
  explicit Corpus(std::vector<UtteranceRecord> records)
      : records_(std::move(records)) {
    if (records_.empty()) throw ValueError("Corpus: no records");
    dim_ = records_.front().features.size();
    if (dim_ == 0) throw ValueError("Corpus: zero feature dimension");
    std::set<std::string_view> ids;
    std::set<std::string> speakers, languages;
    for (const auto& r : records_) {
      if (r.features.size() != dim_) {
        throw ShapeError("Corpus: record '" + r.id + "' has " +
                         std::to_string(r.features.size()) +
                         " features, expected " + std::to_string(dim_));
      }
      for (double v : r.features) {
        if (!std::isfinite(v)) {
          throw NumericError("Corpus: non-finite feature in record '" + r.id +
                             "'");
        }
      }
      if (!ids.insert(r.id).second) {
        throw ValueError("Corpus: duplicate id '" + r.id + "'");
      }
      speakers.insert(r.speaker);
      languages.insert(r.language);
    }
    speakers_.assign(speakers.begin(), speakers.end());
    languages_.assign(languages.begin(), languages.end());
  }

  size_t dim() const { return dim_; }
  size_t size() const { return records_.size(); }
  const UtteranceRecord& operator[](size_t i) const { return records_[i]; }
  const std::vector<UtteranceRecord>& records() const { return records_; }
  const std::vector<std::string>& speakers() const { return speakers_; }
  const std::vector<std::string>& languages() const { return languages_; }

  std::vector<size_t> all_rows() const {
    std::vector<size_t> idx(records_.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
  }

  /// Stack the feature vectors of `rows` into a rows.size() x dim matrix.
  Matrix feature_matrix(std::span<const size_t> rows) const {
    Matrix m(rows.size(), dim_);
    for (size_t k = 0; k < rows.size(); ++k) {
      if (rows[k] >= records_.size()) {
        throw ValueError("feature_matrix: row index out of range");
      }
      std::copy_n(records_[rows[k]].features.data(), dim_, m.row(k).data());
    }
    return m;
  }

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.records_ == b.records_;
  }

private:
  std::vector<UtteranceRecord> records_;
  size_t dim_ = 0;
  std::vector<std::string> speakers_;
  std::vector<std::string> languages_;
};

// ---------------------------------------------------------------------------
// Valence mapping (built-in, per corpus)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

inline const std::map<std::string, std::map<std::string, Valence>>&
valence_table() {
  static const std::map<std::string, std::map<std::string, Valence>> table = {
      {"iemocap",
       {{"angry", Valence::Neg},
        {"sadness", Valence::Neg},
        {"neutral", Valence::Pos},
        {"happy", Valence::Pos},
        {"excited", Valence::Pos}}},
      {"emodb",
       {{"anger", Valence::Neg},
        {"sadness", Valence::Neg},
        {"fear", Valence::Neg},
        {"disgust", Valence::Neg},
        {"boredom", Valence::Neg},
        {"neutral", Valence::Pos},
        {"happiness", Valence::Pos}}},
      {"buemodb",
       {{"anger", Valence::Neg},
        {"sadness", Valence::Neg},
        {"neutral", Valence::Pos},
        {"joy", Valence::Pos}}},
      {"emovo",
       {{"anger", Valence::Neg},
        {"sadness", Valence::Neg},
        {"fear", Valence::Neg},
        {"disgust", Valence::Neg},
        {"neutral", Valence::Pos},
        {"joy", Valence::Pos},
        {"surprise", Valence::Pos}}},
  };
  return table;
}

} // namespace detail

/// Map a categorical emotion label onto binary valence for one of the four
/// supported corpora. Lookup is case-insensitive.
inline Valence map_valence(std::string_view corpus_name,
                           std::string_view emotion_label) {
  const auto& table = detail::valence_table();
  auto corpus_it = table.find(detail::lower(corpus_name));
  if (corpus_it == table.end()) {
    throw ValueError("map_valence: unknown corpus '" + std::string(corpus_name) +
                     "'");
  }
  auto emo_it = corpus_it->second.find(detail::lower(emotion_label));
  if (emo_it == corpus_it->second.end()) {
    throw ValueError("map_valence: unknown emotion '" +
                     std::string(emotion_label) + "' for corpus '" +
                     std::string(corpus_name) + "'");
  }
  return emo_it->second;
}

// ---------------------------------------------------------------------------
// File parsing
// ---------------------------------------------------------------------------

/// Names of the label columns in a feature file. Columns not listed here
/// (and not the id column) are feature dimensions. When `corpus_name` is
/// set, the valence column is read as a categorical emotion label and mapped
/// through the built-in table; otherwise it must hold NEG/POS directly.
struct LabelSchema {
  std::string id = "name";
  std::string valence = "valence";
  std::string speaker = "speaker";
  std::string gender = "gender";
  std::string language = "language";
  std::string corpus_name; // empty: valence column holds NEG/POS
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

inline std::string_view strip_quotes(std::string_view s) {
  if (s.size() >= 2 && ((s.front() == '\'' && s.back() == '\'') ||
                        (s.front() == '"' && s.back() == '"'))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  for (size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

inline double parse_number(std::string_view token, size_t line_no,
                           std::string_view column) {
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError("line " + std::to_string(line_no) +
                     ": non-numeric value '" + std::string(token) +
                     "' in numeric column '" + std::string(column) + "'");
  }
  if (!std::isfinite(value)) {
    throw ParseError("line " + std::to_string(line_no) +
                     ": non-finite value in column '" + std::string(column) +
                     "'");
  }
  return value;
}

inline Gender parse_gender(std::string_view token, size_t line_no) {
  const std::string g = lower(strip_quotes(token));
  if (g == "f" || g == "female") return Gender::F;
  if (g == "m" || g == "male") return Gender::M;
  throw ParseError("line " + std::to_string(line_no) + ": unknown gender '" +
                   std::string(token) + "' (expected F or M)");
}

inline Valence parse_valence(std::string_view token, size_t line_no,
                             const LabelSchema& schema) {
  const std::string raw(strip_quotes(token));
  if (!schema.corpus_name.empty()) {
    try {
      return map_valence(schema.corpus_name, raw);
    } catch (const ValueError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  const std::string v = lower(raw);
  if (v == "neg") return Valence::Neg;
  if (v == "pos") return Valence::Pos;
  throw ParseError("line " + std::to_string(line_no) + ": unknown valence '" +
                   raw + "' (expected NEG or POS)");
}

struct ColumnPlan {
  // position within the row -> role
  std::vector<std::string> names;
  std::vector<int> feature_slot; // -1 if not a feature column
  int id_col = -1;
  int valence_col = -1;
  int speaker_col = -1;
  int gender_col = -1;
  int language_col = -1;
  size_t n_features = 0;
  // nominal domains by column position (ARFF only); empty set = unrestricted
  std::vector<std::set<std::string>> nominal;

  void finalize(const LabelSchema& schema) {
    if (valence_col < 0)
      throw ParseError("missing label column '" + schema.valence + "'");
    if (speaker_col < 0)
      throw ParseError("missing label column '" + schema.speaker + "'");
    if (gender_col < 0)
      throw ParseError("missing label column '" + schema.gender + "'");
    if (language_col < 0)
      throw ParseError("missing label column '" + schema.language + "'");
    if (n_features == 0) throw ParseError("no feature columns found");
  }
};

inline Corpus rows_to_corpus(const ColumnPlan& plan,
                             const std::vector<std::vector<std::string_view>>& rows,
                             const std::vector<size_t>& line_numbers,
                             const LabelSchema& schema) {
  std::vector<UtteranceRecord> records;
  records.reserve(rows.size());
  for (size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const size_t line_no = line_numbers[r];
    if (row.size() != plan.names.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": row has " +
                       std::to_string(row.size()) + " values, expected " +
                       std::to_string(plan.names.size()));
    }
    UtteranceRecord rec;
    rec.features.resize(plan.n_features);
    for (size_t c = 0; c < row.size(); ++c) {
      const std::string_view token = row[c];
      if (!plan.nominal.empty() && !plan.nominal[c].empty()) {
        const std::string v(strip_quotes(token));
        if (!plan.nominal[c].contains(v)) {
          throw ParseError("line " + std::to_string(line_no) +
                           ": unknown nominal value '" + v + "' in column '" +
                           plan.names[c] + "'");
        }
      }
      if (plan.feature_slot[c] >= 0) {
        rec.features[static_cast<size_t>(plan.feature_slot[c])] =
            parse_number(token, line_no, plan.names[c]);
      } else if (static_cast<int>(c) == plan.id_col) {
        rec.id = std::string(strip_quotes(token));
      } else if (static_cast<int>(c) == plan.valence_col) {
        rec.valence = parse_valence(token, line_no, schema);
      } else if (static_cast<int>(c) == plan.speaker_col) {
        rec.speaker = std::string(strip_quotes(token));
      } else if (static_cast<int>(c) == plan.gender_col) {
        rec.gender = parse_gender(token, line_no);
      } else if (static_cast<int>(c) == plan.language_col) {
        rec.language = std::string(strip_quotes(token));
      }
    }
    if (plan.id_col < 0) rec.id = "row" + std::to_string(r);
    records.push_back(std::move(rec));
  }
  return Corpus(std::move(records));
}

} // namespace detail

/// Parse the ARFF subset openSMILE emits: @relation, @attribute with
/// numeric/real/integer, string or {nominal} types, then @data with
/// comma-separated rows. '%' comment lines are ignored. Sparse ARFF is not
/// supported.
inline Corpus parse_arff(std::string_view text,
                         const LabelSchema& schema = {}) {
  detail::ColumnPlan plan;
  std::vector<std::vector<std::string_view>> rows;
  std::vector<size_t> line_numbers;
  bool saw_relation = false;
  bool in_data = false;

  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = detail::trim(text.substr(pos, eol - pos));
    pos = eol + 1;
    ++line_no;
    if (line.empty() || line.front() == '%') continue;

    if (!in_data && line.front() == '@') {
      const size_t sp = line.find_first_of(" \t");
      const std::string keyword =
          detail::lower(line.substr(0, std::min(sp, line.size())));
      std::string_view rest =
          sp == std::string_view::npos ? std::string_view{}
                                       : detail::trim(line.substr(sp));
      if (keyword == "@relation") {
        saw_relation = true;
      } else if (keyword == "@attribute") {
        const size_t name_end = rest.find_first_of(" \t");
        if (name_end == std::string_view::npos) {
          throw ParseError("line " + std::to_string(line_no) +
                           ": @attribute without a type");
        }
        const std::string name(
            detail::strip_quotes(detail::trim(rest.substr(0, name_end))));
        const std::string_view type_sv = detail::trim(rest.substr(name_end));
        const std::string type = detail::lower(type_sv);
        plan.names.push_back(name);
        plan.nominal.emplace_back();
        bool numeric = false;
        if (type == "numeric" || type == "real" || type == "integer") {
          numeric = true;
        } else if (type == "string") {
          // unrestricted token
        } else if (!type_sv.empty() && type_sv.front() == '{' &&
                   type_sv.back() == '}') {
          for (auto v :
               detail::split_commas(type_sv.substr(1, type_sv.size() - 2))) {
            plan.nominal.back().insert(std::string(detail::strip_quotes(v)));
          }
        } else {
          throw ParseError("line " + std::to_string(line_no) +
                           ": unsupported attribute type '" +
                           std::string(type_sv) + "'");
        }
        const int col = static_cast<int>(plan.names.size()) - 1;
        if (name == schema.id) {
          plan.id_col = col;
          plan.feature_slot.push_back(-1);
        } else if (name == schema.valence) {
          plan.valence_col = col;
          plan.feature_slot.push_back(-1);
        } else if (name == schema.speaker) {
          plan.speaker_col = col;
          plan.feature_slot.push_back(-1);
        } else if (name == schema.gender) {
          plan.gender_col = col;
          plan.feature_slot.push_back(-1);
        } else if (name == schema.language) {
          plan.language_col = col;
          plan.feature_slot.push_back(-1);
        } else if (numeric) {
          plan.feature_slot.push_back(static_cast<int>(plan.n_features++));
        } else {
          // non-numeric, non-label attribute: carried but ignored
          plan.feature_slot.push_back(-1);
        }
      } else if (keyword == "@data") {
        if (!saw_relation) {
          throw ParseError("line " + std::to_string(line_no) +
                           ": @data before @relation");
        }
        plan.finalize(schema);
        in_data = true;
      } else {
        throw ParseError("line " + std::to_string(line_no) +
                         ": unknown directive '" + keyword + "'");
      }
      continue;
    }

    if (!in_data) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": data row before @data section");
    }
    rows.push_back(detail::split_commas(line));
    line_numbers.push_back(line_no);
  }
  if (!in_data) throw ParseError("malformed header: no @data section");
  return detail::rows_to_corpus(plan, rows, line_numbers, schema);
}

/// Parse a CSV feature file. The first row is a header; `schema` names the
/// label columns and every other column is a feature.
inline Corpus parse_csv(std::string_view text, const LabelSchema& schema = {}) {
  detail::ColumnPlan plan;
  std::vector<std::vector<std::string_view>> rows;
  std::vector<size_t> line_numbers;
  bool saw_header = false;

  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = detail::trim(text.substr(pos, eol - pos));
    pos = eol + 1;
    ++line_no;
    if (line.empty()) continue;
    if (!saw_header) {
      for (auto name_sv : detail::split_commas(line)) {
        const std::string name(detail::strip_quotes(name_sv));
        plan.names.push_back(name);
        const int col = static_cast<int>(plan.names.size()) - 1;
        if (name == schema.id) {
          plan.id_col = col;
          plan.feature_slot.push_back(-1);
        } else if (name == schema.valence) {
          plan.valence_col = col;
          plan.feature_slot.push_back(-1);
        } else if (name == schema.speaker) {
          plan.speaker_col = col;
          plan.feature_slot.push_back(-1);
        } else if (name == schema.gender) {
          plan.gender_col = col;
          plan.feature_slot.push_back(-1);
        } else if (name == schema.language) {
          plan.language_col = col;
          plan.feature_slot.push_back(-1);
        } else {
          plan.feature_slot.push_back(static_cast<int>(plan.n_features++));
        }
      }
      plan.finalize(schema);
      saw_header = true;
      continue;
    }
    rows.push_back(detail::split_commas(line));
    line_numbers.push_back(line_no);
  }
  if (!saw_header) throw ParseError("empty CSV: missing header row");
  return detail::rows_to_corpus(plan, rows, line_numbers, schema);
}

// ---------------------------------------------------------------------------
// Writers (canonical column order: features, then name + labels)
// ---------------------------------------------------------------------------

namespace detail {

// Shortest round-trip decimal form so written corpora re-parse exactly.
inline std::string format_double(double v) {
  std::array<char, 32> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

} // namespace detail

inline std::string write_csv(const Corpus& corpus) {
  std::string out;
  for (size_t j = 0; j < corpus.dim(); ++j) {
    out += "f" + std::to_string(j) + ",";
  }
  out += "name,valence,speaker,gender,language\n";
  for (const auto& rec : corpus.records()) {
    for (double v : rec.features) {
      out += detail::format_double(v);
      out += ',';
    }
    out += rec.id;
    out += ',';
    out += to_string(rec.valence);
    out += ',';
    out += rec.speaker;
    out += ',';
    out += to_string(rec.gender);
    out += ',';
    out += rec.language;
    out += '\n';
  }
  return out;
}

inline std::string write_arff(const Corpus& corpus,
                              std::string_view relation = "peec") {
  std::string out = "@relation " + std::string(relation) + "\n\n";
  for (size_t j = 0; j < corpus.dim(); ++j) {
    out += "@attribute f" + std::to_string(j) + " numeric\n";
  }
  out += "@attribute name string\n";
  out += "@attribute valence {NEG,POS}\n";
  out += "@attribute speaker string\n";
  out += "@attribute gender {F,M}\n";
  out += "@attribute language string\n\n@data\n";
  for (const auto& rec : corpus.records()) {
    for (double v : rec.features) {
      out += detail::format_double(v);
      out += ',';
    }
    out += rec.id;
    out += ',';
    out += to_string(rec.valence);
    out += ',';
    out += rec.speaker;
    out += ',';
    out += to_string(rec.gender);
    out += ',';
    out += rec.language;
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Min-max scaling
// ---------------------------------------------------------------------------

/// Per-dimension min/max fitted on training rows only.
struct ScalerParams {
  std::vector<double> min;
  std::vector<double> max;

  bool valid() const { return !min.empty() && min.size() == max.size(); }
  size_t dim() const { return min.size(); }

  friend bool operator==(const ScalerParams&, const ScalerParams&) = default;
};

inline ScalerParams fit_minmax(const Corpus& corpus,
                               std::span<const size_t> rows) {
  if (rows.empty()) throw ValueError("fit_minmax: empty row subset");
  ScalerParams p;
  p.min = corpus[rows[0]].features;
  p.max = corpus[rows[0]].features;
  for (size_t k = 1; k < rows.size(); ++k) {
    const auto& f = corpus[rows[k]].features;
    for (size_t j = 0; j < f.size(); ++j) {
      p.min[j] = std::min(p.min[j], f[j]);
      p.max[j] = std::max(p.max[j], f[j]);
    }
  }
  return p;
}

/// (x - min) / (max - min), clamped to [0,1]; constant dimensions map to 0.
inline std::vector<double> apply_minmax(const ScalerParams& p,
                                        std::span<const double> features) {
  if (features.size() != p.dim()) {
    throw ShapeError("apply_minmax: feature length " +
                     std::to_string(features.size()) + " vs scaler dim " +
                     std::to_string(p.dim()));
  }
  std::vector<double> out(features.size());
  for (size_t j = 0; j < out.size(); ++j) {
    const double range = p.max[j] - p.min[j];
    out[j] = range == 0.0
                 ? 0.0
                 : std::clamp((features[j] - p.min[j]) / range, 0.0, 1.0);
  }
  return out;
}

inline Matrix apply_minmax(const ScalerParams& p, const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (size_t i = 0; i < x.rows(); ++i) {
    auto scaled = apply_minmax(p, x.row(i));
    std::copy_n(scaled.data(), scaled.size(), out.row(i).data());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Leave-one-speaker-out folds
// ---------------------------------------------------------------------------

struct LosoFold {
  std::string speaker; // the held-out speaker
  std::vector<size_t> train_rows;
  std::vector<size_t> test_rows;
};

/// One fold per speaker (sorted order); the fold's test rows are exactly
/// that speaker's records.
inline std::vector<LosoFold> loso_splits(const Corpus& corpus) {
  const auto& speakers = corpus.speakers();
  if (speakers.size() < 2) {
    throw ValueError("loso_splits: need at least 2 speakers, found " +
                     std::to_string(speakers.size()));
  }
  std::vector<LosoFold> folds;
  folds.reserve(speakers.size());
  for (const auto& spk : speakers) {
    LosoFold fold;
    fold.speaker = spk;
    for (size_t i = 0; i < corpus.size(); ++i) {
      (corpus[i].speaker == spk ? fold.test_rows : fold.train_rows)
          .push_back(i);
    }
    folds.push_back(std::move(fold));
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

/// Signal strengths for the synthetic generator. Each attribute value gets a
/// fixed direction of the given length; `noise_std` is per-dimension.
struct SnrConfig {
  double valence = 1.0;
  double gender = 1.0;
  double speaker = 1.0;
  double language = 1.0;
  double noise_std = 0.25;
};

namespace detail {

// Gram-Schmidt over seeded Gaussian vectors; rows come out orthonormal.
inline Matrix orthonormal_directions(RandomSource& rs, size_t count,
                                     size_t dim) {
  Matrix dirs = rand_normal(rs, count, dim, 0.0, 1.0);
  for (size_t i = 0; i < count; ++i) {
    auto ri = dirs.row(i);
    for (size_t k = 0; k < i; ++k) {
      auto rk = dirs.row(k);
      double dot = 0.0;
      for (size_t j = 0; j < dim; ++j) dot += ri[j] * rk[j];
      for (size_t j = 0; j < dim; ++j) ri[j] -= dot * rk[j];
    }
    double norm = 0.0;
    for (size_t j = 0; j < dim; ++j) norm += ri[j] * ri[j];
    norm = std::sqrt(norm);
    if (norm < 1e-9) {
      throw NumericError("orthonormal_directions: degenerate direction");
    }
    for (size_t j = 0; j < dim; ++j) ri[j] /= norm;
  }
  return dirs;
}

inline std::string synth_language_name(size_t idx) {
  static constexpr std::array<const char*, 4> known = {"en", "de", "it", "tr"};
  if (idx < known.size()) return known[idx];
  return "lg" + std::to_string(idx);
}

} // namespace detail

/// Generate a fully-crossed synthetic corpus: every (valence, gender,
/// speaker, language) cell holds `n_per_cell` records, so no label is
/// predictable from another. Features are a sum of orthonormal per-value
/// directions plus isotropic noise; the result is a pure function of the
/// arguments.
inline Corpus synth_corpus(size_t n_per_cell, size_t dim, size_t n_speakers,
                           size_t n_languages, const SnrConfig& snr = {},
                           std::uint64_t seed = 0) {
  if (n_per_cell < 1) throw ValueError("synth_corpus: n_per_cell must be >= 1");
  if (dim < 16) throw ValueError("synth_corpus: dim must be >= 16");
  if (n_speakers < 4) throw ValueError("synth_corpus: need >= 4 speakers");
  if (n_languages < 2) throw ValueError("synth_corpus: need >= 2 languages");
  const size_t n_directions = 2 + 2 + n_speakers + n_languages;
  if (n_directions > dim) {
    throw ValueError("synth_corpus: dim " + std::to_string(dim) +
                     " too small for " + std::to_string(n_directions) +
                     " attribute directions");
  }

  RandomSource rs(seed);
  const Matrix dirs = detail::orthonormal_directions(rs, n_directions, dim);
  // Row layout: [valence NEG, POS][gender F, M][speakers...][languages...]
  const size_t spk_base = 4;
  const size_t lang_base = 4 + n_speakers;

  std::vector<UtteranceRecord> records;
  records.reserve(2 * 2 * n_speakers * n_languages * n_per_cell);
  size_t counter = 0;
  for (size_t s = 0; s < n_speakers; ++s) {
    for (size_t l = 0; l < n_languages; ++l) {
      for (int g = 0; g < 2; ++g) {
        for (int v = 0; v < 2; ++v) {
          for (size_t n = 0; n < n_per_cell; ++n) {
            UtteranceRecord rec;
            rec.id = "u" + std::to_string(counter++);
            rec.valence = v == 0 ? Valence::Neg : Valence::Pos;
            rec.gender = g == 0 ? Gender::F : Gender::M;
            rec.speaker = "spk" + std::to_string(s);
            rec.language = detail::synth_language_name(l);
            rec.features.resize(dim);
            for (size_t j = 0; j < dim; ++j) {
              const double noise =
                  snr.noise_std > 0.0 ? rs.normal(0.0, snr.noise_std) : 0.0;
              rec.features[j] = snr.valence * dirs(static_cast<size_t>(v), j) +
                                snr.gender * dirs(2 + static_cast<size_t>(g), j) +
                                snr.speaker * dirs(spk_base + s, j) +
                                snr.language * dirs(lang_base + l, j) + noise;
            }
            records.push_back(std::move(rec));
          }
        }
      }
    }
  }
  return Corpus(std::move(records));
}

} // namespace peec
