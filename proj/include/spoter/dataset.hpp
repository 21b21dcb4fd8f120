#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spoter/landmarks.hpp"

namespace spoter {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// One frame of 121 source-pixel landmarks. Absent landmarks carry
// present=false and are ignored by all downstream geometry.
struct PoseFrame {
  std::array<Point2, layout::kTotalPoints> points{};
  std::array<bool, layout::kTotalPoints> present{};
};

// A labeled sequence; the unit of training.
struct PoseSequence {
  std::vector<PoseFrame> frames;  // length T >= 1
  int gloss_id = 0;
  int signer_id = 0;
  int variation_id = 0;  // carried through, never used by training
  std::string source_id;
};

// Dense gloss index. Glosses are normalized (lowercase ASCII, spaces to
// underscores) before insertion and kept in sorted order.
class GlossVocabulary {
public:
  GlossVocabulary() = default;
  // Builds from raw gloss strings; normalizes, dedups, sorts.
  static GlossVocabulary from_glosses(const std::vector<std::string>& glosses);

  int size() const { return static_cast<int>(id_to_gloss_.size()); }
  const std::string& gloss(int id) const { return id_to_gloss_.at(id); }
  const std::vector<std::string>& glosses() const { return id_to_gloss_; }
  // Id of a (normalized) gloss, or nullopt.
  std::optional<int> find(const std::string& gloss) const;

  bool operator==(const GlossVocabulary&) const = default;

private:
  std::vector<std::string> id_to_gloss_;
};

// Normalization applied to every gloss before vocabulary insertion.
std::string normalize_gloss(const std::string& raw);

struct Dataset {
  GlossVocabulary vocabulary;
  std::vector<PoseSequence> sequences;

  int size() const { return static_cast<int>(sequences.size()); }
};

// Gloss-level correspondence between two vocabularies; injective on the
// covered source ids.
struct ClassMapping {
  GlossVocabulary source_vocab;
  GlossVocabulary target_vocab;
  std::vector<std::pair<int, int>> pairs;  // source_id -> target_id

  std::optional<int> target_of(int source_id) const;
  // Swaps the direction; valid because mappings are injective.
  ClassMapping inverted() const;
};

struct LineError {
  int line = 0;  // 1-based line number
  std::string message;
};

struct LoadReport {
  Dataset dataset;
  std::vector<LineError> errors;
  int nonempty_lines = 0;  // always == sequences + errors
};

// Parses a JSON-lines dataset file, collecting one error per bad line
// instead of stopping. No record is ever silently skipped:
// nonempty_lines == dataset.size() + errors.size().
LoadReport load_dataset_lenient(const std::string& path,
                                const std::optional<GlossVocabulary>& expected_vocab = std::nullopt);

// Strict variant: throws on the first bad line (ParseError / LayoutError /
// VocabularyError, message names the line number).
Dataset load_dataset(const std::string& path,
                     const std::optional<GlossVocabulary>& expected_vocab = std::nullopt);

// Writes the JSON-lines form; loading it back reproduces the dataset
// value-for-value.
void save_dataset(const Dataset& d, const std::string& path);

// Translates every gloss_id through m. Sequences of uncovered classes are
// dropped when drop_unmapped, otherwise a VocabularyError is thrown.
// d.vocabulary must equal m.source_vocab.
Dataset map_labels(const Dataset& d, const ClassMapping& m, bool drop_unmapped);

// Reads a two-column TSV of source_gloss<TAB>target_gloss ('#' comments
// allowed) and resolves it against the two vocabularies. Rows whose source
// or target gloss is absent from its vocabulary are skipped; duplicated
// source or target glosses violate injectivity and throw.
ClassMapping load_class_mapping(const std::string& path,
                                const GlossVocabulary& source_vocab,
                                const GlossVocabulary& target_vocab);

struct DatasetStats {
  int classes = 0;            // vocabulary size
  int classes_with_samples = 0;
  int instances = 0;
  int signers = 0;
  double mean_repetitions = 0.0;  // instances / classes_with_samples, 0 when empty
  std::map<int, int> repetition_histogram;  // instances-per-class -> #classes
};

DatasetStats dataset_stats(const Dataset& d);

bool datasets_equal(const Dataset& a, const Dataset& b, double tol = 0.0);

}  // namespace spoter
