#include "spoter/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "spoter/errors.hpp"

namespace spoter {

using nlohmann::json;

std::string normalize_gloss(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  for (unsigned char c : raw) {
    if (c == ' ') {
      out.push_back('_');
    } else {
      out.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  return out;
}

GlossVocabulary GlossVocabulary::from_glosses(const std::vector<std::string>& glosses) {
  std::set<std::string> uniq;
  for (const auto& g : glosses) uniq.insert(normalize_gloss(g));
  GlossVocabulary v;
  v.id_to_gloss_.assign(uniq.begin(), uniq.end());
  return v;
}

std::optional<int> GlossVocabulary::find(const std::string& gloss) const {
  auto it = std::lower_bound(id_to_gloss_.begin(), id_to_gloss_.end(), gloss);
  if (it != id_to_gloss_.end() && *it == gloss) {
    return static_cast<int>(it - id_to_gloss_.begin());
  }
  return std::nullopt;
}

std::optional<int> ClassMapping::target_of(int source_id) const {
  for (const auto& [s, t] : pairs) {
    if (s == source_id) return t;
  }
  return std::nullopt;
}

ClassMapping ClassMapping::inverted() const {
  ClassMapping inv;
  inv.source_vocab = target_vocab;
  inv.target_vocab = source_vocab;
  inv.pairs.reserve(pairs.size());
  for (const auto& [s, t] : pairs) inv.pairs.emplace_back(t, s);
  return inv;
}

namespace {

struct RawRecord {
  std::string gloss;
  PoseSequence seq;  // gloss_id filled in later
};

RawRecord parse_record(const std::string& line, int lineno) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError("line " + std::to_string(lineno) + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) {
    throw ParseError("line " + std::to_string(lineno) + ": record is not a JSON object");
  }
  RawRecord rec;
  try {
    rec.gloss = j.at("gloss").get<std::string>();
    rec.seq.signer_id = j.at("signer").get<int>();
    rec.seq.variation_id = j.value("variation", 0);
    rec.seq.source_id = j.value("source", std::string{});
  } catch (const json::exception& e) {
    throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
  }

  const auto frames = j.find("frames");
  if (frames == j.end() || !frames->is_array()) {
    throw ParseError("line " + std::to_string(lineno) + ": missing 'frames' array");
  }
  if (frames->empty()) {
    throw LayoutError("line " + std::to_string(lineno) + ": sequence has no frames");
  }
  rec.seq.frames.reserve(frames->size());
  for (const auto& jf : *frames) {
    if (!jf.is_array()) {
      throw ParseError("line " + std::to_string(lineno) + ": frame is not an array");
    }
    if (static_cast<int>(jf.size()) != layout::kTotalPoints) {
      throw LayoutError("line " + std::to_string(lineno) + ": frame has " +
                        std::to_string(jf.size()) + " landmarks, expected " +
                        std::to_string(layout::kTotalPoints));
    }
    PoseFrame frame;
    for (int i = 0; i < layout::kTotalPoints; ++i) {
      const auto& jp = jf[i];
      if (!jp.is_array() || jp.size() < 2 || jp.size() > 3) {
        throw ParseError("line " + std::to_string(lineno) + ": landmark " + std::to_string(i) +
                         " must be [x, y] or [x, y, present]");
      }
      if (!jp[0].is_number() || !jp[1].is_number()) {
        throw ParseError("line " + std::to_string(lineno) + ": landmark " + std::to_string(i) +
                         " has non-numeric coordinates");
      }
      frame.points[i] = {jp[0].get<double>(), jp[1].get<double>()};
      if (jp.size() == 3) {
        if (jp[2].is_boolean()) {
          frame.present[i] = jp[2].get<bool>();
        } else if (jp[2].is_number()) {
          frame.present[i] = jp[2].get<double>() != 0.0;
        } else {
          throw ParseError("line " + std::to_string(lineno) + ": landmark " + std::to_string(i) +
                           " has a non-numeric present flag");
        }
      } else {
        // Legacy record without a mask: absent exactly when both
        // coordinates are 0.0.
        frame.present[i] = !(frame.points[i].x == 0.0 && frame.points[i].y == 0.0);
      }
    }
    rec.seq.frames.push_back(frame);
  }
  return rec;
}

}  // namespace

LoadReport load_dataset_lenient(const std::string& path,
                                const std::optional<GlossVocabulary>& expected_vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);

  LoadReport report;
  std::vector<RawRecord> records;
  std::vector<int> record_lines;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++report.nonempty_lines;
    try {
      records.push_back(parse_record(line, lineno));
      record_lines.push_back(lineno);
    } catch (const UsageError& e) {
      report.errors.push_back({lineno, e.what()});
    }
  }

  std::vector<std::string> glosses;
  glosses.reserve(records.size());
  for (const auto& r : records) glosses.push_back(r.gloss);
  GlossVocabulary vocab =
      expected_vocab ? *expected_vocab : GlossVocabulary::from_glosses(glosses);

  report.dataset.vocabulary = vocab;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string g = normalize_gloss(records[i].gloss);
    auto id = vocab.find(g);
    if (!id) {
      report.errors.push_back({record_lines[i], "line " + std::to_string(record_lines[i]) +
                                                    ": unknown gloss '" + g + "'"});
      continue;
    }
    PoseSequence seq = std::move(records[i].seq);
    seq.gloss_id = *id;
    report.dataset.sequences.push_back(std::move(seq));
  }
  return report;
}

Dataset load_dataset(const std::string& path,
                     const std::optional<GlossVocabulary>& expected_vocab) {
  LoadReport report = load_dataset_lenient(path, expected_vocab);
  if (!report.errors.empty()) {
    const auto& first = report.errors.front();
    if (first.message.find("unknown gloss") != std::string::npos) {
      throw VocabularyError(first.message);
    }
    if (first.message.find("landmarks, expected") != std::string::npos ||
        first.message.find("no frames") != std::string::npos) {
      throw LayoutError(first.message);
    }
    throw ParseError(first.message);
  }
  return std::move(report.dataset);
}

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file: " + path);
  for (const auto& seq : d.sequences) {
    json j;
    j["gloss"] = d.vocabulary.gloss(seq.gloss_id);
    j["signer"] = seq.signer_id;
    j["variation"] = seq.variation_id;
    if (!seq.source_id.empty()) j["source"] = seq.source_id;
    json jframes = json::array();
    for (const auto& f : seq.frames) {
      json jf = json::array();
      for (int i = 0; i < layout::kTotalPoints; ++i) {
        jf.push_back(json::array({f.points[i].x, f.points[i].y, f.present[i] ? 1 : 0}));
      }
      jframes.push_back(std::move(jf));
    }
    j["frames"] = std::move(jframes);
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

Dataset map_labels(const Dataset& d, const ClassMapping& m, bool drop_unmapped) {
  if (!(d.vocabulary == m.source_vocab)) {
    throw VocabularyError("dataset vocabulary does not match the mapping's source vocabulary");
  }
  std::vector<std::optional<int>> lut(d.vocabulary.size());
  for (const auto& [s, t] : m.pairs) lut.at(s) = t;

  Dataset out;
  out.vocabulary = m.target_vocab;
  out.sequences.reserve(d.sequences.size());
  for (const auto& seq : d.sequences) {
    const auto target = lut[seq.gloss_id];
    if (!target) {
      if (drop_unmapped) continue;
      throw VocabularyError("gloss '" + d.vocabulary.gloss(seq.gloss_id) +
                            "' is not covered by the mapping");
    }
    PoseSequence mapped = seq;
    mapped.gloss_id = *target;
    out.sequences.push_back(std::move(mapped));
  }
  return out;
}

ClassMapping load_class_mapping(const std::string& path,
                                const GlossVocabulary& source_vocab,
                                const GlossVocabulary& target_vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mapping file: " + path);

  ClassMapping m;
  m.source_vocab = source_vocab;
  m.target_vocab = target_vocab;

  std::set<int> seen_sources, seen_targets;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError("mapping line " + std::to_string(lineno) +
                       ": expected exactly two tab-separated columns");
    }
    const std::string src = normalize_gloss(line.substr(0, tab));
    const std::string dst = normalize_gloss(line.substr(tab + 1));
    if (src.empty() || dst.empty()) {
      throw ParseError("mapping line " + std::to_string(lineno) + ": empty gloss");
    }

    const auto sid = source_vocab.find(src);
    const auto tid = target_vocab.find(dst);
    if (!sid || !tid) continue;  // row does not apply to these vocabularies
    if (!seen_sources.insert(*sid).second) {
      throw VocabularyError("mapping line " + std::to_string(lineno) + ": source gloss '" + src +
                            "' mapped twice");
    }
    if (!seen_targets.insert(*tid).second) {
      throw VocabularyError("mapping line " + std::to_string(lineno) + ": target gloss '" + dst +
                            "' mapped twice (mapping must be injective)");
    }
    m.pairs.emplace_back(*sid, *tid);
  }
  return m;
}

DatasetStats dataset_stats(const Dataset& d) {
  DatasetStats s;
  s.classes = d.vocabulary.size();
  s.instances = d.size();

  std::map<int, int> per_class;
  std::set<int> signers;
  for (const auto& seq : d.sequences) {
    per_class[seq.gloss_id]++;
    signers.insert(seq.signer_id);
  }
  s.classes_with_samples = static_cast<int>(per_class.size());
  s.signers = static_cast<int>(signers.size());
  for (const auto& [cls, count] : per_class) {
    (void)cls;
    s.repetition_histogram[count]++;
  }
  s.mean_repetitions = s.classes_with_samples > 0
                           ? static_cast<double>(s.instances) / s.classes_with_samples
                           : 0.0;
  return s;
}

bool datasets_equal(const Dataset& a, const Dataset& b, double tol) {
  if (!(a.vocabulary == b.vocabulary) || a.size() != b.size()) return false;
  for (int i = 0; i < a.size(); ++i) {
    const auto& sa = a.sequences[i];
    const auto& sb = b.sequences[i];
    if (sa.gloss_id != sb.gloss_id || sa.signer_id != sb.signer_id ||
        sa.variation_id != sb.variation_id || sa.source_id != sb.source_id ||
        sa.frames.size() != sb.frames.size()) {
      return false;
    }
    for (std::size_t f = 0; f < sa.frames.size(); ++f) {
      for (int p = 0; p < layout::kTotalPoints; ++p) {
        if (sa.frames[f].present[p] != sb.frames[f].present[p]) return false;
        if (std::abs(sa.frames[f].points[p].x - sb.frames[f].points[p].x) > tol ||
            std::abs(sa.frames[f].points[p].y - sb.frames[f].points[p].y) > tol) {
          return false;
        }
      }
    }
  }
  return true;
}

}  // namespace spoter
