#include <doctest.h>

#include <sstream>

#include "spoter/dataset.hpp"
#include "spoter/errors.hpp"
#include "testutil.hpp"

using namespace spoter;
using testutil::TempDir;

namespace {

// One well-formed record line with every landmark at (x, y), present.
std::string record_line(const std::string& gloss, int signer, int frames, double x = 1.0,
                        double y = 2.0) {
  std::ostringstream out;
  out << R"({"gloss": ")" << gloss << R"(", "signer": )" << signer << R"(, "frames": [)";
  for (int t = 0; t < frames; ++t) {
    if (t > 0) out << ", ";
    out << "[";
    for (int i = 0; i < layout::kTotalPoints; ++i) {
      if (i > 0) out << ", ";
      out << "[" << x << ", " << y << ", 1]";
    }
    out << "]";
  }
  out << "]}";
  return out.str();
}

}  // namespace

TEST_CASE("load_dataset parses a minimal well-formed file") {
  TempDir dir("load_min");
  testutil::write_text(dir.file("d.jsonl"), record_line("Hello World", 3, 1) + "\n");

  const Dataset d = load_dataset(dir.file("d.jsonl"));
  REQUIRE(d.size() == 1);
  CHECK(d.vocabulary.size() == 1);
  CHECK(d.vocabulary.gloss(0) == "hello_world");  // lowercased, spaces to underscores
  CHECK(d.sequences[0].frames.size() == 1);
  CHECK(d.sequences[0].signer_id == 3);
  CHECK(d.sequences[0].variation_id == 0);
  CHECK(d.sequences[0].frames[0].present[0]);
  CHECK(d.sequences[0].frames[0].points[0].x == doctest::Approx(1.0));
}

TEST_CASE("load_dataset rejects a frame with 120 landmarks, naming the line") {
  TempDir dir("load_bad_count");
  std::ostringstream out;
  out << record_line("ok", 1, 1) << "\n";
  out << R"({"gloss": "bad", "signer": 1, "frames": [[)";
  for (int i = 0; i < 120; ++i) out << (i ? ", " : "") << "[0.5, 0.5, 1]";
  out << "]]}\n";
  testutil::write_text(dir.file("d.jsonl"), out.str());

  CHECK_THROWS_WITH_AS(load_dataset(dir.file("d.jsonl")),
                       doctest::Contains("line 2"), LayoutError);
}

TEST_CASE("load_dataset reports malformed JSON with its line number") {
  TempDir dir("load_bad_json");
  testutil::write_text(dir.file("d.jsonl"),
                       record_line("ok", 1, 1) + "\n" + "{not json\n");
  CHECK_THROWS_WITH_AS(load_dataset(dir.file("d.jsonl")),
                       doctest::Contains("line 2"), ParseError);
}

TEST_CASE("load_dataset validates glosses against an expected vocabulary") {
  TempDir dir("load_vocab");
  testutil::write_text(dir.file("d.jsonl"), record_line("unknown_sign", 1, 1) + "\n");
  const auto vocab = GlossVocabulary::from_glosses({"known"});
  CHECK_THROWS_AS(load_dataset(dir.file("d.jsonl"), vocab), VocabularyError);
}

TEST_CASE("legacy records without present flags infer absence from (0, 0)") {
  TempDir dir("load_legacy");
  std::ostringstream out;
  out << R"({"gloss": "g", "signer": 0, "frames": [[)";
  out << "[0.0, 0.0]";  // absent by convention
  for (int i = 1; i < layout::kTotalPoints; ++i) out << ", [3.5, 4.5]";
  out << "]]}\n";
  testutil::write_text(dir.file("d.jsonl"), out.str());

  const Dataset d = load_dataset(dir.file("d.jsonl"));
  REQUIRE(d.size() == 1);
  CHECK_FALSE(d.sequences[0].frames[0].present[0]);
  CHECK(d.sequences[0].frames[0].present[1]);
}

TEST_CASE("lenient loading accounts for every non-empty line") {
  TempDir dir("load_lenient");
  std::ostringstream out;
  out << record_line("a", 1, 1) << "\n";
  out << "{broken\n";
  out << "\n";  // empty lines do not count
  out << record_line("b", 2, 2) << "\n";
  out << R"({"gloss": "c", "signer": 1, "frames": []})" << "\n";  // no frames
  testutil::write_text(dir.file("d.jsonl"), out.str());

  const LoadReport report = load_dataset_lenient(dir.file("d.jsonl"));
  CHECK(report.nonempty_lines == 4);
  CHECK(report.dataset.size() == 2);
  CHECK(report.errors.size() == 2);
  CHECK(report.nonempty_lines ==
        report.dataset.size() + static_cast<int>(report.errors.size()));
  CHECK(report.errors[0].line == 2);
  CHECK(report.errors[1].line == 5);
}

TEST_CASE("save then load reproduces the dataset value-for-value") {
  TempDir dir("roundtrip");
  const Dataset original = testutil::make_synthetic_dataset({.classes = 3,
                                                             .samples_per_class = 2,
                                                             .frames = 4,
                                                             .noise = 5.0,
                                                             .hard_classes = {},
                                                             .hard_noise = 0.0,
                                                             .seed = 11,
                                                             .signers = 2});
  save_dataset(original, dir.file("d.jsonl"));
  const Dataset reloaded = load_dataset(dir.file("d.jsonl"));
  CHECK(datasets_equal(original, reloaded));

  // A second round trip is byte-stable once the text is canonical.
  save_dataset(reloaded, dir.file("d2.jsonl"));
  std::ifstream a(dir.file("d.jsonl")), b(dir.file("d2.jsonl"));
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
}

TEST_CASE("map_labels permutes labels and preserves counts") {
  const Dataset d = testutil::make_synthetic_dataset(
      {.classes = 3, .samples_per_class = 2, .frames = 2, .noise = 1.0,
       .hard_classes = {}, .hard_noise = 0.0, .seed = 3, .signers = 2});

  ClassMapping m;
  m.source_vocab = d.vocabulary;
  m.target_vocab = d.vocabulary;
  m.pairs = {{0, 2}, {1, 0}, {2, 1}};

  const Dataset mapped = map_labels(d, m, false);
  REQUIRE(mapped.size() == d.size());
  for (int i = 0; i < d.size(); ++i) {
    const int src = d.sequences[static_cast<std::size_t>(i)].gloss_id;
    const int dst = mapped.sequences[static_cast<std::size_t>(i)].gloss_id;
    CHECK(dst == (src == 0 ? 2 : src == 1 ? 0 : 1));  // table lookup per sequence
  }

  SUBCASE("composing with the inverse is the identity") {
    const Dataset back = map_labels(mapped, m.inverted(), false);
    CHECK(datasets_equal(d, back));
  }
}

TEST_CASE("map_labels identity mapping reproduces the input") {
  const Dataset d = testutil::make_synthetic_dataset(
      {.classes = 2, .samples_per_class = 2, .frames = 2, .noise = 1.0,
       .hard_classes = {}, .hard_noise = 0.0, .seed = 5, .signers = 1});
  ClassMapping m;
  m.source_vocab = d.vocabulary;
  m.target_vocab = d.vocabulary;
  for (int c = 0; c < d.vocabulary.size(); ++c) m.pairs.emplace_back(c, c);
  CHECK(datasets_equal(map_labels(d, m, false), d));
}

TEST_CASE("map_labels drops or rejects unmapped glosses") {
  const Dataset d = testutil::make_synthetic_dataset(
      {.classes = 3, .samples_per_class = 2, .frames = 2, .noise = 1.0,
       .hard_classes = {}, .hard_noise = 0.0, .seed = 9, .signers = 1});
  ClassMapping m;
  m.source_vocab = d.vocabulary;
  m.target_vocab = d.vocabulary;
  m.pairs = {{0, 0}, {2, 2}};  // class 1 uncovered

  const Dataset dropped = map_labels(d, m, true);
  CHECK(dropped.size() == 4);
  for (const auto& s : dropped.sequences) CHECK(s.gloss_id != 1);

  CHECK_THROWS_AS(map_labels(d, m, false), VocabularyError);

  SUBCASE("vocabulary mismatch is rejected up front") {
    ClassMapping other = m;
    other.source_vocab = GlossVocabulary::from_glosses({"x", "y", "z"});
    CHECK_THROWS_AS(map_labels(d, other, true), VocabularyError);
  }
}

TEST_CASE("class mapping TSV loading enforces injectivity and skips comments") {
  TempDir dir("mapping");
  const auto src = GlossVocabulary::from_glosses({"apple", "book", "cat"});
  const auto dst = GlossVocabulary::from_glosses({"apfel", "buch", "katze"});

  testutil::write_text(dir.file("m.tsv"),
                       "# gloss map\n"
                       "Apple\tApfel\n"
                       "book\tbuch\n"
                       "unlisted\tkatze\n");
  const ClassMapping m = load_class_mapping(dir.file("m.tsv"), src, dst);
  // 'unlisted' is not in the source vocabulary, so only two rows apply.
  REQUIRE(m.pairs.size() == 2);
  CHECK(m.target_of(*src.find("apple")) == *dst.find("apfel"));
  CHECK(m.target_of(*src.find("book")) == *dst.find("buch"));
  CHECK_FALSE(m.target_of(*src.find("cat")).has_value());

  testutil::write_text(dir.file("dup_src.tsv"), "apple\tapfel\napple\tbuch\n");
  CHECK_THROWS_AS(load_class_mapping(dir.file("dup_src.tsv"), src, dst), VocabularyError);

  testutil::write_text(dir.file("dup_dst.tsv"), "apple\tapfel\nbook\tapfel\n");
  CHECK_THROWS_AS(load_class_mapping(dir.file("dup_dst.tsv"), src, dst), VocabularyError);

  testutil::write_text(dir.file("bad.tsv"), "apple apfel\n");
  CHECK_THROWS_AS(load_class_mapping(dir.file("bad.tsv"), src, dst), ParseError);
}

TEST_CASE("dataset_stats matches a hand tally") {
  Dataset d;
  d.vocabulary = GlossVocabulary::from_glosses({"a", "b"});
  PoseSequence s;
  s.frames.push_back(testutil::uniform_frame(1.0, 1.0));
  s.gloss_id = 0;
  s.signer_id = 0;
  d.sequences.push_back(s);
  s.gloss_id = 1;
  s.signer_id = 1;
  d.sequences.push_back(s);
  d.sequences.push_back(s);
  s.signer_id = 2;
  d.sequences.push_back(s);

  const DatasetStats stats = dataset_stats(d);
  CHECK(stats.instances == 4);
  CHECK(stats.classes == 2);
  CHECK(stats.classes_with_samples == 2);
  CHECK(stats.signers == 3);
  CHECK(stats.mean_repetitions == doctest::Approx(2.0));
  REQUIRE(stats.repetition_histogram.size() == 2);
  CHECK(stats.repetition_histogram.at(1) == 1);
  CHECK(stats.repetition_histogram.at(3) == 1);
}

TEST_CASE("dataset_stats on an empty dataset reports zeros") {
  const DatasetStats stats = dataset_stats(Dataset{});
  CHECK(stats.instances == 0);
  CHECK(stats.classes == 0);
  CHECK(stats.mean_repetitions == 0.0);
  CHECK(stats.repetition_histogram.empty());
}

TEST_CASE("a full-size export loads with the expected shape") {
  // Surrogate for the real 307-video export: 100 classes, 93 of them with
  // 3 instances and 7 with 4, signers cycling through 25 identities.
  TempDir dir("full_export");
  std::ostringstream out;
  int signer = 0;
  for (int c = 0; c < 100; ++c) {
    const int reps = c < 93 ? 3 : 4;
    for (int r = 0; r < reps; ++r) {
      char gloss[16];
      std::snprintf(gloss, sizeof(gloss), "gloss_%03d", c);
      out << record_line(gloss, signer % 25, 2, 10.0 + c, 20.0 + r) << "\n";
      ++signer;
    }
  }
  testutil::write_text(dir.file("d.jsonl"), out.str());

  const Dataset d = load_dataset(dir.file("d.jsonl"));
  const DatasetStats stats = dataset_stats(d);
  CHECK(d.size() == 307);
  CHECK(stats.classes == 100);
  CHECK(stats.signers == 25);
  CHECK(stats.mean_repetitions == doctest::Approx(3.07));
  CHECK(stats.repetition_histogram.at(3) == 93);
  CHECK(stats.repetition_histogram.at(4) == 7);
}
