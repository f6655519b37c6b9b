#include <doctest.h>

#include "fdan/segment.hpp"
#include "fdan/util.hpp"
#include "fdan/vocab.hpp"

using namespace fdan;

namespace {

Vocabulary demo_vocab() {
  return Vocabulary::from_alphabet("Line 123", {"P"});
}

DocumentStructure two_paragraphs() {
  DocumentStructure d;
  d.entities.push_back({std::string("P"), {"Line 1", "Line 2"}});
  d.entities.push_back({std::string("P"), {"Line 3"}});
  return d;
}

// Random well-formed documents for the round-trip property: either layout
// documents with classed entities only, or markup-free single-entity ones.
DocumentStructure random_doc(Rng& rng, const Vocabulary& vocab, bool layout) {
  DocumentStructure d;
  const auto& chars = vocab.characters();
  int entities = layout ? rng.uniform_int(0, 3) : 1;
  if (!layout) {
    LayoutEntity e;
    int lines = rng.uniform_int(1, 4);
    for (int l = 0; l < lines; ++l) {
      std::string s;
      for (int c = rng.uniform_int(0, 6); c > 0; --c)
        s += chars[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(chars.size()) - 1))];
      e.lines.push_back(s);
    }
    d.entities.push_back(e);
    return d;
  }
  for (int i = 0; i < entities; ++i) {
    LayoutEntity e;
    e.cls = vocab.entity_classes()[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int>(vocab.entity_classes().size()) - 1))];
    int lines = rng.uniform_int(0, 3);
    for (int l = 0; l < lines; ++l) {
      std::string s;
      for (int c = rng.uniform_int(0, 6); c > 0; --c)
        s += chars[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(chars.size()) - 1))];
      e.lines.push_back(s);
    }
    d.entities.push_back(e);
  }
  return d;
}

}  // namespace

TEST_CASE("vocabulary id layout round-trips and stays unique") {
  Vocabulary v = demo_vocab();
  CHECK(v.alphabet_size() == 8 + 4 + 2);  // chars + two markup pairs + eol + eot
  CHECK(v.embedding_rows() == v.alphabet_size() + 1);
  std::vector<bool> seen(static_cast<size_t>(v.total_ids()), false);
  for (TokenId id = 0; id < v.total_ids(); ++id) {
    CHECK(!seen[static_cast<size_t>(id)]);
    seen[static_cast<size_t>(id)] = true;
    if (v.is_char(id)) CHECK(*v.char_id(v.char_symbol(id)) == id);
  }
  CHECK(v.token_name(v.open_id(-1)) == "<D>");
  CHECK(v.token_name(v.close_id(0)) == "</P>");
  CHECK(v.open_id(0) + 1 == v.close_id(0));
}

TEST_CASE("serialize emits markups, universal line terminators and <eot>") {
  Vocabulary v = demo_vocab();
  TokenSequence seq = serialize_document(two_paragraphs(), v);
  CHECK(display_string(seq, v) == "<D><P>Line 1\nLine 2</P><P>Line 3</P></D><eot>");
  // hand-enumerated ids: chars L,i,n,e,' ',1,2,3 are 0..7
  std::vector<TokenId> want{8,  10, 0, 1, 2, 3, 4, 5, 12, 0, 1, 2,  3,
                            4,  6,  12, 11, 10, 0, 1, 2, 3, 4, 7, 12, 11,
                            9,  13};
  CHECK(seq.ids == want);
  CHECK(seq.ids.back() == v.eot_id());
}

TEST_CASE("serialize of an empty document is just the markup shell") {
  Vocabulary v = demo_vocab();
  TokenSequence seq = serialize_document(DocumentStructure{}, v);
  CHECK(display_string(seq, v) == "<D></D><eot>");
}

TEST_CASE("serialize without layout emits terminator then <eot>") {
  Vocabulary v = Vocabulary::from_alphabet("ab");
  DocumentStructure d;
  d.entities.push_back({std::nullopt, {"a"}});
  TokenSequence seq = serialize_document(d, v);
  // a=0, b=1, eol=2, eot=3
  CHECK(seq.ids == std::vector<TokenId>{0, 2, 3});
}

TEST_CASE("serialize rejects characters outside the vocabulary") {
  Vocabulary v = Vocabulary::from_alphabet("ab");
  DocumentStructure d;
  d.entities.push_back({std::nullopt, {"ax"}});
  CHECK_THROWS_WITH_AS(serialize_document(d, v),
                       doctest::Contains("'x'"), std::invalid_argument);
}

TEST_CASE("deserialize auto-closes an unclosed entity") {
  Vocabulary v = demo_vocab();
  TokenSequence seq;
  seq.ids = {v.open_id(-1), v.open_id(0), 0, 1, v.eot_id()};  // "<D><P>Li<eot>"
  DocumentStructure d = deserialize_tokens(seq, v);
  REQUIRE(d.entities.size() == 1);
  CHECK(d.entities[0].cls == "P");
  CHECK(d.entities[0].lines == std::vector<std::string>{"Li"});
}

TEST_CASE("deserialize drops orphan closing markups") {
  Vocabulary v = demo_vocab();
  TokenSequence seq;
  seq.ids = {v.close_id(0), 0, 1, v.eot_id()};  // "</P>Li<eot>"
  DocumentStructure d = deserialize_tokens(seq, v);
  REQUIRE(d.entities.size() == 1);
  CHECK(!d.entities[0].cls.has_value());
  CHECK(d.entities[0].lines == std::vector<std::string>{"Li"});
}

TEST_CASE("round-trip: deserialize(serialize(d)) == d") {
  Vocabulary layout = demo_vocab();
  Vocabulary plain = Vocabulary::from_alphabet("abcdef");
  Rng rng(42);
  for (int i = 0; i < 200; ++i) {
    bool with_layout = i % 2 == 0;
    const Vocabulary& v = with_layout ? layout : plain;
    DocumentStructure d = random_doc(rng, v, with_layout);
    CHECK(deserialize_tokens(serialize_document(d, v), v) == d);
  }
}

TEST_CASE("repair is total on random id lists") {
  Vocabulary v = demo_vocab();
  Rng rng(7);
  for (int i = 0; i < 500; ++i) {
    TokenSequence seq;
    int n = rng.uniform_int(0, 40);
    for (int k = 0; k < n; ++k)
      seq.ids.push_back(rng.uniform_int(-2, v.total_ids() + 3));
    DocumentStructure d = deserialize_tokens(seq, v);  // must not throw
    (void)serialize_document(d, v);                    // and must re-serialize
  }
}

TEST_CASE("segment_lines splits markups and terminated lines") {
  Vocabulary v = Vocabulary::from_alphabet("abcd", {"P"});
  DocumentStructure d;
  d.entities.push_back({std::string("P"), {"ab", "cd"}});
  TokenSequence seq = serialize_document(d, v);
  // drop the root markups to match the bare "<P>ab\ncd\n</P><eot>" form
  TokenSequence bare;
  for (TokenId id : seq.ids)
    if (!v.is_root_markup(id)) bare.ids.push_back(id);
  LineSegmentedTarget seg = segment_lines(bare, v);
  REQUIRE(seg.line_count() == 5);
  CHECK(seg.lines[0] == std::vector<TokenId>{v.open_id(0)});
  CHECK(seg.lines[1] == std::vector<TokenId>{0, 1, v.eol_id()});
  CHECK(seg.lines[2] == std::vector<TokenId>{2, 3, v.eol_id()});
  CHECK(seg.lines[3] == std::vector<TokenId>{v.close_id(0)});
  CHECK(seg.lines[4] == std::vector<TokenId>{v.eot_id()});
  CHECK(seg.n_max == 3);

  // duplicated grid: column 1 repeats the line-initial token
  CHECK(seg.grid[1] == std::vector<TokenId>{0, 0, 1, v.eol_id()});
  CHECK(seg.grid[0][0] == seg.grid[0][1]);
  CHECK(seg.grid[0][2] == v.pad_id());
}

TEST_CASE("segment_lines handles the lone <eot> document") {
  Vocabulary v = Vocabulary::from_alphabet("ab");
  TokenSequence seq;
  seq.ids = {v.eot_id()};
  LineSegmentedTarget seg = segment_lines(seq, v);
  CHECK(seg.line_count() == 1);
  CHECK(seg.n_max == 1);
}

TEST_CASE("segment_lines enforces caps with counts in the message") {
  Vocabulary v = Vocabulary::from_alphabet("ab");
  TokenSequence seq;
  for (int i = 0; i < 10; ++i) seq.ids.push_back(0);
  seq.ids.push_back(v.eol_id());
  seq.ids.push_back(v.eot_id());
  CHECK_THROWS_WITH_AS(segment_lines(seq, v, 256, 8), doctest::Contains("11"),
                       std::invalid_argument);
  TokenSequence many;
  for (int i = 0; i < 5; ++i) {
    many.ids.push_back(0);
    many.ids.push_back(v.eol_id());
  }
  many.ids.push_back(v.eot_id());
  CHECK_THROWS_AS(segment_lines(many, v, 4, 256), std::invalid_argument);
  CHECK_THROWS_AS(segment_lines(TokenSequence{{0}}, v), std::invalid_argument);
}

TEST_CASE("segmentation conserves the token count") {
  Vocabulary v = demo_vocab();
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    DocumentStructure d = random_doc(rng, v, true);
    TokenSequence seq = serialize_document(d, v);
    LineSegmentedTarget seg = segment_lines(seq, v);
    CHECK(seg.total_tokens() == seq.size());
    for (int j = 0; j < seg.line_count(); ++j) {
      if (seg.lengths[j] > 1) CHECK(seg.lines[j].back() == v.eol_id());
      if (v.is_markup(seg.lines[j][0]) || seg.lines[j][0] == v.eot_id())
        CHECK(seg.lengths[j] == 1);
    }
  }
}

TEST_CASE("token dumps round-trip") {
  TokenSequence seq{{3, 1, 4, 1, 5}};
  CHECK(parse_ids(dump_ids(seq)) == seq);
  CHECK(dump_ids(seq) == "3 1 4 1 5");
}

TEST_CASE("truth files round-trip through write/read") {
  Vocabulary v = demo_vocab();
  DocumentStructure d = two_paragraphs();
  std::string path = "truth_roundtrip_test.txt";
  write_truth_file(path, d, v);
  std::vector<std::string> classes;
  DocumentStructure back = read_truth_file(path, &classes);
  CHECK(back == d);
  CHECK(classes == std::vector<std::string>{"P"});
  std::remove(path.c_str());
}
