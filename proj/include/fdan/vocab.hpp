#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace fdan {

using TokenId = int32_t;

// Token inventory for serialized documents: characters, paired layout
// markups, the line terminator and the control tokens.
//
// Id layout is dense and fixed by construction order:
//   [0, C)            characters
//   [C, C+2(K+1))     markup pairs, root class first, <open>, </close>
//   eol, eot          line terminator, end of transcription
//   sot               start token (embedded, never scored)
//   pad               grid filler (never embedded, never scored)
//
// alphabet_size() == |A| covers every id a model may emit (chars, markups,
// eol, eot). The embedding table holds |A|+1 rows (adds <sot>).
class Vocabulary {
 public:
  enum class TokenKind { kChar, kMarkupOpen, kMarkupClose, kEol, kEot, kSot, kPad };

  Vocabulary() = default;  // empty; fill via the factories

  static Vocabulary chars_only(const std::vector<std::string>& characters);
  static Vocabulary with_layout(const std::vector<std::string>& characters,
                                const std::vector<std::string>& entity_classes,
                                const std::string& root_class = "D");
  // Convenience: one entry per byte of `alphabet`.
  static Vocabulary from_alphabet(const std::string& alphabet,
                                  const std::vector<std::string>& entity_classes = {},
                                  const std::string& root_class = "D");

  int alphabet_size() const { return alphabet_size_; }
  int embedding_rows() const { return alphabet_size_ + 1; }
  int total_ids() const { return alphabet_size_ + 2; }

  TokenId sot_id() const { return sot_id_; }
  TokenId eot_id() const { return eot_id_; }
  TokenId eol_id() const { return eol_id_; }
  TokenId pad_id() const { return pad_id_; }

  bool layout_enabled() const { return !entity_classes_.empty(); }
  const std::vector<std::string>& characters() const { return characters_; }
  const std::vector<std::string>& entity_classes() const { return entity_classes_; }
  const std::string& root_class() const { return root_class_; }

  TokenKind kind(TokenId id) const;
  bool is_char(TokenId id) const { return kind(id) == TokenKind::kChar; }
  bool is_markup(TokenId id) const {
    TokenKind k = kind(id);
    return k == TokenKind::kMarkupOpen || k == TokenKind::kMarkupClose;
  }
  bool valid(TokenId id) const { return id >= 0 && id < total_ids(); }

  std::optional<TokenId> char_id(const std::string& symbol) const;
  const std::string& char_symbol(TokenId id) const;

  // Markup accessors; class_index -1 addresses the root pair.
  TokenId open_id(int class_index) const;
  TokenId close_id(int class_index) const;
  // Class name of a markup token; -1/root reported with its name.
  const std::string& markup_class(TokenId id) const;
  int markup_class_index(TokenId id) const;  // -1 for root
  bool is_root_markup(TokenId id) const;

  // Display form: "a", "<P>", "</P>", "<eot>", "<sot>", "<pad>", "\n".
  std::string token_name(TokenId id) const;

 private:
  void build(const std::vector<std::string>& characters,
             const std::vector<std::string>& entity_classes,
             const std::string& root_class);

  std::vector<std::string> characters_;
  std::vector<std::string> entity_classes_;
  std::string root_class_;
  std::unordered_map<std::string, TokenId> char_to_id_;
  int alphabet_size_ = 0;
  TokenId markup_base_ = 0;
  TokenId sot_id_ = 0, eot_id_ = 0, eol_id_ = 0, pad_id_ = 0;
};

// Parsed document: ordered layout entities, each holding its text lines.
// An entity without a class is anonymous and serializes without markups;
// it is how markup-free corpora are represented.
struct LayoutEntity {
  std::optional<std::string> cls;
  std::vector<std::string> lines;
  bool operator==(const LayoutEntity&) const = default;
};

struct DocumentStructure {
  std::vector<LayoutEntity> entities;
  bool operator==(const DocumentStructure&) const = default;

  std::vector<std::string> all_lines() const;
  // Plain text: every line in reading order joined with '\n'.
  std::string text() const;
  int entity_count_with_class() const;
};

struct TokenSequence {
  std::vector<TokenId> ids;  // ends with eot on well-formed sequences
  bool operator==(const TokenSequence&) const = default;
  int size() const { return static_cast<int>(ids.size()); }
};

// Depth-first serialization. Every text line (entity-final included) is
// terminated with eol; layout markups wrap classed entities and the root
// pair wraps the document when layout is enabled. Trailing eot always.
TokenSequence serialize_document(const DocumentStructure& doc, const Vocabulary& vocab);

// Total parser: greedy left-to-right repair (orphan closers dropped, open
// entities closed at boundaries), never fails on arbitrary id lists.
DocumentStructure deserialize_tokens(const TokenSequence& tokens, const Vocabulary& vocab);

// XML-like display string; the eol immediately preceding a closing markup
// or <eot> is suppressed, matching the conventional compact form.
std::string display_string(const TokenSequence& tokens, const Vocabulary& vocab);

// Whitespace-separated id dump and its inverse.
std::string dump_ids(const TokenSequence& tokens);
TokenSequence parse_ids(const std::string& text);

// Ground-truth file format:
//   classes: <comma list>
//   entity <class or ->
//     <line>
//     ...
void write_truth_file(const std::string& path, const DocumentStructure& doc,
                      const Vocabulary& vocab);
DocumentStructure read_truth_file(const std::string& path,
                                  std::vector<std::string>* classes_out = nullptr);

}  // namespace fdan
