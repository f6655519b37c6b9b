#include "fdan/vocab.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fdan/util.hpp"

namespace fdan {

Vocabulary Vocabulary::chars_only(const std::vector<std::string>& characters) {
  Vocabulary v;
  v.build(characters, {}, "D");
  return v;
}

Vocabulary Vocabulary::with_layout(const std::vector<std::string>& characters,
                                   const std::vector<std::string>& entity_classes,
                                   const std::string& root_class) {
  Vocabulary v;
  v.build(characters, entity_classes, root_class);
  return v;
}

Vocabulary Vocabulary::from_alphabet(const std::string& alphabet,
                                     const std::vector<std::string>& entity_classes,
                                     const std::string& root_class) {
  std::vector<std::string> chars;
  chars.reserve(alphabet.size());
  for (char c : alphabet) chars.emplace_back(1, c);
  Vocabulary v;
  v.build(chars, entity_classes, root_class);
  return v;
}

void Vocabulary::build(const std::vector<std::string>& characters,
                       const std::vector<std::string>& entity_classes,
                       const std::string& root_class) {
  characters_ = characters;
  entity_classes_ = entity_classes;
  root_class_ = root_class;
  for (size_t i = 0; i < characters.size(); ++i) {
    const std::string& s = characters[i];
    if (s.empty()) throw std::invalid_argument("vocab: empty character symbol");
    if (!char_to_id_.emplace(s, static_cast<TokenId>(i)).second)
      throw std::invalid_argument("vocab: duplicate character symbol '" + s + "'");
  }
  for (const std::string& c : entity_classes)
    if (c.empty() || c == "-")
      throw std::invalid_argument("vocab: invalid layout class name");

  markup_base_ = static_cast<TokenId>(characters.size());
  int pairs = layout_enabled() ? static_cast<int>(entity_classes.size()) + 1 : 0;
  eol_id_ = markup_base_ + 2 * pairs;
  eot_id_ = eol_id_ + 1;
  alphabet_size_ = eot_id_ + 1;
  sot_id_ = alphabet_size_;
  pad_id_ = alphabet_size_ + 1;
}

Vocabulary::TokenKind Vocabulary::kind(TokenId id) const {
  if (!valid(id)) throw std::out_of_range("vocab: token id out of range");
  if (id < markup_base_) return TokenKind::kChar;
  if (id < eol_id_)
    return (id - markup_base_) % 2 == 0 ? TokenKind::kMarkupOpen : TokenKind::kMarkupClose;
  if (id == eol_id_) return TokenKind::kEol;
  if (id == eot_id_) return TokenKind::kEot;
  if (id == sot_id_) return TokenKind::kSot;
  return TokenKind::kPad;
}

std::optional<TokenId> Vocabulary::char_id(const std::string& symbol) const {
  auto it = char_to_id_.find(symbol);
  if (it == char_to_id_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::char_symbol(TokenId id) const {
  if (!is_char(id)) throw std::invalid_argument("vocab: not a character id");
  return characters_[static_cast<size_t>(id)];
}

TokenId Vocabulary::open_id(int class_index) const {
  if (!layout_enabled()) throw std::logic_error("vocab: layout disabled");
  if (class_index < -1 || class_index >= static_cast<int>(entity_classes_.size()))
    throw std::out_of_range("vocab: class index");
  return markup_base_ + 2 * (class_index + 1);
}

TokenId Vocabulary::close_id(int class_index) const { return open_id(class_index) + 1; }

int Vocabulary::markup_class_index(TokenId id) const {
  if (!is_markup(id)) throw std::invalid_argument("vocab: not a markup id");
  return (id - markup_base_) / 2 - 1;
}

bool Vocabulary::is_root_markup(TokenId id) const {
  return is_markup(id) && markup_class_index(id) == -1;
}

const std::string& Vocabulary::markup_class(TokenId id) const {
  int ci = markup_class_index(id);
  return ci < 0 ? root_class_ : entity_classes_[static_cast<size_t>(ci)];
}

std::string Vocabulary::token_name(TokenId id) const {
  switch (kind(id)) {
    case TokenKind::kChar: return characters_[static_cast<size_t>(id)];
    case TokenKind::kMarkupOpen: return "<" + markup_class(id) + ">";
    case TokenKind::kMarkupClose: return "</" + markup_class(id) + ">";
    case TokenKind::kEol: return "\n";
    case TokenKind::kEot: return "<eot>";
    case TokenKind::kSot: return "<sot>";
    case TokenKind::kPad: return "<pad>";
  }
  return "?";
}

std::vector<std::string> DocumentStructure::all_lines() const {
  std::vector<std::string> out;
  for (const auto& e : entities)
    for (const auto& l : e.lines) out.push_back(l);
  return out;
}

std::string DocumentStructure::text() const {
  std::string out;
  bool first = true;
  for (const auto& e : entities)
    for (const auto& l : e.lines) {
      if (!first) out += '\n';
      out += l;
      first = false;
    }
  return out;
}

int DocumentStructure::entity_count_with_class() const {
  int n = 0;
  for (const auto& e : entities)
    if (e.cls) ++n;
  return n;
}

namespace {

int class_index_of(const Vocabulary& vocab, const std::string& cls) {
  const auto& classes = vocab.entity_classes();
  for (size_t i = 0; i < classes.size(); ++i)
    if (classes[i] == cls) return static_cast<int>(i);
  throw std::invalid_argument("serialize: unknown layout class '" + cls + "'");
}

void emit_line(const std::string& line, const Vocabulary& vocab,
               std::vector<TokenId>& out) {
  for (const std::string& cp : codepoints(line)) {
    auto id = vocab.char_id(cp);
    if (!id) throw std::invalid_argument("serialize: character not in vocabulary: '" + cp + "'");
    out.push_back(*id);
  }
  out.push_back(vocab.eol_id());
}

}  // namespace

TokenSequence serialize_document(const DocumentStructure& doc, const Vocabulary& vocab) {
  TokenSequence seq;
  bool layout = vocab.layout_enabled();
  if (layout) seq.ids.push_back(vocab.open_id(-1));
  for (const auto& entity : doc.entities) {
    int ci = -1;
    if (entity.cls) {
      if (!layout)
        throw std::invalid_argument("serialize: classed entity but layout disabled");
      ci = class_index_of(vocab, *entity.cls);
      seq.ids.push_back(vocab.open_id(ci));
    }
    for (const auto& line : entity.lines) emit_line(line, vocab, seq.ids);
    if (entity.cls) seq.ids.push_back(vocab.close_id(ci));
  }
  if (layout) seq.ids.push_back(vocab.close_id(-1));
  seq.ids.push_back(vocab.eot_id());
  return seq;
}

DocumentStructure deserialize_tokens(const TokenSequence& tokens, const Vocabulary& vocab) {
  DocumentStructure doc;
  std::optional<LayoutEntity> open;  // classed entity currently open
  std::optional<LayoutEntity> anon;  // run of lines outside any markup
  std::string linebuf;
  bool line_pending = false;

  auto target = [&]() -> LayoutEntity& {
    if (open) return *open;
    if (!anon) anon.emplace();
    return *anon;
  };
  auto flush_pending = [&]() {
    if (line_pending) {
      target().lines.push_back(linebuf);
      linebuf.clear();
      line_pending = false;
    }
  };
  auto finalize_anon = [&]() {
    if (anon) {
      doc.entities.push_back(std::move(*anon));
      anon.reset();
    }
  };
  auto finalize_open = [&]() {
    if (open) {
      doc.entities.push_back(std::move(*open));
      open.reset();
    }
  };

  for (TokenId id : tokens.ids) {
    if (!vocab.valid(id)) continue;  // repair: unknown ids dropped
    switch (vocab.kind(id)) {
      case Vocabulary::TokenKind::kChar:
        linebuf += vocab.char_symbol(id);
        line_pending = true;
        break;
      case Vocabulary::TokenKind::kEol:
        target().lines.push_back(linebuf);
        linebuf.clear();
        line_pending = false;
        break;
      case Vocabulary::TokenKind::kMarkupOpen: {
        if (vocab.is_root_markup(id)) break;  // structural, carries no entity
        flush_pending();
        finalize_open();
        finalize_anon();
        open = LayoutEntity{vocab.markup_class(id), {}};
        break;
      }
      case Vocabulary::TokenKind::kMarkupClose: {
        if (vocab.is_root_markup(id)) break;
        // A closer only closes an open entity of the same class; anything
        // else is an orphan and is dropped.
        if (open && *open->cls == vocab.markup_class(id)) {
          flush_pending();
          finalize_open();
        }
        break;
      }
      case Vocabulary::TokenKind::kEot:
        flush_pending();
        finalize_open();
        finalize_anon();
        return doc;
      case Vocabulary::TokenKind::kSot:
      case Vocabulary::TokenKind::kPad:
        break;
    }
  }
  flush_pending();
  finalize_open();
  finalize_anon();
  return doc;
}

std::string display_string(const TokenSequence& tokens, const Vocabulary& vocab) {
  std::string out;
  const auto& ids = tokens.ids;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (!vocab.valid(ids[i])) continue;
    if (ids[i] == vocab.eol_id() && i + 1 < ids.size()) {
      TokenId next = ids[i + 1];
      if (vocab.valid(next) &&
          (next == vocab.eot_id() ||
           vocab.kind(next) == Vocabulary::TokenKind::kMarkupClose))
        continue;
    }
    out += vocab.token_name(ids[i]);
  }
  return out;
}

std::string dump_ids(const TokenSequence& tokens) {
  std::ostringstream os;
  for (size_t i = 0; i < tokens.ids.size(); ++i) {
    if (i) os << ' ';
    os << tokens.ids[i];
  }
  return os.str();
}

TokenSequence parse_ids(const std::string& text) {
  TokenSequence seq;
  std::istringstream is(text);
  long v;
  while (is >> v) seq.ids.push_back(static_cast<TokenId>(v));
  return seq;
}

void write_truth_file(const std::string& path, const DocumentStructure& doc,
                      const Vocabulary& vocab) {
  std::ostringstream os;
  os << "classes:";
  const auto& classes = vocab.entity_classes();
  for (size_t i = 0; i < classes.size(); ++i) os << (i ? "," : " ") << classes[i];
  os << '\n';
  for (const auto& e : doc.entities) {
    os << "entity " << (e.cls ? *e.cls : std::string("-")) << '\n';
    for (const auto& l : e.lines) os << "  " << l << '\n';
  }
  write_text_file(path, os.str());
}

DocumentStructure read_truth_file(const std::string& path,
                                  std::vector<std::string>* classes_out) {
  std::istringstream is(read_text_file(path));
  std::string line;
  if (!std::getline(is, line) || line.rfind("classes:", 0) != 0)
    throw std::runtime_error("truth file: missing classes header: " + path);
  if (classes_out) {
    classes_out->clear();
    for (const auto& c : split(trim(line.substr(8)), ','))
      if (!trim(c).empty()) classes_out->push_back(trim(c));
  }
  DocumentStructure doc;
  while (std::getline(is, line)) {
    if (line.rfind("entity ", 0) == 0) {
      std::string cls = trim(line.substr(7));
      LayoutEntity e;
      if (cls != "-") e.cls = cls;
      doc.entities.push_back(std::move(e));
    } else if (line.rfind("  ", 0) == 0) {
      if (doc.entities.empty())
        throw std::runtime_error("truth file: line before any entity: " + path);
      doc.entities.back().lines.push_back(line.substr(2));
    } else if (trim(line).empty()) {
      continue;
    } else {
      throw std::runtime_error("truth file: unparseable line '" + line + "'");
    }
  }
  return doc;
}

}  // namespace fdan
