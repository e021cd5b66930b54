// bmrc -- bidirectional MRC for aspect sentiment triplet extraction
// Span-annotated review corpus: line grammar, validation, split loading.
#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bmrc {

// Inclusive token index range [start, end].
struct TokenSpan {
  int start = 0;
  int end = 0;

  int length() const { return end - start + 1; }
  bool operator==(const TokenSpan& o) const = default;
  auto operator<=>(const TokenSpan& o) const = default;
};

enum class Sentiment { Positive, Negative, Neutral };

inline const char* sentiment_tag(Sentiment s) {
  switch (s) {
    case Sentiment::Positive: return "POS";
    case Sentiment::Negative: return "NEG";
    case Sentiment::Neutral: return "NEU";
  }
  return "?";
}

inline std::optional<Sentiment> sentiment_from_tag(const std::string& tag) {
  if (tag == "POS") return Sentiment::Positive;
  if (tag == "NEG") return Sentiment::Negative;
  if (tag == "NEU") return Sentiment::Neutral;
  return std::nullopt;
}

struct GoldTriplet {
  TokenSpan aspect;
  TokenSpan opinion;
  Sentiment sentiment = Sentiment::Neutral;

  bool operator==(const GoldTriplet&) const = default;
  auto operator<=>(const GoldTriplet&) const = default;
};

struct AnnotatedSentence {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<GoldTriplet> triplets;

  int size() const { return static_cast<int>(tokens.size()); }
};

enum class SplitKind { Train, Dev, Test };

inline const char* split_name(SplitKind k) {
  switch (k) {
    case SplitKind::Train: return "train";
    case SplitKind::Dev: return "dev";
    case SplitKind::Test: return "test";
  }
  return "?";
}

struct DatasetSplit {
  SplitKind name = SplitKind::Train;
  std::vector<AnnotatedSentence> sentences;

  int num_sentences() const { return static_cast<int>(sentences.size()); }
  int num_triplets() const {
    int n = 0;
    for (const auto& s : sentences) n += static_cast<int>(s.triplets.size());
    return n;
  }
};

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// A violated sentence/triplet invariant. triplet_index is -1 for
// sentence-level problems.
struct Violation {
  int triplet_index = -1;
  std::string rule;
  std::string detail;
};

namespace detail {

inline std::string lowercase_ascii(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::vector<std::string> split_whitespace(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(std::move(tok));
  return out;
}

// Recursive-descent scanner over the bracketed annotation list.
class AnnotationScanner {
 public:
  AnnotationScanner(const std::string& text, int line_no)
      : text_(text), line_no_(line_no) {}

  std::vector<GoldTriplet> parse(int n_tokens) {
    skip_ws();
    expect('[', "annotation list must start with '['");
    skip_ws();
    std::vector<GoldTriplet> out;
    if (peek() == ']') {
      ++pos_;
    } else {
      while (true) {
        out.push_back(parse_tuple(n_tokens));
        skip_ws();
        if (peek() == ',') {
          ++pos_;
          skip_ws();
          continue;
        }
        expect(']', "expected ',' or ']' in annotation list");
        break;
      }
    }
    skip_ws();
    if (pos_ != text_.size()) fail("trailing characters after annotation list");
    return out;
  }

 private:
  GoldTriplet parse_tuple(int n_tokens) {
    expect('(', "annotation must be a '(aspect, opinion, tag)' tuple");
    skip_ws();
    TokenSpan aspect = parse_index_list(n_tokens, "aspect");
    skip_ws();
    expect(',', "expected ',' after aspect index list");
    skip_ws();
    TokenSpan opinion = parse_index_list(n_tokens, "opinion");
    skip_ws();
    expect(',', "expected ',' after opinion index list");
    skip_ws();
    Sentiment sentiment = parse_tag();
    skip_ws();
    expect(')', "expected ')' closing annotation tuple");
    return GoldTriplet{aspect, opinion, sentiment};
  }

  TokenSpan parse_index_list(int n_tokens, const char* what) {
    expect('[', std::string(what) + " indices must be a bracketed list");
    skip_ws();
    std::vector<long> idx;
    while (true) {
      idx.push_back(parse_int());
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        skip_ws();
        continue;
      }
      expect(']', "expected ',' or ']' in index list");
      break;
    }
    for (size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] < 0 || idx[k] >= n_tokens) {
        fail(std::string(what) + " index " + std::to_string(idx[k]) +
             " out of range for sentence of " + std::to_string(n_tokens) + " tokens");
      }
      if (k > 0 && idx[k] != idx[k - 1] + 1) {
        fail(std::string(what) + " index list is not a contiguous ascending run");
      }
    }
    return TokenSpan{static_cast<int>(idx.front()), static_cast<int>(idx.back())};
  }

  long parse_int() {
    size_t begin = pos_;
    if (peek() == '-') ++pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ == begin || (text_[begin] == '-' && pos_ == begin + 1)) {
      fail("expected an integer index");
    }
    return std::stol(text_.substr(begin, pos_ - begin));
  }

  Sentiment parse_tag() {
    char quote = peek();
    if (quote != '\'' && quote != '"') fail("sentiment tag must be quoted");
    ++pos_;
    size_t begin = pos_;
    while (pos_ < text_.size() && text_[pos_] != quote) ++pos_;
    if (pos_ == text_.size()) fail("unterminated sentiment tag");
    std::string tag = text_.substr(begin, pos_ - begin);
    ++pos_;
    auto s = sentiment_from_tag(tag);
    if (!s) fail("unknown sentiment tag '" + tag + "' (expected POS, NEG or NEU)");
    return *s;
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void expect(char c, const std::string& msg) {
    if (peek() != c) fail(msg);
    ++pos_;
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    std::string where = line_no_ > 0 ? "line " + std::to_string(line_no_) + ": " : "";
    throw ParseError(where + msg + " (at annotation offset " + std::to_string(pos_) + ")");
  }

  const std::string& text_;
  int line_no_;
  size_t pos_ = 0;
};

}  // namespace detail

// Parses one "sentence####[(aspect_idx_list, opinion_idx_list, 'TAG'), ...]"
// line. Tokens are whitespace-split and lower-cased; index lists denote
// inclusive spans and must enumerate consecutive token indices.
inline AnnotatedSentence parse_line(const std::string& line, int line_no = 0,
                                    std::string id = "") {
  const std::string sep = "####";
  size_t cut = line.find(sep);
  std::string where = line_no > 0 ? "line " + std::to_string(line_no) + ": " : "";
  if (cut == std::string::npos) {
    throw ParseError(where + "missing '####' separator between sentence and annotations");
  }
  AnnotatedSentence out;
  out.id = id.empty() ? (line_no > 0 ? "s" + std::to_string(line_no) : "s0") : std::move(id);
  out.tokens = detail::split_whitespace(line.substr(0, cut));
  for (auto& t : out.tokens) t = detail::lowercase_ascii(t);
  if (out.tokens.empty()) throw ParseError(where + "sentence has no tokens");
  std::string ann = line.substr(cut + sep.size());
  detail::AnnotationScanner scanner(ann, line_no);
  out.triplets = scanner.parse(out.size());
  return out;
}

// Inverse of parse_line for well-formed sentences (canonical form:
// single-space joined tokens, fully enumerated index lists).
inline std::string serialize_line(const AnnotatedSentence& s) {
  std::ostringstream out;
  for (size_t i = 0; i < s.tokens.size(); ++i) {
    if (i) out << ' ';
    out << s.tokens[i];
  }
  out << "####[";
  for (size_t k = 0; k < s.triplets.size(); ++k) {
    const GoldTriplet& t = s.triplets[k];
    if (k) out << ", ";
    auto emit_span = [&out](TokenSpan span) {
      out << '[';
      for (int i = span.start; i <= span.end; ++i) {
        if (i != span.start) out << ", ";
        out << i;
      }
      out << ']';
    };
    out << '(';
    emit_span(t.aspect);
    out << ", ";
    emit_span(t.opinion);
    out << ", '" << sentiment_tag(t.sentiment) << "')";
  }
  out << ']';
  return out.str();
}

inline std::vector<Violation> validate(const AnnotatedSentence& s) {
  std::vector<Violation> out;
  if (s.tokens.empty()) {
    out.push_back({-1, "sentence-nonempty", "sentence has no tokens"});
  }
  for (size_t i = 0; i < s.tokens.size(); ++i) {
    const std::string& tok = s.tokens[i];
    bool bad = tok.empty();
    for (char c : tok) {
      if (std::isspace(static_cast<unsigned char>(c))) bad = true;
    }
    if (bad) {
      out.push_back({-1, "token-wellformed",
                     "token " + std::to_string(i) + " is empty or contains whitespace"});
    }
  }
  const int n = s.size();
  for (size_t k = 0; k < s.triplets.size(); ++k) {
    const GoldTriplet& t = s.triplets[k];
    for (const auto& [span, role] :
         {std::pair{t.aspect, "aspect"}, std::pair{t.opinion, "opinion"}}) {
      if (span.start > span.end) {
        out.push_back({static_cast<int>(k), "span-order",
                       std::string(role) + " span start " + std::to_string(span.start) +
                           " > end " + std::to_string(span.end)});
      }
      if (span.start < 0 || span.end >= n) {
        out.push_back({static_cast<int>(k), "span-range",
                       std::string(role) + " span [" + std::to_string(span.start) + "," +
                           std::to_string(span.end) + "] outside [0," + std::to_string(n) + ")"});
      }
    }
  }
  return out;
}

// Loads a dataset file: one sentence per non-blank line, order preserved.
// Sentence ids are "s<line>" with the 1-based physical line number.
inline DatasetSplit load_split(const std::string& path, SplitKind name) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);
  DatasetSplit split;
  split.name = name;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool blank = line.find_first_not_of(" \t") == std::string::npos;
    if (blank) continue;
    split.sentences.push_back(parse_line(line, line_no));
  }
  if (in.bad()) throw DataError("I/O error while reading: " + path);
  return split;
}

}  // namespace bmrc
