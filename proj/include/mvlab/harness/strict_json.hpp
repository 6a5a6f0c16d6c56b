#pragma once

// Strict JSON ingestion: syntax errors, duplicate keys and unknown keys are
// reported with line and column of the offending token.

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mvlab/error.hpp"

namespace mvlab::harness {

using Json = nlohmann::json;

struct TextPosition {
  std::size_t line = 0;  // 1-based
  std::size_t column = 0;
};

inline std::string describe(const std::string& origin, const TextPosition& p) {
  return origin + ":" + std::to_string(p.line) + ":" + std::to_string(p.column);
}

// Key paths ("a.b[2].c") mapped to the position of the key (or array element).
struct JsonDocument {
  Json value;
  std::string origin;
  std::map<std::string, TextPosition> positions;

  std::string where(const std::string& path) const {
    auto it = positions.find(path);
    if (it == positions.end()) return origin;
    return describe(origin, it->second);
  }
};

namespace detail {

// Walks syntactically valid JSON text, recording the position of every key
// and array element and rejecting duplicate keys within one object.
class KeyScanner {
 public:
  KeyScanner(const std::string& text, std::string origin) : text_(text), origin_(std::move(origin)) {}

  std::map<std::string, TextPosition> run() {
    skip_ws();
    value("");
    return std::move(out_);
  }

 private:
  const std::string& text_;
  std::string origin_;
  std::size_t i_ = 0, line_ = 1, col_ = 1;
  std::map<std::string, TextPosition> out_;

  TextPosition here() const { return {line_, col_}; }
  void advance() {
    if (text_[i_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++i_;
  }
  void skip_ws() {
    while (i_ < text_.size() && (text_[i_] == ' ' || text_[i_] == '\t' || text_[i_] == '\n' || text_[i_] == '\r'))
      advance();
  }
  std::string string_token() {
    std::string s;
    advance();  // opening quote
    while (i_ < text_.size() && text_[i_] != '"') {
      if (text_[i_] == '\\') {
        s += text_[i_];
        advance();
      }
      s += text_[i_];
      advance();
    }
    advance();  // closing quote
    return s;
  }
  void value(const std::string& path) {
    if (i_ >= text_.size()) return;
    const char c = text_[i_];
    if (c == '{') {
      advance();
      std::set<std::string> seen;
      skip_ws();
      while (i_ < text_.size() && text_[i_] != '}') {
        const TextPosition pos = here();
        const std::string raw = string_token();
        const std::string key = Json::parse("\"" + raw + "\"").get<std::string>();
        const std::string child = path.empty() ? key : path + "." + key;
        if (!seen.insert(key).second)
          throw Error(ErrorKind::config, describe(origin_, pos) + ": duplicate key '" + child + "'");
        out_[child] = pos;
        skip_ws();
        advance();  // ':'
        skip_ws();
        value(child);
        skip_ws();
        if (i_ < text_.size() && text_[i_] == ',') advance();
        skip_ws();
      }
      advance();
    } else if (c == '[') {
      advance();
      skip_ws();
      std::size_t idx = 0;
      while (i_ < text_.size() && text_[i_] != ']') {
        const std::string child = path + "[" + std::to_string(idx++) + "]";
        out_[child] = here();
        value(child);
        skip_ws();
        if (i_ < text_.size() && text_[i_] == ',') advance();
        skip_ws();
      }
      advance();
    } else if (c == '"') {
      string_token();
    } else {
      while (i_ < text_.size() && std::string_view(",]} \t\r\n").find(text_[i_]) == std::string_view::npos) advance();
    }
  }
};

}  // namespace detail

inline JsonDocument parse_strict_json(const std::string& text, const std::string& origin) {
  JsonDocument doc;
  doc.origin = origin;
  try {
    doc.value = Json::parse(text);
  } catch (const Json::parse_error& e) {
    // nlohmann reports a byte offset; convert it to line/column.
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorKind::config, describe(origin, {line, col}) + ": malformed JSON (" + e.what() + ")");
  }
  doc.positions = detail::KeyScanner(text, origin).run();
  return doc;
}

// Rejects keys of `obj` (at `path`) outside `allowed`.
inline void require_known_keys(const JsonDocument& doc, const Json& obj, const std::string& path,
                               const std::set<std::string>& allowed) {
  if (!obj.is_object()) return;
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) {
      const std::string child = path.empty() ? it.key() : path + "." + it.key();
      throw Error(ErrorKind::config, doc.where(child) + ": unknown key '" + child + "'");
    }
}

}  // namespace mvlab::harness
