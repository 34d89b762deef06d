#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mdsum/backend.hpp"
#include "mdsum/budget.hpp"
#include "mdsum/corpus.hpp"
#include "mdsum/error.hpp"
#include "mdsum/retrieval.hpp"
#include "mdsum/strategies.hpp"
#include "mdsum/tokenizer.hpp"

namespace mdsum {

// Values of the flat TOML subset used by run configs: strings, integers,
// reals, booleans and single-line arrays of those, grouped by [section].
struct ConfigValue;
using ConfigArray = std::vector<ConfigValue>;
struct ConfigValue {
  std::variant<std::string, std::int64_t, double, bool, ConfigArray> v;
};

class ConfigTable {
 public:
  static ConfigTable parse(std::string_view text, const std::string& origin = "<config>") {
    ConfigTable t;
    std::string section;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto nl = text.find('\n', pos);
      std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
      ++lineno;
      Cursor c{line, 0, origin + ":" + std::to_string(lineno)};
      c.skip_ws();
      if (c.done() || c.peek() == '#') continue;
      if (c.peek() == '[') {
        ++c.i;
        section = c.bare_key();
        c.skip_ws();
        c.expect(']');
        c.finish();
        continue;
      }
      std::string key = c.bare_key();
      c.skip_ws();
      c.expect('=');
      c.skip_ws();
      ConfigValue val = c.value();
      c.finish();
      const std::string full = section.empty() ? key : section + "." + key;
      if (!t.values_.emplace(full, std::move(val)).second) {
        throw config_error(c.where + ": duplicate key '" + full + "'");
      }
    }
    return t;
  }

  static ConfigTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::optional<std::string> str(const std::string& key) const { return get<std::string>(key, "a string"); }
  std::optional<bool> boolean(const std::string& key) const { return get<bool>(key, "a boolean"); }

  std::optional<std::int64_t> integer(const std::string& key) const { return get<std::int64_t>(key, "an integer"); }

  std::optional<std::size_t> count(const std::string& key) const {
    auto v = integer(key);
    if (v && *v < 0) throw config_error("key '" + key + "' must be non-negative");
    return v ? std::optional<std::size_t>(static_cast<std::size_t>(*v)) : std::nullopt;
  }

  std::optional<double> real(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    if (auto* d = std::get_if<double>(&it->second.v)) return *d;
    if (auto* i = std::get_if<std::int64_t>(&it->second.v)) return static_cast<double>(*i);
    throw config_error("key '" + key + "' must be a number");
  }

  std::optional<std::vector<std::string>> strings(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    if (auto* s = std::get_if<std::string>(&it->second.v)) return std::vector<std::string>{*s};
    auto* arr = std::get_if<ConfigArray>(&it->second.v);
    if (!arr) throw config_error("key '" + key + "' must be an array of strings");
    std::vector<std::string> out;
    for (const auto& e : *arr) {
      auto* s = std::get_if<std::string>(&e.v);
      if (!s) throw config_error("key '" + key + "' must be an array of strings");
      out.push_back(*s);
    }
    return out;
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> k;
    for (const auto& [key, _] : values_) k.push_back(key);
    return k;
  }

 private:
  template <class T>
  std::optional<T> get(const std::string& key, const char* what) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    if (auto* p = std::get_if<T>(&it->second.v)) return *p;
    throw config_error("key '" + key + "' must be " + what);
  }

  struct Cursor {
    std::string_view s;
    std::size_t i;
    std::string where;

    bool done() const { return i >= s.size(); }
    char peek() const { return s[i]; }
    void skip_ws() {
      while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    }
    [[noreturn]] void fail(const std::string& msg) const { throw config_error(where + ": " + msg); }
    void expect(char ch) {
      if (done() || s[i] != ch) fail(std::string("expected '") + ch + "'");
      ++i;
    }
    void finish() {
      skip_ws();
      if (!done() && s[i] != '#') fail("unexpected trailing characters");
    }
    std::string bare_key() {
      const std::size_t start = i;
      while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_' || s[i] == '-' ||
                              s[i] == '.')) {
        ++i;
      }
      if (i == start) fail("expected a key");
      return std::string(s.substr(start, i - start));
    }
    ConfigValue value() {
      if (done()) fail("missing value");
      const char ch = s[i];
      if (ch == '"') return {quoted()};
      if (ch == '[') {
        ++i;
        ConfigArray arr;
        skip_ws();
        while (!done() && s[i] != ']') {
          arr.push_back(value());
          skip_ws();
          if (!done() && s[i] == ',') {
            ++i;
            skip_ws();
          }
        }
        expect(']');
        return {std::move(arr)};
      }
      const std::size_t start = i;
      while (i < s.size() && s[i] != ',' && s[i] != ']' && s[i] != '#' && s[i] != ' ' && s[i] != '\t' &&
             s[i] != '\r') {
        ++i;
      }
      const std::string tok(s.substr(start, i - start));
      if (tok == "true") return {true};
      if (tok == "false") return {false};
      std::string digits;
      for (char d : tok) {
        if (d != '_') digits += d;
      }
      try {
        std::size_t used = 0;
        if (digits.find_first_of(".eE") == std::string::npos) {
          const long long v = std::stoll(digits, &used);
          if (used == digits.size()) return {static_cast<std::int64_t>(v)};
        } else {
          const double v = std::stod(digits, &used);
          if (used == digits.size()) return {v};
        }
      } catch (const std::logic_error&) {
      }
      fail("cannot parse value '" + tok + "'");
    }
    std::string quoted() {
      ++i;
      std::string out;
      while (i < s.size() && s[i] != '"') {
        if (s[i] == '\\' && i + 1 < s.size()) {
          ++i;
          switch (s[i]) {
            case 'n': out += '\n'; break;
            case 't': out += '\t'; break;
            case '"': out += '"'; break;
            case '\\': out += '\\'; break;
            default: fail("unsupported escape");
          }
        } else {
          out += s[i];
        }
        ++i;
      }
      expect('"');
      return out;
    }
  };

  std::map<std::string, ConfigValue> values_;
};

struct RunConfig {
  std::string dataset_path;
  Split split = Split::test;
  std::optional<std::string> validation_path;
  std::vector<Strategy> strategies{std::begin(kAllStrategies), std::end(kAllStrategies)};
  BackendConfig backend;
  EmbedderConfig embedder;
  BudgetConfig budget;
  Tokenizer tokenizer;
  std::optional<std::size_t> num_words;
  std::optional<std::size_t> max_per_day;
  std::size_t workers = 1;
  std::string output_dir = "runs";

  void validate() const {
    if (dataset_path.empty()) throw config_error("dataset path is required");
    if (strategies.empty()) throw config_error("at least one strategy is required");
    if (workers < 1) throw config_error("workers must be at least 1");
    if (max_per_day && *max_per_day < 1) throw config_error("max_per_day must be at least 1");
    if (num_words && *num_words < 1) throw config_error("num_words must be at least 1");
    if (!num_words && !validation_path) {
      throw config_error("set num_words or a validation split to derive it from");
    }
    backend.validate();
    embedder.validate();
    budget.validate();
    tokenizer.validate();
  }
};

namespace detail {

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
  const std::filesystem::path path(p);
  if (path.is_absolute()) return p;
  return std::filesystem::absolute(base / path).lexically_normal().string();
}

// Shortest round-trip form, always with a decimal point.
inline std::string real(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, r.ptr);
  if (s.find_first_of(".einn") == std::string::npos) s += ".0";
  return s;
}

inline std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

}  // namespace detail

// Builds a RunConfig from a parsed table. Relative paths are taken relative to
// `base_dir` (normally the directory holding the config file).
inline RunConfig run_config_from_table(const ConfigTable& t, const std::filesystem::path& base_dir = {}) {
  static const char* const known[] = {
      "dataset", "split", "validation", "strategies", "num_words", "workers", "output_dir", "max_per_day",
      "backend.kind", "backend.name", "backend.base_url", "backend.model_name", "backend.api_key_env",
      "backend.timeout", "backend.max_retries", "backend.max_in_flight", "backend.marker_capacity",
      "embedder.kind", "embedder.dims", "embedder.base_url", "embedder.model_name", "embedder.api_key_env",
      "embedder.timeout", "embedder.max_retries",
      "budget.max_input_tokens", "budget.min_doc_tokens", "budget.retrieval_doc_cap",
      "budget.retrieval_input_cap", "budget.chunk_tokens", "budget.temperature", "budget.timeline_mode",
      "tokenizer.name", "tokenizer.ratio"};
  for (const auto& k : t.keys()) {
    bool ok = false;
    for (const char* kn : known) ok = ok || k == kn;
    if (!ok) throw config_error("unknown config key '" + k + "'");
  }

  RunConfig c;
  if (auto v = t.str("dataset")) c.dataset_path = detail::resolve_path(*v, base_dir);
  if (auto v = t.str("split")) c.split = parse_split(*v);
  if (auto v = t.str("validation")) c.validation_path = detail::resolve_path(*v, base_dir);
  if (auto v = t.strings("strategies")) {
    c.strategies.clear();
    for (const auto& s : *v) c.strategies.push_back(parse_strategy(s));
  }
  c.num_words = t.count("num_words");
  c.max_per_day = t.count("max_per_day");
  if (auto v = t.count("workers")) c.workers = *v;
  if (auto v = t.str("output_dir")) c.output_dir = detail::resolve_path(*v, base_dir);

  if (auto v = t.str("backend.kind")) c.backend.kind = parse_backend_kind(*v);
  if (auto v = t.str("backend.name")) c.backend.name = *v;
  c.backend.base_url = t.str("backend.base_url");
  c.backend.model_name = t.str("backend.model_name");
  c.backend.api_key_env = t.str("backend.api_key_env");
  if (auto v = t.real("backend.timeout")) c.backend.timeout_seconds = *v;
  if (auto v = t.count("backend.max_retries")) c.backend.max_retries = *v;
  if (auto v = t.count("backend.max_in_flight")) c.backend.max_in_flight = *v;
  c.backend.marker_capacity = t.count("backend.marker_capacity");

  if (auto v = t.str("embedder.kind")) c.embedder.kind = parse_embedder_kind(*v);
  if (auto v = t.count("embedder.dims")) c.embedder.dims = *v;
  c.embedder.base_url = t.str("embedder.base_url");
  c.embedder.model_name = t.str("embedder.model_name");
  c.embedder.api_key_env = t.str("embedder.api_key_env");
  if (auto v = t.real("embedder.timeout")) c.embedder.timeout_seconds = *v;
  if (auto v = t.count("embedder.max_retries")) c.embedder.max_retries = *v;

  if (auto v = t.count("budget.max_input_tokens")) c.budget.max_input_tokens = *v;
  if (auto v = t.count("budget.min_doc_tokens")) c.budget.min_doc_tokens = *v;
  if (auto v = t.count("budget.retrieval_doc_cap")) c.budget.retrieval_doc_cap = *v;
  if (auto v = t.count("budget.retrieval_input_cap")) c.budget.retrieval_input_cap = *v;
  if (auto v = t.count("budget.chunk_tokens")) c.budget.chunk_tokens = *v;
  if (auto v = t.real("budget.temperature")) c.budget.temperature = *v;
  if (auto v = t.boolean("budget.timeline_mode")) c.budget.timeline_mode = *v;

  if (auto v = t.str("tokenizer.name")) c.tokenizer.name = *v;
  if (auto v = t.real("tokenizer.ratio")) c.tokenizer.ratio = *v;
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  const auto table = ConfigTable::load(path);
  return run_config_from_table(table, std::filesystem::path(path).parent_path());
}

// Fully resolved config in the same format it is read from.
inline std::string dump_run_config(const RunConfig& c) {
  std::ostringstream o;
  o << "dataset = " << detail::quote(c.dataset_path) << '\n'
    << "split = " << detail::quote(to_string(c.split)) << '\n';
  if (c.validation_path) o << "validation = " << detail::quote(*c.validation_path) << '\n';
  o << "strategies = [";
  for (std::size_t i = 0; i < c.strategies.size(); ++i) o << (i ? ", " : "") << detail::quote(to_string(c.strategies[i]));
  o << "]\n";
  if (c.num_words) o << "num_words = " << *c.num_words << '\n';
  if (c.max_per_day) o << "max_per_day = " << *c.max_per_day << '\n';
  o << "workers = " << c.workers << '\n' << "output_dir = " << detail::quote(c.output_dir) << "\n\n";

  o << "[backend]\nkind = " << detail::quote(to_string(c.backend.kind)) << '\n'
    << "name = " << detail::quote(c.backend.label()) << '\n';
  if (c.backend.base_url) o << "base_url = " << detail::quote(*c.backend.base_url) << '\n';
  if (c.backend.model_name) o << "model_name = " << detail::quote(*c.backend.model_name) << '\n';
  if (c.backend.api_key_env) o << "api_key_env = " << detail::quote(*c.backend.api_key_env) << '\n';
  o << "timeout = " << detail::real(c.backend.timeout_seconds) << '\n'
    << "max_retries = " << c.backend.max_retries << '\n'
    << "max_in_flight = " << c.backend.max_in_flight << '\n';
  if (c.backend.marker_capacity) o << "marker_capacity = " << *c.backend.marker_capacity << '\n';

  o << "\n[embedder]\nkind = " << detail::quote(to_string(c.embedder.kind)) << '\n'
    << "dims = " << c.embedder.dims << '\n';
  if (c.embedder.base_url) o << "base_url = " << detail::quote(*c.embedder.base_url) << '\n';
  if (c.embedder.model_name) o << "model_name = " << detail::quote(*c.embedder.model_name) << '\n';
  if (c.embedder.api_key_env) o << "api_key_env = " << detail::quote(*c.embedder.api_key_env) << '\n';
  o << "timeout = " << detail::real(c.embedder.timeout_seconds) << '\n'
    << "max_retries = " << c.embedder.max_retries << '\n';

  o << "\n[budget]\n"
    << "max_input_tokens = " << c.budget.max_input_tokens << '\n'
    << "min_doc_tokens = " << c.budget.min_doc_tokens << '\n'
    << "retrieval_doc_cap = " << c.budget.retrieval_doc_cap << '\n'
    << "retrieval_input_cap = " << c.budget.retrieval_input_cap << '\n'
    << "chunk_tokens = " << c.budget.chunk_tokens << '\n'
    << "temperature = " << detail::real(c.budget.temperature) << '\n'
    << "timeline_mode = " << (c.budget.timeline_mode ? "true" : "false") << '\n';

  o << "\n[tokenizer]\nname = " << detail::quote(c.tokenizer.name) << '\n'
    << "ratio = " << detail::real(c.tokenizer.ratio) << '\n';
  return o.str();
}

}  // namespace mdsum
