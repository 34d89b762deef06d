#pragma once

#include <chrono>
#include <compare>
#include <cstdio>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "mdsum/error.hpp"
#include "mdsum/words.hpp"

namespace mdsum {

// Calendar day. Time-of-day is never carried.
struct Date {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;

  auto operator<=>(const Date&) const = default;

  // Accepts "YYYY-MM-DD", optionally followed by a 'T' or ' ' and a time part
  // that is discarded.
  static std::optional<Date> parse(std::string_view s) {
    if (s.size() > 10 && (s[10] == 'T' || s[10] == ' ')) s = s.substr(0, 10);
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    auto digits = [&](std::size_t pos, std::size_t len, int& out) {
      out = 0;
      for (std::size_t i = pos; i < pos + len; ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        out = out * 10 + (s[i] - '0');
      }
      return true;
    };
    int y = 0, m = 0, d = 0;
    if (!digits(0, 4, y) || !digits(5, 2, m) || !digits(8, 2, d)) return std::nullopt;
    const std::chrono::year_month_day ymd{std::chrono::year{y},
                                          std::chrono::month{static_cast<unsigned>(m)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    return Date{y, static_cast<unsigned>(m), static_cast<unsigned>(d)};
  }

  std::string str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year, month, day);
    return buf;
  }
};

struct Document {
  std::string id;
  std::string text;
  std::optional<Date> timestamp;
  std::optional<std::string> source;

  bool operator==(const Document&) const = default;
};

struct Example {
  std::string id;
  std::optional<std::string> query;
  std::vector<Document> documents;
  std::vector<std::string> references;
  std::optional<std::vector<std::string>> acus;
  std::string dataset_tag;

  bool operator==(const Example&) const = default;
};

enum class Split { validation, test };

inline std::string_view to_string(Split s) { return s == Split::validation ? "validation" : "test"; }

inline Split parse_split(std::string_view s) {
  if (s == "validation" || s == "val" || s == "dev") return Split::validation;
  if (s == "test") return Split::test;
  throw config_error("unknown split '" + std::string(s) + "' (expected validation or test)");
}

struct Dataset {
  std::vector<Example> examples;
  Split split = Split::test;

  bool operator==(const Dataset&) const = default;
};

namespace detail {

inline bool blank(std::string_view s) {
  for (char c : s) {
    if (!is_space(c)) return false;
  }
  return true;
}

}  // namespace detail

// Throws validation_error on the first violated invariant.
inline void validate_example(const Example& ex) {
  if (ex.id.empty()) throw validation_error("example id must be non-empty");
  const std::string where = "example '" + ex.id + "': ";
  if (ex.documents.empty()) throw validation_error(where + "documents must be non-empty");
  if (ex.references.empty()) throw validation_error(where + "references must be non-empty");
  std::unordered_set<std::string_view> ids;
  for (const auto& doc : ex.documents) {
    if (doc.id.empty()) throw validation_error(where + "document id must be non-empty");
    if (!ids.insert(doc.id).second) {
      throw validation_error(where + "duplicate document id '" + doc.id + "'");
    }
    if (detail::blank(doc.text)) {
      throw validation_error(where + "document '" + doc.id + "' has empty text");
    }
  }
}

inline Example example_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw validation_error("example must be a JSON object");
  auto opt_string = [](const nlohmann::json& obj, const char* key) -> std::optional<std::string> {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw validation_error(std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
  };
  auto req_string = [&](const nlohmann::json& obj, const char* key) {
    auto v = opt_string(obj, key);
    if (!v) throw validation_error(std::string("missing field '") + key + "'");
    return *v;
  };

  Example ex;
  ex.id = req_string(j, "id");
  ex.query = opt_string(j, "query");
  ex.dataset_tag = opt_string(j, "dataset").value_or("");

  const auto docs = j.find("documents");
  if (docs == j.end() || !docs->is_array()) throw validation_error("field 'documents' must be an array");
  ex.documents.reserve(docs->size());
  for (const auto& d : *docs) {
    if (!d.is_object()) throw validation_error("document must be a JSON object");
    Document doc;
    doc.id = req_string(d, "id");
    doc.text = req_string(d, "text");
    if (auto date = opt_string(d, "date")) {
      doc.timestamp = Date::parse(*date);
      if (!doc.timestamp) throw validation_error("document '" + doc.id + "' has malformed date '" + *date + "'");
    }
    doc.source = opt_string(d, "source");
    ex.documents.push_back(std::move(doc));
  }

  const auto refs = j.find("references");
  if (refs == j.end() || !refs->is_array()) throw validation_error("field 'references' must be an array");
  for (const auto& r : *refs) {
    if (!r.is_string()) throw validation_error("references must be strings");
    ex.references.push_back(r.get<std::string>());
  }

  if (auto acus = j.find("acus"); acus != j.end() && !acus->is_null()) {
    if (!acus->is_array()) throw validation_error("field 'acus' must be an array or null");
    std::vector<std::string> units;
    for (const auto& a : *acus) {
      if (!a.is_string()) throw validation_error("acus must be strings");
      units.push_back(a.get<std::string>());
    }
    ex.acus = std::move(units);
  }

  validate_example(ex);
  return ex;
}

inline nlohmann::json to_json(const Example& ex) {
  nlohmann::json docs = nlohmann::json::array();
  for (const auto& d : ex.documents) {
    docs.push_back({{"id", d.id},
                    {"text", d.text},
                    {"date", d.timestamp ? nlohmann::json(d.timestamp->str()) : nlohmann::json(nullptr)},
                    {"source", d.source ? nlohmann::json(*d.source) : nlohmann::json(nullptr)}});
  }
  return {{"id", ex.id},
          {"query", ex.query ? nlohmann::json(*ex.query) : nlohmann::json(nullptr)},
          {"dataset", ex.dataset_tag},
          {"documents", std::move(docs)},
          {"references", ex.references},
          {"acus", ex.acus ? nlohmann::json(*ex.acus) : nlohmann::json(nullptr)}};
}

inline Dataset read_dataset(std::istream& in, Split split, const std::string& name = "<stream>") {
  Dataset ds;
  ds.split = split;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::blank(line)) continue;
    const std::string where = name + ":" + std::to_string(lineno) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw validation_error(where + "parse error: " + e.what());
    }
    Example ex;
    try {
      ex = example_from_json(j);
    } catch (const Error& e) {
      throw validation_error(where + e.what());
    }
    if (!seen.insert(ex.id).second) {
      throw validation_error(where + "duplicate example id '" + ex.id + "'");
    }
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

inline Dataset load_dataset(const std::string& path, Split split) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open dataset '" + path + "'");
  return read_dataset(in, split, path);
}

inline void write_dataset(std::ostream& out, const Dataset& ds) {
  for (const auto& ex : ds.examples) out << to_json(ex).dump() << '\n';
}

// Keeps at most `max_per_day` documents per calendar day, the earliest ones in
// dataset order. Relative order of survivors is unchanged.
inline Example cap_per_day(const Example& ex, std::size_t max_per_day) {
  if (max_per_day == 0) throw config_error("max_per_day must be at least 1");
  Example out = ex;
  out.documents.clear();
  std::map<Date, std::size_t> kept;
  for (const auto& doc : ex.documents) {
    if (!doc.timestamp) {
      throw validation_error("example '" + ex.id + "': document '" + doc.id + "' has no date");
    }
    if (kept[*doc.timestamp]++ < max_per_day) out.documents.push_back(doc);
  }
  return out;
}

struct DatasetStats {
  std::size_t examples = 0;
  double docs_per_example = 0.0;
  double avg_doc_words = 0.0;
  double avg_summary_words = 0.0;
};

// Means are taken over all documents and all references of the split.
inline DatasetStats dataset_stats(const Dataset& ds) {
  DatasetStats st;
  st.examples = ds.examples.size();
  std::size_t docs = 0, doc_words = 0, refs = 0, ref_words = 0;
  for (const auto& ex : ds.examples) {
    docs += ex.documents.size();
    for (const auto& d : ex.documents) doc_words += word_count(d.text);
    refs += ex.references.size();
    for (const auto& r : ex.references) ref_words += word_count(r);
  }
  if (st.examples) st.docs_per_example = static_cast<double>(docs) / static_cast<double>(st.examples);
  if (docs) st.avg_doc_words = static_cast<double>(doc_words) / static_cast<double>(docs);
  if (refs) st.avg_summary_words = static_cast<double>(ref_words) / static_cast<double>(refs);
  return st;
}

}  // namespace mdsum
