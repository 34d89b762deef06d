#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mdsum/corpus.hpp"
#include "mdsum/error.hpp"
#include "mdsum/tokenizer.hpp"

namespace mdsum {

using Embedding = std::vector<double>;

enum class EmbedderKind { hashed_tfidf, http_embed };

inline EmbedderKind parse_embedder_kind(std::string_view s) {
  if (s == "hashed_tfidf") return EmbedderKind::hashed_tfidf;
  if (s == "http_embed") return EmbedderKind::http_embed;
  throw config_error("unknown embedder kind '" + std::string(s) + "'");
}

inline std::string_view to_string(EmbedderKind k) {
  return k == EmbedderKind::hashed_tfidf ? "hashed_tfidf" : "http_embed";
}

struct EmbedderConfig {
  EmbedderKind kind = EmbedderKind::hashed_tfidf;
  std::size_t dims = 4096;
  std::optional<std::string> base_url;
  std::optional<std::string> model_name;
  std::optional<std::string> api_key_env;
  double timeout_seconds = 120.0;
  std::size_t max_retries = 3;

  void validate() const {
    if (kind == EmbedderKind::hashed_tfidf && dims < 64) throw config_error("embedder dims must be >= 64");
    if (kind == EmbedderKind::http_embed && (!base_url || !model_name)) {
      throw config_error("http_embed requires base_url and model_name");
    }
  }
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  // One batch per call; vectors are unit-normalized (or all-zero for texts
  // without any term).
  virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) const = 0;
};

// FNV-1a, stable across platforms and runs.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::size_t term_bucket(std::string_view term, std::size_t dims) {
  return static_cast<std::size_t>(fnv1a64(term) % dims);
}

// Lowercased maximal runs of ASCII alphanumerics (bytes >= 0x80 count as
// word characters so UTF-8 words stay whole).
inline std::vector<std::string> embedding_terms(std::string_view text) {
  std::vector<std::string> terms;
  std::string cur;
  for (unsigned char c : text) {
    const bool word = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
    if (word) {
      cur += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
    } else if (!cur.empty()) {
      terms.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) terms.push_back(std::move(cur));
  return terms;
}

inline void l2_normalize(Embedding& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm <= 0.0) return;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
}

inline double dot(const Embedding& a, const Embedding& b) {
  const std::size_t n = std::min(a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// Hashed tf-idf with document frequencies taken over the batch:
// weight(term) = tf * log(1 + N / df), accumulated into term_bucket(term).
class HashedTfidfEmbedder final : public Embedder {
 public:
  explicit HashedTfidfEmbedder(std::size_t dims = 4096) : dims_(dims) {
    if (dims_ < 64) throw config_error("embedder dims must be >= 64");
  }

  std::vector<Embedding> embed(const std::vector<std::string>& texts) const override {
    std::vector<std::unordered_map<std::string, std::size_t>> tfs(texts.size());
    std::unordered_map<std::string, std::size_t> df;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      for (auto& t : embedding_terms(texts[i])) ++tfs[i][std::move(t)];
      for (const auto& [term, _] : tfs[i]) ++df[term];
    }
    const double n = static_cast<double>(texts.size());
    std::vector<Embedding> out(texts.size(), Embedding(dims_, 0.0));
    for (std::size_t i = 0; i < texts.size(); ++i) {
      for (const auto& [term, tf] : tfs[i]) {
        const double idf = std::log(1.0 + n / static_cast<double>(df.at(term)));
        out[i][term_bucket(term, dims_)] += static_cast<double>(tf) * idf;
      }
      l2_normalize(out[i]);
    }
    return out;
  }

  std::size_t dims() const { return dims_; }

 private:
  std::size_t dims_;
};

struct ScoredDocument {
  std::string doc_id;
  double score = 0.0;
  std::size_t original_index = 0;
};

// Embeds the query together with every document (each capped at `doc_cap`
// tokens) in a single batch and sorts by cosine similarity, descending, with
// ties going to the earlier document.
inline std::vector<ScoredDocument> rank_documents(std::string_view query, const std::vector<Document>& docs,
                                                  const Embedder& embedder, const Tokenizer& tok,
                                                  std::size_t doc_cap) {
  if (docs.empty()) throw validation_error("rank_documents: no documents");
  std::vector<std::string> batch;
  batch.reserve(docs.size() + 1);
  batch.emplace_back(query);
  for (const auto& d : docs) batch.push_back(truncate_tokens(tok, d.text, doc_cap));
  const auto vecs = embedder.embed(batch);
  if (vecs.size() != batch.size()) {
    throw backend_error("embedder returned " + std::to_string(vecs.size()) + " vectors for " +
                        std::to_string(batch.size()) + " inputs");
  }
  std::vector<ScoredDocument> ranked;
  ranked.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    ranked.push_back({docs[i].id, dot(vecs[0], vecs[i + 1]), i});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const ScoredDocument& a, const ScoredDocument& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.original_index < b.original_index;
  });
  return ranked;
}

// Accepts a prefix of the ranking while the running token total stays within
// `input_cap` (stops at the first overflow, never skips), then restores the
// original document order. `docs` are expected to be capped already.
inline std::vector<Document> select_order_preserving(const std::vector<ScoredDocument>& ranked,
                                                     const std::vector<Document>& docs, std::size_t input_cap,
                                                     const Tokenizer& tok) {
  if (ranked.size() != docs.size()) throw validation_error("ranking does not cover every document");
  std::vector<std::size_t> accepted;
  std::size_t used = 0;
  for (const auto& r : ranked) {
    if (r.original_index >= docs.size()) throw validation_error("ranking refers to a missing document");
    const std::size_t n = count_tokens(tok, docs[r.original_index].text);
    if (used + n > input_cap) break;
    used += n;
    accepted.push_back(r.original_index);
  }
  if (accepted.empty()) {
    throw validation_error("retrieval selected no document: top-ranked document exceeds the input cap");
  }
  std::sort(accepted.begin(), accepted.end());
  std::vector<Document> out;
  out.reserve(accepted.size());
  for (auto i : accepted) out.push_back(docs[i]);
  return out;
}

}  // namespace mdsum
