#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mdsum/error.hpp"
#include "mdsum/strategies.hpp"
#include "mdsum/words.hpp"

namespace mdsum {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  static PRF from(double p, double r) { return {p, r, p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0}; }
  static PRF from_counts(std::size_t hits, std::size_t cand_total, std::size_t ref_total) {
    if (cand_total == 0 || ref_total == 0) return {};
    return from(static_cast<double>(hits) / static_cast<double>(cand_total),
                static_cast<double>(hits) / static_cast<double>(ref_total));
  }
};

struct EvalScores {
  PRF rouge1, rouge2, rougeL, rougeLsum;
  std::optional<double> acu_recall;
  std::size_t summary_words = 0;
};

using Tokens = std::vector<std::string>;

namespace detail {

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(const Tokens& toks, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                      toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Reference positions of one LCS of (ref, cand), recovered by the usual
// backtrack that prefers stepping back in the reference on ties.
inline std::vector<std::size_t> lcs_reference_positions(const Tokens& ref, const Tokens& cand) {
  const std::size_t m = ref.size(), n = cand.size();
  std::vector<std::vector<std::size_t>> t(m + 1, std::vector<std::size_t>(n + 1, 0));
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      t[i][j] = ref[i - 1] == cand[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
    }
  }
  std::vector<std::size_t> pos;
  std::size_t i = m, j = n;
  while (i > 0 && j > 0) {
    if (ref[i - 1] == cand[j - 1]) {
      pos.push_back(i - 1);
      --i;
      --j;
    } else if (t[i][j - 1] > t[i - 1][j]) {
      --j;
    } else {
      --i;
    }
  }
  std::reverse(pos.begin(), pos.end());
  return pos;
}

}  // namespace detail

// Splits on newlines and on a period followed by a space; the period stays
// with the sentence it ends. Blank pieces are dropped.
inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    bool blank = true;
    for (char c : cur) blank = blank && detail::is_space(c);
    if (!blank) out.push_back(cur);
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      flush();
    } else if (c == '.' && i + 1 < text.size() && text[i + 1] == ' ') {
      cur += c;
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

inline PRF rouge_n(const Tokens& cand, const Tokens& ref, std::size_t n) {
  const auto c = detail::ngram_counts(cand, n);
  const auto r = detail::ngram_counts(ref, n);
  std::size_t cand_total = 0, ref_total = 0, overlap = 0;
  for (const auto& [g, k] : c) cand_total += k;
  for (const auto& [g, k] : r) {
    ref_total += k;
    if (auto it = c.find(g); it != c.end()) overlap += std::min(k, it->second);
  }
  return PRF::from_counts(overlap, cand_total, ref_total);
}

inline PRF rouge_n(std::string_view candidate, std::string_view reference, std::size_t n) {
  if (n != 1 && n != 2) throw config_error("rouge_n supports n = 1 or 2");
  return rouge_n(word_tokenize(candidate), word_tokenize(reference), n);
}

inline PRF rouge_l(std::string_view candidate, std::string_view reference) {
  const auto c = word_tokenize(candidate);
  const auto r = word_tokenize(reference);
  return PRF::from_counts(detail::lcs_length(c, r), c.size(), r.size());
}

// Summary-level LCS: for each reference sentence, the union of its LCS
// positions against every candidate sentence; hits are clipped by the token
// counts available on both sides.
inline PRF rouge_lsum(std::string_view candidate, std::string_view reference) {
  std::vector<Tokens> cand_sents, ref_sents;
  for (const auto& s : split_sentences(candidate)) cand_sents.push_back(word_tokenize(s));
  for (const auto& s : split_sentences(reference)) ref_sents.push_back(word_tokenize(s));

  std::unordered_map<std::string, std::size_t> cand_left, ref_left;
  std::size_t cand_total = 0, ref_total = 0;
  for (const auto& s : cand_sents) {
    for (const auto& t : s) ++cand_left[t], ++cand_total;
  }
  for (const auto& s : ref_sents) {
    for (const auto& t : s) ++ref_left[t], ++ref_total;
  }

  std::size_t hits = 0;
  for (const auto& rs : ref_sents) {
    std::set<std::size_t> uni;
    for (const auto& cs : cand_sents) {
      for (auto p : detail::lcs_reference_positions(rs, cs)) uni.insert(p);
    }
    for (auto p : uni) {
      const auto& tok = rs[p];
      auto rc = ref_left.find(tok);
      auto cc = cand_left.find(tok);
      if (rc != ref_left.end() && cc != cand_left.end() && rc->second > 0 && cc->second > 0) {
        ++hits;
        --rc->second;
        --cc->second;
      }
    }
  }
  return PRF::from_counts(hits, cand_total, ref_total);
}

// Content-unit overlap: a unit counts as covered when at least `theta` of its
// distinct words appear in the candidate.
inline double acu_recall(std::string_view candidate, const std::vector<std::string>& acus, double theta = 0.7) {
  if (acus.empty()) return 0.0;
  std::unordered_set<std::string> cand;
  for (auto& t : word_tokenize(candidate)) cand.insert(std::move(t));
  std::size_t matched = 0;
  for (const auto& acu : acus) {
    std::unordered_set<std::string> unit;
    for (auto& t : word_tokenize(acu)) unit.insert(std::move(t));
    if (unit.empty()) continue;
    std::size_t shared = 0;
    for (const auto& t : unit) shared += cand.count(t);
    if (static_cast<double>(shared) >= theta * static_cast<double>(unit.size())) ++matched;
  }
  return static_cast<double>(matched) / static_cast<double>(acus.size());
}

// Per metric, the reference giving the highest F1 (first one on ties).
inline EvalScores score_summary(std::string_view candidate, const std::vector<std::string>& references,
                                const std::optional<std::vector<std::string>>& acus, double theta = 0.7) {
  if (references.empty()) throw validation_error("score_summary: no references");
  EvalScores s;
  bool first = true;
  auto keep = [&](PRF& best, const PRF& v) {
    if (first || v.f1 > best.f1) best = v;
  };
  const auto cand_tokens = word_tokenize(candidate);
  for (const auto& ref : references) {
    const auto ref_tokens = word_tokenize(ref);
    keep(s.rouge1, rouge_n(cand_tokens, ref_tokens, 1));
    keep(s.rouge2, rouge_n(cand_tokens, ref_tokens, 2));
    keep(s.rougeL, PRF::from_counts(detail::lcs_length(cand_tokens, ref_tokens), cand_tokens.size(),
                                    ref_tokens.size()));
    keep(s.rougeLsum, rouge_lsum(candidate, ref));
    first = false;
  }
  if (acus && !acus->empty()) s.acu_recall = acu_recall(candidate, *acus, theta);
  s.summary_words = cand_tokens.size();
  return s;
}

inline EvalScores score_example(const SummaryTrace& trace, const std::vector<std::string>& references,
                                const std::optional<std::vector<std::string>>& acus, double theta = 0.7) {
  return score_summary(trace.final, references, acus, theta);
}

enum class RecallMetric { acu, rouge1_recall };

inline std::string_view to_string(RecallMetric m) { return m == RecallMetric::acu ? "acu" : "rouge1_recall"; }

inline RecallMetric parse_recall_metric(std::string_view s) {
  if (s == "acu") return RecallMetric::acu;
  if (s == "rouge1_recall") return RecallMetric::rouge1_recall;
  throw config_error("unknown recall metric '" + std::string(s) + "'");
}

struct RetentionReport {
  double final_recall = 0.0;
  double best_intermediate_recall = 0.0;
  std::string best_stage;  // empty when the trace has no intermediate output
  std::size_t best_stage_words = 0;
};

struct IntermediateOutput {
  std::string label;
  std::string text;
};

// The intermediate outputs whose recall is compared with the final summary.
// Hierarchical summaries are taken a level at a time (all summaries of one
// level together form what is handed to the next level); running summaries
// and the retrieved block are taken one stage at a time.
inline std::vector<IntermediateOutput> intermediate_outputs(const SummaryTrace& trace) {
  std::vector<IntermediateOutput> out;
  std::map<std::size_t, std::size_t> level_slot;
  for (const auto& st : trace.stages) {
    const auto kind = st.label.kind;
    if (kind == StageKind::final) continue;
    if (kind == StageKind::doc_summary || kind == StageKind::merge) {
      auto [it, fresh] = level_slot.try_emplace(st.label.level, out.size());
      if (fresh) {
        out.push_back({std::string(to_string(kind)) + ":" + std::to_string(st.label.level) + ":*", st.text});
      } else {
        out[it->second].text += '\n';
        out[it->second].text += st.text;
      }
    } else {
      out.push_back({st.label.str(), st.text});
    }
  }
  return out;
}

inline double recall_of(std::string_view text, const std::vector<std::string>& references,
                        const std::optional<std::vector<std::string>>& acus, RecallMetric metric, double theta) {
  if (metric == RecallMetric::acu) {
    if (!acus || acus->empty()) throw validation_error("acu recall requested but the example has no acus");
    return acu_recall(text, *acus, theta);
  }
  const auto cand = word_tokenize(text);
  double best = 0.0;
  for (const auto& r : references) best = std::max(best, rouge_n(cand, word_tokenize(r), 1).recall);
  return best;
}

inline RetentionReport retention_analysis(const SummaryTrace& trace, const std::vector<std::string>& references,
                                          const std::optional<std::vector<std::string>>& acus,
                                          RecallMetric metric, double theta = 0.7) {
  RetentionReport rep;
  rep.final_recall = recall_of(trace.final, references, acus, metric, theta);
  bool any = false;
  for (const auto& io : intermediate_outputs(trace)) {
    const double r = recall_of(io.text, references, acus, metric, theta);
    if (!any || r > rep.best_intermediate_recall) {
      rep.best_intermediate_recall = r;
      rep.best_stage = io.label;
      rep.best_stage_words = word_count(io.text);
      any = true;
    }
  }
  return rep;
}

// Nearest-rank 80th percentile of the word counts: the ceil(0.8 n)-th
// smallest value.
inline std::size_t summary_word_limit(const std::vector<std::string>& summaries) {
  if (summaries.empty()) throw validation_error("summary_word_limit: no summaries");
  std::vector<std::size_t> counts;
  counts.reserve(summaries.size());
  for (const auto& s : summaries) counts.push_back(word_count(s));
  std::sort(counts.begin(), counts.end());
  const std::size_t rank = (4 * counts.size() + 4) / 5;
  return counts[rank - 1];
}

}  // namespace mdsum
