#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mdsum/backend.hpp"
#include "mdsum/budget.hpp"
#include "mdsum/corpus.hpp"
#include "mdsum/error.hpp"
#include "mdsum/retrieval.hpp"
#include "mdsum/tokenizer.hpp"

namespace mdsum {

enum class Strategy { full_context, hierarchical, incremental, retrieval };

inline constexpr Strategy kAllStrategies[] = {Strategy::full_context, Strategy::hierarchical,
                                              Strategy::incremental, Strategy::retrieval};

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::full_context: return "full_context";
    case Strategy::hierarchical: return "hierarchical";
    case Strategy::incremental: return "incremental";
    case Strategy::retrieval: return "retrieval";
  }
  return "unknown";
}

inline Strategy parse_strategy(std::string_view s) {
  for (auto st : kAllStrategies) {
    if (to_string(st) == s) return st;
  }
  throw config_error("unknown strategy '" + std::string(s) + "'");
}

enum class StageKind { doc_summary, merge, running, retrieved_block, final };

inline std::string_view to_string(StageKind k) {
  switch (k) {
    case StageKind::doc_summary: return "doc_summary";
    case StageKind::merge: return "merge";
    case StageKind::running: return "running";
    case StageKind::retrieved_block: return "retrieved_block";
    case StageKind::final: return "final";
  }
  return "unknown";
}

inline StageKind parse_stage_kind(std::string_view s) {
  for (auto k : {StageKind::doc_summary, StageKind::merge, StageKind::running, StageKind::retrieved_block,
                 StageKind::final}) {
    if (to_string(k) == s) return k;
  }
  throw validation_error("unknown stage kind '" + std::string(s) + "'");
}

struct StageLabel {
  StageKind kind = StageKind::final;
  std::size_t level = 0;
  std::size_t index = 0;

  bool operator==(const StageLabel&) const = default;

  std::string str() const {
    return std::string(to_string(kind)) + ":" + std::to_string(level) + ":" + std::to_string(index);
  }
};

struct StageOutput {
  StageLabel label;
  std::string text;
  std::size_t token_count = 0;
  // Context charged for the call that produced this stage: rendered prompt
  // tokens plus the completion limit. Zero for stages that are not calls.
  std::size_t prompt_tokens = 0;
  std::size_t max_tokens = 0;

  bool operator==(const StageOutput&) const = default;
};

struct SummaryTrace {
  Strategy strategy = Strategy::full_context;
  std::string example_id;
  std::string backend;
  std::vector<StageOutput> stages;
  std::string final;

  bool operator==(const SummaryTrace&) const = default;
};

// Per-call generation limits shared by every stage of a run.
struct Limits {
  std::string question{kDefaultQuestion};
  std::size_t num_words = 0;
  std::size_t max_tokens = 0;
  double temperature = 0.5;
};

inline Limits make_limits(const Example& ex, std::size_t num_words, const Tokenizer& tok, double temperature) {
  Limits lim;
  if (ex.query && !ex.query->empty()) lim.question = *ex.query;
  lim.num_words = num_words;
  lim.max_tokens = words_to_tokens(tok, num_words);
  lim.temperature = temperature;
  return lim;
}

// Raised when a strategy aborts; carries everything produced before the failure.
class StrategyError : public Error {
 public:
  StrategyError(ErrorKind kind, const std::string& what, SummaryTrace partial)
      : Error(kind, what), partial_(std::move(partial)) {}
  const SummaryTrace& partial() const noexcept { return partial_; }

 private:
  SummaryTrace partial_;
};

inline std::string join_lines(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += '\n';
    out += parts[i];
  }
  return out;
}

// Greedy left-to-right packing. A chunk's cost is the sum of its texts plus
// one token per joiner; a new chunk starts when the next text would push the
// cost past `chunk_tokens`. Texts longer than a chunk get a chunk of their own.
inline std::vector<std::vector<std::string>> pack_chunks(const std::vector<std::string>& texts,
                                                         std::size_t chunk_tokens, const Tokenizer& tok) {
  std::vector<std::vector<std::string>> chunks;
  std::size_t cost = 0;
  for (const auto& t : texts) {
    const std::size_t n = count_tokens(tok, t);
    if (!chunks.empty() && cost + 1 + n <= chunk_tokens) {
      cost += 1 + n;
      chunks.back().push_back(t);
    } else {
      chunks.push_back({t});
      cost = n;
    }
  }
  return chunks;
}

namespace detail {

class TraceBuilder {
 public:
  TraceBuilder(Strategy s, const BudgetedExample& ex, const Summarizer& be, const Limits& lim, const Tokenizer& tok)
      : be_(be), lim_(lim), tok_(tok) {
    trace_.strategy = s;
    trace_.example_id = ex.example.id;
  }

  std::string call(std::string block, StageLabel label) {
    SummarizeRequest req{std::move(block), lim_.question, lim_.num_words, lim_.max_tokens, lim_.temperature};
    std::string text;
    try {
      text = be_.summarize(req);
    } catch (const Error& e) {
      throw StrategyError(e.kind(), "example '" + trace_.example_id + "' (" + label.str() + "): " + e.what(),
                          trace_);
    } catch (const std::exception& e) {
      throw StrategyError(ErrorKind::backend,
                          "example '" + trace_.example_id + "' (" + label.str() + "): " + e.what(), trace_);
    }
    StageOutput st{label, text, count_tokens(tok_, text), count_tokens(tok_, render_prompt(req)), lim_.max_tokens};
    trace_.stages.push_back(std::move(st));
    if (label.kind == StageKind::final) trace_.final = text;
    return text;
  }

  void record(std::string text, StageLabel label) {
    const std::size_t n = count_tokens(tok_, text);
    trace_.stages.push_back({label, std::move(text), n, 0, 0});
  }

  SummaryTrace& trace() { return trace_; }

 private:
  const Summarizer& be_;
  const Limits& lim_;
  const Tokenizer& tok_;
  SummaryTrace trace_;
};

inline std::vector<std::string> document_texts(const BudgetedExample& ex) {
  std::vector<std::string> out;
  out.reserve(ex.example.documents.size());
  for (const auto& d : ex.example.documents) out.push_back(d.text);
  return out;
}

}  // namespace detail

// One call over every retained document.
inline SummaryTrace run_full_context(const BudgetedExample& ex, const Summarizer& be, const BudgetConfig&,
                                     const Limits& lim, const Tokenizer& tok) {
  detail::TraceBuilder tb(Strategy::full_context, ex, be, lim, tok);
  tb.call(join_lines(detail::document_texts(ex)), {StageKind::final, 0, 0});
  return std::move(tb.trace());
}

// Summarize each document, then merge packed chunks of summaries level by
// level until a level produces a single output.
inline SummaryTrace run_hierarchical(const BudgetedExample& ex, const Summarizer& be, const BudgetConfig& cfg,
                                     const Limits& lim, const Tokenizer& tok) {
  detail::TraceBuilder tb(Strategy::hierarchical, ex, be, lim, tok);
  const auto docs = detail::document_texts(ex);
  const bool single = docs.size() == 1;

  std::vector<std::string> level_out;
  level_out.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const StageLabel label = single ? StageLabel{StageKind::final, 0, 0} : StageLabel{StageKind::doc_summary, 0, i};
    level_out.push_back(tb.call(truncate_tokens(tok, docs[i], cfg.chunk_tokens), label));
  }

  std::size_t level = 0;
  while (level_out.size() > 1) {
    ++level;
    std::vector<std::string> clamped;
    clamped.reserve(level_out.size());
    for (const auto& s : level_out) clamped.push_back(truncate_tokens(tok, s, cfg.chunk_tokens));
    const auto chunks = pack_chunks(clamped, cfg.chunk_tokens, tok);
    if (chunks.size() == level_out.size()) {
      throw StrategyError(ErrorKind::config,
                          "example '" + ex.example.id + "': chunk_tokens " + std::to_string(cfg.chunk_tokens) +
                              " cannot hold two summaries; hierarchical merging would not terminate",
                          tb.trace());
    }
    std::vector<std::string> next;
    next.reserve(chunks.size());
    for (std::size_t j = 0; j < chunks.size(); ++j) {
      const StageLabel label =
          chunks.size() == 1 ? StageLabel{StageKind::final, level, 0} : StageLabel{StageKind::merge, level, j};
      next.push_back(tb.call(join_lines(chunks[j]), label));
    }
    level_out = std::move(next);
  }
  return std::move(tb.trace());
}

// Running summary over documents in dataset order.
inline SummaryTrace run_incremental(const BudgetedExample& ex, const Summarizer& be, const BudgetConfig& cfg,
                                    const Limits& lim, const Tokenizer& tok) {
  detail::TraceBuilder tb(Strategy::incremental, ex, be, lim, tok);
  const auto docs = detail::document_texts(ex);
  std::string running;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    std::string doc = truncate_tokens(tok, docs[i], cfg.chunk_tokens);
    std::string block = i == 0 ? std::move(doc) : running + '\n' + doc;
    const StageLabel label =
        i + 1 == docs.size() ? StageLabel{StageKind::final, 0, i} : StageLabel{StageKind::running, 0, i};
    running = tb.call(std::move(block), label);
  }
  return std::move(tb.trace());
}

// Rank, take a rank prefix within the retrieval cap, restore document order,
// and summarize the concatenation.
inline SummaryTrace run_retrieval(const BudgetedExample& ex, const Summarizer& be, const BudgetConfig& cfg,
                                  const Limits& lim, const Tokenizer& tok, const Embedder& emb) {
  detail::TraceBuilder tb(Strategy::retrieval, ex, be, lim, tok);
  std::vector<Document> capped = ex.example.documents;
  for (auto& d : capped) d.text = truncate_tokens(tok, d.text, cfg.retrieval_doc_cap);

  std::vector<Document> selected;
  try {
    const auto ranked = rank_documents(lim.question, capped, emb, tok, cfg.retrieval_doc_cap);
    selected = select_order_preserving(ranked, capped, cfg.retrieval_input_cap, tok);
  } catch (const Error& e) {
    throw StrategyError(e.kind(), "example '" + ex.example.id + "': " + e.what(), tb.trace());
  }
  std::vector<std::string> texts;
  texts.reserve(selected.size());
  for (const auto& d : selected) texts.push_back(d.text);
  std::string block = join_lines(texts);
  tb.record(block, {StageKind::retrieved_block, 0, 0});
  tb.call(std::move(block), {StageKind::final, 0, 0});
  return std::move(tb.trace());
}

inline SummaryTrace run_strategy(Strategy s, const BudgetedExample& ex, const Summarizer& be,
                                 const BudgetConfig& cfg, const Limits& lim, const Tokenizer& tok,
                                 const Embedder& emb) {
  switch (s) {
    case Strategy::full_context: return run_full_context(ex, be, cfg, lim, tok);
    case Strategy::hierarchical: return run_hierarchical(ex, be, cfg, lim, tok);
    case Strategy::incremental: return run_incremental(ex, be, cfg, lim, tok);
    case Strategy::retrieval: return run_retrieval(ex, be, cfg, lim, tok, emb);
  }
  throw config_error("unknown strategy");
}

inline nlohmann::json to_json(const SummaryTrace& t) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : t.stages) {
    stages.push_back({{"kind", to_string(s.label.kind)},
                      {"level", s.label.level},
                      {"index", s.label.index},
                      {"text", s.text},
                      {"token_count", s.token_count},
                      {"prompt_tokens", s.prompt_tokens},
                      {"max_tokens", s.max_tokens}});
  }
  return {{"strategy", to_string(t.strategy)},
          {"example_id", t.example_id},
          {"backend", t.backend},
          {"stages", std::move(stages)},
          {"final", t.final}};
}

inline SummaryTrace trace_from_json(const nlohmann::json& j) {
  try {
    SummaryTrace t;
    t.strategy = parse_strategy(j.at("strategy").get<std::string>());
    t.example_id = j.at("example_id").get<std::string>();
    t.backend = j.value("backend", "");
    for (const auto& s : j.at("stages")) {
      StageOutput st;
      st.label.kind = parse_stage_kind(s.at("kind").get<std::string>());
      st.label.level = s.at("level").get<std::size_t>();
      st.label.index = s.at("index").get<std::size_t>();
      st.text = s.at("text").get<std::string>();
      st.token_count = s.at("token_count").get<std::size_t>();
      st.prompt_tokens = s.value("prompt_tokens", std::size_t{0});
      st.max_tokens = s.value("max_tokens", std::size_t{0});
      t.stages.push_back(std::move(st));
    }
    t.final = j.at("final").get<std::string>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw validation_error(std::string("malformed trace: ") + e.what());
  }
}

}  // namespace mdsum
