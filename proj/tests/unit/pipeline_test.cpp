#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "mdsum/backend.hpp"
#include "mdsum/budget.hpp"
#include "mdsum/retrieval.hpp"
#include "mdsum/strategies.hpp"
#include "support.hpp"

using namespace mdsum;
using testing_support::make_example;
using testing_support::words;

namespace {

// Wraps a summarizer and records every request it sees.
class Recording final : public Summarizer {
 public:
  explicit Recording(const Summarizer& inner) : inner_(inner) {}
  std::string summarize(const SummarizeRequest& req) const override {
    {
      std::lock_guard lk(mu_);
      blocks_.push_back(req.document_block);
    }
    return inner_.summarize(req);
  }
  std::size_t calls() const { return blocks_.size(); }
  const std::vector<std::string>& blocks() const { return blocks_; }

 private:
  const Summarizer& inner_;
  mutable std::mutex mu_;
  mutable std::vector<std::string> blocks_;
};

class FailAfter final : public Summarizer {
 public:
  explicit FailAfter(std::size_t ok) : ok_(ok) {}
  std::string summarize(const SummarizeRequest& req) const override {
    if (calls_++ >= ok_) throw backend_error("HTTP 503: overloaded");
    return req.document_block.substr(0, 5);
  }

 private:
  std::size_t ok_;
  mutable std::size_t calls_ = 0;
};

class CountingEmbedder final : public Embedder {
 public:
  std::vector<Embedding> embed(const std::vector<std::string>& texts) const override {
    ++batches;
    return inner.embed(texts);
  }
  HashedTfidfEmbedder inner;
  mutable std::size_t batches = 0;
};

std::string marker(int id) { return "<<ACU:" + std::to_string(id) + ">>"; }

BudgetedExample unbudgeted(const Example& ex) {
  BudgetedExample b;
  b.example = ex;
  for (const auto& d : ex.documents) b.per_doc_allowance[d.id] = count_tokens(Tokenizer{}, d.text);
  return b;
}

Limits limits(std::size_t num_words) {
  Limits lim;
  lim.num_words = num_words;
  lim.max_tokens = num_words;
  return lim;
}

std::set<std::string> marker_set(const std::string& text) {
  const auto m = find_markers(text);
  return {m.begin(), m.end()};
}

}  // namespace

// ------------------------------------------------------------------ backend

TEST(Backend, RenderPromptExactTemplate) {
  EXPECT_EQ(render_prompt({"A", "B"}, "Q", 10),
            "A\nB\n\nQuestion: Q\n\nAnswer the question based on the provided document. Be concise and directly "
            "address only the specific question asked. Limit your response to a maximum of 10 words.");
  EXPECT_EQ(render_prompt({""}, kDefaultQuestion, 5).substr(0, 13), "\n\nQuestion: G");
}

TEST(Backend, DefaultQuestionWhenQueryMissing) {
  Tokenizer tok;
  auto ex = make_example("q", {"doc"});
  EXPECT_EQ(make_limits(ex, 10, tok, 0.5).question, "Generate a summary of the document");
  ex.query = "What changed?";
  EXPECT_EQ(make_limits(ex, 10, tok, 0.5).question, "What changed?");
  EXPECT_EQ(make_limits(ex, 185, Tokenizer{"whitespace", 1.145}, 0.5).max_tokens, 212u);
}

TEST(Backend, ExtractiveTakesLeadingWords) {
  ExtractiveSummarizer be;
  EXPECT_EQ(be.summarize({"a b c d e", "Q", 3, 3, 0.5}), "a b c");
  EXPECT_EQ(be.summarize({"  a\n b ", "Q", 5, 5, 0.5}), "a b");
  EXPECT_EQ(be.summarize({"a b", "Q", 0, 0, 0.5}), "");
}

TEST(Backend, MarkerOracleKeepsFirstKDistinct) {
  MarkerOracleSummarizer k2(2);
  const std::string block = "x " + marker(5) + " y " + marker(2) + marker(5) + " z " + marker(9);
  EXPECT_EQ(k2.summarize({block, "Q", 10, 10, 0.5}), marker(5) + " " + marker(2));
  MarkerOracleSummarizer unlimited(std::nullopt);
  EXPECT_EQ(unlimited.summarize({block, "Q", 10, 10, 0.5}), marker(5) + " " + marker(2) + " " + marker(9));
  EXPECT_EQ(find_markers("<<ACU:>> <<ACU:a b>> <<ACU:ok>>"), (std::vector<std::string>{"<<ACU:ok>>"}));
}

TEST(Backend, MarkerOracleNeverInventsMarkers) {
  std::mt19937 rng(41);
  MarkerOracleSummarizer be(3);
  for (int t = 0; t < 300; ++t) {
    std::string block;
    for (int k = std::uniform_int_distribution<int>(0, 12)(rng); k > 0; --k) {
      const int r = std::uniform_int_distribution<int>(0, 4)(rng);
      block += r == 0 ? "<<ACU:" : r == 1 ? ">>" : r == 2 ? marker(k % 5) : "word ";
    }
    const auto out = be.summarize({block, "Q", 10, 10, 0.5});
    for (const auto& m : find_markers(out)) ASSERT_NE(block.find(m), std::string::npos);
    ASSERT_LE(find_markers(out).size(), 3u);
  }
}

TEST(Backend, MocksArePureUnderConcurrency) {
  MarkerOracleSummarizer oracle(4);
  ExtractiveSummarizer extractive;
  std::string block;
  for (int i = 0; i < 50; ++i) block += words(5) + " " + marker(i) + "\n";
  const SummarizeRequest req{block, "Q", 7, 7, 0.5};
  const auto want_o = oracle.summarize(req), want_e = extractive.summarize(req);
  std::atomic<int> mismatches{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < 4; ++t) {
    pool.emplace_back([&] {
      for (int i = 0; i < 200; ++i) {
        if (oracle.summarize(req) != want_o || extractive.summarize(req) != want_e) ++mismatches;
      }
    });
  }
  for (auto& th : pool) th.join();
  EXPECT_EQ(mismatches.load(), 0);
}

TEST(Backend, ConfigValidation) {
  BackendConfig cfg;
  cfg.kind = BackendKind::http_chat;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.base_url = "http://localhost:8000/v1";
  EXPECT_THROW(cfg.validate(), Error);
  cfg.model_name = "m";
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.label(), "m");
  cfg = {};
  cfg.kind = BackendKind::mock_marker_oracle;
  cfg.marker_capacity = 0;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_THROW(parse_backend_kind("gpt"), Error);
}

// ---------------------------------------------------------------- retrieval

TEST(Retrieval, IdenticalTextsHaveCosineOne) {
  HashedTfidfEmbedder emb;
  const auto v = emb.embed({"storm hits the coast", "storm hits the coast", "unrelated"});
  EXPECT_EQ(v[0], v[1]);
  EXPECT_NEAR(dot(v[0], v[1]), 1.0, 1e-12);
}

TEST(Retrieval, DisjointBucketsHaveCosineZero) {
  const std::vector<std::string> a{"harbor", "ferry", "tide"}, b{"senate", "ballot", "quorum"};
  std::set<std::size_t> ba, bb;
  for (const auto& t : a) ba.insert(term_bucket(t, 4096));
  for (const auto& t : b) bb.insert(term_bucket(t, 4096));
  for (auto x : ba) ASSERT_EQ(bb.count(x), 0u) << "hash collision; pick other words";

  HashedTfidfEmbedder emb;
  const auto v = emb.embed({"Harbor ferry tide", "senate, ballot; quorum!"});
  EXPECT_EQ(dot(v[0], v[1]), 0.0);
  EXPECT_NEAR(dot(v[0], v[0]), 1.0, 1e-12);
}

TEST(Retrieval, PartialOverlapHandComputed) {
  // Batch of two: cat has df 2 (idf ln 2), dog df 1 (idf ln 3).
  // v1 = (2 ln2, ln3), v2 = (ln2, 0); cosine = 2 ln2 / sqrt(4 ln2^2 + ln3^2).
  HashedTfidfEmbedder emb;
  ASSERT_NE(term_bucket("cat", 4096), term_bucket("dog", 4096));
  const auto v = emb.embed({"cat cat dog", "cat"});
  const double c = dot(v[0], v[1]);
  EXPECT_GT(c, 0.0);
  EXPECT_LT(c, 1.0);
  EXPECT_NEAR(c, 0.783735034130532, 1e-12);
}

TEST(Retrieval, TermsSplitOnNonAlphanumerics) {
  EXPECT_EQ(embedding_terms("Hello, WORLD-42 x_y"), (std::vector<std::string>{"hello", "world", "42", "x", "y"}));
  EXPECT_EQ(fnv1a64(""), 14695981039346656037ull);
  EXPECT_EQ(fnv1a64("a"), 12638187200555641996ull);
}

TEST(Retrieval, QueryEqualToDocumentRanksItFirst) {
  Tokenizer tok;
  HashedTfidfEmbedder emb;
  const auto ex = make_example("r", {"market rally lifts stocks", "storm floods the harbor town",
                                     "election count delayed again", "harbor ferry service resumes"});
  const auto ranked = rank_documents("storm floods the harbor town", ex.documents, emb, tok, 1024);
  EXPECT_EQ(ranked[0].doc_id, "d1");
  EXPECT_EQ(ranked[0].original_index, 1u);
}

TEST(Retrieval, IdenticalDocumentsKeepOriginalOrder) {
  Tokenizer tok;
  HashedTfidfEmbedder emb;
  const auto ex = make_example("r", {"same text", "same text", "same text"});
  const auto ranked = rank_documents("text", ex.documents, emb, tok, 1024);
  for (std::size_t i = 0; i < ranked.size(); ++i) EXPECT_EQ(ranked[i].original_index, i);
}

TEST(Retrieval, RankingMatchesBruteForceCosine) {
  Tokenizer tok;
  HashedTfidfEmbedder emb;
  std::mt19937 rng(43);
  const std::vector<std::string> vocab{"storm", "harbor", "vote", "court", "ferry", "tide", "mayor", "quake"};
  for (int t = 0; t < 100; ++t) {
    std::vector<std::string> texts;
    for (int d = 0; d < 4; ++d) {
      std::string s;
      for (int k = std::uniform_int_distribution<int>(1, 8)(rng); k > 0; --k) s += vocab[rng() % vocab.size()] + " ";
      texts.push_back(s);
    }
    const std::string query = vocab[rng() % vocab.size()] + " " + vocab[rng() % vocab.size()];
    const auto ex = make_example("r", texts);
    const std::size_t cap = std::uniform_int_distribution<std::size_t>(1, 8)(rng);

    std::vector<std::string> batch{query};
    for (const auto& s : texts) batch.push_back(truncate_tokens(tok, s, cap));
    const auto vecs = emb.embed(batch);
    std::vector<std::pair<double, std::size_t>> oracle;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      double num = 0, na = 0, nb = 0;
      for (std::size_t k = 0; k < vecs[0].size(); ++k) {
        num += vecs[0][k] * vecs[i + 1][k];
        na += vecs[0][k] * vecs[0][k];
        nb += vecs[i + 1][k] * vecs[i + 1][k];
      }
      oracle.push_back({na > 0 && nb > 0 ? num / std::sqrt(na * nb) : 0.0, i});
    }
    // Selection sort: highest score first, earliest index on ties.
    std::vector<std::size_t> expect;
    std::vector<bool> used(oracle.size());
    for (std::size_t r = 0; r < oracle.size(); ++r) {
      std::size_t best = oracle.size();
      for (std::size_t i = 0; i < oracle.size(); ++i) {
        if (used[i]) continue;
        if (best == oracle.size() || oracle[i].first > oracle[best].first + 1e-12) best = i;
      }
      used[best] = true;
      expect.push_back(best);
    }
    const auto ranked = rank_documents(query, ex.documents, emb, tok, cap);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      ASSERT_EQ(ranked[r].original_index, expect[r]);
      ASSERT_NEAR(ranked[r].score, oracle[expect[r]].first, 1e-9);
    }
  }
}

TEST(Retrieval, PrefixRuleStopsAtFirstOverflow) {
  Tokenizer tok;
  const auto ex = make_example("s", {words(500), words(700), words(900), words(400)});
  // Rank order d2, d0, d3, d1 with lengths 900, 500, 400, 700.
  const std::vector<ScoredDocument> ranked{{"d2", 0.9, 2}, {"d0", 0.8, 0}, {"d3", 0.7, 3}, {"d1", 0.6, 1}};
  const auto sel = select_order_preserving(ranked, ex.documents, 1300, tok);
  ASSERT_EQ(sel.size(), 1u);
  EXPECT_EQ(sel[0].id, "d2");
  const auto all = select_order_preserving(ranked, ex.documents, 100000, tok);
  ASSERT_EQ(all.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(all[i].id, "d" + std::to_string(i));
  EXPECT_THROW(select_order_preserving(ranked, ex.documents, 800, tok), Error);
}

TEST(Retrieval, SelectionMatchesFilterOracle) {
  Tokenizer tok;
  std::mt19937 rng(47);
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < n; ++i) texts.push_back(words(std::uniform_int_distribution<std::size_t>(1, 50)(rng)));
    const auto ex = make_example("s", texts);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<ScoredDocument> ranked;
    for (std::size_t r = 0; r < n; ++r) ranked.push_back({"d" + std::to_string(perm[r]), 1.0 - 0.01 * r, perm[r]});
    const std::size_t cap = std::uniform_int_distribution<std::size_t>(1, 200)(rng);

    std::set<std::size_t> accepted;
    std::size_t used = 0;
    for (auto i : perm) {
      const auto len = count_tokens(tok, texts[i]);
      if (used + len > cap) break;
      used += len;
      accepted.insert(i);
    }
    if (accepted.empty()) {
      ASSERT_THROW(select_order_preserving(ranked, ex.documents, cap, tok), Error);
      continue;
    }
    std::vector<std::string> expect;
    for (std::size_t i = 0; i < n; ++i) {
      if (accepted.count(i)) expect.push_back("d" + std::to_string(i));
    }
    std::vector<std::string> got;
    for (const auto& d : select_order_preserving(ranked, ex.documents, cap, tok)) got.push_back(d.id);
    ASSERT_EQ(got, expect);
  }
}

// --------------------------------------------------------------- strategies

TEST(Strategies, PackChunksExamples) {
  Tokenizer tok;
  const std::vector<std::string> five(5, words(1000));
  const auto chunks = pack_chunks(five, 4096, tok);
  ASSERT_EQ(chunks.size(), 2u);
  EXPECT_EQ(chunks[0].size(), 4u);
  EXPECT_EQ(chunks[1].size(), 1u);
  EXPECT_EQ(pack_chunks({"only"}, 4096, tok).size(), 1u);
  EXPECT_TRUE(pack_chunks({}, 10, tok).empty());
}

TEST(Strategies, PackChunksMatchesRepackingOracle) {
  Tokenizer tok;
  std::mt19937 rng(53);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t limit = std::uniform_int_distribution<std::size_t>(5, 60)(rng);
    std::vector<std::string> texts;
    for (int k = std::uniform_int_distribution<int>(1, 15)(rng); k > 0; --k) {
      texts.push_back(words(std::uniform_int_distribution<std::size_t>(1, limit)(rng), "t" + std::to_string(k)));
    }
    const auto chunks = pack_chunks(texts, limit, tok);
    std::vector<std::string> flat;
    for (const auto& c : chunks) {
      ASSERT_FALSE(c.empty());
      std::size_t cost = c.size() - 1;
      for (const auto& s : c) cost += count_tokens(tok, s);
      ASSERT_LE(cost, limit);
      ASSERT_EQ(count_tokens(tok, join_lines(c)), cost - (c.size() - 1));
      flat.insert(flat.end(), c.begin(), c.end());
    }
    ASSERT_EQ(flat, texts);
    // Greedy: the first text of each chunk would not have fit in the previous one.
    for (std::size_t j = 1; j < chunks.size(); ++j) {
      std::size_t cost = chunks[j - 1].size() - 1;
      for (const auto& s : chunks[j - 1]) cost += count_tokens(tok, s);
      ASSERT_GT(cost + 1 + count_tokens(tok, chunks[j].front()), limit);
    }
  }
}

TEST(Strategies, FullContextExamples) {
  Tokenizer tok;
  BudgetConfig cfg;
  ExtractiveSummarizer extractive;
  const auto t = run_full_context(unbudgeted(make_example("f", {"a b", "c d"})), extractive, cfg, limits(3), tok);
  ASSERT_EQ(t.stages.size(), 1u);
  EXPECT_EQ(t.stages[0].label, (StageLabel{StageKind::final, 0, 0}));
  EXPECT_EQ(t.final, "a b c");
  EXPECT_EQ(t.stages[0].token_count, 3u);
  EXPECT_EQ(t.stages[0].max_tokens, 3u);
  EXPECT_EQ(t.stages[0].prompt_tokens, count_tokens(tok, render_prompt({"a b", "c d"}, kDefaultQuestion, 3)));

  MarkerOracleSummarizer oracle(std::nullopt);
  const auto m = run_full_context(
      unbudgeted(make_example("m", {"x " + marker(1), marker(2) + " y", "z " + marker(3)})), oracle, cfg, limits(3), tok);
  EXPECT_EQ(marker_set(m.final), (std::set<std::string>{marker(1), marker(2), marker(3)}));

  const auto single = run_full_context(unbudgeted(make_example("s", {"p q r s"})), extractive, cfg, limits(2), tok);
  EXPECT_EQ(single.final, extractive.summarize({"p q r s", std::string(kDefaultQuestion), 2, 2, 0.5}));
}

TEST(Strategies, HierarchicalSingleDocument) {
  Tokenizer tok;
  BudgetConfig cfg;
  ExtractiveSummarizer be;
  Recording rec(be);
  const auto t = run_hierarchical(unbudgeted(make_example("h", {words(20)})), rec, cfg, limits(5), tok);
  EXPECT_EQ(rec.calls(), 1u);
  ASSERT_EQ(t.stages.size(), 1u);
  EXPECT_EQ(t.stages[0].label, (StageLabel{StageKind::final, 0, 0}));
  EXPECT_EQ(t.final, words(5));
}

TEST(Strategies, HierarchicalPackingArithmetic) {
  Tokenizer tok;
  BudgetConfig cfg;  // chunk 4096
  ExtractiveSummarizer be;
  Recording rec(be);
  std::vector<std::string> docs;
  for (int i = 0; i < 5; ++i) docs.push_back(words(1200, "d" + std::to_string(i) + "_"));
  const auto t = run_hierarchical(unbudgeted(make_example("h", docs)), rec, cfg, limits(1000), tok);
  EXPECT_EQ(rec.calls(), 5u + 2u + 1u);
  std::vector<StageLabel> labels;
  for (const auto& s : t.stages) labels.push_back(s.label);
  const std::vector<StageLabel> want{{StageKind::doc_summary, 0, 0}, {StageKind::doc_summary, 0, 1},
                                     {StageKind::doc_summary, 0, 2}, {StageKind::doc_summary, 0, 3},
                                     {StageKind::doc_summary, 0, 4}, {StageKind::merge, 1, 0},
                                     {StageKind::merge, 1, 1},       {StageKind::final, 2, 0}};
  EXPECT_EQ(labels, want);
  EXPECT_EQ(t.final, words(1000, "d0_"));
  for (const auto& b : rec.blocks()) EXPECT_LE(count_tokens(tok, b), cfg.chunk_tokens);
}

TEST(Strategies, HierarchicalLosesMarkersUnderCapacity) {
  Tokenizer tok;
  BudgetConfig cfg;
  MarkerOracleSummarizer be(1);
  std::vector<std::string> docs;
  for (int i = 1; i <= 4; ++i) docs.push_back("news " + marker(i) + " more");
  const auto t = run_hierarchical(unbudgeted(make_example("h", docs)), be, cfg, limits(10), tok);
  EXPECT_EQ(find_markers(t.final).size(), 1u);
  std::set<std::string> level0;
  for (const auto& s : t.stages) {
    if (s.label.kind == StageKind::doc_summary) {
      const auto m = marker_set(s.text);
      level0.insert(m.begin(), m.end());
    }
  }
  EXPECT_EQ(level0.size(), 4u);
}

TEST(Strategies, HierarchicalWithoutProgressIsAConfigError) {
  Tokenizer tok;
  BudgetConfig cfg;
  cfg.chunk_tokens = 150;
  cfg.min_doc_tokens = 100;
  ExtractiveSummarizer be;
  try {
    run_hierarchical(unbudgeted(make_example("h", {words(200), words(200)})), be, cfg, limits(100), tok);
    FAIL();
  } catch (const StrategyError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_EQ(e.partial().stages.size(), 2u);
  }
}

TEST(Strategies, IncrementalExamples) {
  Tokenizer tok;
  BudgetConfig cfg;
  MarkerOracleSummarizer k2(2);
  Recording rec(k2);
  const auto t = run_incremental(
      unbudgeted(make_example("i", {"a " + marker(1), "b " + marker(2), "c " + marker(3)})), rec, cfg, limits(10), tok);
  ASSERT_EQ(t.stages.size(), 3u);
  EXPECT_EQ(t.stages[0].label, (StageLabel{StageKind::running, 0, 0}));
  EXPECT_EQ(t.stages[0].text, marker(1));
  EXPECT_EQ(t.stages[1].label, (StageLabel{StageKind::running, 0, 1}));
  EXPECT_EQ(t.stages[1].text, marker(1) + " " + marker(2));
  EXPECT_EQ(t.stages[2].label, (StageLabel{StageKind::final, 0, 2}));
  EXPECT_EQ(t.final, marker(1) + " " + marker(2));
  EXPECT_EQ(rec.blocks()[1], marker(1) + "\nb " + marker(2));

  ExtractiveSummarizer be;
  for (std::size_t n : {1u, 2u, 7u}) {
    Recording r(be);
    std::vector<std::string> docs(n, words(10));
    const auto tr = run_incremental(unbudgeted(make_example("n", docs)), r, cfg, limits(4), tok);
    EXPECT_EQ(r.calls(), n);
    EXPECT_EQ(std::count_if(tr.stages.begin(), tr.stages.end(),
                            [](const StageOutput& s) { return s.label.kind == StageKind::running; }),
              static_cast<long>(n - 1));
  }
}

TEST(Strategies, RetrievalPicksMatchingDocument) {
  Tokenizer tok;
  BudgetConfig cfg;
  cfg.min_doc_tokens = 4;
  cfg.retrieval_doc_cap = 6;
  cfg.retrieval_input_cap = 6;
  ExtractiveSummarizer be;
  CountingEmbedder emb;
  auto ex = make_example("r", {"market rally lifts stocks today again", "storm floods the harbor town overnight",
                               "election count delayed again this week"});
  ex.query = "storm floods harbor";
  auto lim = limits(3);
  lim.question = *ex.query;
  const auto t = run_retrieval(unbudgeted(ex), be, cfg, lim, tok, emb);
  ASSERT_EQ(t.stages.size(), 2u);
  EXPECT_EQ(t.stages[0].label.kind, StageKind::retrieved_block);
  EXPECT_EQ(t.stages[0].text, "storm floods the harbor town overnight");
  EXPECT_EQ(t.stages[0].prompt_tokens, 0u);
  EXPECT_EQ(t.final, "storm floods the");
  EXPECT_EQ(emb.batches, 1u);
}

TEST(Strategies, RetrievalAllFitEqualsFullContextBlock) {
  Tokenizer tok;
  BudgetConfig cfg;
  ExtractiveSummarizer be;
  Recording a(be), b(be);
  HashedTfidfEmbedder emb;
  const auto ex = unbudgeted(make_example("r", {"one two", "three four five", "six"}));
  run_retrieval(ex, a, cfg, limits(3), tok, emb);
  run_full_context(ex, b, cfg, limits(3), tok);
  EXPECT_EQ(a.blocks(), b.blocks());
}

TEST(Strategies, RetrievalKeepsTopRankedMarkers) {
  Tokenizer tok;
  BudgetConfig cfg;
  cfg.min_doc_tokens = 4;
  cfg.retrieval_doc_cap = 8;
  cfg.retrieval_input_cap = 11;  // two of the four-token documents
  MarkerOracleSummarizer be(std::nullopt);
  HashedTfidfEmbedder emb;
  auto ex = make_example("r", {"unrelated filler words here", "harbor storm damage " + marker(1),
                               "more unrelated filler text", "harbor storm surge " + marker(2)});
  auto lim = limits(10);
  lim.question = "harbor storm";
  const auto t = run_retrieval(unbudgeted(ex), be, cfg, lim, tok, emb);
  EXPECT_EQ(marker_set(t.final), (std::set<std::string>{marker(1), marker(2)}));
  EXPECT_EQ(t.stages[0].text, "harbor storm damage " + marker(1) + "\nharbor storm surge " + marker(2));
}

TEST(Strategies, BackendFailureKeepsPartialTrace) {
  Tokenizer tok;
  BudgetConfig cfg;
  FailAfter be(2);
  try {
    run_incremental(unbudgeted(make_example("p", {"a a", "b b", "c c", "d d"})), be, cfg, limits(3), tok);
    FAIL();
  } catch (const StrategyError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::backend);
    EXPECT_EQ(e.partial().stages.size(), 2u);
    EXPECT_NE(std::string(e.what()).find("'p'"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("running:0:2"), std::string::npos);
  }
}

TEST(Strategies, TraceJsonRoundTrip) {
  Tokenizer tok;
  BudgetConfig cfg;
  MarkerOracleSummarizer be(1);
  std::vector<std::string> docs;
  for (int i = 0; i < 6; ++i) docs.push_back("x " + marker(i) + " \"q\"\n");
  auto t = run_hierarchical(unbudgeted(make_example("j", docs)), be, cfg, limits(3), tok);
  t.backend = "mock";
  EXPECT_EQ(trace_from_json(nlohmann::json::parse(to_json(t).dump())), t);
  EXPECT_THROW(trace_from_json(nlohmann::json::parse(R"({"strategy":"bogus"})")), Error);
}

// Random examples, all four strategies: call-count laws, trace completeness,
// the input ceiling and the lossless marker law.
TEST(Strategies, LawsOnRandomExamples) {
  Tokenizer tok;
  std::mt19937 rng(59);
  for (int t = 0; t < 60; ++t) {
    BudgetConfig cfg;
    cfg.min_doc_tokens = 8;
    cfg.chunk_tokens = std::uniform_int_distribution<std::size_t>(40, 120)(rng);
    cfg.retrieval_doc_cap = 500;
    cfg.retrieval_input_cap = 100000;
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 20)(rng);
    std::vector<std::string> docs;
    for (std::size_t i = 0; i < n; ++i) {
      docs.push_back(words(std::uniform_int_distribution<std::size_t>(1, 30)(rng)) + " " +
                     marker(static_cast<int>(i)));
    }
    const auto ex = unbudgeted(make_example("law", docs));
    MarkerOracleSummarizer oracle(std::nullopt);
    ExtractiveSummarizer extractive;
    const std::size_t w = std::uniform_int_distribution<std::size_t>(3, 15)(rng);

    for (Strategy s : kAllStrategies) {
      Recording rec(extractive);
      CountingEmbedder emb;
      const auto tr = run_strategy(s, ex, rec, cfg, limits(w), tok, emb);
      std::size_t call_stages = 0, finals = 0;
      for (const auto& st : tr.stages) {
        call_stages += st.label.kind != StageKind::retrieved_block;
        finals += st.label.kind == StageKind::final;
        ASSERT_EQ(st.token_count, count_tokens(tok, st.text));
      }
      ASSERT_EQ(finals, 1u);
      ASSERT_EQ(tr.stages.back().label.kind, StageKind::final);
      ASSERT_EQ(tr.final, tr.stages.back().text);
      ASSERT_EQ(call_stages, rec.calls());
      switch (s) {
        case Strategy::full_context: ASSERT_EQ(rec.calls(), 1u); break;
        case Strategy::incremental: ASSERT_EQ(rec.calls(), n); break;
        case Strategy::retrieval:
          ASSERT_EQ(rec.calls(), 1u);
          ASSERT_EQ(emb.batches, 1u);
          break;
        case Strategy::hierarchical: {
          std::size_t merges = 0;
          for (const auto& st : tr.stages) merges += st.label.level > 0;
          ASSERT_EQ(rec.calls(), n + merges);
          for (const auto& b : rec.blocks()) ASSERT_LE(count_tokens(tok, b), cfg.chunk_tokens);
          break;
        }
      }
    }

    // Lossless: nothing truncated, unlimited capacity.
    {
      BudgetConfig wide = cfg;
      wide.chunk_tokens = 4096;
      std::set<std::string> expect;
      for (int i = 0; i < static_cast<int>(n); ++i) expect.insert(marker(i));
      HashedTfidfEmbedder emb;
      for (Strategy s : kAllStrategies) {
        const auto tr = run_strategy(s, ex, oracle, wide, limits(w), tok, emb);
        ASSERT_EQ(marker_set(tr.final), expect) << to_string(s);
      }
    }
  }
}
