#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mdsum/corpus.hpp"
#include "mdsum/error.hpp"
#include "mdsum/tokenizer.hpp"

namespace mdsum {

// Every numeric knob of input assembly and pipeline execution.
struct BudgetConfig {
  std::size_t max_input_tokens = 128000;
  std::size_t min_doc_tokens = 128;
  std::size_t retrieval_doc_cap = 1024;
  std::size_t retrieval_input_cap = 32000;
  std::size_t chunk_tokens = 4096;
  double temperature = 0.5;
  bool timeline_mode = false;

  void validate() const {
    if (!(min_doc_tokens <= retrieval_doc_cap && retrieval_doc_cap <= retrieval_input_cap &&
          retrieval_input_cap <= max_input_tokens)) {
      throw config_error(
          "budget caps must satisfy min_doc_tokens <= retrieval_doc_cap <= retrieval_input_cap <= "
          "max_input_tokens");
    }
    if (chunk_tokens < min_doc_tokens) throw config_error("chunk_tokens must be >= min_doc_tokens");
    if (!(temperature >= 0.0 && temperature <= 2.0)) throw config_error("temperature must be in [0, 2]");
  }
};

struct BudgetedExample {
  Example example;                                 // retained documents, truncated to their allowance
  std::vector<std::string> dropped_ids;            // in dataset order
  std::map<std::string, std::size_t> per_doc_allowance;
  std::size_t timeline_iterations = 0;             // share fixpoint rounds; 0 outside timeline mode
};

// Clamps every length to a common level so the total fits `cap`.
//
// The level L is the largest integer with sum(min(len, L)) <= cap. Integer
// levels leave a remainder r < #(len > L); the first r clamped entries in
// input order receive one extra token so the cap is met exactly.
inline std::vector<std::size_t> water_fill(std::span<const std::size_t> lengths, std::size_t cap) {
  std::vector<std::size_t> out(lengths.begin(), lengths.end());
  const std::size_t total = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
  if (total <= cap) return out;

  auto filled = [&](std::size_t level) {
    std::size_t s = 0;
    for (auto len : lengths) s += std::min(len, level);
    return s;
  };
  std::size_t lo = 0;
  std::size_t hi = *std::max_element(lengths.begin(), lengths.end());
  while (lo < hi) {  // largest level with filled(level) <= cap
    const std::size_t mid = lo + (hi - lo + 1) / 2;
    if (filled(mid) <= cap) lo = mid; else hi = mid - 1;
  }
  std::size_t remainder = cap - filled(lo);
  for (auto& v : out) {
    if (v > lo) {
      v = lo + (remainder > 0 ? 1 : 0);
      if (remainder > 0) --remainder;
    }
  }
  return out;
}

namespace detail {

struct DocAllocation {
  std::vector<std::size_t> allowance;  // indexed like the input lengths
  std::vector<bool> dropped;
};

// Water-fills `lengths` under `cap`, then repeatedly drops the latest document
// that was truncated below `min_doc` and re-fills the survivors. Documents
// that fit whole are never dropped, even when shorter than `min_doc`.
inline DocAllocation allocate_with_min_rule(std::span<const std::size_t> lengths, std::size_t cap,
                                            std::size_t min_doc) {
  DocAllocation res{std::vector<std::size_t>(lengths.size(), 0), std::vector<bool>(lengths.size(), false)};
  std::vector<std::size_t> alive(lengths.size());
  std::iota(alive.begin(), alive.end(), std::size_t{0});
  while (!alive.empty()) {
    std::vector<std::size_t> live_lengths;
    live_lengths.reserve(alive.size());
    for (auto i : alive) live_lengths.push_back(lengths[i]);
    const auto filled = water_fill(live_lengths, cap);

    std::ptrdiff_t victim = -1;
    for (std::size_t k = 0; k < alive.size(); ++k) {
      if (filled[k] < live_lengths[k] && filled[k] < min_doc) victim = static_cast<std::ptrdiff_t>(k);
    }
    if (victim < 0) {
      for (std::size_t k = 0; k < alive.size(); ++k) res.allowance[alive[k]] = filled[k];
      return res;
    }
    res.dropped[alive[static_cast<std::size_t>(victim)]] = true;
    alive.erase(alive.begin() + victim);
  }
  return res;
}

inline BudgetedExample assemble(const Example& ex, const Tokenizer& tok, const std::vector<std::size_t>& lengths,
                                const DocAllocation& alloc, std::size_t iterations) {
  BudgetedExample out;
  out.example = ex;
  out.example.documents.clear();
  out.timeline_iterations = iterations;
  for (std::size_t i = 0; i < ex.documents.size(); ++i) {
    const auto& doc = ex.documents[i];
    if (alloc.dropped[i]) {
      out.dropped_ids.push_back(doc.id);
      continue;
    }
    Document kept = doc;
    if (alloc.allowance[i] < lengths[i]) kept.text = truncate_tokens(tok, doc.text, alloc.allowance[i]);
    out.per_doc_allowance[doc.id] = alloc.allowance[i];
    out.example.documents.push_back(std::move(kept));
  }
  if (out.example.documents.empty()) {
    throw validation_error("example '" + ex.id + "': every document was dropped by the minimum-length rule");
  }
  return out;
}

inline std::vector<std::size_t> token_lengths(const Example& ex, const Tokenizer& tok) {
  std::vector<std::size_t> lengths;
  lengths.reserve(ex.documents.size());
  for (const auto& d : ex.documents) lengths.push_back(count_tokens(tok, d.text));
  return lengths;
}

}  // namespace detail

inline BudgetedExample apply_budget(const Example& ex, const BudgetConfig& cfg, const Tokenizer& tok) {
  const auto lengths = detail::token_lengths(ex, tok);
  const auto alloc = detail::allocate_with_min_rule(lengths, cfg.max_input_tokens, cfg.min_doc_tokens);
  return detail::assemble(ex, tok, lengths, alloc, 0);
}

struct ShareAllocation {
  std::vector<std::size_t> shares;
  std::size_t iterations = 0;
};

// Splits `cap` equally over groups. Groups whose demand fits their share are
// settled at their demand and the slack is re-split among the rest, until no
// further group settles. Each productive round settles at least one group.
inline ShareAllocation allocate_timestamp_shares(std::span<const std::size_t> demands, std::size_t cap) {
  ShareAllocation res{std::vector<std::size_t>(demands.size(), 0), 0};
  std::vector<std::size_t> active(demands.size());
  std::iota(active.begin(), active.end(), std::size_t{0});
  std::size_t remaining = cap;
  while (!active.empty()) {
    ++res.iterations;
    const std::size_t share = remaining / active.size();
    const std::size_t extra = remaining % active.size();
    std::vector<std::size_t> still;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const std::size_t quota = share + (k < extra ? 1 : 0);
      const std::size_t g = active[k];
      if (demands[g] <= quota) {
        res.shares[g] = demands[g];
        remaining -= demands[g];
      } else {
        still.push_back(g);
      }
    }
    if (still.size() == active.size()) {
      for (std::size_t k = 0; k < active.size(); ++k) res.shares[active[k]] = share + (k < extra ? 1 : 0);
      break;
    }
    active = std::move(still);
  }
  return res;
}

// Budgeting for timeline data: every distinct date receives an equal slice
// of the input cap, then documents within a date are water-filled against it.
inline BudgetedExample apply_timeline_budget(const Example& ex, const BudgetConfig& cfg, const Tokenizer& tok) {
  std::map<Date, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ex.documents.size(); ++i) {
    const auto& doc = ex.documents[i];
    if (!doc.timestamp) {
      throw validation_error("example '" + ex.id + "': document '" + doc.id + "' has no date");
    }
    groups[*doc.timestamp].push_back(i);
  }
  const auto lengths = detail::token_lengths(ex, tok);

  std::vector<std::size_t> demands;
  demands.reserve(groups.size());
  for (const auto& [date, members] : groups) {
    std::size_t d = 0;
    for (auto i : members) d += lengths[i];
    demands.push_back(d);
  }
  const auto shares = allocate_timestamp_shares(demands, cfg.max_input_tokens);

  detail::DocAllocation alloc{std::vector<std::size_t>(lengths.size(), 0),
                              std::vector<bool>(lengths.size(), false)};
  std::size_t g = 0;
  for (const auto& [date, members] : groups) {
    std::vector<std::size_t> member_lengths;
    for (auto i : members) member_lengths.push_back(lengths[i]);
    const auto local = detail::allocate_with_min_rule(member_lengths, shares.shares[g], cfg.min_doc_tokens);
    for (std::size_t k = 0; k < members.size(); ++k) {
      alloc.allowance[members[k]] = local.allowance[k];
      alloc.dropped[members[k]] = local.dropped[k];
    }
    ++g;
  }
  return detail::assemble(ex, tok, lengths, alloc, shares.iterations);
}

// Picks the timeline or the flat rule according to the config.
inline BudgetedExample budget_example(const Example& ex, const BudgetConfig& cfg, const Tokenizer& tok) {
  return cfg.timeline_mode ? apply_timeline_budget(ex, cfg, tok) : apply_budget(ex, cfg, tok);
}

}  // namespace mdsum
