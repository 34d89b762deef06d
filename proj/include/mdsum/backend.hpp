#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "mdsum/error.hpp"
#include "mdsum/tokenizer.hpp"

namespace mdsum {

inline constexpr std::string_view kDefaultQuestion = "Generate a summary of the document";

struct SummarizeRequest {
  std::string document_block;  // input documents joined by '\n'
  std::string question;
  std::size_t num_words = 0;
  std::size_t max_tokens = 0;
  double temperature = 0.5;
};

enum class BackendKind { http_chat, mock_extractive, mock_marker_oracle };

inline std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::http_chat: return "http_chat";
    case BackendKind::mock_extractive: return "mock_extractive";
    case BackendKind::mock_marker_oracle: return "mock_marker_oracle";
  }
  return "unknown";
}

inline BackendKind parse_backend_kind(std::string_view s) {
  if (s == "http_chat") return BackendKind::http_chat;
  if (s == "mock_extractive") return BackendKind::mock_extractive;
  if (s == "mock_marker_oracle") return BackendKind::mock_marker_oracle;
  throw config_error("unknown backend kind '" + std::string(s) + "'");
}

struct BackendConfig {
  BackendKind kind = BackendKind::mock_extractive;
  std::string name;  // label used in trace and result files; defaults to model or kind
  std::optional<std::string> base_url;
  std::optional<std::string> model_name;
  std::optional<std::string> api_key_env;
  double timeout_seconds = 600.0;
  std::size_t max_retries = 3;
  std::size_t max_in_flight = 4;
  std::optional<std::size_t> marker_capacity;  // unset means unlimited

  std::string label() const {
    if (!name.empty()) return name;
    if (kind == BackendKind::http_chat && model_name) return *model_name;
    return std::string(to_string(kind));
  }

  void validate() const {
    if (kind == BackendKind::http_chat) {
      if (!base_url || base_url->empty()) throw config_error("http_chat backend requires base_url");
      if (!model_name || model_name->empty()) throw config_error("http_chat backend requires model_name");
    }
    if (kind == BackendKind::mock_marker_oracle && marker_capacity && *marker_capacity < 1) {
      throw config_error("marker_capacity must be at least 1");
    }
    if (max_in_flight < 1) throw config_error("max_in_flight must be at least 1");
    if (!(timeout_seconds > 0)) throw config_error("timeout must be positive");
  }
};

// The prompt used for every call of every strategy.
inline std::string render_prompt(const std::vector<std::string>& docs, std::string_view question,
                                 std::size_t num_words) {
  std::string out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (i) out += '\n';
    out += docs[i];
  }
  out += "\n\nQuestion: ";
  out += question;
  out +=
      "\n\nAnswer the question based on the provided document. Be concise and directly address only "
      "the specific question asked. Limit your response to a maximum of ";
  out += std::to_string(num_words);
  out += " words.";
  return out;
}

inline std::string render_prompt(const SummarizeRequest& req) {
  return render_prompt(std::vector<std::string>{req.document_block}, req.question, req.num_words);
}

class Summarizer {
 public:
  virtual ~Summarizer() = default;
  virtual std::string summarize(const SummarizeRequest& req) const = 0;
};

// Returns the first `num_words` whitespace-separated words, space-joined.
class ExtractiveSummarizer final : public Summarizer {
 public:
  std::string summarize(const SummarizeRequest& req) const override {
    std::string out;
    std::size_t taken = 0;
    std::size_t i = 0;
    const std::string_view block = req.document_block;
    while (taken < req.num_words && i < block.size()) {
      while (i < block.size() && detail::is_space(block[i])) ++i;
      const std::size_t start = i;
      while (i < block.size() && !detail::is_space(block[i])) ++i;
      if (i == start) break;
      if (taken++) out += ' ';
      out.append(block.substr(start, i - start));
    }
    return out;
  }
};

// Finds "<<ACU:id>>" markers; id is a non-empty run without whitespace or
// angle brackets. Returns distinct markers in order of first appearance.
inline std::vector<std::string> find_markers(std::string_view text) {
  static constexpr std::string_view open = "<<ACU:";
  std::vector<std::string> found;
  std::unordered_set<std::string> seen;
  std::size_t pos = 0;
  while ((pos = text.find(open, pos)) != std::string_view::npos) {
    std::size_t j = pos + open.size();
    while (j < text.size() && !detail::is_space(text[j]) && text[j] != '<' && text[j] != '>') ++j;
    if (j > pos + open.size() && text.substr(j, 2) == ">>") {
      std::string marker(text.substr(pos, j + 2 - pos));
      if (seen.insert(marker).second) found.push_back(std::move(marker));
      pos = j + 2;
    } else {
      pos += 1;
    }
  }
  return found;
}

// Capacity-limited oracle: keeps the first K distinct markers of its input.
// Used to reproduce information loss across multi-stage pipelines exactly.
class MarkerOracleSummarizer final : public Summarizer {
 public:
  explicit MarkerOracleSummarizer(std::optional<std::size_t> capacity) : capacity_(capacity) {}

  std::string summarize(const SummarizeRequest& req) const override {
    auto markers = find_markers(req.document_block);
    if (capacity_ && markers.size() > *capacity_) markers.resize(*capacity_);
    std::string out;
    for (std::size_t i = 0; i < markers.size(); ++i) {
      if (i) out += ' ';
      out += markers[i];
    }
    return out;
  }

 private:
  std::optional<std::size_t> capacity_;
};

}  // namespace mdsum
