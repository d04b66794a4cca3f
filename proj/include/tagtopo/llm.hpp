#pragma once

#include "tagtopo/errors.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace tagtopo {

enum class PromptKind { Similarity, PseudoLabel };

struct PromptExample {
    std::string text_a, text_b;
    double ratio = 0.0;
};

struct PromptRequest {
    PromptKind kind = PromptKind::Similarity;
    std::string text_a, text_b;           // similarity pair
    std::string text;                     // pseudo-label subject
    std::vector<std::string> categories;  // pseudo-label options
    int example_count = 2;
};

struct LlmJudgment {
    PromptKind kind = PromptKind::Similarity;
    std::optional<double> ratio;
    std::string reason;
    std::optional<std::vector<int>> ranked_categories;
    std::string raw;

    int pseudo_label() const; // first ranked category
};

/// Similarity prompt: task description, worked examples, both papers, and
/// the fixed reply format "Related ratio = ***, Reason: ***".
std::string build_similarity_prompt(const std::string& text_a, const std::string& text_b,
                                    const std::vector<PromptExample>& examples);

/// Pseudo-label prompt with lettered options "(A) ..., (B) ..." and the
/// ranked comma-separated answer instruction.
std::string build_pseudolabel_prompt(const std::string& text,
                                     const std::vector<std::string>& categories);

/// Two built-in worked examples used when the caller supplies none.
const std::vector<PromptExample>& default_prompt_examples();

/// Pulls the ratio out of a response: first "related ratio = x" (case and
/// whitespace tolerant), else the first standalone real in [0,1]. Values in
/// (1, 1.05] clamp to 1. Throws ParseFailure when nothing matches.
double extract_ratio(const std::string& raw);

/// Ranked option letters or category names, case-insensitive, first match
/// order; throws ParseFailure when no category is recognizable.
std::vector<int> extract_ranked_labels(const std::string& raw,
                                       const std::vector<std::string>& categories);

inline constexpr const char* kPromptTemplateVersion = "v1";

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete(const PromptRequest& request) = 0;
    virtual std::string id() const = 0;
};

enum class MockMode { ClassOracle, Lexical, NoisyLabeler };

/// Deterministic stand-ins for the chat backend. class-oracle answers 0.9
/// for same-class pairs and 0.1 for cross-class ones; lexical answers the
/// Jaccard overlap of lowercased token sets rounded to one decimal;
/// noisy-labeler returns the true label with probability p, otherwise a
/// seeded uniformly random wrong label. Every draw is a pure function of
/// (request content, seed), so call order never matters.
class MockBackend : public Backend {
public:
    MockBackend(MockMode mode, std::uint64_t seed,
                std::map<std::string, int> label_of_text = {},
                double p_correct = 0.8);

    std::string complete(const PromptRequest& request) override;
    std::string id() const override;

    int calls() const { return calls_.load(); }

private:
    int lookup_label(const std::string& text) const;
    MockMode mode_;
    std::uint64_t seed_;
    std::map<std::string, int> label_of_text_;
    double p_correct_;
    std::atomic<int> calls_{0};
};

struct HttpBackendConfig {
    std::string endpoint;     // e.g. http://localhost:8000
    std::string path = "/v1/chat/completions";
    std::string model = "gpt-3.5-turbo";
    std::string api_key;      // read from env by the harness
    double temperature = 0.0;
    int max_retries = 3;
    double backoff_seconds = 0.5;   // doubled per retry
    double requests_per_minute = 60;
    int max_in_flight = 4;
    int timeout_seconds = 60;
    int connect_timeout_seconds = 10;
};

/// OpenAI-compatible chat-completion client with retry, rate limiting and
/// bounded in-flight concurrency.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig cfg);
    std::string complete(const PromptRequest& request) override;
    std::string id() const override;

private:
    void rate_limit_acquire();
    HttpBackendConfig cfg_;
    std::mutex mu_;
    std::condition_variable cv_;
    int in_flight_ = 0;
    double next_slot_ = 0.0; // monotonic seconds
};

/// Append-only JSONL judgment cache keyed by a content hash over
/// (kind, texts, template version, backend id).
class JudgmentCache {
public:
    explicit JudgmentCache(std::string path); // loads existing entries
    static std::string key(const PromptRequest& req, const std::string& backend_id);

    std::optional<LlmJudgment> get(const std::string& key) const;
    void put(const std::string& key, const LlmJudgment& judgment);
    std::size_t size() const;
    const std::string& path() const { return path_; }

private:
    std::string path_;
    mutable std::mutex mu_;
    std::map<std::string, LlmJudgment> entries_;
};

/// Cache-first query front end: parses backend responses into judgments,
/// retries transport errors with exponential backoff, reprompts once on
/// unparseable output, and persists every new judgment before returning.
class Gateway {
public:
    Gateway(Backend& backend, JudgmentCache* cache = nullptr,
            int max_retries = 3, double backoff_seconds = 0.05);

    LlmJudgment query(const PromptRequest& request);

    int backend_calls() const { return backend_calls_.load(); }
    int cache_hits() const { return cache_hits_.load(); }

private:
    LlmJudgment parse(const PromptRequest& request, const std::string& raw) const;
    std::string complete_with_retry(const PromptRequest& request);
    Backend& backend_;
    JudgmentCache* cache_;
    int max_retries_;
    double backoff_seconds_;
    std::atomic<int> backend_calls_{0};
    std::atomic<int> cache_hits_{0};
};

} // namespace tagtopo
