#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cicle/eval.hpp"
#include "cicle/json.hpp"
#include "cicle/prompt.hpp"

namespace cicle {

struct CompletionRequest {
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 20;
  std::string model;
  std::chrono::milliseconds timeout{30000};
  std::vector<std::string> stop;
};

// What the oracle backends need beyond the prompt text.
struct CompletionContext {
  const PromptSpec* spec = nullptr;
  std::string true_label;
  std::uint64_t sample_id = 0;  // seeds per-sample randomness
};

struct CompletionResult {
  std::string text;
  int retries = 0;
  double latency_ms = 0.0;
  std::size_t request_bytes = 0;
  std::size_t response_bytes = 0;
};

// Implementations must accept concurrent calls.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual CompletionResult complete(const CompletionRequest& req, const CompletionContext& ctx) = 0;
  virtual std::string name() const = 0;
};

struct HttpConfig {
  std::string url;  // full endpoint, e.g. https://host/v1/completions
  std::string api_key;
  std::string model;
  int max_retries = 5;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::milliseconds max_backoff{8000};
  std::size_t max_in_flight = 4;
  std::uint64_t jitter_seed = 42;

  // CICLE_ENDPOINT_URL, CICLE_API_KEY, CICLE_MODEL. The URL is required.
  static HttpConfig from_env();
};

// OpenAI-compatible /v1/completions client. 429 and 5xx replies and
// connection failures are retried with jittered exponential backoff; other
// non-2xx statuses raise ApiError, exhausted retries TransportError.
class HttpBackend : public CompletionBackend {
 public:
  explicit HttpBackend(HttpConfig config);
  ~HttpBackend() override;
  CompletionResult complete(const CompletionRequest& req, const CompletionContext& ctx) override;
  std::string name() const override { return "http"; }
  const HttpConfig& config() const noexcept { return config_; }

 private:
  struct State;
  HttpConfig config_;
  std::unique_ptr<State> state_;
};

enum class OracleKind { Perfect, RandomShot };

// Perfect answers the true label when some shot carries it and otherwise
// the label of a random shot; RandomShot always picks a random shot.
class OracleBackend : public CompletionBackend {
 public:
  OracleBackend(OracleKind kind, std::uint64_t seed);
  CompletionResult complete(const CompletionRequest& req, const CompletionContext& ctx) override;
  std::string name() const override;

 private:
  OracleKind kind_;
  std::uint64_t seed_;
};

// FNV-1a of the prompt text, 16 hex digits.
std::string prompt_hash(std::string_view prompt);

// Replies looked up by prompt hash; a handler, when set, answers prompts
// missing from the table.
class ScriptedBackend : public CompletionBackend {
 public:
  using Handler = std::function<std::string(const CompletionRequest&, const CompletionContext&)>;

  explicit ScriptedBackend(std::unordered_map<std::string, std::string> replies, Handler fallback = {});
  CompletionResult complete(const CompletionRequest& req, const CompletionContext& ctx) override;
  std::string name() const override { return "scripted"; }
  std::size_t calls() const;

 private:
  std::unordered_map<std::string, std::string> replies_;
  Handler fallback_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

enum class LabelMatching { Lenient, Strict };

struct LabelParse {
  std::optional<ClassIndex> cls;
  std::string raw;

  bool matched() const noexcept { return cls.has_value(); }
};

// Lenient: trim whitespace and surrounding quotes, then compare lowercased.
// Strict: the reply must equal a label byte for byte.
class LabelMatcher {
 public:
  explicit LabelMatcher(const LabelSpace& space, LabelMatching mode = LabelMatching::Lenient);
  LabelParse parse(std::string_view raw) const;
  LabelMatching mode() const noexcept { return mode_; }

 private:
  const LabelSpace* space_;
  LabelMatching mode_;
  std::unordered_map<std::string, ClassIndex> lowered_;
};

LabelParse parse_label(std::string_view raw, const LabelSpace& space, LabelMatching mode = LabelMatching::Lenient);

// Thread-safe JSON-lines transcript of completions.
class TranscriptWriter {
 public:
  explicit TranscriptWriter(std::ostream& out) : out_(&out) {}
  void write(const Json& record);

 private:
  std::ostream* out_;
  std::mutex mutex_;
};

struct LlmDecision {
  Prediction prediction;  // nullopt when the reply matched no label
  SampleTelemetry telemetry;
  std::optional<std::string> raw_reply;
};

// Bypass outcomes never reach the backend. Prompts are rendered, completed
// and parsed; `transcript` may be null.
LlmDecision classify_with_llm(const PromptOutcome& outcome, CompletionBackend& backend,
                              const CompletionRequest& request_template, const CompletionContext& ctx,
                              const LabelMatcher& matcher, TranscriptWriter* transcript = nullptr);

// Runs classify_with_llm over a batch with up to `concurrency` workers.
// Results are stored by position, so they do not depend on scheduling.
std::vector<LlmDecision> classify_batch(std::span<const PromptOutcome> outcomes, CompletionBackend& backend,
                                        const CompletionRequest& request_template,
                                        std::span<const std::string> true_labels, std::span<const std::uint64_t> ids,
                                        const LabelMatcher& matcher, std::size_t concurrency,
                                        TranscriptWriter* transcript = nullptr);

}  // namespace cicle
