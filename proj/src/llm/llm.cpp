#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <thread>

#include "cicle/error.hpp"
#include "cicle/llm.hpp"
#include "cicle/random.hpp"

namespace cicle {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) {
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
  }
  return out;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_quote(char c) { return c == '"' || c == '\'' || c == '`'; }

std::string_view trim_view(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

const PromptSpec& require_shots(const CompletionContext& ctx) {
  if (!ctx.spec || ctx.spec->shots.empty()) throw InvalidArgument("oracle backends need a prompt with at least one shot");
  return *ctx.spec;
}

}  // namespace

OracleBackend::OracleBackend(OracleKind kind, std::uint64_t seed) : kind_(kind), seed_(seed) {}

std::string OracleBackend::name() const { return kind_ == OracleKind::Perfect ? "perfect" : "random-shot"; }

CompletionResult OracleBackend::complete(const CompletionRequest& req, const CompletionContext& ctx) {
  const PromptSpec& spec = require_shots(ctx);
  CompletionResult r;
  r.request_bytes = req.prompt.size();
  bool found = false;
  if (kind_ == OracleKind::Perfect) {
    found = std::any_of(spec.shots.begin(), spec.shots.end(), [&](const FewShot& s) { return s.label == ctx.true_label; });
  }
  if (found) {
    r.text = ctx.true_label;
  } else {
    std::mt19937_64 rng(mix_seed(seed_, ctx.sample_id));
    r.text = spec.shots[uniform_index(rng, spec.shots.size())].label;
  }
  r.response_bytes = r.text.size();
  return r;
}

std::string prompt_hash(std::string_view prompt) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : prompt) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

ScriptedBackend::ScriptedBackend(std::unordered_map<std::string, std::string> replies, Handler fallback)
    : replies_(std::move(replies)), fallback_(std::move(fallback)) {}

CompletionResult ScriptedBackend::complete(const CompletionRequest& req, const CompletionContext& ctx) {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    ++calls_;
  }
  CompletionResult r;
  r.request_bytes = req.prompt.size();
  auto it = replies_.find(prompt_hash(req.prompt));
  if (it != replies_.end()) {
    r.text = it->second;
  } else if (fallback_) {
    r.text = fallback_(req, ctx);
  } else {
    throw InvalidArgument("scripted backend has no reply for prompt " + prompt_hash(req.prompt));
  }
  r.response_bytes = r.text.size();
  return r;
}

std::size_t ScriptedBackend::calls() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return calls_;
}

LabelMatcher::LabelMatcher(const LabelSpace& space, LabelMatching mode) : space_(&space), mode_(mode) {
  for (ClassIndex c = 0; c < space.size(); ++c) lowered_.emplace(lower(space.label(c)), c);
}

LabelParse LabelMatcher::parse(std::string_view raw) const {
  LabelParse p;
  p.raw = std::string(raw);
  if (mode_ == LabelMatching::Strict) {
    p.cls = space_->find(raw);
    return p;
  }
  std::string_view s = trim_view(raw);
  while (s.size() >= 2 && is_quote(s.front()) && s.back() == s.front()) s = trim_view(s.substr(1, s.size() - 2));
  auto it = lowered_.find(lower(s));
  if (it != lowered_.end()) p.cls = it->second;
  return p;
}

LabelParse parse_label(std::string_view raw, const LabelSpace& space, LabelMatching mode) {
  return LabelMatcher(space, mode).parse(raw);
}

void TranscriptWriter::write(const Json& record) {
  std::string line = record.dump();
  std::lock_guard<std::mutex> lock(mutex_);
  *out_ << line << '\n';
  out_->flush();
}

LlmDecision classify_with_llm(const PromptOutcome& outcome, CompletionBackend& backend,
                              const CompletionRequest& request_template, const CompletionContext& ctx,
                              const LabelMatcher& matcher, TranscriptWriter* transcript) {
  LlmDecision d;
  if (outcome.bypass) {
    d.prediction = outcome.bypass_class;
    d.telemetry.bypassed = true;
    return d;
  }
  CompletionRequest req = request_template;
  req.prompt = render(outcome.spec);
  CompletionContext call_ctx = ctx;
  call_ctx.spec = &outcome.spec;

  d.telemetry.prompt_bytes = req.prompt.size();
  d.telemetry.classes_in_prompt = outcome.spec.classes().size();
  d.telemetry.shots = outcome.spec.shots.size();

  CompletionResult res = backend.complete(req, call_ctx);
  LabelParse parsed = matcher.parse(res.text);
  d.prediction = parsed.cls;
  d.telemetry.parse_failure = !parsed.matched();
  d.telemetry.retries = res.retries;
  d.raw_reply = res.text;

  if (transcript) {
    transcript->write({{"sample", ctx.sample_id},
                       {"backend", backend.name()},
                       {"strategy", std::string(strategy_name(outcome.spec.strategy))},
                       {"prompt_hash", prompt_hash(req.prompt)},
                       {"prompt_bytes", req.prompt.size()},
                       {"reply", res.text},
                       {"parsed", parsed.matched() ? Json(*parsed.cls) : Json(nullptr)},
                       {"latency_ms", res.latency_ms},
                       {"retries", res.retries},
                       {"request_bytes", res.request_bytes},
                       {"response_bytes", res.response_bytes}});
  }
  return d;
}

std::vector<LlmDecision> classify_batch(std::span<const PromptOutcome> outcomes, CompletionBackend& backend,
                                        const CompletionRequest& request_template,
                                        std::span<const std::string> true_labels, std::span<const std::uint64_t> ids,
                                        const LabelMatcher& matcher, std::size_t concurrency,
                                        TranscriptWriter* transcript) {
  if (true_labels.size() != outcomes.size() || ids.size() != outcomes.size()) {
    throw InvalidArgument("batch inputs differ in length");
  }
  std::vector<LlmDecision> out(outcomes.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= outcomes.size()) return;
      try {
        CompletionContext ctx;
        ctx.true_label = true_labels[i];
        ctx.sample_id = ids[i];
        out[i] = classify_with_llm(outcomes[i], backend, request_template, ctx, matcher, transcript);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(outcomes.size());
      }
    }
  };
  std::size_t n_workers = std::clamp<std::size_t>(concurrency, 1, std::max<std::size_t>(outcomes.size(), 1));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace cicle
