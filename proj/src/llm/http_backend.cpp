#include "httplib.h"

#include <algorithm>
#include <cstdlib>
#include <random>
#include <semaphore>
#include <thread>

#include "cicle/error.hpp"
#include "cicle/llm.hpp"
#include "cicle/random.hpp"

namespace cicle {
namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw InvalidArgument("endpoint URL needs a scheme: '" + url + "'");
  std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw InvalidArgument("unsupported URL scheme '" + scheme + "'");
#ifndef CICLE_HTTPS
  if (scheme == "https") throw InvalidArgument("built without HTTPS support");
#endif
  auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = url.substr(0, path_start);
  e.path = path_start == std::string::npos ? "/v1/completions" : url.substr(path_start);
  return e;
}

std::string excerpt(const std::string& body) {
  constexpr std::size_t kMax = 200;
  return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
}

bool retryable(int status) { return status == 429 || (status >= 500 && status <= 599); }

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

}  // namespace

HttpConfig HttpConfig::from_env() {
  HttpConfig c;
  c.url = env_or_empty("CICLE_ENDPOINT_URL");
  c.api_key = env_or_empty("CICLE_API_KEY");
  c.model = env_or_empty("CICLE_MODEL");
  if (c.url.empty()) throw InvalidArgument("CICLE_ENDPOINT_URL is not set");
  return c;
}

struct HttpBackend::State {
  explicit State(std::size_t slots) : in_flight(static_cast<std::ptrdiff_t>(slots)) {}
  Endpoint endpoint;
  std::counting_semaphore<1024> in_flight;
  std::mutex rng_mutex;
  std::mt19937_64 rng;
};

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)) {
  if (config_.max_in_flight == 0 || config_.max_in_flight > 1024) {
    throw InvalidArgument("max_in_flight must lie in [1, 1024]");
  }
  if (config_.max_retries < 0) throw InvalidArgument("max_retries must be non-negative");
  state_ = std::make_unique<State>(config_.max_in_flight);
  state_->endpoint = split_url(config_.url);
  state_->rng.seed(config_.jitter_seed);
}

HttpBackend::~HttpBackend() = default;

CompletionResult HttpBackend::complete(const CompletionRequest& req, const CompletionContext&) {
  Json body{{"model", req.model.empty() ? config_.model : req.model},
            {"prompt", req.prompt},
            {"temperature", req.temperature},
            {"max_tokens", req.max_tokens}};
  if (!req.stop.empty()) body["stop"] = req.stop;
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  CompletionResult result;
  result.request_bytes = payload.size();
  const auto started = std::chrono::steady_clock::now();
  std::string last_problem;

  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      auto base = config_.initial_backoff * (1LL << std::min(attempt - 1, 20));
      auto capped = std::min<std::chrono::milliseconds>(std::chrono::duration_cast<std::chrono::milliseconds>(base),
                                                        config_.max_backoff);
      double jitter;
      {
        std::lock_guard<std::mutex> lock(state_->rng_mutex);
        jitter = 0.5 + 0.5 * uniform_unit(state_->rng);
      }
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(static_cast<double>(capped.count()) * jitter));
      result.retries = attempt;
    }

    httplib::Result res;
    {
      state_->in_flight.acquire();
      httplib::Client client(state_->endpoint.origin);
      auto secs = std::chrono::duration_cast<std::chrono::seconds>(req.timeout);
      auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(req.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      res = client.Post(state_->endpoint.path, headers, payload, "application/json");
      state_->in_flight.release();
    }

    if (!res) {
      last_problem = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (retryable(res->status)) {
      last_problem = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status > 299) throw ApiError(res->status, excerpt(res->body));

    result.response_bytes = res->body.size();
    Json reply = Json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("choices") || !reply["choices"].is_array() ||
        reply["choices"].empty() || !reply["choices"][0].contains("text") || !reply["choices"][0]["text"].is_string()) {
      throw ApiError(res->status, "unexpected response body: " + excerpt(res->body));
    }
    result.text = reply["choices"][0]["text"].get<std::string>();
    result.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return result;
  }
  throw TransportError("completion failed after " + std::to_string(config_.max_retries) + " retries (" +
                       last_problem + ")");
}

}  // namespace cicle
