#include <doctest.h>

#include <atomic>
#include <chrono>
#include <random>
#include <sstream>
#include <thread>

#include "cicle/error.hpp"
#include "cicle/llm.hpp"
#include "cicle/random.hpp"
#include "httplib.h"

using namespace cicle;
using namespace std::chrono_literals;

namespace {

LabelSpace hazard_space() {
  return LabelSpace::from_labels({"allergens", "biological", "listeria monocytogenes", "salmonella", "foreign bodies"});
}

PromptSpec spec_with_labels(const std::vector<std::string>& labels) {
  PromptSpec spec;
  spec.description = "d";
  spec.query = "q";
  for (std::size_t i = 0; i < labels.size(); ++i) spec.shots.push_back({"t" + std::to_string(i), labels[i], 0, i, 0.0, std::nullopt});
  return spec;
}

// Local completion server whose behavior is set per test.
class FakeServer {
 public:
  explicit FakeServer(httplib::Server::Handler handler) {
    server_.Post("/v1/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/completions"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

void reply_text(httplib::Response& res, const std::string& text) {
  res.set_content(Json{{"choices", Json::array({Json{{"text", text}}})}}.dump(), "application/json");
}

HttpConfig fast_config(const std::string& url) {
  HttpConfig c;
  c.url = url;
  c.model = "test-model";
  c.api_key = "secret";
  c.initial_backoff = 5ms;
  c.max_backoff = 20ms;
  return c;
}

}  // namespace

TEST_CASE("label parsing") {
  auto space = hazard_space();
  auto m = parse_label("listeria monocytogenes", space);
  REQUIRE(m.matched());
  CHECK(space.label(*m.cls) == "listeria monocytogenes");
  CHECK_FALSE(parse_label("salmonella and listeria monocytogenes", space).matched());
  CHECK_FALSE(parse_label("none (no food hazards mentioned)", space).matched());
  CHECK(parse_label("  \"Allergens\"\n", space).cls == space.find("allergens"));
  CHECK(parse_label("'foreign bodies'", space).cls == space.find("foreign bodies"));
  CHECK(parse_label(" SALMONELLA ", space).cls == space.find("salmonella"));
  CHECK_FALSE(parse_label("", space).matched());
  CHECK_FALSE(parse_label("allergen", space).matched());

  // Strict mode is byte-exact.
  CHECK(parse_label("allergens", space, LabelMatching::Strict).matched());
  CHECK_FALSE(parse_label("Allergens", space, LabelMatching::Strict).matched());
  CHECK_FALSE(parse_label(" allergens", space, LabelMatching::Strict).matched());

  // Idempotent, and never outside the label space.
  std::mt19937_64 rng(3);
  const std::string alphabet = "aAlLsS ergn\"'";
  for (int t = 0; t < 2000; ++t) {
    std::string raw;
    const std::size_t len = uniform_index(rng, 14);
    for (std::size_t i = 0; i < len; ++i) raw += alphabet[uniform_index(rng, alphabet.size())];
    if (t % 3 == 0) raw = "\"" + space.label(static_cast<ClassIndex>(uniform_index(rng, space.size()))) + "\"";
    auto p = parse_label(raw, space);
    if (p.matched()) {
      REQUIRE(*p.cls < space.size());
      CHECK(parse_label(space.label(*p.cls), space).cls == p.cls);
    }
    CHECK(p.raw == raw);
  }
}

TEST_CASE("oracle backends") {
  CompletionRequest req;
  auto spec = spec_with_labels({"allergens", "biological", "salmonella"});
  CompletionContext ctx{&spec, "biological", 7};

  OracleBackend perfect(OracleKind::Perfect, 1);
  CHECK(perfect.complete(req, ctx).text == "biological");

  // Absent true label: some shot's label, the same one on every call.
  ctx.true_label = "foreign bodies";
  auto first = perfect.complete(req, ctx).text;
  CHECK((first == "allergens" || first == "biological" || first == "salmonella"));
  CHECK(perfect.complete(req, ctx).text == first);

  auto single = spec_with_labels({"salmonella"});
  OracleBackend random(OracleKind::RandomShot, 2);
  CompletionContext one{&single, "allergens", 3};
  CHECK(random.complete(req, one).text == "salmonella");

  PromptSpec empty;
  CompletionContext none{&empty, "x", 0};
  CHECK_THROWS_AS(perfect.complete(req, none), InvalidArgument);
  CHECK_THROWS_AS(random.complete(req, CompletionContext{}), InvalidArgument);

  // RandomShot hits the true label at the rate of its share of the shots.
  auto mixed = spec_with_labels({"allergens", "biological", "salmonella", "salmonella", "foreign bodies"});
  const int n = 20000;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    CompletionContext c{&mixed, "salmonella", static_cast<std::uint64_t>(i)};
    auto text = random.complete(req, c).text;
    if (text == "salmonella") ++hits;
  }
  const double rate = static_cast<double>(hits) / n;
  CHECK(rate >= 1.0 / 5.0);
  CHECK(std::abs(rate - 0.4) < 4 * std::sqrt(0.4 * 0.6 / n));
}

TEST_CASE("scripted backend and prompt hash") {
  CHECK(prompt_hash("") == "cbf29ce484222325");
  CHECK(prompt_hash("a") == "af63dc4c8601ec8c");
  CHECK(prompt_hash("allergens") != prompt_hash("allergen"));
  ScriptedBackend b({{prompt_hash("p1"), "allergens"}});
  CompletionRequest req;
  req.prompt = "p1";
  CHECK(b.complete(req, {}).text == "allergens");
  req.prompt = "p2";
  CHECK_THROWS_AS(b.complete(req, {}), InvalidArgument);
  CHECK(b.calls() == 2);

  ScriptedBackend echo({}, [](const CompletionRequest&, const CompletionContext& c) { return c.true_label; });
  CompletionContext ctx;
  ctx.true_label = "salmonella";
  CHECK(echo.complete(req, ctx).text == "salmonella");
}

TEST_CASE("http backend against a local server") {
  SUBCASE("two 429 replies then success") {
    std::atomic<int> calls{0};
    std::string seen_auth, seen_body;
    FakeServer server([&](const httplib::Request& rq, httplib::Response& res) {
      if (calls.fetch_add(1) < 2) {
        res.status = 429;
        return;
      }
      seen_auth = rq.get_header_value("Authorization");
      seen_body = rq.body;
      reply_text(res, " allergens");
    });
    HttpBackend backend(fast_config(server.url()));
    CompletionRequest req;
    req.prompt = "P";
    auto r = backend.complete(req, {});
    CHECK(r.text == " allergens");
    CHECK(r.retries == 2);
    CHECK(calls == 3);
    CHECK(seen_auth == "Bearer secret");
    auto body = Json::parse(seen_body);
    CHECK(body["prompt"] == "P");
    CHECK(body["temperature"] == 0.0);
    CHECK(body["max_tokens"] == 20);
    CHECK(body["model"] == "test-model");
    CHECK(r.request_bytes == seen_body.size());
    CHECK(r.response_bytes > 0);
  }
  SUBCASE("server errors exhaust the retries") {
    std::atomic<int> calls{0};
    FakeServer server([&](const httplib::Request&, httplib::Response& res) {
      ++calls;
      res.status = 503;
    });
    auto cfg = fast_config(server.url());
    cfg.max_retries = 3;
    HttpBackend backend(cfg);
    CompletionRequest req;
    CHECK_THROWS_AS(backend.complete(req, {}), TransportError);
    CHECK(calls == 4);
  }
  SUBCASE("terminal status raises an api error") {
    std::atomic<int> calls{0};
    FakeServer server([&](const httplib::Request&, httplib::Response& res) {
      ++calls;
      res.status = 401;
      res.set_content("bad key", "text/plain");
    });
    HttpBackend backend(fast_config(server.url()));
    try {
      backend.complete(CompletionRequest{}, {});
      FAIL("expected ApiError");
    } catch (const ApiError& e) {
      CHECK(e.status() == 401);
      CHECK(std::string(e.what()).find("bad key") != std::string::npos);
    }
    CHECK(calls == 1);
  }
  SUBCASE("malformed body raises an api error") {
    FakeServer server([&](const httplib::Request&, httplib::Response& res) { res.set_content("{}", "application/json"); });
    HttpBackend backend(fast_config(server.url()));
    CHECK_THROWS_AS(backend.complete(CompletionRequest{}, {}), ApiError);
  }
  SUBCASE("timeout below the server latency") {
    FakeServer server([&](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(400ms);
      reply_text(res, "late");
    });
    auto cfg = fast_config(server.url());
    cfg.max_retries = 1;
    HttpBackend backend(cfg);
    CompletionRequest req;
    req.timeout = 100ms;
    const auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(backend.complete(req, {}), TransportError);
    const auto elapsed = std::chrono::steady_clock::now() - t0;
    // Two attempts of 100 ms plus at most 20 ms of backoff, with slack.
    CHECK(elapsed < 1000ms);
  }
  SUBCASE("configuration errors") {
    CHECK_THROWS_AS(HttpBackend{fast_config("127.0.0.1:80")}, InvalidArgument);
    CHECK_THROWS_AS(HttpBackend{fast_config("ftp://x/")}, InvalidArgument);
    auto cfg = fast_config("http://127.0.0.1:1/");
    cfg.max_in_flight = 0;
    CHECK_THROWS_AS(HttpBackend{cfg}, InvalidArgument);
  }
}

TEST_CASE("classify with an llm") {
  auto space = hazard_space();
  LabelMatcher matcher(space);
  CompletionRequest tmpl;

  SUBCASE("bypass never calls the backend") {
    ScriptedBackend b({});
    PromptOutcome out;
    out.bypass = true;
    out.bypass_class = 3;
    auto d = classify_with_llm(out, b, tmpl, {}, matcher);
    CHECK(d.prediction == ClassIndex{3});
    CHECK(d.telemetry.bypassed);
    CHECK(b.calls() == 0);
    CHECK_FALSE(d.raw_reply.has_value());
  }
  SUBCASE("prompted samples record telemetry and transcript") {
    PromptOutcome out;
    out.spec = spec_with_labels({"allergens", "allergens", "salmonella"});
    out.spec.shots[2].cls = 1;
    ScriptedBackend b({{prompt_hash(render(out.spec)), "Salmonella"}});
    std::ostringstream log;
    TranscriptWriter tw(log);
    CompletionContext ctx;
    ctx.sample_id = 9;
    auto d = classify_with_llm(out, b, tmpl, ctx, matcher, &tw);
    CHECK(d.prediction == space.find("salmonella"));
    CHECK(d.telemetry.prompt_bytes == render(out.spec).size());
    CHECK(d.telemetry.classes_in_prompt == 2);
    CHECK(d.telemetry.shots == 3);
    CHECK_FALSE(d.telemetry.parse_failure);
    auto rec = Json::parse(log.str());
    CHECK(rec["sample"] == 9);
    CHECK(rec["prompt_hash"] == prompt_hash(render(out.spec)));
    CHECK(rec["reply"] == "Salmonella");
    CHECK(rec["retries"] == 0);
  }
  SUBCASE("unparseable replies are failures") {
    PromptOutcome out;
    out.spec = spec_with_labels({"allergens"});
    ScriptedBackend b({}, [](const CompletionRequest&, const CompletionContext&) { return "salmonella and listeria"; });
    auto d = classify_with_llm(out, b, tmpl, {}, matcher);
    CHECK_FALSE(d.prediction.has_value());
    CHECK(d.telemetry.parse_failure);
    CHECK(d.raw_reply == "salmonella and listeria");
  }
}

TEST_CASE("perfect oracle accuracy equals conformal coverage") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t classes = 2 + uniform_index(rng, 8);
    std::vector<std::string> names;
    for (std::size_t c = 0; c < classes; ++c) names.push_back("class " + std::to_string(c));
    auto space = LabelSpace::from_labels(names);
    // Every class has at least one exemplar.
    std::vector<std::string> texts;
    std::vector<FeatureVector> vecs;
    std::vector<ClassIndex> ys;
    for (std::size_t i = 0; i < classes * 3; ++i) {
      texts.push_back("t" + std::to_string(i));
      vecs.push_back(FeatureVector::from_weights({{static_cast<std::uint32_t>(uniform_index(rng, 6)), 1.0}}));
      ys.push_back(static_cast<ClassIndex>(i % classes));
    }
    ExemplarPool pool(texts, vecs, ys, space);
    CalibrationModel cal;
    cal.q_hat = uniform_unit(rng);

    const std::size_t n = 60;
    std::vector<PromptOutcome> outcomes;
    std::vector<std::string> gold;
    std::vector<std::uint64_t> ids;
    std::size_t covered = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> p(classes);
      double s = 0;
      for (auto& v : p) s += v = std::pow(uniform_unit(rng), 3.0);
      for (auto& v : p) v /= s;
      ClassDistribution d{p};
      const auto y = static_cast<ClassIndex>(uniform_index(rng, classes));
      Query q{"q" + std::to_string(i), FeatureVector::from_weights({{static_cast<std::uint32_t>(uniform_index(rng, 6)), 1.0}})};
      outcomes.push_back(build_cicle(cal, d, pool, q, "d"));
      if (outcomes.back().set->contains(y)) ++covered;
      gold.push_back(space.label(y));
      ids.push_back(i);
    }
    OracleBackend oracle(OracleKind::Perfect, 5);
    LabelMatcher matcher(space);
    auto decisions = classify_batch(outcomes, oracle, CompletionRequest{}, gold, ids, matcher, 3);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (decisions[i].prediction && space.label(*decisions[i].prediction) == gold[i]) ++correct;
    }
    CHECK(correct == covered);

    // Scheduling does not change the results.
    auto serial = classify_batch(outcomes, oracle, CompletionRequest{}, gold, ids, matcher, 1);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(serial[i].prediction == decisions[i].prediction);
      CHECK(serial[i].telemetry.prompt_bytes == decisions[i].telemetry.prompt_bytes);
    }
  }
}

TEST_CASE("batch errors propagate") {
  auto space = hazard_space();
  LabelMatcher matcher(space);
  std::vector<PromptOutcome> outcomes(5);
  for (auto& o : outcomes) o.spec = spec_with_labels({"allergens"});
  ScriptedBackend b({});
  std::vector<std::string> gold(5, "allergens");
  std::vector<std::uint64_t> ids = {0, 1, 2, 3, 4};
  CHECK_THROWS_AS(classify_batch(outcomes, b, CompletionRequest{}, gold, ids, matcher, 2), InvalidArgument);
  std::vector<std::string> short_gold(4, "allergens");
  CHECK_THROWS_AS(classify_batch(outcomes, b, CompletionRequest{}, short_gold, ids, matcher, 2), InvalidArgument);
}
