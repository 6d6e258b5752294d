#include <algorithm>
#include <numeric>

#include "cicle/error.hpp"
#include "cicle/kernels.hpp"
#include "cicle/prompt.hpp"

namespace cicle {

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::All: return "all";
    case Strategy::SimK: return "sim-k";
    case Strategy::MaxK: return "max-k";
    case Strategy::Cicle: return "cicle";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  std::string n(name);
  for (auto& ch : n) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (n.starts_with("gpt-")) n = n.substr(4);
  if (n == "all") return Strategy::All;
  if (n == "sim-k" || n == "sim") return Strategy::SimK;
  if (n == "max-k" || n == "max") return Strategy::MaxK;
  if (n == "cicle") return Strategy::Cicle;
  throw InvalidArgument("unknown strategy '" + std::string(name) + "' (expected all, sim-k, max-k or cicle)");
}

std::string default_description(Task task) {
  const char* what = is_hazard_task(task) ? "food hazards" : "food products";
  return std::string("We are looking for ") + what + " in texts. Please predict the correct class for the following sample:";
}

std::vector<ClassIndex> PromptSpec::classes() const {
  std::vector<ClassIndex> out;
  for (const auto& s : shots) {
    if (std::find(out.begin(), out.end(), s.cls) == out.end()) out.push_back(s.cls);
  }
  return out;
}

ExemplarPool::ExemplarPool(std::vector<std::string> texts, std::vector<FeatureVector> vectors,
                           std::vector<ClassIndex> labels, LabelSpace space)
    : texts_(std::move(texts)), vectors_(std::move(vectors)), labels_(std::move(labels)), space_(std::move(space)) {
  if (texts_.size() != vectors_.size() || texts_.size() != labels_.size()) {
    throw InvalidArgument("exemplar texts, vectors and labels differ in count");
  }
  members_.resize(space_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] >= space_.size()) throw InvalidArgument("exemplar label out of range");
    members_[labels_[i]].push_back(i);
  }
}

ExemplarPool ExemplarPool::from_dataset(const LabeledDataset& ds, std::span<const std::size_t> indices, Task task,
                                        const VectorizerModel& vectorizer) {
  std::vector<std::string> texts;
  std::vector<ClassIndex> labels;
  const auto& space = ds.label_space(task);
  for (std::size_t i : indices) {
    texts.push_back(ds.record(i).title);
    labels.push_back(space.index_of(ds.record(i).label(task)));
  }
  auto vectors = transform_all(vectorizer, texts);
  return ExemplarPool(std::move(texts), std::move(vectors), std::move(labels), space);
}

std::vector<double> ExemplarPool::similarities(const FeatureVector& query) const {
  std::vector<double> sims(vectors_.size());
  kernels::serial::similarity_scan(vectors_, query, sims);
  return sims;
}

std::vector<FewShot> ExemplarPool::nearest_of_class(ClassIndex cls, std::span<const double> sims,
                                                    std::size_t per_class) const {
  std::vector<std::size_t> m(members_.at(cls));
  auto closer = [&](std::size_t a, std::size_t b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); };
  std::size_t take = std::min(per_class, m.size());
  std::partial_sort(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(take), m.end(), closer);
  std::vector<FewShot> out;
  for (std::size_t j = 0; j < take; ++j) {
    std::size_t i = m[j];
    out.push_back({texts_[i], space_.label(cls), cls, i, sims[i], std::nullopt});
  }
  return out;
}

namespace {

constexpr std::size_t kShotsPerClass = 2;

void sort_by_similarity(std::vector<FewShot>& shots) {
  std::sort(shots.begin(), shots.end(), [](const FewShot& a, const FewShot& b) {
    return a.similarity > b.similarity || (a.similarity == b.similarity && a.train_index < b.train_index);
  });
}

PromptSpec grouped_by_class(Strategy strategy, std::size_t k, std::span<const ClassIndex> classes,
                            const ClassDistribution& probs, const ExemplarPool& pool, const Query& q,
                            std::string description) {
  PromptSpec spec;
  spec.strategy = strategy;
  spec.k = k;
  spec.description = std::move(description);
  spec.query = q.text;
  auto sims = pool.similarities(q.vector);
  for (ClassIndex c : classes) {
    for (auto& shot : pool.nearest_of_class(c, sims, kShotsPerClass)) {
      shot.class_probability = probs[c];
      spec.shots.push_back(std::move(shot));
    }
  }
  render_and_measure(spec);
  return spec;
}

// Class indices by descending probability, ties by index.
std::vector<ClassIndex> ranked_classes(const ClassDistribution& probs) {
  std::vector<ClassIndex> order(probs.size());
  std::iota(order.begin(), order.end(), ClassIndex{0});
  std::stable_sort(order.begin(), order.end(), [&](ClassIndex a, ClassIndex b) { return probs[a] > probs[b]; });
  return order;
}

void check_pool(const ExemplarPool& pool) {
  if (pool.size() == 0) throw InvalidArgument("exemplar pool is empty");
}

}  // namespace

PromptSpec build_all(const ExemplarPool& pool, const Query& q, std::string description) {
  check_pool(pool);
  PromptSpec spec;
  spec.strategy = Strategy::All;
  spec.description = std::move(description);
  spec.query = q.text;
  auto sims = pool.similarities(q.vector);
  for (ClassIndex c = 0; c < pool.space().size(); ++c) {
    for (auto& shot : pool.nearest_of_class(c, sims, kShotsPerClass)) spec.shots.push_back(std::move(shot));
  }
  sort_by_similarity(spec.shots);
  render_and_measure(spec);
  return spec;
}

PromptSpec build_sim_k(const ExemplarPool& pool, const Query& q, std::size_t k, std::string description) {
  if (k == 0) throw InvalidArgument("SIM-k needs k >= 1");
  PromptSpec spec = build_all(pool, q, std::move(description));
  spec.strategy = Strategy::SimK;
  spec.k = k;
  if (spec.shots.size() > k) spec.shots.resize(k);
  render_and_measure(spec);
  return spec;
}

PromptSpec build_max_k(const ClassDistribution& probs, const ExemplarPool& pool, const Query& q, std::size_t k,
                       std::string description) {
  check_pool(pool);
  if (k == 0) throw InvalidArgument("MAX-k needs k >= 1");
  if (probs.size() != pool.space().size()) throw InvalidArgument("distribution does not match the label space");
  auto ranked = ranked_classes(probs);
  if (ranked.size() > k) ranked.resize(k);
  return grouped_by_class(Strategy::MaxK, k, ranked, probs, pool, q, std::move(description));
}

PromptOutcome build_cicle(const CalibrationModel& cal, const ClassDistribution& probs, const ExemplarPool& pool,
                          const Query& q, std::string description) {
  check_pool(pool);
  if (probs.size() != pool.space().size()) throw InvalidArgument("distribution does not match the label space");
  PromptOutcome out;
  PredictionSet set = predict_set(cal, probs);
  if (set.size() == 1) {
    out.bypass = true;
    out.bypass_class = set.classes.front();
    out.bypass_label = pool.space().label(out.bypass_class);
  } else {
    out.spec = grouped_by_class(Strategy::Cicle, 0, set.classes, probs, pool, q, std::move(description));
  }
  out.set = std::move(set);
  return out;
}

std::string render(const PromptSpec& spec) {
  std::string out = spec.description;
  for (const auto& s : spec.shots) {
    out += "\n\"";
    out += s.text;
    out += "\" => ";
    out += s.label;
  }
  out += "\n\"";
  out += spec.query;
  out += "\" => ";
  return out;
}

std::string render_and_measure(PromptSpec& spec) {
  std::string text = render(spec);
  spec.rendered_bytes = text.size();
  return text;
}

ParsedPrompt parse_rendered(std::string_view prompt) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  for (;;) {
    std::size_t nl = prompt.find('\n', start);
    lines.push_back(prompt.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  if (lines.size() < 2) throw InvalidArgument("prompt has no query line");
  auto split = [](std::string_view line) -> std::pair<std::string, std::string> {
    constexpr std::string_view sep = "\" => ";
    std::size_t at = line.rfind(sep);
    if (line.empty() || line.front() != '"' || at == std::string_view::npos || at == 0) {
      throw InvalidArgument("malformed prompt line: " + std::string(line));
    }
    return {std::string(line.substr(1, at - 1)), std::string(line.substr(at + sep.size()))};
  };
  ParsedPrompt p;
  p.description = std::string(lines.front());
  for (std::size_t i = 1; i + 1 < lines.size(); ++i) p.shots.push_back(split(lines[i]));
  auto last = split(lines.back());
  if (!last.second.empty()) throw InvalidArgument("query line must end with '=> '");
  p.query = std::move(last.first);
  return p;
}

Json telemetry_json(const PromptOutcome& outcome, const LabelSpace& space) {
  Json j;
  if (outcome.bypass) {
    j["strategy"] = "cicle";
    j["bypass"] = true;
    j["prompt_bytes"] = 0;
    j["classes"] = Json::array({space.label(outcome.bypass_class)});
    j["shots"] = 0;
  } else {
    j["strategy"] = std::string(strategy_name(outcome.spec.strategy));
    j["bypass"] = false;
    j["prompt_bytes"] = outcome.spec.rendered_bytes;
    Json classes = Json::array();
    for (ClassIndex c : outcome.spec.classes()) classes.push_back(space.label(c));
    j["classes"] = std::move(classes);
    j["shots"] = outcome.spec.shots.size();
  }
  if (outcome.set) {
    j["set_size"] = outcome.set->size();
    j["fallback"] = outcome.set->provenance == SetProvenance::EmptyFallback;
  }
  return j;
}

}  // namespace cicle
