#pragma once

#include <random>
#include <string>
#include <vector>

#include "cicle/corpus.hpp"

namespace cicle::testing {

inline IncidentRecord make_record(std::string title, std::string hazard, std::string hazard_category,
                                  std::string product = "p", std::string product_category = "pc") {
  IncidentRecord r;
  r.title = std::move(title);
  r.hazard = std::move(hazard);
  r.hazard_category = std::move(hazard_category);
  r.product = std::move(product);
  r.product_category = std::move(product_category);
  return r;
}

// Recall titles whose words identify the labels, with some noise words.
inline LabeledDataset synthetic_recalls(std::size_t n, std::uint64_t seed = 7) {
  struct Cat {
    const char* name;
    std::vector<const char*> hazards;
  };
  const std::vector<Cat> cats = {{"biological", {"salmonella", "listeria", "norovirus"}},
                                 {"allergens", {"milk", "peanuts", "eggs", "sesame"}},
                                 {"foreign bodies", {"glass", "metal"}}};
  const std::vector<Cat> prods = {{"meat", {"sausage", "ham"}}, {"dairy", {"cheese", "yogurt"}}, {"snacks", {"chips"}}};
  const std::vector<const char*> firms = {"Acme", "Best Foods", "Sunrise", "Golden"};
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t n_items) { return static_cast<std::size_t>(rng() % n_items); };
  std::vector<IncidentRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Cat& c = cats[pick(cats.size())];
    const std::string hazard = c.hazards[pick(c.hazards.size())];
    const Cat& pc = prods[pick(prods.size())];
    const std::string product = pc.hazards[pick(pc.hazards.size())];
    std::string title = std::string(firms[pick(firms.size())]) + " recalls " + product + " due to " + hazard;
    if (pick(3) == 0) title += " contamination";
    out.push_back(make_record(title, hazard, c.name, product, pc.name));
  }
  return LabeledDataset(std::move(out));
}

}  // namespace cicle::testing
