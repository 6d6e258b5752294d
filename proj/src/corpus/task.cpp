#include "cicle/task.hpp"

#include <string>

#include "cicle/error.hpp"

namespace cicle {

std::string_view task_name(Task task) {
  switch (task) {
    case Task::Hazard: return "hazard";
    case Task::HazardCategory: return "hazard-category";
    case Task::Product: return "product";
    case Task::ProductCategory: return "product-category";
  }
  return "unknown";
}

Task parse_task(std::string_view name) {
  std::string n(name);
  for (auto& ch : n) {
    if (ch == '_') ch = '-';
  }
  for (Task t : kAllTasks) {
    if (task_name(t) == n) return t;
  }
  throw InvalidArgument("unknown task '" + std::string(name) +
                        "' (expected hazard, hazard-category, product or product-category)");
}

bool is_category_task(Task task) { return task == Task::HazardCategory || task == Task::ProductCategory; }

bool is_hazard_task(Task task) { return task == Task::Hazard || task == Task::HazardCategory; }

}  // namespace cicle
