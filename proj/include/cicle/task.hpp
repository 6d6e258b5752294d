#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace cicle {

using ClassIndex = std::uint32_t;

// The four labelings carried by every record.
enum class Task { Hazard, HazardCategory, Product, ProductCategory };

inline constexpr std::array<Task, 4> kAllTasks = {Task::Hazard, Task::HazardCategory, Task::Product,
                                                  Task::ProductCategory};

std::string_view task_name(Task task);
Task parse_task(std::string_view name);

// hazard-category and product-category
bool is_category_task(Task task);
bool is_hazard_task(Task task);

}  // namespace cicle
