#pragma once

// Vendored nlohmann/json (3.11); the system copy is an older release.
#include <json.hpp>

namespace cicle {
using Json = nlohmann::json;
}
