#pragma once

// Internal shim: keep the vendored json header out of public includes.
#include <json.hpp>

namespace vat {
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
}  // namespace vat
