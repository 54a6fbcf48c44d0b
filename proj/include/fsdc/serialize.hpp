#pragma once

#include "fsdc/numerics.hpp"

#include <json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace fsdc {

using Json = nlohmann::json;

// Exact text encoding of doubles as hexadecimal floats ("-0x1.8p+1").
std::string hex_double(double v);
double parse_hex_double(std::string_view s);

Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);
// Row-major: an array of rows, each an array of hex strings.
Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

// Throws DataError with `what` naming the missing field.
const Json& require(const Json& j, const char* key);

}  // namespace fsdc
