#include "fsdc/serialize.hpp"

#include "fsdc/error.hpp"

#include <charconv>
#include <cmath>

namespace fsdc {

std::string hex_double(double v) {
    if (!std::isfinite(v)) throw NumericError("cannot encode non-finite value");
    char buf[64];
    bool neg = std::signbit(v);
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, std::abs(v), std::chars_format::hex);
    std::string out = neg ? "-0x" : "0x";
    out.append(buf, p);
    return out;
}

double parse_hex_double(std::string_view s) {
    bool neg = false;
    if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
        neg = s.front() == '-';
        s.remove_prefix(1);
    }
    if (s.size() < 2 || s[0] != '0' || (s[1] != 'x' && s[1] != 'X'))
        throw DataError("malformed hex float '" + std::string(s) + "'");
    s.remove_prefix(2);
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, std::chars_format::hex);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw DataError("malformed hex float '" + std::string(s) + "'");
    return neg ? -v : v;
}

Json vector_to_json(const Vector& v) {
    Json j = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(hex_double(v(i)));
    return j;
}

Vector vector_from_json(const Json& j) {
    if (!j.is_array()) throw DataError("expected an array of hex floats");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = parse_hex_double(j[i].get<std::string>());
    return v;
}

Json matrix_to_json(const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vector_to_json(m.row(r).transpose()));
    return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

Matrix matrix_from_json(const Json& j) {
    const auto rows = require(j, "rows").get<Eigen::Index>();
    const auto cols = require(j, "cols").get<Eigen::Index>();
    const Json& data = require(j, "data");
    if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != rows)
        throw DataError("matrix row count does not match header");
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        Vector row = vector_from_json(data[static_cast<std::size_t>(r)]);
        if (row.size() != cols) throw DataError("matrix column count does not match header");
        m.row(r) = row.transpose();
    }
    return m;
}

const Json& require(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw DataError(std::string("missing field '") + key + "'");
    return *it;
}

}  // namespace fsdc
