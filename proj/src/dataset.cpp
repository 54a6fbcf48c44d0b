#include "fsdc/dataset.hpp"

#include "fsdc/error.hpp"
#include "fsdc/random.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

namespace fsdc {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

std::string_view next_token(std::string_view& rest) {
    std::size_t b = 0;
    while (b < rest.size() && is_space(rest[b])) ++b;
    std::size_t e = b;
    while (e < rest.size() && !is_space(rest[e])) ++e;
    std::string_view tok = rest.substr(b, e - b);
    rest.remove_prefix(e);
    return tok;
}

bool parse_real(std::string_view s, double& out) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

bool parse_index(std::string_view s, std::uint64_t& out) {
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

struct RawInstance {
    double label;
    SparseVector features;
};

Dataset assemble(std::vector<RawInstance>& raw, std::size_t max_index, std::size_t min_features) {
    if (raw.empty()) throw ValidationError("input contains no instances");
    // {1,2}-labelled files (covtype) map 1 -> +1 and 2 -> -1; everything
    // else maps by sign.
    bool one_two = std::all_of(raw.begin(), raw.end(),
                               [](const RawInstance& r) { return r.label == 1.0 || r.label == 2.0; });
    std::vector<int> labels;
    std::vector<SparseVector> cols;
    labels.reserve(raw.size());
    cols.reserve(raw.size());
    for (auto& r : raw) {
        if (one_two)
            labels.push_back(r.label == 1.0 ? 1 : -1);
        else
            labels.push_back(r.label > 0 ? 1 : -1);
        cols.push_back(std::move(r.features));
    }
    std::size_t m = std::max({max_index, min_features, std::size_t{1}});
    return Dataset::from_columns(m, cols, std::move(labels));
}

}  // namespace

Dataset Dataset::from_columns(std::size_t n_features, const std::vector<SparseVector>& columns,
                              std::vector<int> labels) {
    if (n_features == 0) throw ValidationError("dataset must have at least one feature");
    if (columns.empty()) throw ValidationError("dataset must have at least one instance");
    if (labels.size() != columns.size())
        throw ValidationError("label count " + std::to_string(labels.size()) +
                              " differs from instance count " + std::to_string(columns.size()));
    Dataset ds;
    ds.n_features_ = n_features;
    ds.offsets_.clear();
    ds.offsets_.reserve(columns.size() + 1);
    ds.offsets_.push_back(0);
    for (std::size_t k = 0; k < columns.size(); ++k) {
        if (labels[k] != 1 && labels[k] != -1)
            throw ValidationError("instance " + std::to_string(k + 1) + ": label must be -1 or +1");
        const auto& col = columns[k];
        for (std::size_t i = 0; i < col.size(); ++i) {
            if (col[i].index >= n_features)
                throw ValidationError("instance " + std::to_string(k + 1) + ": feature index " +
                                      std::to_string(col[i].index + 1) + " exceeds M=" +
                                      std::to_string(n_features));
            if (i > 0 && col[i].index <= col[i - 1].index)
                throw ValidationError("instance " + std::to_string(k + 1) +
                                      ": feature indices not strictly ascending");
            if (!std::isfinite(col[i].value))
                throw ValidationError("instance " + std::to_string(k + 1) + ": non-finite value");
            if (col[i].value != 0.0) ds.entries_.push_back(col[i]);
        }
        ds.offsets_.push_back(ds.entries_.size());
    }
    ds.labels_ = std::move(labels);
    return ds;
}

Dataset Dataset::with_min_features(std::size_t m) const {
    Dataset out = *this;
    out.n_features_ = std::max(n_features_, m);
    return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.n_features_ = n_features_;
    out.labels_.reserve(rows.size());
    for (std::size_t r : rows) {
        auto col = column(r);
        out.entries_.insert(out.entries_.end(), col.begin(), col.end());
        out.offsets_.push_back(out.entries_.size());
        out.labels_.push_back(labels_[r]);
    }
    return out;
}

Dataset Dataset::scaled(std::span<const double> feature_scale) const {
    Dataset out = *this;
    for (auto& e : out.entries_) e.value *= e.index < feature_scale.size() ? feature_scale[e.index] : 1.0;
    return out;
}

Eigen::SparseMatrix<double> Dataset::matrix() const {
    Eigen::SparseMatrix<double> x(static_cast<Eigen::Index>(n_features_),
                                  static_cast<Eigen::Index>(n_instances()));
    x.reserve(static_cast<Eigen::Index>(entries_.size()));
    for (std::size_t k = 0; k < n_instances(); ++k) {
        x.startVec(static_cast<Eigen::Index>(k));
        for (const auto& f : column(k))
            x.insertBack(static_cast<Eigen::Index>(f.index), static_cast<Eigen::Index>(k)) = f.value;
    }
    x.finalize();
    return x;
}

Dataset parse_libsvm(std::istream& in, std::size_t min_features) {
    std::vector<RawInstance> raw;
    std::size_t max_index = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view rest = line;
        if (auto hash = rest.find('#'); hash != std::string_view::npos) rest = rest.substr(0, hash);
        std::string_view tok = next_token(rest);
        if (tok.empty()) continue;
        RawInstance inst;
        if (!parse_real(tok, inst.label))
            throw ParseError(lineno, "malformed label '" + std::string(tok) + "'");
        if (!std::isfinite(inst.label)) throw ParseError(lineno, "non-finite label");
        std::uint64_t prev = 0;
        for (tok = next_token(rest); !tok.empty(); tok = next_token(rest)) {
            auto colon = tok.find(':');
            if (colon == std::string_view::npos)
                throw ParseError(lineno, "expected idx:val, got '" + std::string(tok) + "'");
            std::uint64_t idx = 0;
            double val = 0;
            if (!parse_index(tok.substr(0, colon), idx))
                throw ParseError(lineno, "malformed index in '" + std::string(tok) + "'");
            if (!parse_real(tok.substr(colon + 1), val))
                throw ParseError(lineno, "malformed value in '" + std::string(tok) + "'");
            if (idx == 0) throw ValidationError("line " + std::to_string(lineno) + ": feature index 0");
            if (idx > 0xffffffffULL)
                throw ValidationError("line " + std::to_string(lineno) + ": feature index too large");
            if (idx <= prev)
                throw ValidationError("line " + std::to_string(lineno) +
                                      ": feature indices not strictly ascending");
            if (!std::isfinite(val))
                throw ValidationError("line " + std::to_string(lineno) + ": non-finite value");
            prev = idx;
            max_index = std::max<std::size_t>(max_index, idx);
            if (val != 0.0) inst.features.push_back({static_cast<std::uint32_t>(idx - 1), val});
        }
        raw.push_back(std::move(inst));
    }
    return assemble(raw, max_index, min_features);
}

Dataset parse_libsvm(std::string_view text, std::size_t min_features) {
    std::istringstream in{std::string(text)};
    return parse_libsvm(in, min_features);
}

Dataset load_libsvm(const std::filesystem::path& path, std::size_t min_features) {
    if (path.extension() == ".gz") {
        gzFile gz = gzopen(path.c_str(), "rb");
        if (!gz) throw DataError("cannot open " + path.string());
        std::string text;
        char buf[1 << 16];
        int n;
        while ((n = gzread(gz, buf, sizeof buf)) > 0) text.append(buf, static_cast<std::size_t>(n));
        int err = 0;
        const char* msg = n < 0 ? gzerror(gz, &err) : nullptr;
        gzclose(gz);
        if (msg) throw DataError("gzip error in " + path.string() + ": " + msg);
        return parse_libsvm(std::string_view(text), min_features);
    }
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return parse_libsvm(in, min_features);
}

void write_libsvm(std::ostream& out, const Dataset& ds) {
    char buf[64];
    std::string line;
    for (std::size_t k = 0; k < ds.n_instances(); ++k) {
        line = ds.label(k) > 0 ? "+1" : "-1";
        for (const auto& f : ds.column(k)) {
            line += ' ';
            line += std::to_string(static_cast<std::uint64_t>(f.index) + 1);
            line += ':';
            auto [p, ec] = std::to_chars(buf, buf + sizeof buf, f.value);
            line.append(buf, p);
        }
        line += '\n';
        out << line;
    }
}

std::string serialize_libsvm(const Dataset& ds) {
    std::ostringstream out;
    write_libsvm(out, ds);
    return out.str();
}

void save_libsvm(const std::filesystem::path& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    write_libsvm(out, ds);
}

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw ConfigError("train_fraction must lie strictly between 0 and 1");
    const std::size_t n = ds.n_instances();
    const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
    if (n_train == 0 || n_train >= n)
        throw ValidationError("split of " + std::to_string(n) + " instances leaves one side empty");
    Rng rng(spec.seed);
    auto perm = seeded_permutation(n, rng);
    std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {ds.subset(train), ds.subset(test)};
}

MaxAbsScaler MaxAbsScaler::fit(const Dataset& ds) {
    MaxAbsScaler s;
    std::vector<double> maxabs(ds.n_features(), 0.0);
    for (std::size_t k = 0; k < ds.n_instances(); ++k)
        for (const auto& f : ds.column(k)) maxabs[f.index] = std::max(maxabs[f.index], std::abs(f.value));
    s.scale_.resize(maxabs.size());
    for (std::size_t j = 0; j < maxabs.size(); ++j) s.scale_[j] = maxabs[j] > 0 ? 1.0 / maxabs[j] : 1.0;
    return s;
}

Dataset MaxAbsScaler::apply(const Dataset& ds) const { return ds.scaled(scale_); }

}  // namespace fsdc
