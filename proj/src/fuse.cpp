#include "fsdc/fuse.hpp"

#include "fsdc/error.hpp"
#include "fsdc/parallel.hpp"
#include "fsdc/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace fsdc {

namespace {

template <typename Fn>
auto staged(const char* stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const ConfigError& e) {
        throw StageError(stage, StageError::Kind::config, e.what());
    } catch (const DataError& e) {
        throw StageError(stage, StageError::Kind::data, e.what());
    } catch (const NumericError& e) {
        throw StageError(stage, StageError::Kind::numeric, e.what());
    } catch (const std::exception& e) {
        throw StageError(stage, StageError::Kind::other, e.what());
    }
}

SubspaceMatrix select_columns(const SubspaceMatrix& x, std::span<const std::size_t> cols) {
    SubspaceMatrix out(x.rows(), static_cast<Eigen::Index>(cols.size()));
    out.reserve(x.nonZeros());
    for (std::size_t c = 0; c < cols.size(); ++c) {
        out.startVec(static_cast<Eigen::Index>(c));
        for (SubspaceMatrix::InnerIterator it(x, static_cast<Eigen::Index>(cols[c])); it; ++it)
            out.insertBack(it.row(), static_cast<Eigen::Index>(c)) = it.value();
    }
    out.finalize();
    return out;
}

std::uint64_t local_seed(std::uint64_t seed, std::size_t i) { return mix_seed(seed, 1000 + i); }

TrbfOptions trbf_options(const DcConfig& c, unsigned threads) { return {c.max_intrinsic_dim, threads}; }

std::vector<Model> train_locals(const DcConfig& config, const std::vector<SubspaceMatrix>& views,
                                std::span<const int> y) {
    std::vector<Model> locals(views.size());
    parallel_for(views.size(), config.threads, [&](std::size_t i) {
        locals[i] = train_model(config.local, views[i], y, local_seed(config.seed, i), trbf_options(config, 1));
    });
    return locals;
}

// Out-of-fold local scores: every training instance is scored by locals that
// did not see it.
LocalOutputMatrix cross_fitted_r(const DcConfig& config, const std::vector<SubspaceMatrix>& views,
                                 std::span<const int> y) {
    const std::size_t n = y.size();
    const std::size_t folds = std::min(config.cross_fit_folds, n);
    if (folds < 2) throw ConfigError("cross-fitting needs at least 2 folds and 2 instances");
    Rng rng(mix_seed(config.seed, 999));
    auto perm = seeded_permutation(n, rng);
    std::vector<std::size_t> fold_of(n);
    for (std::size_t i = 0; i < n; ++i) fold_of[perm[i]] = i % folds;

    LocalOutputMatrix r(static_cast<Eigen::Index>(views.size()), static_cast<Eigen::Index>(n));
    for (std::size_t f = 0; f < folds; ++f) {
        std::vector<std::size_t> fit_idx, held_idx;
        for (std::size_t i = 0; i < n; ++i) (fold_of[i] == f ? held_idx : fit_idx).push_back(i);
        std::vector<int> fit_y;
        for (auto i : fit_idx) fit_y.push_back(y[i]);
        parallel_for(views.size(), config.threads, [&](std::size_t v) {
            Model m = train_model(config.local, select_columns(views[v], fit_idx), fit_y, local_seed(config.seed, v),
                                  trbf_options(config, 1));
            Vector s = predict_model(m, select_columns(views[v], held_idx));
            for (std::size_t k = 0; k < held_idx.size(); ++k)
                r(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(held_idx[k])) = s(static_cast<Eigen::Index>(k));
        });
    }
    return r;
}

Json learner_to_json(const LearnerSpec& s) {
    return Json{{"type", s.type == LearnerType::linear ? "linear" : "trbf"},
                {"lambda", s.lambda},
                {"sigma", s.sigma},
                {"order", s.order}};
}

LearnerSpec learner_from_json(const Json& j) {
    LearnerSpec s;
    const auto type = require(j, "type").get<std::string>();
    if (type == "linear")
        s.type = LearnerType::linear;
    else if (type == "trbf")
        s.type = LearnerType::trbf;
    else
        throw DataError("unknown learner type '" + type + "'");
    s.lambda = require(j, "lambda").get<double>();
    s.sigma = require(j, "sigma").get<double>();
    s.order = require(j, "order").get<int>();
    return s;
}

}  // namespace

Standardizer Standardizer::fit(const LocalOutputMatrix& r) {
    Standardizer s;
    s.shift = Vector::Zero(r.rows());
    s.scale = Vector::Ones(r.rows());
    const double n = static_cast<double>(r.cols());
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
        const double mean = r.row(i).mean();
        const double var = (r.row(i).array() - mean).square().sum() / n;
        if (var > 0) {
            s.shift(i) = mean;
            s.scale(i) = 1.0 / std::sqrt(var);
        }
    }
    return s;
}

LocalOutputMatrix Standardizer::apply(const LocalOutputMatrix& r) const {
    if (r.rows() != shift.size()) throw DimensionError("standardizer row count mismatch");
    LocalOutputMatrix out = r;
    for (Eigen::Index i = 0; i < r.rows(); ++i)
        if (scale(i) != 1.0 || shift(i) != 0.0) out.row(i) = (r.row(i).array() - shift(i)) * scale(i);
    return out;
}

double StageTimings::total() const {
    double t = 0;
    for (const auto& [_, s] : stages) t += s;
    return t;
}

LocalOutputMatrix build_r(const std::vector<Model>& locals, const std::vector<SubspaceMatrix>& views,
                          unsigned threads) {
    if (locals.size() != views.size())
        throw DimensionError(std::to_string(locals.size()) + " local models but " + std::to_string(views.size()) +
                             " subspace views");
    if (views.empty()) throw DimensionError("no subspace views");
    const Eigen::Index n = views.front().cols();
    LocalOutputMatrix r(static_cast<Eigen::Index>(views.size()), n);
    parallel_for(views.size(), threads, [&](std::size_t i) {
        if (views[i].cols() != n) throw DimensionError("subspace views disagree on instance count");
        r.row(static_cast<Eigen::Index>(i)) = predict_model(locals[i], views[i]).transpose();
    });
    if (!r.allFinite()) throw NumericError("local classifier produced non-finite scores");
    return r;
}

DcModel train_dc(const Dataset& train, const DcConfig& config, StageTimings* timings) {
    StageTimings local_timings;
    StageTimings& t = timings ? *timings : local_timings;
    if (config.plan.empty()) throw StageError("config", StageError::Kind::config, "decomposition plan is empty");

    DcModel model;
    model.config = config;

    std::vector<SubspaceDecomposition> parts;
    for (std::size_t k = 0; k < config.plan.size(); ++k) {
        StageTimer timer;
        const auto& e = config.plan[k];
        std::string stage = "fit " + std::string(method_name(e.method));
        parts.push_back(staged(stage.c_str(), [&] { return fit_entry(train, e, mix_seed(config.seed, k), config.decompose); }));
        t.add(stage, timer.seconds());
    }
    StageTimer timer;
    model.decomposition = staged("compose", [&] { return compose(std::move(parts), config.seed); });
    auto views = staged("apply", [&] { return model.decomposition.apply(train, config.threads); });
    t.add("apply decomposition", timer.seconds());

    timer = StageTimer();
    model.locals = staged("local training", [&] { return train_locals(config, views, train.labels()); });
    t.add("local training", timer.seconds());

    timer = StageTimer();
    LocalOutputMatrix r = staged("local scoring", [&] {
        return config.cross_fit ? cross_fitted_r(config, views, train.labels()) : build_r(model.locals, views, config.threads);
    });
    t.add("local scoring", timer.seconds());

    timer = StageTimer();
    staged("fusion", [&] {
        model.standardizer = Standardizer::fit(r);
        model.global = train_model(config.global, model.standardizer.apply(r), train.labels(),
                                   mix_seed(config.seed, 2000), trbf_options(config, config.threads));
        return 0;
    });
    t.add("fusion", timer.seconds());
    return model;
}

Prediction predict_from_r(const DcModel& model, const LocalOutputMatrix& r) {
    if (static_cast<std::size_t>(r.rows()) != model_input_dim(model.global))
        throw DimensionError("global classifier expects " + std::to_string(model_input_dim(model.global)) +
                             " local outputs, got " + std::to_string(r.rows()));
    Prediction p;
    p.scores = predict_model(model.global, model.standardizer.apply(r), model.config.threads);
    p.labels.resize(static_cast<std::size_t>(p.scores.size()));
    for (Eigen::Index i = 0; i < p.scores.size(); ++i) p.labels[static_cast<std::size_t>(i)] = p.scores(i) >= 0 ? 1 : -1;
    return p;
}

Prediction predict_dc(const DcModel& model, const Dataset& test, StageTimings* timings) {
    StageTimer timer;
    if (test.n_features() > model.decomposition.input_dim())
        throw StageError("predict", StageError::Kind::data,
                         "test data has " + std::to_string(test.n_features()) + " features; model was trained on " +
                             std::to_string(model.decomposition.input_dim()));
    Dataset x = test.with_min_features(model.decomposition.input_dim());
    if (!model.feature_scale.empty()) x = x.scaled(model.feature_scale);
    auto views = staged("apply", [&] { return model.decomposition.apply(x, model.config.threads); });
    LocalOutputMatrix r = staged("local scoring", [&] { return build_r(model.locals, views, model.config.threads); });
    Prediction p = staged("global prediction", [&] { return predict_from_r(model, r); });
    if (timings) timings->add("prediction", timer.seconds());
    return p;
}

Metrics evaluate(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size())
        throw DimensionError("prediction count " + std::to_string(predicted.size()) + " differs from label count " +
                             std::to_string(truth.size()));
    if (truth.empty()) throw DimensionError("nothing to evaluate");
    Metrics m;
    m.n = truth.size();
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool pred_pos = predicted[i] > 0, true_pos = truth[i] > 0;
        if (pred_pos && true_pos) ++m.true_pos;
        else if (!pred_pos && !true_pos) ++m.true_neg;
        else if (pred_pos) ++m.false_pos;
        else ++m.false_neg;
    }
    m.error_rate = 100.0 * static_cast<double>(m.false_pos + m.false_neg) / static_cast<double>(m.n);
    return m;
}

Json config_to_json(const DcConfig& c) {
    Json plan = Json::array();
    for (const auto& e : c.plan)
        plan.push_back({{"method", std::string(method_name(e.method))},
                        {"n_subspaces", e.n_subspaces},
                        {"group_size", e.group_size}});
    return Json{{"decomposition", plan},
                {"local", learner_to_json(c.local)},
                {"global", learner_to_json(c.global)},
                {"guards", {{"max_dense_features", c.decompose.max_dense_features},
                            {"max_intrinsic_dim", c.max_intrinsic_dim}}},
                {"center_pca", c.decompose.center_pca},
                {"center_bcd", c.decompose.center_bcd},
                {"dca_ridge", c.decompose.dca_ridge},
                {"pad_abd", c.decompose.pad_abd},
                {"cross_fit", c.cross_fit},
                {"cross_fit_folds", c.cross_fit_folds},
                {"threads", c.threads},
                {"seed", c.seed}};
}

DcConfig config_from_json(const Json& j) {
    DcConfig c;
    for (const auto& e : require(j, "decomposition"))
        c.plan.push_back({parse_method(require(e, "method").get<std::string>()),
                          require(e, "n_subspaces").get<std::size_t>(), require(e, "group_size").get<std::size_t>()});
    c.local = learner_from_json(require(j, "local"));
    c.global = learner_from_json(require(j, "global"));
    const Json& g = require(j, "guards");
    c.decompose.max_dense_features = require(g, "max_dense_features").get<std::size_t>();
    c.max_intrinsic_dim = require(g, "max_intrinsic_dim").get<std::size_t>();
    c.decompose.center_pca = require(j, "center_pca").get<bool>();
    c.decompose.center_bcd = require(j, "center_bcd").get<bool>();
    c.decompose.dca_ridge = require(j, "dca_ridge").get<double>();
    c.decompose.pad_abd = require(j, "pad_abd").get<bool>();
    c.cross_fit = require(j, "cross_fit").get<bool>();
    c.cross_fit_folds = require(j, "cross_fit_folds").get<std::size_t>();
    c.threads = require(j, "threads").get<unsigned>();
    c.seed = require(j, "seed").get<std::uint64_t>();
    return c;
}

Json dc_model_to_json(const DcModel& m) {
    Json locals = Json::array();
    for (const auto& l : m.locals) locals.push_back(model_to_json(l));
    return Json{{"format", "fsdc-model"},
                {"version", kModelFormatVersion},
                {"config", config_to_json(m.config)},
                {"decomposition", m.decomposition.to_json()},
                {"locals", std::move(locals)},
                {"standardizer", {{"shift", vector_to_json(m.standardizer.shift)},
                                  {"scale", vector_to_json(m.standardizer.scale)}}},
                {"global", model_to_json(m.global)},
                {"feature_scale", m.feature_scale.empty() ? Json(nullptr) : vector_to_json(Eigen::Map<const Vector>(
                                      m.feature_scale.data(), static_cast<Eigen::Index>(m.feature_scale.size())))}};
}

DcModel dc_model_from_json(const Json& j) {
    if (!j.is_object() || j.value("format", "") != "fsdc-model") throw DataError("not a model archive");
    const int version = require(j, "version").get<int>();
    if (version != kModelFormatVersion)
        throw DataError("model archive version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kModelFormatVersion) + ")");
    DcModel m;
    m.config = config_from_json(require(j, "config"));
    m.decomposition = CompositeDecomposition::from_json(require(j, "decomposition"));
    for (const auto& l : require(j, "locals")) m.locals.push_back(model_from_json(l));
    const Json& s = require(j, "standardizer");
    m.standardizer.shift = vector_from_json(require(s, "shift"));
    m.standardizer.scale = vector_from_json(require(s, "scale"));
    m.global = model_from_json(require(j, "global"));
    if (const Json& fs = require(j, "feature_scale"); !fs.is_null()) {
        Vector v = vector_from_json(fs);
        m.feature_scale.assign(v.data(), v.data() + v.size());
    }
    if (m.locals.size() != m.decomposition.h()) throw DataError("model archive: local count does not match h");
    if (model_input_dim(m.global) != m.decomposition.h()) throw DataError("model archive: global input dimension is not h");
    return m;
}

void save_dc_model(const std::filesystem::path& path, const DcModel& m) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << dc_model_to_json(m).dump(1) << '\n';
}

DcModel load_dc_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return dc_model_from_json(j);
}

}  // namespace fsdc
