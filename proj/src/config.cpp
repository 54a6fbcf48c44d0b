#include "fsdc/config.hpp"

#include "fsdc/error.hpp"
#include "fsdc/parallel.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace fsdc {

namespace {

class Checker {
public:
    void fail(std::string msg) { errors_.push_back(std::move(msg)); }

    void known_keys(const Json& j, const std::string& where, std::initializer_list<const char*> keys) {
        if (!j.is_object()) {
            fail(where + ": expected an object");
            return;
        }
        std::set<std::string> allowed(keys.begin(), keys.end());
        for (const auto& [k, _] : j.items())
            if (!allowed.count(k)) fail(where + ": unknown key '" + k + "'");
    }

    template <typename T>
    bool get(const Json& j, const char* key, const std::string& where, T& out, bool required = false) {
        auto it = j.find(key);
        if (it == j.end() || it->is_null()) {
            if (required) fail(where + ": missing required key '" + key + "'");
            return false;
        }
        try {
            out = it->get<T>();
            return true;
        } catch (const Json::exception&) {
            fail(where + "." + key + ": wrong type (" + it->dump() + ")");
            return false;
        }
    }

    void finish() const {
        if (errors_.empty()) return;
        std::ostringstream msg;
        msg << errors_.size() << " configuration error(s):";
        for (const auto& e : errors_) msg << "\n  - " << e;
        throw ConfigError(msg.str());
    }

private:
    std::vector<std::string> errors_;
};

LearnerSpec parse_learner(Checker& c, const Json& j, const std::string& where, LearnerSpec spec) {
    c.known_keys(j, where, {"type", "lambda", "sigma", "order"});
    if (!j.is_object()) return spec;
    std::string type;
    if (c.get(j, "type", where, type)) {
        if (type == "linear")
            spec.type = LearnerType::linear;
        else if (type == "trbf")
            spec.type = LearnerType::trbf;
        else
            c.fail(where + ".type: must be \"linear\" or \"trbf\", got \"" + type + "\"");
    }
    c.get(j, "lambda", where, spec.lambda);
    c.get(j, "sigma", where, spec.sigma);
    c.get(j, "order", where, spec.order);
    if (spec.lambda < 0) c.fail(where + ".lambda: must be >= 0 (0 selects the default)");
    if (spec.sigma < 0) c.fail(where + ".sigma: must be >= 0 (0 selects the default)");
    if (spec.type == LearnerType::trbf && spec.order < 1) c.fail(where + ".order: TRBF order must be >= 1");
    return spec;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

Json learner_json(const LearnerSpec& s) {
    return Json{{"type", s.type == LearnerType::linear ? "linear" : "trbf"},
                {"lambda", s.lambda},
                {"sigma", s.sigma},
                {"order", s.order}};
}

}  // namespace

RunConfig parse_run_config(const Json& j, const std::filesystem::path& base_dir) {
    Checker c;
    RunConfig cfg;
    cfg.dc.threads = default_threads();
    cfg.dc.global = LearnerSpec{LearnerType::trbf, 0, 0, 2};
    c.known_keys(j, "config",
                 {"train_path", "test_path", "split", "scaling", "min_features", "decomposition", "local", "global",
                  "baseline", "guards", "output", "threads", "seed", "cross_fit", "cross_fit_folds", "center_pca",
                  "center_bcd", "dca_ridge", "pad_abd"});
    if (!j.is_object()) c.finish();

    std::string s;
    if (c.get(j, "train_path", "config", s, true)) cfg.train_path = resolve(base_dir, s);
    if (c.get(j, "test_path", "config", s)) cfg.test_path = resolve(base_dir, s);

    if (auto it = j.find("split"); it != j.end()) {
        c.known_keys(*it, "split", {"train_fraction", "seed"});
        if (it->is_object()) {
            c.get(*it, "train_fraction", "split", cfg.split.train_fraction);
            c.get(*it, "seed", "split", cfg.split.seed);
        }
        if (!(cfg.split.train_fraction > 0 && cfg.split.train_fraction < 1))
            c.fail("split.train_fraction: must lie strictly between 0 and 1");
    }
    c.get(j, "scaling", "config", cfg.scaling);
    c.get(j, "min_features", "config", cfg.min_features);

    auto plan = j.find("decomposition");
    if (plan == j.end() || !plan->is_array() || plan->empty()) {
        c.fail("decomposition: need a non-empty list of {method, n_subspaces, group_size}");
    } else {
        for (std::size_t i = 0; i < plan->size(); ++i) {
            const Json& e = (*plan)[i];
            const std::string where = "decomposition[" + std::to_string(i) + "]";
            c.known_keys(e, where, {"method", "n_subspaces", "group_size"});
            if (!e.is_object()) continue;
            PlanEntry entry;
            std::string method;
            if (c.get(e, "method", where, method, true)) {
                try {
                    entry.method = parse_method(method);
                } catch (const ConfigError& err) {
                    c.fail(where + ".method: " + err.what());
                }
            }
            long long ns = 0, nf = 0;
            if (c.get(e, "n_subspaces", where, ns, true) && ns < 1) c.fail(where + ".n_subspaces: must be >= 1");
            if (c.get(e, "group_size", where, nf, true) && nf < 1) c.fail(where + ".group_size: must be >= 1");
            entry.n_subspaces = static_cast<std::size_t>(std::max(ns, 1LL));
            entry.group_size = static_cast<std::size_t>(std::max(nf, 1LL));
            cfg.dc.plan.push_back(entry);
        }
    }

    if (auto it = j.find("local"); it != j.end()) cfg.dc.local = parse_learner(c, *it, "local", cfg.dc.local);
    if (auto it = j.find("global"); it != j.end()) cfg.dc.global = parse_learner(c, *it, "global", cfg.dc.global);
    if (auto it = j.find("baseline"); it != j.end()) cfg.baseline = parse_learner(c, *it, "baseline", cfg.baseline);

    if (auto it = j.find("guards"); it != j.end()) {
        c.known_keys(*it, "guards", {"max_dense_features", "max_intrinsic_dim"});
        if (it->is_object()) {
            c.get(*it, "max_dense_features", "guards", cfg.dc.decompose.max_dense_features);
            c.get(*it, "max_intrinsic_dim", "guards", cfg.dc.max_intrinsic_dim);
        }
    }
    if (auto it = j.find("output"); it != j.end()) {
        c.known_keys(*it, "output", {"dir", "model", "report"});
        if (it->is_object()) {
            if (c.get(*it, "dir", "output", s)) cfg.output.dir = resolve(base_dir, s);
            c.get(*it, "model", "output", cfg.output.model);
            c.get(*it, "report", "output", cfg.output.report);
        }
    }
    long long threads = 0;
    if (c.get(j, "threads", "config", threads)) {
        if (threads < 0) c.fail("threads: must be >= 0 (0 = all cores)");
        cfg.dc.threads = threads > 0 ? static_cast<unsigned>(threads) : default_threads();
    }
    c.get(j, "seed", "config", cfg.dc.seed);
    c.get(j, "cross_fit", "config", cfg.dc.cross_fit);
    c.get(j, "cross_fit_folds", "config", cfg.dc.cross_fit_folds);
    if (cfg.dc.cross_fit && cfg.dc.cross_fit_folds < 2) c.fail("cross_fit_folds: must be >= 2");
    c.get(j, "center_pca", "config", cfg.dc.decompose.center_pca);
    c.get(j, "center_bcd", "config", cfg.dc.decompose.center_bcd);
    c.get(j, "dca_ridge", "config", cfg.dc.decompose.dca_ridge);
    c.get(j, "pad_abd", "config", cfg.dc.decompose.pad_abd);
    if (cfg.dc.decompose.dca_ridge < 0) c.fail("dca_ridge: must be >= 0 (0 selects the default)");
    c.finish();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_run_config(j, path.parent_path());
}

Json run_config_to_json(const RunConfig& c) {
    Json plan = Json::array();
    for (const auto& e : c.dc.plan)
        plan.push_back({{"method", std::string(method_name(e.method))},
                        {"n_subspaces", e.n_subspaces},
                        {"group_size", e.group_size}});
    return Json{{"train_path", c.train_path.string()},
                {"test_path", c.test_path ? Json(c.test_path->string()) : Json(nullptr)},
                {"split", {{"train_fraction", c.split.train_fraction}, {"seed", c.split.seed}}},
                {"scaling", c.scaling},
                {"min_features", c.min_features},
                {"decomposition", plan},
                {"local", learner_json(c.dc.local)},
                {"global", learner_json(c.dc.global)},
                {"baseline", learner_json(c.baseline)},
                {"guards", {{"max_dense_features", c.dc.decompose.max_dense_features},
                            {"max_intrinsic_dim", c.dc.max_intrinsic_dim}}},
                {"output", {{"dir", c.output.dir.string()}, {"model", c.output.model}, {"report", c.output.report}}},
                {"threads", c.dc.threads},
                {"seed", c.dc.seed},
                {"cross_fit", c.dc.cross_fit},
                {"cross_fit_folds", c.dc.cross_fit_folds},
                {"center_pca", c.dc.decompose.center_pca},
                {"center_bcd", c.dc.decompose.center_bcd},
                {"dca_ridge", c.dc.decompose.dca_ridge},
                {"pad_abd", c.dc.decompose.pad_abd}};
}

}  // namespace fsdc
