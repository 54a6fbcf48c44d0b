#include "fsdc/app.hpp"

#include "fsdc/error.hpp"
#include "fsdc/random.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace fsdc {

namespace {

struct Data {
    Dataset train, test;
};

Data load_data(const RunConfig& cfg) {
    Dataset train = load_libsvm(cfg.train_path, cfg.min_features);
    if (!cfg.test_path) {
        auto [tr, te] = split(train, cfg.split);
        return {std::move(tr), std::move(te)};
    }
    Dataset test = load_libsvm(*cfg.test_path, std::max(cfg.min_features, train.n_features()));
    return {train.with_min_features(test.n_features()), std::move(test)};
}

Json metrics_json(const Metrics& m) {
    return Json{{"error_rate", m.error_rate},
                {"error_rate_text", format_percent(m.error_rate)},
                {"n", m.n},
                {"true_pos", m.true_pos},
                {"true_neg", m.true_neg},
                {"false_pos", m.false_pos},
                {"false_neg", m.false_neg}};
}

std::string plan_label(const std::vector<PlanEntry>& plan) {
    std::string s;
    for (const auto& e : plan) {
        if (!s.empty()) s += " + ";
        s += std::string(method_name(e.method)) + " " + std::to_string(e.n_subspaces) + "x" +
             std::to_string(e.group_size);
    }
    return s;
}

std::string learner_label(const LearnerSpec& s) {
    return s.type == LearnerType::linear ? "linear" : "TRBF-" + std::to_string(s.order);
}

std::string fixed(double v, int digits) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(digits) << v;
    return o.str();
}

struct Prepared {
    Data data;
    std::vector<double> scale;
};

Prepared prepare(const RunConfig& cfg, StageTimings& t) {
    StageTimer timer;
    Prepared p{load_data(cfg), {}};
    t.add("parse", timer.seconds());
    if (cfg.scaling) {
        timer = StageTimer();
        auto scaler = MaxAbsScaler::fit(p.data.train);
        p.scale = scaler.scale();
        t.add("scaling", timer.seconds());
    }
    return p;
}

void hash_into(RunReport& r, const std::string& name, const std::filesystem::path& path) {
    r.hashes.emplace_back(name, sha256_file(path));
}

}  // namespace

std::string format_percent(double v) { return fixed(v, 2); }

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string() + " for hashing");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha256 unavailable");
    }
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

std::optional<double> relative_reduction(double base_error, double dc_error) {
    if (base_error == 0) return dc_error == 0 ? std::optional<double>(0.0) : std::nullopt;
    return 100.0 * (base_error - dc_error) / base_error;
}

Json report_to_json(const RunReport& r) {
    Json stages = Json::array();
    for (const auto& [name, sec] : r.timings.stages) stages.push_back({{"stage", name}, {"seconds", sec}});
    Json hashes = Json::object();
    for (const auto& [name, h] : r.hashes) hashes[name] = h;
    return Json{{"command", r.command},
                {"metrics", r.metrics ? metrics_json(*r.metrics) : Json(nullptr)},
                {"timings", stages},
                {"timings_total", r.timings.total()},
                {"wall_seconds", r.wall_seconds},
                {"seed", r.seed},
                {"threads", r.threads},
                {"config", r.config},
                {"sha256", hashes},
                {"details", r.details}};
}

std::string report_table(const RunReport& r) {
    std::ostringstream o;
    o << std::left << std::setw(32) << "Stage" << std::right << std::setw(12) << "Time (s)" << '\n';
    for (const auto& [name, sec] : r.timings.stages)
        o << std::left << std::setw(32) << name << std::right << std::setw(12) << fixed(sec, 3) << '\n';
    o << std::left << std::setw(32) << "total" << std::right << std::setw(12) << fixed(r.wall_seconds, 3) << '\n';
    if (r.details.contains("rows")) {
        o << '\n'
          << std::left << std::setw(44) << "Method" << std::right << std::setw(12) << "Time (s)" << std::setw(18)
          << "Error Rate (%)" << '\n';
        for (const auto& row : r.details["rows"]) {
            o << std::left << std::setw(44) << row["method"].get<std::string>() << std::right;
            if (row.value("skipped", false)) {
                o << std::setw(12) << "-" << std::setw(18) << "skipped" << "  (" << row["reason"].get<std::string>()
                  << ")\n";
                continue;
            }
            o << std::setw(12) << fixed(row["seconds"].get<double>(), 3) << std::setw(18)
              << format_percent(row["error_rate"].get<double>()) << '\n';
        }
        if (r.details.contains("reduction")) {
            const auto& red = r.details["reduction"];
            o << "Relative error reduction (%): " << (red.is_null() ? "n/a" : format_percent(red.get<double>()))
              << '\n';
        }
    }
    if (r.metrics) {
        const auto& m = *r.metrics;
        o << "\nError Rate (%): " << format_percent(m.error_rate) << "  (n=" << m.n << ", tp=" << m.true_pos
          << ", tn=" << m.true_neg << ", fp=" << m.false_pos << ", fn=" << m.false_neg << ")\n";
    }
    return o.str();
}

void write_report(const RunReport& r, const std::filesystem::path& json_path) {
    if (json_path.has_parent_path()) std::filesystem::create_directories(json_path.parent_path());
    std::ofstream json(json_path);
    if (!json) throw DataError("cannot write " + json_path.string());
    json << report_to_json(r).dump(2) << '\n';
    auto txt = json_path;
    txt.replace_extension(".txt");
    std::ofstream table(txt);
    if (!table) throw DataError("cannot write " + txt.string());
    table << report_table(r);
}

RunReport cmd_train(const RunConfig& cfg) {
    StageTimer wall;
    RunReport rep;
    rep.command = "train";
    rep.config = run_config_to_json(cfg);
    rep.seed = cfg.dc.seed;
    rep.threads = cfg.dc.threads;

    Prepared p = prepare(cfg, rep.timings);
    Dataset train = p.scale.empty() ? p.data.train : p.data.train.scaled(p.scale);
    DcModel model = train_dc(train, cfg.dc, &rep.timings);
    model.feature_scale = p.scale;

    Prediction pred = predict_dc(model, p.data.test, &rep.timings);
    StageTimer timer;
    rep.metrics = evaluate(pred.labels, p.data.test.labels());
    rep.details["h"] = model.decomposition.h();
    rep.details["n_train"] = p.data.train.n_instances();
    rep.details["n_test"] = p.data.test.n_instances();
    rep.details["n_features"] = p.data.train.n_features();
    rep.timings.add("evaluation", timer.seconds());

    timer = StageTimer();
    std::filesystem::create_directories(cfg.output.dir);
    save_dc_model(cfg.output.model_path(), model);
    hash_into(rep, "model", cfg.output.model_path());
    hash_into(rep, "train", cfg.train_path);
    if (cfg.test_path) hash_into(rep, "test", *cfg.test_path);
    rep.timings.add("save model", timer.seconds());
    rep.wall_seconds = wall.seconds();
    write_report(rep, cfg.output.report_path());
    return rep;
}

RunReport cmd_eval(const std::filesystem::path& model_path, const std::filesystem::path& test_path,
                   std::optional<unsigned> threads) {
    StageTimer wall;
    RunReport rep;
    rep.command = "eval";
    StageTimer timer;
    DcModel model = load_dc_model(model_path);
    if (threads) model.config.threads = *threads;
    rep.timings.add("load model", timer.seconds());
    timer = StageTimer();
    Dataset test = load_libsvm(test_path);
    rep.timings.add("parse", timer.seconds());
    Prediction pred = predict_dc(model, test, &rep.timings);
    timer = StageTimer();
    rep.metrics = evaluate(pred.labels, test.labels());
    rep.timings.add("evaluation", timer.seconds());
    rep.config = config_to_json(model.config);
    rep.seed = model.config.seed;
    rep.threads = model.config.threads;
    hash_into(rep, "model", model_path);
    hash_into(rep, "test", test_path);
    rep.wall_seconds = wall.seconds();
    return rep;
}

RunReport cmd_bench(const RunConfig& cfg) {
    StageTimer wall;
    RunReport rep;
    rep.command = "bench";
    rep.config = run_config_to_json(cfg);
    rep.seed = cfg.dc.seed;
    rep.threads = cfg.dc.threads;

    Prepared p = prepare(cfg, rep.timings);
    Dataset train = p.scale.empty() ? p.data.train : p.data.train.scaled(p.scale);
    Json rows = Json::array();

    StageTimer dc_timer;
    DcModel model = train_dc(train, cfg.dc, &rep.timings);
    model.feature_scale = p.scale;
    Prediction pred = predict_dc(model, p.data.test, &rep.timings);
    const double dc_seconds = dc_timer.seconds();
    Metrics dc = evaluate(pred.labels, p.data.test.labels());
    rep.metrics = dc;
    rows.push_back({{"method", "DC " + plan_label(cfg.dc.plan) + " / " + learner_label(cfg.dc.global)},
                    {"seconds", dc_seconds},
                    {"error_rate", dc.error_rate},
                    {"metrics", metrics_json(dc)}});

    StageTimer base_timer;
    Json base_row{{"method", "baseline " + learner_label(cfg.baseline)}};
    std::optional<Metrics> base;
    try {
        Dataset test = p.data.test.with_min_features(train.n_features());
        if (!p.scale.empty()) test = test.scaled(p.scale);
        Model m = train_model(cfg.baseline, train.matrix(), train.labels(), mix_seed(cfg.dc.seed, 3000),
                              TrbfOptions{cfg.dc.max_intrinsic_dim, cfg.dc.threads});
        Vector scores = predict_model(m, test.matrix(), cfg.dc.threads);
        std::vector<int> labels(static_cast<std::size_t>(scores.size()));
        for (Eigen::Index i = 0; i < scores.size(); ++i) labels[static_cast<std::size_t>(i)] = scores(i) >= 0 ? 1 : -1;
        base = evaluate(labels, test.labels());
        base_row["seconds"] = base_timer.seconds();
        base_row["error_rate"] = base->error_rate;
        base_row["metrics"] = metrics_json(*base);
    } catch (const ConfigError& e) {
        base_row["skipped"] = true;
        base_row["reason"] = e.what();
    }
    rep.timings.add("baseline", base_timer.seconds());
    rows.push_back(base_row);
    rep.details["rows"] = rows;
    if (base) {
        auto red = relative_reduction(base->error_rate, dc.error_rate);
        rep.details["reduction"] = red ? Json(*red) : Json(nullptr);
    }
    hash_into(rep, "train", cfg.train_path);
    if (cfg.test_path) hash_into(rep, "test", *cfg.test_path);
    rep.wall_seconds = wall.seconds();
    write_report(rep, cfg.output.report_path());
    return rep;
}

RunReport cmd_inspect(const std::filesystem::path& model_path) {
    StageTimer wall;
    RunReport rep;
    rep.command = "inspect";
    DcModel model = load_dc_model(model_path);
    rep.config = config_to_json(model.config);
    rep.seed = model.config.seed;
    rep.threads = model.config.threads;
    Json parts = Json::array();
    for (const auto& part : model.decomposition.parts()) {
        Json sizes = Json::array();
        for (const auto& g : part.groups.groups) sizes.push_back(g.size());
        parts.push_back({{"method", std::string(method_name(part.method))},
                         {"seed", part.seed},
                         {"input_dim", part.input_dim},
                         {"output_dim", part.output_dim()},
                         {"n_subspaces", part.subspace_count()},
                         {"group_sizes", sizes},
                         {"spectrum", std::vector<double>(part.spectrum.data(), part.spectrum.data() + part.spectrum.size())},
                         {"block_residual", part.block_residual},
                         {"ridge", part.ridge}});
    }
    rep.details["parts"] = parts;
    rep.details["h"] = model.decomposition.h();
    rep.details["global_input_dim"] = model_input_dim(model.global);
    hash_into(rep, "model", model_path);
    rep.wall_seconds = wall.seconds();
    return rep;
}

}  // namespace fsdc
