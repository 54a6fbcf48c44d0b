#include "fsdc/app.hpp"
#include "fsdc/error.hpp"
#include "fsdc/parallel.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

int exit_code(fsdc::StageError::Kind kind) {
    switch (kind) {
        case fsdc::StageError::Kind::config: return 2;
        case fsdc::StageError::Kind::data: return 3;
        case fsdc::StageError::Kind::numeric: return 4;
        default: return 1;
    }
}

struct RunFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> out;
};

fsdc::RunConfig load(const RunFlags& f) {
    auto cfg = fsdc::load_run_config(f.config);
    if (f.seed) cfg.dc.seed = *f.seed;
    if (f.threads) cfg.dc.threads = *f.threads > 0 ? *f.threads : fsdc::default_threads();
    if (f.out) cfg.output.dir = *f.out;
    return cfg;
}

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("--config", f.config, "JSON run configuration")->required();
    cmd->add_option("--seed", f.seed, "override the configured seed");
    cmd->add_option("--threads", f.threads, "worker threads (0 = all cores)");
    cmd->add_option("--out", f.out, "output directory");
}

void print(const fsdc::RunReport& r) { std::cout << fsdc::report_table(r); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Feature-space decomposition classifier"};
    app.require_subcommand(1);

    RunFlags train_flags, bench_flags;
    auto* train = app.add_subcommand("train", "fit a model and evaluate it on the test data or held-out split");
    add_run_flags(train, train_flags);
    auto* bench = app.add_subcommand("bench", "compare the pipeline against a single undecomposed learner");
    add_run_flags(bench, bench_flags);

    std::string model_path, test_path;
    std::optional<unsigned> eval_threads;
    std::optional<std::string> eval_out, inspect_out;
    auto* eval = app.add_subcommand("eval", "score a saved model on a labelled file");
    eval->add_option("--model", model_path, "saved model")->required();
    eval->add_option("--test", test_path, "LIBSVM test file")->required();
    eval->add_option("--threads", eval_threads, "worker threads (0 = all cores)");
    eval->add_option("--out", eval_out, "write report.json / report.txt here");
    auto* inspect = app.add_subcommand("inspect", "dump decomposition diagnostics of a saved model");
    inspect->add_option("--model", model_path, "saved model")->required();
    inspect->add_option("--out", inspect_out, "write inspect.json here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train) {
            print(fsdc::cmd_train(load(train_flags)));
        } else if (*bench) {
            print(fsdc::cmd_bench(load(bench_flags)));
        } else if (*eval) {
            if (eval_threads && *eval_threads == 0) eval_threads = fsdc::default_threads();
            auto r = fsdc::cmd_eval(model_path, test_path, eval_threads);
            if (eval_out) fsdc::write_report(r, std::filesystem::path(*eval_out) / "report.json");
            print(r);
        } else if (*inspect) {
            auto r = fsdc::cmd_inspect(model_path);
            if (inspect_out) fsdc::write_report(r, std::filesystem::path(*inspect_out) / "inspect.json");
            std::cout << fsdc::report_to_json(r)["details"].dump(2) << '\n';
        }
    } catch (const fsdc::StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const fsdc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const fsdc::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const fsdc::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
