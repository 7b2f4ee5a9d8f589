// Command-line front end: train, eval, inspect, approx-bench.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rffnet/rffnet.hpp"

namespace {

enum ExitCode { ok = 0, usage_error = 1, data_error = 2, numeric_error = 3 };

struct DataFlags {
    std::string task;
    std::string registry = "data/registry.txt";
    std::string path;
    std::string test_path;
    std::string format = "csv";
    int label_column = -1;
    bool header = false;
    std::string split = "random_half";

    void add_to(CLI::App& app) {
        app.add_option("--task", task, "Task name from the registry");
        app.add_option("--registry", registry, "Task registry file")->capture_default_str();
        app.add_option("--data", path, "Data file, when no task is named");
        app.add_option("--test-data", test_path, "Test file for split=provided");
        app.add_option("--format", format, "csv, libsvm or monks")->capture_default_str();
        app.add_option("--label-column", label_column, "CSV label column (-1 = last)");
        app.add_flag("--header", header, "CSV has a header line");
        app.add_option("--split-mode", split, "provided or random_half")->capture_default_str();
    }

    rffnet::DataSource source() const {
        rffnet::DataSource s;
        s.task = task;
        s.registry = registry;
        s.path = path;
        s.test_path = test_path;
        s.format = format;
        s.label_column = label_column;
        s.header = header;
        s.split = rffnet::parse_split_mode(split);
        return s;
    }
};

std::vector<std::size_t> parse_size_list(const std::string& option, const std::string& text) {
    return rffnet::detail::parse_feature_list(option, text);
}

// Like parse_size_list, but zero is a valid index.
std::vector<std::size_t> parse_index_list(const std::string& option, const std::string& text) {
    std::vector<std::size_t> out;
    for (auto part : rffnet::detail::split_on(text, ',')) {
        out.push_back(static_cast<std::size_t>(rffnet::detail::to_u64(option, std::string(part))));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep kernel learning with stacked random Fourier feature layers"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "Train one or more models and write a run directory");
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> trials, epochs, jobs;
    std::string out_dir;
    std::string train_task;
    std::string train_registry;
    bool quiet = false;
    train->add_option("--config", config_path, "Configuration file (key = value)");
    train->add_option("--set", overrides, "Override a configuration key (key=value)");
    train->add_option("--task", train_task, "Shorthand for --set data.task=NAME");
    train->add_option("--registry", train_registry, "Shorthand for --set data.registry=PATH");
    train->add_option("--seed", seed, "Base seed; trial i uses seed + i");
    train->add_option("--trials", trials, "Number of independent trials");
    train->add_option("--epochs", epochs, "Training epochs");
    train->add_option("--jobs", jobs, "Trials trained in parallel");
    train->add_option("--out", out_dir, "Run directory");
    train->add_flag("--quiet", quiet, "No progress output");

    // eval
    auto* eval = app.add_subcommand("eval", "Accuracy and confusion matrix of a saved model");
    std::string eval_model;
    DataFlags eval_data;
    std::string eval_split = "test";
    std::uint64_t eval_seed = 0;
    std::string confusion_path;
    eval->add_option("--model", eval_model, "model.txt from a run directory")->required();
    eval_data.add_to(*eval);
    eval->add_option("--split", eval_split, "train, test or all")->capture_default_str();
    eval->add_option("--seed", eval_seed, "Split seed for random_half tasks (the trial seed)");
    eval->add_option("--confusion", confusion_path, "Write the confusion matrix CSV here instead of stdout");

    // inspect
    auto* inspect = app.add_subcommand("inspect", "Export learned kernels, kPCA projections and frequency histograms");
    std::string inspect_model;
    DataFlags inspect_data;
    std::string inspect_split = "train";
    std::string inspect_out = "inspect";
    std::string inspect_layers;
    std::string inspect_dims = "0";
    rffnet::InspectOptions inspect_opt;
    inspect->add_option("--model", inspect_model, "model.txt from a run directory")->required();
    inspect_data.add_to(*inspect);
    inspect->add_option("--split", inspect_split, "train, test or all")->capture_default_str();
    inspect->add_option("--seed", inspect_opt.split_seed, "Split seed for random_half tasks");
    inspect->add_option("--layers", inspect_layers, "Comma-separated layer indices (default all)");
    inspect->add_option("--dims", inspect_dims, "Input dimensions for frequency histograms")->capture_default_str();
    inspect->add_option("--bins", inspect_opt.bins, "Histogram bins")->capture_default_str();
    inspect->add_option("--components", inspect_opt.components, "kPCA components")->capture_default_str();
    inspect->add_option("--max-samples", inspect_opt.max_samples, "Subsample above this many rows")
        ->capture_default_str();
    inspect->add_option("--out", inspect_out, "Output directory")->capture_default_str();

    // approx-bench
    auto* bench = app.add_subcommand("approx-bench", "Kernel approximation error as a function of D");
    std::string bench_kernel = "rbf";
    double bandwidth = 1.0;
    std::string bench_features = "16,64,256,1024,4096";
    std::size_t bench_dim = 5;
    std::size_t bench_pairs = 200;
    std::uint64_t bench_seed = 0;
    std::string pairs_path;
    std::string bench_out;
    bench->add_option("--kernel", bench_kernel, "rbf, laplacian or cauchy")->capture_default_str();
    bench->add_option("--bandwidth", bandwidth, "Kernel bandwidth")->capture_default_str();
    bench->add_option("--D", bench_features, "Comma-separated feature counts")->capture_default_str();
    bench->add_option("--dim", bench_dim, "Input dimension of random pairs")->capture_default_str();
    bench->add_option("--pairs", bench_pairs, "Number of random pairs")->capture_default_str();
    bench->add_option("--pairs-file", pairs_path, "CSV of pairs (u then v per row) instead of random ones");
    bench->add_option("--seed", bench_seed, "Seed")->capture_default_str();
    bench->add_option("--out", bench_out, "Write the CSV here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return usage_error;
    }

    try {
        if (*train) {
            rffnet::KeyValueConfig kv;
            if (!config_path.empty()) kv = rffnet::KeyValueConfig::load(config_path);
            if (!train_task.empty()) kv.set("data.task", train_task);
            if (!train_registry.empty()) kv.set("data.registry", train_registry);
            for (const auto& o : overrides) kv.set_assignment(o);
            if (seed) kv.set("run.seed", std::to_string(*seed));
            if (trials) kv.set("run.trials", std::to_string(*trials));
            if (epochs) kv.set("train.epochs", std::to_string(*epochs));
            if (jobs) kv.set("run.jobs", std::to_string(*jobs));
            if (!out_dir.empty()) kv.set("run.out", out_dir);
            const rffnet::RunConfig cfg = rffnet::resolve_run_config(kv);
            rffnet::ProgressSink progress;
            if (!quiet) progress = [](const std::string& msg) { std::cerr << msg << '\n'; };
            const auto summary = rffnet::cmd_train(cfg, progress);
            std::cout << "data " << summary.provenance << '\n';
            std::cout << "dataset " << summary.dataset << " layers " << summary.layers << " D " << summary.features
                      << " trials " << summary.trials.size() << '\n';
            std::cout << "mean_acc " << rffnet::format_real(summary.mean_acc) << " std_acc "
                      << rffnet::format_real(summary.std_acc) << '\n';
            std::cout << "run " << cfg.out.string() << '\n';
        } else if (*eval) {
            const auto r = rffnet::cmd_eval(eval_model, eval_data.source(), rffnet::parse_split_select(eval_split),
                                            eval_seed);
            std::cout << "accuracy " << rffnet::format_real(r.accuracy) << '\n';
            std::cout << "samples " << r.count << '\n';
            if (confusion_path.empty()) {
                rffnet::write_confusion_csv(std::cout, r);
            } else {
                rffnet::write_atomic(confusion_path, [&](std::ostream& os) { rffnet::write_confusion_csv(os, r); });
            }
        } else if (*inspect) {
            inspect_opt.split = rffnet::parse_split_select(inspect_split);
            if (!inspect_layers.empty()) inspect_opt.layers = parse_index_list("--layers", inspect_layers);
            inspect_opt.dims = parse_index_list("--dims", inspect_dims);
            const auto layers = rffnet::cmd_inspect(inspect_model, inspect_data.source(), inspect_opt, inspect_out);
            for (const auto& l : layers) {
                std::cout << "layer " << l.layer << " symmetric " << l.check.symmetric() << " psd " << l.check.psd()
                          << " unit_diagonal " << l.check.unit_diagonal() << " min_eigenvalue "
                          << l.check.min_eigenvalue << (l.kpca.degenerate ? " kpca degenerate" : "") << '\n';
                for (const auto& f : l.files) std::cout << "  " << f.string() << '\n';
            }
        } else if (*bench) {
            rffnet::SpectralDensity density{rffnet::parse_density_kind(bench_kernel), bandwidth};
            rffnet::validate(density);
            const auto pairs = pairs_path.empty()
                                   ? rffnet::random_point_pairs(bench_pairs, bench_dim, bandwidth, bench_seed)
                                   : rffnet::load_point_pairs(pairs_path);
            const auto rows = rffnet::cmd_approx_bench(density, parse_size_list("--D", bench_features), pairs, bench_seed);
            if (bench_out.empty()) {
                rffnet::write_approx_csv(std::cout, rows);
            } else {
                rffnet::write_atomic(bench_out, [&](std::ostream& os) { rffnet::write_approx_csv(os, rows); });
            }
        }
    } catch (const rffnet::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return numeric_error;
    } catch (const rffnet::ParameterError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return usage_error;
    } catch (const rffnet::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return data_error;
    } catch (const rffnet::ShapeError& e) {
        std::cerr << "shape error: " << e.what() << '\n';
        return data_error;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return data_error;
    }
    return ok;
}
