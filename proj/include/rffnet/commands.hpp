#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rffnet/config.hpp"
#include "rffnet/dataio.hpp"
#include "rffnet/errors.hpp"
#include "rffnet/kernel_analysis.hpp"
#include "rffnet/network.hpp"
#include "rffnet/optimizer.hpp"
#include "rffnet/serialize.hpp"

namespace rffnet {

// ---------------------------------------------------------------------------
// Output helpers

/// Writes `content` to `path` via a sibling temporary file and a rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out) throw DataError("failed writing '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

template <typename Writer>
void write_atomic(const std::filesystem::path& path, Writer&& writer) {
    std::ostringstream ss;
    writer(ss);
    write_file_atomic(path, ss.str());
}

inline std::string format_real(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

inline std::string join_features(const std::vector<std::size_t>& features) {
    const bool uniform = std::ranges::all_of(features, [&](std::size_t d) { return d == features.front(); });
    if (uniform) return std::to_string(features.front());
    std::string s;
    for (std::size_t i = 0; i < features.size(); ++i) s += (i ? ";" : "") + std::to_string(features[i]);
    return s;
}

// ---------------------------------------------------------------------------
// Dataset selection shared by all subcommands

struct DataSource {
    std::string task;
    std::filesystem::path registry = "data/registry.txt";
    std::filesystem::path path;
    std::filesystem::path test_path;
    std::string format = "csv";
    int label_column = -1;
    bool header = false;
    SplitMode split = SplitMode::random_half;
};

inline DataSource data_source(const RunConfig& c) {
    return {c.task, c.registry, c.data_path, c.test_path, c.format, c.label_column, c.header, c.split};
}

inline TaskEntry resolve_entry(const DataSource& src) {
    if (!src.task.empty()) {
        const auto registry = load_registry(src.registry);
        auto it = registry.find(src.task);
        if (it == registry.end()) {
            throw DataError("task '" + src.task + "' not found in " + src.registry.string());
        }
        return it->second;
    }
    if (src.path.empty()) throw ConfigError("no dataset given");
    TaskEntry e;
    e.name = src.path.stem().string();
    e.format = src.format;
    e.train = src.path;
    e.test = src.test_path;
    e.label_column = src.label_column;
    e.header = src.header;
    e.split = src.split;
    if (e.format != "csv" && e.format != "libsvm" && e.format != "monks") {
        throw ConfigError("unknown data format '" + e.format + "'");
    }
    return e;
}

// ---------------------------------------------------------------------------
// train

struct TrialResult {
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    std::size_t layers = 0;
    double train_acc = 0.0;
    double test_acc = 0.0;
};

struct TrainSummary {
    std::string dataset;
    std::size_t layers = 0;
    std::string features;
    std::vector<TrialResult> trials;
    double mean_acc = 0.0;
    double std_acc = 0.0;  // sample standard deviation, 0 for one trial
    std::string provenance;
};

inline void write_summary_csv(std::ostream& os, const TrainSummary& s) {
    os << "dataset,layers,D,trials,mean_acc,std_acc\n";
    os << s.dataset << ',' << s.layers << ',' << s.features << ',' << s.trials.size() << ','
       << format_real(s.mean_acc) << ',' << format_real(s.std_acc) << '\n';
}

struct PreparedTrial {
    Dataset train;
    Dataset test;
    InputTransform transform;
    std::string provenance;
};

inline PreparedTrial prepare_data(const TaskEntry& entry, Preprocess preprocess, std::uint64_t split_seed) {
    TaskData task = load_task(entry, split_seed);
    validate(task.train);
    PreparedTrial p;
    p.transform = fit_transform(task.train, preprocess);
    p.train = apply_transform(p.transform, std::move(task.train));
    p.test = apply_transform(p.transform, std::move(task.test));
    p.provenance = std::move(task.provenance);
    return p;
}

inline std::vector<std::size_t> resolve_features(const RunConfig& c, std::size_t layers) {
    if (c.features.size() == layers) return c.features;
    if (c.features.size() == 1) return std::vector<std::size_t>(layers, c.features.front());
    throw ConfigError("model.D lists " + std::to_string(c.features.size()) + " values for " +
                      std::to_string(layers) + " layers");
}

inline TrainConfig resolve_train_config(const RunConfig& c, std::size_t n_train, std::uint64_t seed) {
    TrainConfig t;
    t.epochs = c.epochs.value_or(n_train <= 1000 ? 3000 : 300);
    t.batch_size = c.batch_size.value_or(n_train <= 1000 ? 0 : 256);
    t.lambda = c.lambda;
    t.seed = derive_seed(seed, 2);
    t.lr_schedule = c.lr_schedule;
    t.shuffle = c.shuffle;
    t.optimizer = c.optimizer;
    t.beta1 = c.beta1;
    t.beta2 = c.beta2;
    t.adam_epsilon = c.adam_epsilon;
    return t;
}

using ProgressSink = std::function<void(const std::string&)>;

/// One complete trial: data, model, training, evaluation, files under `dir`.
inline TrialResult run_trial(const RunConfig& c, const TaskEntry& entry, std::size_t trial,
                             const std::filesystem::path& dir, std::string* provenance,
                             const ProgressSink& progress) {
    const std::uint64_t seed = c.seed + trial;
    PreparedTrial data = prepare_data(entry, c.preprocess, seed);
    if (provenance) *provenance = data.provenance;

    const std::size_t layers = c.layers.value_or(default_layer_count(data.train.size()));
    NetworkSpec spec;
    spec.input_dim = data.train.dim();
    spec.class_count = std::max<std::size_t>(2, data.train.class_count());
    spec.features_per_layer = resolve_features(c, layers);
    spec.loss = c.loss.value_or(spec.class_count == 2 ? LossKind::squared_hinge : LossKind::cross_entropy);
    spec.batchnorm = c.batchnorm;
    spec.omega_stddev = c.init_stddev;
    spec.readout_stddev = c.readout_stddev;
    Rng init_rng(derive_seed(seed, 1));
    Model model{build_network(spec, init_rng), data.transform, data.train.class_names};
    while (model.class_names.size() < spec.class_count) {
        model.class_names.push_back("<unused" + std::to_string(model.class_names.size()) + ">");
    }

    const TrainConfig tc = resolve_train_config(c, data.train.size(), seed);
    const std::size_t report_every = std::max<std::size_t>(1, tc.epochs / 10);
    TrainingLog log = fit(model.net, {data.train.x, data.train.y}, tc,
                          TrainingData{data.test.x, data.test.y}, [&](const EpochRecord& r) {
                              if (progress && ((r.epoch + 1) % report_every == 0)) {
                                  std::ostringstream ss;
                                  ss << "trial " << trial << " epoch " << r.epoch + 1 << "/" << tc.epochs
                                     << " loss " << r.loss << " train_acc " << r.train_acc
                                     << " test_acc " << r.val_acc.value_or(0.0);
                                  progress(ss.str());
                              }
                          });

    TrialResult result;
    result.trial = trial;
    result.seed = seed;
    result.layers = layers;
    result.train_acc = evaluate(model.net, data.train.x, data.train.y, 0.0).accuracy;
    result.test_acc = evaluate(model.net, data.test.x, data.test.y, 0.0).accuracy;
    for (auto span : parameter_spans(std::as_const(model.net))) {
        if (!all_finite(span)) throw NumericError("trial " + std::to_string(trial) + ": non-finite parameters");
    }

    std::filesystem::create_directories(dir);
    write_atomic(dir / "model.txt", [&](std::ostream& os) { write_model(os, model); });
    write_atomic(dir / "log.csv", [&](std::ostream& os) { write_training_log(os, log); });
    write_atomic(dir / "metrics.csv", [&](std::ostream& os) {
        os << "dataset,trial,seed,layers,D,epochs,train_acc,test_acc\n";
        os << entry.name << ',' << trial << ',' << seed << ',' << layers << ','
           << join_features(spec.features_per_layer) << ',' << tc.epochs << ','
           << format_real(result.train_acc) << ',' << format_real(result.test_acc) << '\n';
    });
    return result;
}

/**
 * Runs `c.trials` independent trials with seeds seed, seed+1, ... and writes
 *
 *   <out>/config.txt, <out>/summary.csv, <out>/trial_<i>/{model.txt,log.csv,metrics.csv}
 *
 * Everything is staged in a sibling directory and moved into place only when
 * all trials succeed.
 */
inline TrainSummary cmd_train(const RunConfig& c, const ProgressSink& progress = {}) {
    const TaskEntry entry = resolve_entry(data_source(c));
    namespace fs = std::filesystem;
    const fs::path out = c.out;
    if (fs::exists(out) && !fs::is_empty(out) && !fs::exists(out / "config.txt")) {
        throw ConfigError("output directory '" + out.string() + "' exists and is not a previous run");
    }
    fs::path staging = out;
    staging += ".partial";
    fs::remove_all(staging);
    fs::create_directories(staging);

    TrainSummary summary;
    summary.dataset = entry.name;
    summary.trials.resize(c.trials);
    std::vector<std::string> provenance(c.trials);
    try {
        std::vector<std::exception_ptr> errors(c.trials);
        std::atomic<std::size_t> next{0};
        std::mutex progress_mutex;
        ProgressSink locked = [&](const std::string& msg) {
            if (!progress) return;
            std::lock_guard lock(progress_mutex);
            progress(msg);
        };
        auto worker = [&] {
            for (std::size_t t = next++; t < c.trials; t = next++) {
                try {
                    summary.trials[t] = run_trial(c, entry, t, staging / ("trial_" + std::to_string(t)),
                                                  &provenance[t], locked);
                    locked("trial " + std::to_string(t) + " test_acc " + format_real(summary.trials[t].test_acc));
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            }
        };
        const std::size_t workers = std::min(c.jobs, c.trials);
        if (workers <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);

        summary.layers = summary.trials.front().layers;
        summary.features = join_features(resolve_features(c, summary.layers));
        summary.provenance = provenance.front();
        double sum = 0.0;
        for (const auto& t : summary.trials) sum += t.test_acc;
        summary.mean_acc = sum / static_cast<double>(c.trials);
        if (c.trials > 1) {
            double sq = 0.0;
            for (const auto& t : summary.trials) sq += (t.test_acc - summary.mean_acc) * (t.test_acc - summary.mean_acc);
            summary.std_acc = std::sqrt(sq / static_cast<double>(c.trials - 1));
        }
        write_atomic(staging / "config.txt", [&](std::ostream& os) { write_run_config(os, c); });
        write_atomic(staging / "summary.csv", [&](std::ostream& os) { write_summary_csv(os, summary); });
        write_atomic(staging / "provenance.txt", [&](std::ostream& os) { os << summary.provenance << '\n'; });
    } catch (...) {
        fs::remove_all(staging);
        throw;
    }
    fs::remove_all(out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    fs::rename(staging, out);
    return summary;
}

// ---------------------------------------------------------------------------
// eval

enum class SplitSelect { train, test, all };

inline SplitSelect parse_split_select(const std::string& name) {
    if (name == "train") return SplitSelect::train;
    if (name == "test") return SplitSelect::test;
    if (name == "all") return SplitSelect::all;
    throw ConfigError("unknown split '" + name + "' (train, test or all)");
}

/// Raw rows of the requested split, with labels in the model's index space.
inline Dataset select_split(const TaskEntry& entry, SplitSelect which, std::uint64_t split_seed,
                            const Model& model) {
    Dataset d;
    if (which == SplitSelect::all) {
        d = load_all(entry);
    } else {
        TaskData t = load_task(entry, split_seed);
        d = which == SplitSelect::train ? std::move(t.train) : std::move(t.test);
    }
    const std::size_t expected = model.transform.stages.empty() ? model.net.input_dim()
                                                                : model.transform.stages.front().offset.size();
    if (d.dim() != expected) {
        throw DataError("model expects " + std::to_string(expected) + " features, dataset has " +
                        std::to_string(d.dim()));
    }
    return remap_labels(std::move(d), model.class_names);
}

struct EvalResult {
    double accuracy = 0.0;
    std::size_t count = 0;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    std::vector<std::string> class_names;
};

inline EvalResult evaluate_model(const Model& model, const Dataset& raw) {
    DenseMatrix x = raw.x;
    model.transform.apply(x);
    const std::vector<int> predicted = predict(model.net, x);
    EvalResult r;
    r.class_names = model.class_names;
    r.count = raw.size();
    const std::size_t k = model.net.class_count();
    r.confusion.assign(k, std::vector<std::size_t>(k, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        ++r.confusion[static_cast<std::size_t>(raw.y[i])][static_cast<std::size_t>(predicted[i])];
        if (predicted[i] == raw.y[i]) ++correct;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(raw.size());
    return r;
}

inline void write_confusion_csv(std::ostream& os, const EvalResult& r) {
    os << "true\\predicted";
    for (const auto& name : r.class_names) os << ',' << name;
    os << '\n';
    for (std::size_t i = 0; i < r.confusion.size(); ++i) {
        os << r.class_names[i];
        for (std::size_t v : r.confusion[i]) os << ',' << v;
        os << '\n';
    }
}

inline EvalResult cmd_eval(const std::filesystem::path& model_path, const DataSource& src,
                           SplitSelect which, std::uint64_t split_seed) {
    const Model model = load_model(model_path);
    const TaskEntry entry = resolve_entry(src);
    return evaluate_model(model, select_split(entry, which, split_seed, model));
}

// ---------------------------------------------------------------------------
// inspect

struct InspectOptions {
    std::vector<std::size_t> layers;  // empty = all
    std::vector<std::size_t> dims{0};
    std::size_t bins = 30;
    std::size_t components = 2;
    std::size_t max_samples = 500;
    SplitSelect split = SplitSelect::train;
    std::uint64_t split_seed = 0;
};

struct LayerInspection {
    std::size_t layer = 0;
    KernelCheck check;
    KpcaResult kpca;
    std::vector<std::filesystem::path> files;
};

inline void write_kernel_csv(std::ostream& os, const KernelMatrix& k) {
    os.precision(17);
    for (std::size_t j = 0; j < k.values.cols(); ++j) os << (j ? "," : "") << 's' << j;
    os << '\n';
    for (std::size_t i = 0; i < k.values.rows(); ++i) {
        for (std::size_t j = 0; j < k.values.cols(); ++j) os << (j ? "," : "") << k.values(i, j);
        os << '\n';
    }
}

/// Reads back a kernel CSV written by write_kernel_csv.
inline DenseMatrix read_kernel_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    const std::size_t n = detail::split_on(line, ',').size();
    std::vector<double> values;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_on(line, ',');
        if (cells.size() != n) throw ParseError(path.string(), line_no, "row width differs from header");
        for (auto cell : cells) {
            const auto v = detail::parse_double(cell);
            if (!v) throw ParseError(path.string(), line_no, "non-numeric kernel entry");
            values.push_back(*v);
        }
    }
    if (values.size() != n * n) throw DataError(path.string() + ": kernel matrix is not square");
    return DenseMatrix(n, n, std::move(values));
}

inline std::vector<LayerInspection> cmd_inspect(const std::filesystem::path& model_path, const DataSource& src,
                                                const InspectOptions& opt, const std::filesystem::path& out_dir) {
    const Model model = load_model(model_path);
    const TaskEntry entry = resolve_entry(src);
    Dataset data = select_split(entry, opt.split, opt.split_seed, model);

    std::vector<std::size_t> layers = opt.layers;
    if (layers.empty()) {
        layers.resize(model.net.layers.size());
        std::iota(layers.begin(), layers.end(), std::size_t{0});
    }
    for (std::size_t l : layers) {
        if (l >= model.net.layers.size()) {
            throw ConfigError("layer index " + std::to_string(l) + " out of range; model has " +
                              std::to_string(model.net.layers.size()) + " layers");
        }
    }
    if (opt.components < 1) throw ConfigError("components must be at least 1");

    if (data.size() > opt.max_samples) {
        Rng rng(derive_seed(opt.split_seed, 7));
        std::vector<std::size_t> rows = random_permutation(data.size(), rng);
        rows.resize(opt.max_samples);
        std::ranges::sort(rows);
        data = subset(data, rows);
    }
    DenseMatrix x = data.x;
    model.transform.apply(x);
    const ForwardTrace trace = forward_full(model.net, x, Mode::inference);

    std::filesystem::create_directories(out_dir);
    std::vector<LayerInspection> out;
    for (std::size_t l : layers) {
        LayerInspection li;
        li.layer = l;
        const KernelMatrix k = empirical_kernel(trace.layers[l].features, l);
        li.check = check_kernel(k.values);
        li.kpca = kpca_project(k, std::min(opt.components, data.size()));

        const auto kernel_path = out_dir / ("kernel_layer" + std::to_string(l) + ".csv");
        write_atomic(kernel_path, [&](std::ostream& os) { write_kernel_csv(os, k); });
        li.files.push_back(kernel_path);

        const auto kpca_path = out_dir / ("kpca_layer" + std::to_string(l) + ".csv");
        write_atomic(kpca_path, [&](std::ostream& os) {
            os.precision(17);
            os << "sample,label";
            for (std::size_t c = 0; c < li.kpca.coordinates.cols(); ++c) os << ",pc" << c + 1;
            os << '\n';
            for (std::size_t i = 0; i < data.size(); ++i) {
                os << i << ',' << model.class_names[static_cast<std::size_t>(data.y[i])];
                for (double v : li.kpca.coordinates.row(i)) os << ',' << v;
                os << '\n';
            }
        });
        li.files.push_back(kpca_path);

        for (std::size_t dim : opt.dims) {
            const Histogram h = omega_histogram(model.net.layers[l], dim, opt.bins);
            const auto hist_path =
                out_dir / ("omega_hist_layer" + std::to_string(l) + "_dim" + std::to_string(dim) + ".csv");
            write_atomic(hist_path, [&](std::ostream& os) {
                os.precision(17);
                os << "bin_lo,bin_hi,count\n";
                for (std::size_t b = 0; b < h.counts.size(); ++b)
                    os << h.edges[b] << ',' << h.edges[b + 1] << ',' << h.counts[b] << '\n';
            });
            li.files.push_back(hist_path);
        }
        out.push_back(std::move(li));
    }
    return out;
}

// ---------------------------------------------------------------------------
// approx-bench

struct ApproxBenchRow {
    std::size_t features = 0;
    double mean_error = 0.0;
    double max_error = 0.0;
};

/// `count` pairs with coordinates ~ N(0, bandwidth^2 / dim), so |u - v| is on the kernel's scale.
inline std::vector<PointPair> random_point_pairs(std::size_t count, std::size_t dim, double bandwidth,
                                                 std::uint64_t seed) {
    Rng rng(derive_seed(seed, 11));
    const double sd = bandwidth / std::sqrt(static_cast<double>(dim));
    std::vector<PointPair> pairs(count);
    for (auto& [u, v] : pairs) {
        u.resize(dim);
        v.resize(dim);
        for (double& a : u) a = rng.normal(0.0, sd);
        for (double& b : v) b = rng.normal(0.0, sd);
    }
    return pairs;
}

/// Error of the D-feature estimate for each D; frequencies for D come from derive_seed(seed, D).
inline std::vector<ApproxBenchRow> cmd_approx_bench(const SpectralDensity& density,
                                                    const std::vector<std::size_t>& feature_counts,
                                                    const std::vector<PointPair>& pairs, std::uint64_t seed) {
    if (feature_counts.empty()) throw ConfigError("approx-bench: empty D list");
    if (pairs.empty()) throw ConfigError("approx-bench: no point pairs");
    std::vector<ApproxBenchRow> rows;
    for (std::size_t d : feature_counts) {
        Rng rng(derive_seed(seed, d));
        const ApproxError e = rff_approx_error(density, d, pairs, rng);
        rows.push_back({d, e.mean_error, e.max_error});
    }
    return rows;
}

inline void write_approx_csv(std::ostream& os, const std::vector<ApproxBenchRow>& rows) {
    os << "D,mean_error,max_error\n";
    for (const auto& r : rows) os << r.features << ',' << format_real(r.mean_error) << ',' << format_real(r.max_error) << '\n';
}

/// Pairs from a CSV whose rows hold u then v (2d columns, optional header line).
inline std::vector<PointPair> load_point_pairs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::vector<PointPair> pairs;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_on(line, ',');
        std::vector<double> values;
        for (auto cell : cells) {
            const auto v = detail::parse_double(cell);
            if (!v) {
                if (line_no == 1) break;  // header
                throw ParseError(path.string(), line_no, "non-numeric value");
            }
            values.push_back(*v);
        }
        if (values.size() != cells.size()) continue;
        if (values.size() % 2 != 0 || values.empty()) {
            throw ParseError(path.string(), line_no, "need an even number of columns (u then v)");
        }
        if (width == 0) width = values.size();
        if (values.size() != width) throw ParseError(path.string(), line_no, "row width differs");
        const std::size_t d = values.size() / 2;
        pairs.emplace_back(std::vector<double>(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(d)),
                           std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(d), values.end()));
    }
    return pairs;
}

}  // namespace rffnet
