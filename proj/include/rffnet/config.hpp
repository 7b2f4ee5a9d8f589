#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rffnet/dataio.hpp"
#include "rffnet/errors.hpp"
#include "rffnet/network.hpp"
#include "rffnet/optimizer.hpp"

namespace rffnet {

/// Invalid or inconsistent run configuration.
class ConfigError : public ParameterError {
  public:
    using ParameterError::ParameterError;
};

/**
 * Flat key-value document with dotted keys.
 *
 *   # comment
 *   model.layers = auto
 *   train.lr = 0.001
 */
class KeyValueConfig {
  public:
    static KeyValueConfig parse(std::istream& in, const std::string& source) {
        KeyValueConfig cfg;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string_view body = line;
            if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
            body = detail::trim(body);
            if (body.empty()) continue;
            const auto eq = body.find('=');
            if (eq == std::string_view::npos) throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
            const auto key = detail::trim(body.substr(0, eq));
            if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
            cfg.set(std::string(key), std::string(detail::trim(body.substr(eq + 1))));
        }
        return cfg;
    }

    static KeyValueConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
        return parse(in, path.string());
    }

    void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }

    /// "key=value" override, as given on the command line.
    void set_assignment(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("override '" + assignment + "' is not key=value");
        }
        set(std::string(detail::trim(std::string_view(assignment).substr(0, eq))),
            std::string(detail::trim(std::string_view(assignment).substr(eq + 1))));
    }

    bool contains(const std::string& key) const { return values_.contains(key); }

    std::optional<std::string> get(const std::string& key) const {
        if (auto it = values_.find(key); it != values_.end()) return it->second;
        return std::nullopt;
    }

    const std::map<std::string, std::string>& entries() const noexcept { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

namespace detail {

inline double to_double(const std::string& key, const std::string& text) {
    const auto v = parse_double(text);
    if (!v) throw ConfigError(key + ": '" + text + "' is not a number");
    return *v;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& text) {
    std::uint64_t v = 0;
    const auto t = trim(text);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
        throw ConfigError(key + ": '" + text + "' is not a non-negative integer");
    }
    return v;
}

inline bool to_bool(const std::string& key, const std::string& text) {
    if (text == "1" || text == "true" || text == "on" || text == "yes") return true;
    if (text == "0" || text == "false" || text == "off" || text == "no") return false;
    throw ConfigError(key + ": '" + text + "' is not a boolean");
}

}  // namespace detail

/// Everything a reproducible `train` run needs.
struct RunConfig {
    // data
    std::string task;                 // registry entry name, or empty for a direct path
    std::filesystem::path registry = "data/registry.txt";
    std::filesystem::path data_path;  // direct file when no task is named
    std::filesystem::path test_path;
    std::string format = "csv";
    int label_column = -1;
    bool header = false;
    SplitMode split = SplitMode::random_half;
    Preprocess preprocess = Preprocess::minmax_whiten;

    // model
    std::optional<std::size_t> layers;  // nullopt = ceil(n/1000) + 1
    std::vector<std::size_t> features{64};
    bool batchnorm = false;
    std::optional<LossKind> loss;  // nullopt = squared_hinge for 2 classes, cross_entropy otherwise
    double init_stddev = 0.1;
    double readout_stddev = 0.1;

    // training
    std::optional<std::size_t> epochs;      // nullopt = 3000 for n <= 1000, else 300
    std::optional<std::size_t> batch_size;  // nullopt = full batch for n <= 1000, else 256
    std::vector<std::pair<std::size_t, double>> lr_schedule{{0, 0.001}};
    double lambda = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    OptimizerKind optimizer = OptimizerKind::adam;
    bool shuffle = true;

    // run
    std::uint64_t seed = 0;
    std::size_t trials = 1;
    std::size_t jobs = 1;
    std::filesystem::path out = "runs/latest";
};

namespace detail {

inline std::vector<std::size_t> parse_feature_list(const std::string& key, const std::string& text) {
    std::vector<std::size_t> out;
    for (auto part : split_on(text, ',')) {
        const auto v = to_u64(key, std::string(part));
        if (v == 0) throw ConfigError(key + ": feature counts must be positive");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

/// "0:0.01,200:0.001" or a bare learning rate.
inline std::vector<std::pair<std::size_t, double>> parse_schedule(const std::string& key,
                                                                  const std::string& text) {
    std::vector<std::pair<std::size_t, double>> out;
    for (auto part : split_on(text, ',')) {
        const std::string item(trim(part));
        const auto colon = item.find(':');
        if (colon == std::string::npos) {
            out.emplace_back(0, to_double(key, item));
        } else {
            out.emplace_back(static_cast<std::size_t>(to_u64(key, item.substr(0, colon))),
                             to_double(key, item.substr(colon + 1)));
        }
    }
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i].first <= out[i - 1].first) throw ConfigError(key + ": epochs must increase");
    }
    if (out.empty() || out.front().first != 0) throw ConfigError(key + ": schedule must start at epoch 0");
    return out;
}

inline std::string format_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

}  // namespace detail

inline RunConfig resolve_run_config(const KeyValueConfig& kv) {
    RunConfig c;
    for (const auto& [key, value] : kv.entries()) {
        if (key == "data.task") c.task = value;
        else if (key == "data.registry") c.registry = value;
        else if (key == "data.path") c.data_path = value;
        else if (key == "data.test_path") c.test_path = value;
        else if (key == "data.format") c.format = value;
        else if (key == "data.label_column") c.label_column = static_cast<int>(detail::to_double(key, value));
        else if (key == "data.header") c.header = detail::to_bool(key, value);
        else if (key == "data.split") c.split = parse_split_mode(value);
        else if (key == "data.preprocess") c.preprocess = parse_preprocess(value);
        else if (key == "model.layers") {
            if (value == "auto") c.layers.reset();
            else c.layers = static_cast<std::size_t>(detail::to_u64(key, value));
        } else if (key == "model.D") c.features = detail::parse_feature_list(key, value);
        else if (key == "model.batchnorm") c.batchnorm = detail::to_bool(key, value);
        else if (key == "model.loss") {
            if (value == "auto") c.loss.reset();
            else c.loss = parse_loss_kind(value);
        } else if (key == "model.init_stddev") c.init_stddev = detail::to_double(key, value);
        else if (key == "model.readout_stddev") c.readout_stddev = detail::to_double(key, value);
        else if (key == "train.epochs") {
            if (value == "auto") c.epochs.reset();
            else c.epochs = static_cast<std::size_t>(detail::to_u64(key, value));
        } else if (key == "train.batch_size") {
            if (value == "auto") c.batch_size.reset();
            else c.batch_size = static_cast<std::size_t>(detail::to_u64(key, value));
        } else if (key == "train.lr") c.lr_schedule = detail::parse_schedule(key, value);
        else if (key == "train.lambda") c.lambda = detail::to_double(key, value);
        else if (key == "train.beta1") c.beta1 = detail::to_double(key, value);
        else if (key == "train.beta2") c.beta2 = detail::to_double(key, value);
        else if (key == "train.eps") c.adam_epsilon = detail::to_double(key, value);
        else if (key == "train.optimizer") {
            if (value == "adam") c.optimizer = OptimizerKind::adam;
            else if (value == "sgd") c.optimizer = OptimizerKind::sgd;
            else throw ConfigError(key + ": unknown optimizer '" + value + "'");
        } else if (key == "train.shuffle") c.shuffle = detail::to_bool(key, value);
        else if (key == "run.seed") c.seed = detail::to_u64(key, value);
        else if (key == "run.trials") c.trials = static_cast<std::size_t>(detail::to_u64(key, value));
        else if (key == "run.jobs") c.jobs = static_cast<std::size_t>(detail::to_u64(key, value));
        else if (key == "run.out") c.out = value;
        else throw ConfigError("unknown config key '" + key + "'");
    }
    if (c.task.empty() && c.data_path.empty()) throw ConfigError("set data.task or data.path");
    if (c.trials < 1) throw ConfigError("run.trials must be at least 1");
    if (c.jobs < 1) throw ConfigError("run.jobs must be at least 1");
    if (c.layers && *c.layers < 1) throw ConfigError("model.layers must be at least 1");
    if (c.layers && c.features.size() != 1 && c.features.size() != *c.layers) {
        throw ConfigError("model.D lists " + std::to_string(c.features.size()) +
                          " values for " + std::to_string(*c.layers) + " layers");
    }
    if (!(c.init_stddev > 0.0)) throw ConfigError("model.init_stddev must be positive");
    if (!(c.readout_stddev >= 0.0)) throw ConfigError("model.readout_stddev must be >= 0");
    if (!(c.lambda >= 0.0)) throw ConfigError("train.lambda must be >= 0");
    if (c.batchnorm && c.batch_size && *c.batch_size == 1) {
        throw ConfigError("train.batch_size must be at least 2 with batch normalization");
    }
    if (c.split == SplitMode::provided && !c.data_path.empty() && c.test_path.empty()) {
        throw ConfigError("data.split = provided needs data.test_path");
    }
    return c;
}

/// Canonical key-value form: every key, resolved values, sorted by key.
inline void write_run_config(std::ostream& os, const RunConfig& c) {
    std::map<std::string, std::string> kv;
    if (!c.task.empty()) {
        kv["data.task"] = c.task;
        kv["data.registry"] = c.registry.string();
    } else {
        kv["data.path"] = c.data_path.string();
        if (!c.test_path.empty()) kv["data.test_path"] = c.test_path.string();
        kv["data.format"] = c.format;
        kv["data.label_column"] = std::to_string(c.label_column);
        kv["data.header"] = c.header ? "true" : "false";
        kv["data.split"] = std::string(to_string(c.split));
    }
    switch (c.preprocess) {
        case Preprocess::none: kv["data.preprocess"] = "none"; break;
        case Preprocess::minmax: kv["data.preprocess"] = "minmax"; break;
        case Preprocess::whiten: kv["data.preprocess"] = "whiten"; break;
        case Preprocess::minmax_whiten: kv["data.preprocess"] = "minmax+whiten"; break;
    }
    kv["model.layers"] = c.layers ? std::to_string(*c.layers) : "auto";
    std::string features;
    for (std::size_t i = 0; i < c.features.size(); ++i)
        features += (i ? "," : "") + std::to_string(c.features[i]);
    kv["model.D"] = features;
    kv["model.batchnorm"] = c.batchnorm ? "true" : "false";
    kv["model.loss"] = c.loss ? std::string(to_string(*c.loss)) : "auto";
    kv["model.init_stddev"] = detail::format_double(c.init_stddev);
    kv["model.readout_stddev"] = detail::format_double(c.readout_stddev);
    kv["train.epochs"] = c.epochs ? std::to_string(*c.epochs) : "auto";
    kv["train.batch_size"] = c.batch_size ? std::to_string(*c.batch_size) : "auto";
    std::string schedule;
    for (std::size_t i = 0; i < c.lr_schedule.size(); ++i) {
        schedule += (i ? "," : "") + std::to_string(c.lr_schedule[i].first) + ":" +
                    detail::format_double(c.lr_schedule[i].second);
    }
    kv["train.lr"] = schedule;
    kv["train.lambda"] = detail::format_double(c.lambda);
    kv["train.beta1"] = detail::format_double(c.beta1);
    kv["train.beta2"] = detail::format_double(c.beta2);
    kv["train.eps"] = detail::format_double(c.adam_epsilon);
    kv["train.optimizer"] = c.optimizer == OptimizerKind::adam ? "adam" : "sgd";
    kv["train.shuffle"] = c.shuffle ? "true" : "false";
    kv["run.seed"] = std::to_string(c.seed);
    kv["run.trials"] = std::to_string(c.trials);
    kv["run.out"] = c.out.string();
    for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
}

}  // namespace rffnet
