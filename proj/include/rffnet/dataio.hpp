#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rffnet/errors.hpp"
#include "rffnet/matrix.hpp"
#include "rffnet/random.hpp"

namespace rffnet {

/// Per-column summary statistics (population standard deviation).
struct FeatureStats {
    std::vector<double> min;
    std::vector<double> max;
    std::vector<double> mean;
    std::vector<double> stddev;

    std::size_t size() const noexcept { return min.size(); }
};

inline FeatureStats compute_feature_stats(const DenseMatrix& x) {
    const std::size_t d = x.cols();
    FeatureStats s;
    s.min.assign(d, 0.0);
    s.max.assign(d, 0.0);
    s.mean.assign(d, 0.0);
    s.stddev.assign(d, 0.0);
    if (x.rows() == 0) return s;
    for (std::size_t j = 0; j < d; ++j) s.min[j] = s.max[j] = x(0, j);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            s.min[j] = std::min(s.min[j], x(i, j));
            s.max[j] = std::max(s.max[j], x(i, j));
            s.mean[j] += x(i, j);
        }
    }
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    for (double& m : s.mean) m *= inv_n;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double c = x(i, j) - s.mean[j];
            s.stddev[j] += c * c;
        }
    }
    for (double& v : s.stddev) v = std::sqrt(v * inv_n);
    return s;
}

/// Class names in index order, plus the reverse lookup.
class LabelMap {
  public:
    LabelMap() = default;
    explicit LabelMap(std::vector<std::string> names) {
        for (auto& n : names) add(std::move(n));
    }

    /// Index of `name`, registering it at the end if unseen.
    int intern(const std::string& name) {
        if (auto it = index_.find(name); it != index_.end()) return it->second;
        return add(name);
    }

    std::optional<int> find(const std::string& name) const {
        if (auto it = index_.find(name); it != index_.end()) return it->second;
        return std::nullopt;
    }

    const std::vector<std::string>& names() const noexcept { return names_; }
    std::size_t size() const noexcept { return names_.size(); }

  private:
    int add(std::string name) {
        const int idx = static_cast<int>(names_.size());
        index_.emplace(name, idx);
        names_.push_back(std::move(name));
        return idx;
    }

    std::vector<std::string> names_;
    std::unordered_map<std::string, int> index_;
};

struct Dataset {
    DenseMatrix x;
    std::vector<int> y;
    std::vector<std::string> class_names;  // index -> original label text
    FeatureStats feature_stats;            // always from the training split

    std::size_t size() const noexcept { return y.size(); }
    std::size_t dim() const noexcept { return x.cols(); }
    std::size_t class_count() const noexcept { return class_names.size(); }
};

inline void validate(const Dataset& data) {
    if (data.x.rows() != data.y.size()) {
        throw DataError("dataset has " + std::to_string(data.x.rows()) + " rows but " +
                        std::to_string(data.y.size()) + " labels");
    }
    if (data.y.empty() || data.x.cols() == 0) throw DataError("dataset is empty");
    for (int label : data.y) {
        if (label < 0 || static_cast<std::size_t>(label) >= data.class_count()) {
            throw DataError("label index " + std::to_string(label) + " outside [0, " +
                            std::to_string(data.class_count()) + ")");
        }
    }
    if (!all_finite(data.x)) throw DataError("dataset contains non-finite feature values");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::optional<double> parse_double(std::string_view text) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    if (text.empty()) return std::nullopt;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) {
        return std::nullopt;
    }
    return value;
}

inline std::vector<std::string_view> split_on(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::vector<std::string_view> split_whitespace(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return in;
}

inline Dataset assemble(std::vector<double> values, std::size_t dim, std::vector<int> labels,
                        const LabelMap& map, const std::string& source) {
    if (labels.empty()) throw DataError(source + ": no data rows");
    if (dim == 0) throw DataError(source + ": no feature columns");
    Dataset d;
    d.x = DenseMatrix(labels.size(), dim, std::move(values));
    d.y = std::move(labels);
    d.class_names = map.names();
    d.feature_stats = compute_feature_stats(d.x);
    return d;
}

}  // namespace detail

/**
 * Comma-separated file, one sample per row.
 *
 * `label_column` counts from 0; negative values count from the end (-1 is the
 * last column). Labels are arbitrary strings, mapped to contiguous indices in
 * first-appearance order unless `labels` already knows them. Blank lines are
 * skipped.
 */
inline Dataset load_csv(const std::filesystem::path& path, int label_column = -1,
                        bool has_header = false, LabelMap* labels = nullptr) {
    std::ifstream in = detail::open_input(path);
    LabelMap local;
    LabelMap& map = labels ? *labels : local;
    const std::string source = path.string();

    std::vector<double> values;
    std::vector<int> y;
    std::size_t width = 0;
    std::size_t line_no = 0;
    std::string line;
    bool header_pending = has_header;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        if (header_pending) {
            header_pending = false;
            continue;
        }
        const auto cells = detail::split_on(line, ',');
        if (width == 0) {
            width = cells.size();
            if (width < 2) throw ParseError(source, line_no, "need a label and at least one feature");
        } else if (cells.size() != width) {
            throw ParseError(source, line_no,
                             "expected " + std::to_string(width) + " fields, found " +
                                 std::to_string(cells.size()));
        }
        const int w = static_cast<int>(width);
        const int lc = label_column < 0 ? w + label_column : label_column;
        if (lc < 0 || lc >= w) {
            throw ParseError(source, line_no,
                             "label column " + std::to_string(label_column) + " out of range");
        }
        for (int c = 0; c < w; ++c) {
            const auto cell = cells[static_cast<std::size_t>(c)];
            if (c == lc) {
                const auto text = detail::trim(cell);
                if (text.empty()) throw ParseError(source, line_no, "empty label");
                y.push_back(map.intern(std::string(text)));
                continue;
            }
            const auto v = detail::parse_double(cell);
            if (!v) {
                throw ParseError(source, line_no,
                                 "non-numeric value '" + std::string(detail::trim(cell)) +
                                     "' in column " + std::to_string(c));
            }
            values.push_back(*v);
        }
    }
    return detail::assemble(std::move(values), width == 0 ? 0 : width - 1, std::move(y), map,
                            source);
}

/// Writes features then the label text as the last column, full double precision.
inline void write_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out.precision(17);
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double v : data.x.row(i)) out << v << ',';
        out << data.class_names.at(static_cast<std::size_t>(data.y[i])) << '\n';
    }
}

/**
 * LIBSVM sparse format: `label idx:val idx:val ...` with 1-based, strictly
 * increasing indices. Missing entries are zero. The dimension is the largest
 * index seen, or `min_dim` if that is larger.
 */
inline Dataset load_libsvm(const std::filesystem::path& path, std::size_t min_dim = 0,
                           LabelMap* labels = nullptr) {
    std::ifstream in = detail::open_input(path);
    LabelMap local;
    LabelMap& map = labels ? *labels : local;
    const std::string source = path.string();

    std::vector<std::vector<std::pair<std::size_t, double>>> rows;
    std::vector<int> y;
    std::size_t dim = min_dim;
    std::size_t line_no = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view body = line;
        if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
        const auto tokens = detail::split_whitespace(body);
        if (tokens.empty()) continue;
        y.push_back(map.intern(std::string(tokens[0])));
        auto& row = rows.emplace_back();
        std::size_t previous = 0;
        for (std::size_t t = 1; t < tokens.size(); ++t) {
            const auto colon = tokens[t].find(':');
            if (colon == std::string_view::npos) {
                throw ParseError(source, line_no, "expected idx:value, got '" +
                                                      std::string(tokens[t]) + "'");
            }
            const auto idx_text = tokens[t].substr(0, colon);
            std::size_t idx = 0;
            auto [ptr, ec] = std::from_chars(idx_text.data(), idx_text.data() + idx_text.size(), idx);
            if (ec != std::errc{} || ptr != idx_text.data() + idx_text.size() || idx == 0) {
                throw ParseError(source, line_no, "bad feature index '" + std::string(idx_text) + "'");
            }
            if (idx <= previous) {
                throw ParseError(source, line_no,
                                 "feature indices must be strictly increasing (" +
                                     std::to_string(idx) + " after " + std::to_string(previous) + ")");
            }
            const auto v = detail::parse_double(tokens[t].substr(colon + 1));
            if (!v) {
                throw ParseError(source, line_no, "non-numeric value in '" + std::string(tokens[t]) + "'");
            }
            previous = idx;
            row.emplace_back(idx - 1, *v);
            dim = std::max(dim, idx);
        }
    }
    std::vector<double> values(rows.size() * dim, 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (auto [j, v] : rows[i]) values[i * dim + j] = v;
    return detail::assemble(std::move(values), dim, std::move(y), map, source);
}

// ---------------------------------------------------------------------------
// MONK's problems

inline constexpr std::array<int, 6> monks_attribute_sizes{3, 3, 2, 3, 4, 2};

/// Target concept of MONK's problem 1, 2 or 3 for attributes a1..a6 (1-based values).
inline int monks_target(int problem, const std::array<int, 6>& a) {
    switch (problem) {
        case 1: return (a[0] == a[1] || a[4] == 1) ? 1 : 0;
        case 2: {
            int firsts = 0;
            for (int v : a) firsts += v == 1 ? 1 : 0;
            return firsts == 2 ? 1 : 0;
        }
        case 3: return ((a[4] == 3 && a[3] == 1) || (a[4] != 4 && a[1] != 3)) ? 1 : 0;
        default: throw ParameterError("MONK's problem must be 1, 2 or 3");
    }
}

/// UCI distribution format: `class a1 a2 a3 a4 a5 a6 id` separated by spaces.
inline Dataset load_monks(const std::filesystem::path& path) {
    std::ifstream in = detail::open_input(path);
    LabelMap map({"0", "1"});
    const std::string source = path.string();
    std::vector<double> values;
    std::vector<int> y;
    std::size_t line_no = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        const auto tokens = detail::split_whitespace(line);
        if (tokens.empty()) continue;
        if (tokens.size() < 7) throw ParseError(source, line_no, "expected class and six attributes");
        const std::string label(tokens[0]);
        const auto idx = map.find(label);
        if (!idx) throw ParseError(source, line_no, "class must be 0 or 1, got '" + label + "'");
        y.push_back(*idx);
        for (std::size_t t = 1; t <= 6; ++t) {
            const auto v = detail::parse_double(tokens[t]);
            if (!v) throw ParseError(source, line_no, "non-numeric attribute '" + std::string(tokens[t]) + "'");
            values.push_back(*v);
        }
    }
    return detail::assemble(std::move(values), 6, std::move(y), map, source);
}

struct TrainTest {
    Dataset train;
    Dataset test;
};

/**
 * MONK's problem generated from its defining rule.
 *
 * The test set is all 432 attribute combinations with noise-free labels. The
 * training set is a seed-determined sample without replacement of the size
 * used by the UCI distribution (124, 169, 122); problem 3 additionally has 5%
 * of its training labels flipped.
 */
inline TrainTest generate_monks(int problem, std::uint64_t seed) {
    if (problem < 1 || problem > 3) throw ParameterError("MONK's problem must be 1, 2 or 3");
    std::vector<std::array<int, 6>> all;
    for (int a1 = 1; a1 <= 3; ++a1)
        for (int a2 = 1; a2 <= 3; ++a2)
            for (int a3 = 1; a3 <= 2; ++a3)
                for (int a4 = 1; a4 <= 3; ++a4)
                    for (int a5 = 1; a5 <= 4; ++a5)
                        for (int a6 = 1; a6 <= 2; ++a6) all.push_back({a1, a2, a3, a4, a5, a6});

    const std::string source = "monks" + std::to_string(problem);
    auto build = [&source](const std::vector<std::array<int, 6>>& rows, std::vector<int> labels) {
        std::vector<double> values;
        values.reserve(rows.size() * 6);
        for (const auto& r : rows)
            for (int v : r) values.push_back(v);
        return detail::assemble(std::move(values), 6, std::move(labels), LabelMap({"0", "1"}), source);
    };

    std::vector<int> all_labels;
    for (const auto& a : all) all_labels.push_back(monks_target(problem, a));

    constexpr std::array<std::size_t, 3> train_sizes{124, 169, 122};
    const std::size_t n_train = train_sizes[static_cast<std::size_t>(problem - 1)];
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(problem)));
    std::vector<std::size_t> perm = random_permutation(all.size(), rng);
    perm.resize(n_train);
    std::ranges::sort(perm);

    std::vector<std::array<int, 6>> train_rows;
    std::vector<int> train_labels;
    for (std::size_t i : perm) {
        train_rows.push_back(all[i]);
        train_labels.push_back(all_labels[i]);
    }
    if (problem == 3) {
        const auto flips = static_cast<std::size_t>(std::lround(0.05 * static_cast<double>(n_train)));
        std::vector<std::size_t> which = random_permutation(n_train, rng);
        for (std::size_t k = 0; k < flips; ++k) train_labels[which[k]] ^= 1;
    }
    TrainTest out{build(train_rows, std::move(train_labels)), build(all, std::move(all_labels))};
    out.test.feature_stats = out.train.feature_stats;
    return out;
}

// ---------------------------------------------------------------------------
// Normalization. Each transform is a per-column affine map x' = (x - offset) * factor
// fitted on training statistics and applied unchanged to every split.

struct AffineStage {
    std::string kind;  // "minmax" or "whiten"
    std::vector<double> offset;
    std::vector<double> factor;

    friend bool operator==(const AffineStage&, const AffineStage&) = default;
};

inline AffineStage minmax_stage(const FeatureStats& stats) {
    AffineStage s{"minmax", stats.min, std::vector<double>(stats.size(), 0.0)};
    for (std::size_t j = 0; j < stats.size(); ++j) {
        const double range = stats.max[j] - stats.min[j];
        s.factor[j] = range > 0.0 ? 1.0 / range : 0.0;  // constant columns collapse to 0
    }
    return s;
}

inline AffineStage whiten_stage(const FeatureStats& stats) {
    AffineStage s{"whiten", stats.mean, std::vector<double>(stats.size(), 0.0)};
    for (std::size_t j = 0; j < stats.size(); ++j) s.factor[j] = 1.0 / std::max(stats.stddev[j], 1e-12);
    return s;
}

inline void apply_stage(const AffineStage& stage, DenseMatrix& x) {
    if (stage.offset.size() != x.cols() || stage.factor.size() != x.cols()) {
        throw ShapeError(stage.kind + " transform fitted on " + std::to_string(stage.offset.size()) +
                         " columns applied to " + std::to_string(x.cols()));
    }
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] = (r[j] - stage.offset[j]) * stage.factor[j];
    }
}

/// Statistics of the transformed training data, derived without looking at any rows.
inline FeatureStats transform_stats(const AffineStage& stage, const FeatureStats& stats) {
    FeatureStats out = stats;
    for (std::size_t j = 0; j < stats.size(); ++j) {
        const double f = stage.factor[j];
        out.min[j] = (stats.min[j] - stage.offset[j]) * f;
        out.max[j] = (stats.max[j] - stage.offset[j]) * f;
        out.mean[j] = (stats.mean[j] - stage.offset[j]) * f;
        out.stddev[j] = stats.stddev[j] * f;
    }
    return out;
}

inline Dataset apply_stage(const AffineStage& stage, Dataset data) {
    apply_stage(stage, data.x);
    data.feature_stats = transform_stats(stage, data.feature_stats);
    return data;
}

/// (x - min) / (max - min) with the dataset's training statistics; not clipped.
inline Dataset normalize_minmax(Dataset data) {
    const AffineStage stage = minmax_stage(data.feature_stats);
    return apply_stage(stage, std::move(data));
}

/// (x - mean) / stddev with the dataset's training statistics.
inline Dataset whiten(Dataset data) {
    const AffineStage stage = whiten_stage(data.feature_stats);
    return apply_stage(stage, std::move(data));
}

/// Ordered list of stages; what the model snapshot stores about preprocessing.
struct InputTransform {
    std::vector<AffineStage> stages;

    void apply(DenseMatrix& x) const {
        for (const AffineStage& s : stages) apply_stage(s, x);
    }

    friend bool operator==(const InputTransform&, const InputTransform&) = default;
};

enum class Preprocess { none, minmax, whiten, minmax_whiten };

inline Preprocess parse_preprocess(std::string_view name) {
    if (name == "none") return Preprocess::none;
    if (name == "minmax") return Preprocess::minmax;
    if (name == "whiten") return Preprocess::whiten;
    if (name == "minmax+whiten" || name == "minmax_whiten") return Preprocess::minmax_whiten;
    throw ParameterError("unknown preprocessing '" + std::string(name) + "'");
}

/// Fits the stages of `kind` on the training statistics carried by `train`.
inline InputTransform fit_transform(const Dataset& train, Preprocess kind) {
    InputTransform t;
    FeatureStats stats = train.feature_stats;
    if (kind == Preprocess::minmax || kind == Preprocess::minmax_whiten) {
        t.stages.push_back(minmax_stage(stats));
        stats = transform_stats(t.stages.back(), stats);
    }
    if (kind == Preprocess::whiten || kind == Preprocess::minmax_whiten) {
        t.stages.push_back(whiten_stage(stats));
    }
    return t;
}

inline Dataset apply_transform(const InputTransform& t, Dataset data) {
    for (const AffineStage& s : t.stages) data = apply_stage(s, std::move(data));
    return data;
}

// ---------------------------------------------------------------------------
// Splits

enum class SplitMode { provided, random_half };

inline SplitMode parse_split_mode(std::string_view name) {
    if (name == "provided") return SplitMode::provided;
    if (name == "random_half") return SplitMode::random_half;
    throw ParameterError("unknown split mode '" + std::string(name) + "'");
}

inline std::string_view to_string(SplitMode mode) {
    return mode == SplitMode::provided ? "provided" : "random_half";
}

struct SplitSpec {
    SplitMode mode = SplitMode::random_half;
    std::uint64_t seed = 0;
};

inline Dataset subset(const Dataset& data, std::span<const std::size_t> rows) {
    Dataset out;
    out.x = gather_rows(data.x, rows);
    out.y.reserve(rows.size());
    for (std::size_t r : rows) out.y.push_back(data.y[r]);
    out.class_names = data.class_names;
    return out;
}

/**
 * Random half split: ceil(n/2) rows for training, the rest for testing, both
 * kept in original row order. The test part carries the training statistics.
 */
inline TrainTest split(const Dataset& data, const SplitSpec& spec) {
    if (spec.mode != SplitMode::random_half) {
        throw ParameterError("split: provided splits come with the dataset, nothing to split");
    }
    const std::size_t n = data.size();
    if (n < 2) throw DataError("split: random_half needs at least 2 samples, got " + std::to_string(n));
    Rng rng(spec.seed);
    std::vector<std::size_t> perm = random_permutation(n, rng);
    const std::size_t n_train = (n + 1) / 2;
    std::vector<std::size_t> train_rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test_rows(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    std::ranges::sort(train_rows);
    std::ranges::sort(test_rows);
    TrainTest out{subset(data, train_rows), subset(data, test_rows)};
    out.train.feature_stats = compute_feature_stats(out.train.x);
    out.test.feature_stats = out.train.feature_stats;
    return out;
}

/// Rewrites label indices of `data` into the index space of `class_names`.
inline Dataset remap_labels(Dataset data, const std::vector<std::string>& class_names) {
    LabelMap target(class_names);
    std::vector<int> mapping(data.class_names.size());
    for (std::size_t i = 0; i < data.class_names.size(); ++i) {
        const auto idx = target.find(data.class_names[i]);
        if (!idx) throw DataError("label '" + data.class_names[i] + "' unknown to the model");
        mapping[i] = *idx;
    }
    for (int& label : data.y) label = mapping[static_cast<std::size_t>(label)];
    data.class_names = class_names;
    return data;
}

// ---------------------------------------------------------------------------
// Task registry
//
// Plain-text manifest, one task per line:
//   name key=value key=value ...
// Keys: format (csv | libsvm | monks), train, test, label, header, split
// (provided | random_half), problem (monks), data_seed (monks), dim (libsvm).
// Relative paths resolve against the manifest's directory. '#' starts a comment.

struct TaskEntry {
    std::string name;
    std::string format = "csv";
    std::filesystem::path train;
    std::filesystem::path test;
    int label_column = -1;
    bool header = false;
    SplitMode split = SplitMode::random_half;
    int problem = 0;
    std::uint64_t data_seed = 1;
    std::size_t dim = 0;
};

inline std::map<std::string, TaskEntry> parse_registry(std::istream& in, const std::string& source,
                                                       const std::filesystem::path& base_dir) {
    std::map<std::string, TaskEntry> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view body = line;
        if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
        const auto tokens = detail::split_whitespace(body);
        if (tokens.empty()) continue;
        TaskEntry e;
        e.name = std::string(tokens[0]);
        for (std::size_t t = 1; t < tokens.size(); ++t) {
            const auto eq = tokens[t].find('=');
            if (eq == std::string_view::npos) {
                throw ParseError(source, line_no, "expected key=value, got '" + std::string(tokens[t]) + "'");
            }
            const std::string key(tokens[t].substr(0, eq));
            const std::string value(tokens[t].substr(eq + 1));
            try {
                if (key == "format") e.format = value;
                else if (key == "train") e.train = base_dir / value;
                else if (key == "test") e.test = base_dir / value;
                else if (key == "label") e.label_column = std::stoi(value);
                else if (key == "header") e.header = value == "1" || value == "true";
                else if (key == "split") e.split = parse_split_mode(value);
                else if (key == "problem") e.problem = std::stoi(value);
                else if (key == "data_seed") e.data_seed = std::stoull(value);
                else if (key == "dim") e.dim = static_cast<std::size_t>(std::stoull(value));
                else throw ParseError(source, line_no, "unknown key '" + key + "'");
            } catch (const std::logic_error&) {
                throw ParseError(source, line_no, "bad value for '" + key + "': '" + value + "'");
            }
        }
        if (e.format != "csv" && e.format != "libsvm" && e.format != "monks") {
            throw ParseError(source, line_no, "unknown format '" + e.format + "'");
        }
        if (e.format == "monks" && (e.problem < 1 || e.problem > 3)) {
            throw ParseError(source, line_no, "monks entries need problem=1, 2 or 3");
        }
        if (e.format != "monks" && e.train.empty()) {
            throw ParseError(source, line_no, "missing train=path");
        }
        if (e.split == SplitMode::provided && e.format != "monks" && e.test.empty()) {
            throw ParseError(source, line_no, "split=provided needs test=path");
        }
        out[e.name] = std::move(e);
    }
    return out;
}

inline std::map<std::string, TaskEntry> load_registry(const std::filesystem::path& path) {
    std::ifstream in = detail::open_input(path);
    return parse_registry(in, path.string(), path.parent_path());
}

/// One file of a task, in the entry's format, sharing `labels` across splits.
inline Dataset load_file(const TaskEntry& e, const std::filesystem::path& path, LabelMap& labels) {
    if (e.format == "csv") return load_csv(path, e.label_column, e.header, &labels);
    if (e.format == "libsvm") return load_libsvm(path, e.dim, &labels);
    if (e.format == "monks") return load_monks(path);
    throw ParameterError("unknown format '" + e.format + "'");
}

struct TaskData {
    Dataset train;
    Dataset test;
    std::string provenance;  // where the rows came from
};

/// A whole dataset of a task (both provided files concatenated, or the single file).
inline Dataset load_all(const TaskEntry& e) {
    if (e.format == "monks" && (e.train.empty() || !std::filesystem::exists(e.train))) {
        return generate_monks(e.problem, e.data_seed).test;
    }
    LabelMap labels = e.format == "monks" ? LabelMap({"0", "1"}) : LabelMap();
    Dataset d = load_file(e, e.train, labels);
    if (!e.test.empty() && e.split == SplitMode::provided) {
        Dataset t = load_file(e, e.test, labels);
        if (t.dim() != d.dim()) throw DataError(e.name + ": train and test dimensions differ");
        std::vector<double> values(d.x.data());
        values.insert(values.end(), t.x.data().begin(), t.x.data().end());
        d.x = DenseMatrix(d.size() + t.size(), d.dim(), std::move(values));
        d.y.insert(d.y.end(), t.y.begin(), t.y.end());
        d.class_names = labels.names();
        d.feature_stats = compute_feature_stats(d.x);
    }
    return d;
}

/**
 * Loads a task's train/test pair. `split_seed` drives random_half splits.
 * MONK's entries whose files are absent are generated from the rule
 * definition with the entry's data_seed.
 */
inline TaskData load_task(const TaskEntry& e, std::uint64_t split_seed) {
    TaskData out;
    if (e.format == "monks" && (e.train.empty() || !std::filesystem::exists(e.train) ||
                                e.test.empty() || !std::filesystem::exists(e.test))) {
        TrainTest tt = generate_monks(e.problem, e.data_seed);
        out.train = std::move(tt.train);
        out.test = std::move(tt.test);
        out.provenance = "monks" + std::to_string(e.problem) + " generated from rule definition (data_seed=" +
                         std::to_string(e.data_seed) + ")";
        return out;
    }
    if (e.split == SplitMode::provided) {
        LabelMap labels = e.format == "monks" ? LabelMap({"0", "1"}) : LabelMap();
        out.train = load_file(e, e.train, labels);
        TaskEntry test_entry = e;
        test_entry.dim = std::max(e.dim, out.train.dim());
        out.test = load_file(test_entry, e.test, labels);
        if (out.test.dim() != out.train.dim()) {
            if (e.format != "libsvm" || out.test.dim() < out.train.dim()) {
                throw DataError(e.name + ": train has " + std::to_string(out.train.dim()) +
                                " features, test has " + std::to_string(out.test.dim()));
            }
            // Training file never used the top indices; reload it at the wider width.
            TaskEntry wide = e;
            wide.dim = out.test.dim();
            out.train = load_file(wide, e.train, labels);
        }
        out.train.class_names = labels.names();
        out.test.class_names = labels.names();
        out.train.feature_stats = compute_feature_stats(out.train.x);
        out.test.feature_stats = out.train.feature_stats;
        out.provenance = e.train.string() + " | " + e.test.string();
    } else {
        Dataset all = load_all(e);
        TrainTest tt = split(all, {SplitMode::random_half, split_seed});
        out.train = std::move(tt.train);
        out.test = std::move(tt.test);
        out.provenance = e.train.string() + " (random half, seed " + std::to_string(split_seed) + ")";
    }
    return out;
}

}  // namespace rffnet
