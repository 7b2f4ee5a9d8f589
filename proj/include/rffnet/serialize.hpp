#pragma once

#include <cstddef>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ios>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rffnet/dataio.hpp"
#include "rffnet/errors.hpp"
#include "rffnet/network.hpp"

namespace rffnet {

/// A trained network together with what is needed to apply it to raw data.
struct Model {
    Network net;
    InputTransform transform;
    std::vector<std::string> class_names;

    friend bool operator==(const Model&, const Model&) = default;
};

/*
 * Text snapshot. Every real number is written as a C99 hex float so a
 * write/read cycle reproduces each double bit for bit.
 *
 *   rffnet-model 1
 *   loss <kind>
 *   classes <k>
 *   class <name>            (k lines, index order)
 *   stages <s>
 *   stage <kind> <d>        followed by lines "offset v..." and "factor v..."
 *   layers <L>
 *   layer <D> <d_in> <bn 0|1>
 *   omega v...              (D*d_in values, row-major)
 *   bn <momentum> <epsilon> followed by gamma/beta/running_mean/running_var lines, if bn=1
 *   readout <k> <cols>
 *   w v...
 *   b v...
 *   end
 */

namespace detail {

inline void write_values(std::ostream& os, const char* tag, std::span<const double> values) {
    os << tag;
    for (double v : values) os << ' ' << v;
    os << '\n';
}

class SnapshotReader {
  public:
    SnapshotReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

    std::istringstream line(const std::string& expected_tag) {
        std::string text;
        while (std::getline(in_, text)) {
            ++line_no_;
            if (!trim(text).empty()) break;
            text.clear();
        }
        if (text.empty()) fail("unexpected end of file, wanted '" + expected_tag + "'");
        std::istringstream ss(text);
        std::string tag;
        ss >> tag;
        if (tag != expected_tag) fail("expected '" + expected_tag + "', found '" + tag + "'");
        return ss;
    }

    std::vector<double> values(const std::string& tag, std::size_t count) {
        std::istringstream ss = line(tag);
        std::vector<double> out;
        out.reserve(count);
        std::string tok;
        while (ss >> tok) {
            char* end = nullptr;
            const double v = std::strtod(tok.c_str(), &end);
            if (end != tok.c_str() + tok.size()) fail("bad number '" + tok + "'");
            out.push_back(v);
        }
        if (out.size() != count) {
            fail("'" + tag + "' has " + std::to_string(out.size()) + " values, expected " +
                 std::to_string(count));
        }
        return out;
    }

    template <typename T>
    T field(std::istringstream& ss, const char* what) {
        T v{};
        if (!(ss >> v)) fail(std::string("missing or invalid ") + what);
        return v;
    }

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, line_no_, what); }

  private:
    std::istream& in_;
    std::string source_;
    std::size_t line_no_ = 0;
};

}  // namespace detail

inline void write_model(std::ostream& os, const Model& model) {
    validate(model.net);
    const auto flags = os.flags();
    os << std::hexfloat;
    os << "rffnet-model 1\n";
    os << "loss " << to_string(model.net.loss) << '\n';
    os << "classes " << model.class_names.size() << '\n';
    for (const auto& name : model.class_names) os << "class " << name << '\n';
    os << "stages " << model.transform.stages.size() << '\n';
    for (const AffineStage& s : model.transform.stages) {
        os << "stage " << s.kind << ' ' << s.offset.size() << '\n';
        detail::write_values(os, "offset", s.offset);
        detail::write_values(os, "factor", s.factor);
    }
    os << "layers " << model.net.layers.size() << '\n';
    for (const RffLayer& layer : model.net.layers) {
        os << "layer " << layer.feature_count() << ' ' << layer.input_dim() << ' '
           << (layer.batchnorm ? 1 : 0) << '\n';
        detail::write_values(os, "omega", layer.omega.values());
        if (layer.batchnorm) {
            const BatchNormState& bn = *layer.batchnorm;
            os << "bn " << bn.momentum << ' ' << bn.epsilon << '\n';
            detail::write_values(os, "gamma", bn.gamma);
            detail::write_values(os, "beta", bn.beta);
            detail::write_values(os, "running_mean", bn.running_mean);
            detail::write_values(os, "running_var", bn.running_var);
        }
    }
    os << "readout " << model.net.readout_w.rows() << ' ' << model.net.readout_w.cols() << '\n';
    detail::write_values(os, "w", model.net.readout_w.values());
    detail::write_values(os, "b", model.net.readout_b);
    os << "end\n";
    os.flags(flags);
}

inline Model read_model(std::istream& in, const std::string& source = "<model>") {
    detail::SnapshotReader r(in, source);
    Model m;
    {
        auto ss = r.line("rffnet-model");
        if (r.field<int>(ss, "version") != 1) r.fail("unsupported snapshot version");
    }
    {
        auto ss = r.line("loss");
        try {
            m.net.loss = parse_loss_kind(r.field<std::string>(ss, "loss kind"));
        } catch (const ParameterError& e) {
            r.fail(e.what());
        }
    }
    {
        auto ss = r.line("classes");
        const auto k = r.field<std::size_t>(ss, "class count");
        for (std::size_t i = 0; i < k; ++i) {
            auto cs = r.line("class");
            std::string name;
            std::getline(cs >> std::ws, name);
            if (name.empty()) r.fail("empty class name");
            m.class_names.push_back(name);
        }
    }
    {
        auto ss = r.line("stages");
        const auto s = r.field<std::size_t>(ss, "stage count");
        for (std::size_t i = 0; i < s; ++i) {
            auto st = r.line("stage");
            AffineStage stage;
            stage.kind = r.field<std::string>(st, "stage kind");
            const auto d = r.field<std::size_t>(st, "stage width");
            stage.offset = r.values("offset", d);
            stage.factor = r.values("factor", d);
            m.transform.stages.push_back(std::move(stage));
        }
    }
    {
        auto ss = r.line("layers");
        const auto count = r.field<std::size_t>(ss, "layer count");
        for (std::size_t l = 0; l < count; ++l) {
            auto ls = r.line("layer");
            const auto d = r.field<std::size_t>(ls, "feature count");
            const auto d_in = r.field<std::size_t>(ls, "input dimension");
            const auto has_bn = r.field<int>(ls, "batch-norm flag");
            RffLayer layer{DenseMatrix(d, d_in, r.values("omega", d * d_in)), std::nullopt};
            if (has_bn) {
                auto bs = r.line("bn");
                BatchNormState bn;
                std::string tok = r.field<std::string>(bs, "momentum");
                bn.momentum = std::strtod(tok.c_str(), nullptr);
                tok = r.field<std::string>(bs, "epsilon");
                bn.epsilon = std::strtod(tok.c_str(), nullptr);
                bn.gamma = r.values("gamma", 2 * d);
                bn.beta = r.values("beta", 2 * d);
                bn.running_mean = r.values("running_mean", 2 * d);
                bn.running_var = r.values("running_var", 2 * d);
                layer.batchnorm = std::move(bn);
            }
            m.net.layers.push_back(std::move(layer));
        }
    }
    {
        auto ss = r.line("readout");
        const auto k = r.field<std::size_t>(ss, "readout rows");
        const auto cols = r.field<std::size_t>(ss, "readout cols");
        m.net.readout_w = DenseMatrix(k, cols, r.values("w", k * cols));
        m.net.readout_b = r.values("b", k);
    }
    r.line("end");
    try {
        validate(m.net);
    } catch (const ShapeError& e) {
        r.fail(e.what());
    }
    if (m.class_names.size() != m.net.class_count()) r.fail("class names do not match readout rows");
    return m;
}

inline void save_model(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    write_model(out, model);
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

inline Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model '" + path.string() + "'");
    return read_model(in, path.string());
}

}  // namespace rffnet
