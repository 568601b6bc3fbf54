#include "cldet/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cldet/errors.hpp"
#include "cldet/rng.hpp"

namespace cldet {

void ModelSpec::validate() const {
    if (layers.size() < 2) {
        throw SpecError("model spec: need at least 2 layers, got " +
                        std::to_string(layers.size()));
    }
    if (split_index < 1 || split_index >= layers.size()) {
        throw SpecError("model spec: split_index " + std::to_string(split_index) +
                        " outside [1, " + std::to_string(layers.size()) + ")");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].in == 0 || layers[i].out == 0) {
            throw SpecError("model spec: layer " + std::to_string(i) + " has zero width");
        }
        if (i + 1 < layers.size() && layers[i].out != layers[i + 1].in) {
            throw SpecError("model spec: layer " + std::to_string(i) + " output width " +
                            std::to_string(layers[i].out) + " != layer " +
                            std::to_string(i + 1) + " input width " +
                            std::to_string(layers[i + 1].in));
        }
    }
    if (layers.back().out != 2) {
        throw SpecError("model spec: output width must be 2, got " +
                        std::to_string(layers.back().out));
    }
}

ModelSpec ModelSpec::default_spec() {
    ModelSpec spec;
    spec.layers = {
        {32, 64, Activation::Relu},
        {64, 32, Activation::Relu},
        {32, 16, Activation::Relu},
        {16, 2, Activation::None},
    };
    spec.split_index = 2;
    return spec;
}

SplitModel SplitModel::init(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    std::vector<Tensor> params;
    params.reserve(spec.layers.size() * 2);
    for (const LayerSpec& layer : spec.layers) {
        Tensor w({layer.in, layer.out});
        double bound = std::sqrt(6.0 / static_cast<double>(layer.in));
        for (double& v : w.values) v = rng.uniform(-bound, bound);
        w.trainable = true;
        params.push_back(std::move(w));

        Tensor b({1, layer.out});  // zeros
        b.trainable = true;
        params.push_back(std::move(b));
    }
    return SplitModel(spec, std::move(params));
}

SplitModel::SplitModel(ModelSpec spec, std::vector<Tensor> params)
    : spec_(std::move(spec)), params_(std::move(params)) {
    spec_.validate();
    if (params_.size() != spec_.layers.size() * 2) {
        throw SpecError("model: " + std::to_string(params_.size()) + " parameter tensors for " +
                        std::to_string(spec_.layers.size()) + " layers");
    }
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerSpec& l = spec_.layers[i];
        const Tensor& w = params_[2 * i];
        const Tensor& b = params_[2 * i + 1];
        if (w.rows() != l.in || w.cols() != l.out || b.size() != l.out) {
            throw SpecError("model: parameter shapes of layer " + std::to_string(i) +
                            " do not match the layer spec");
        }
    }
}

void SplitModel::set_params(const std::vector<Tensor>& params) {
    if (params.size() != params_.size()) {
        throw ContractError("model: parameter count is fixed");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params_[i].same_shape(params[i])) {
            throw ContractError("model: parameter " + std::to_string(i) + " shape change");
        }
        params_[i].values = params[i].values;
    }
}

void SplitModel::zero_grads() {
    for (Tensor& p : params_) p.zero_grad();
}

ModelSnapshot::ModelSnapshot(const SplitModel& model)
    : spec_(model.spec()), params_(model.params()) {
    for (Tensor& p : params_) {
        p.trainable = false;
        p.grad.clear();
    }
}

namespace {

ForwardResult plain_forward(const ModelSpec& spec, const std::vector<Tensor>& params,
                            const Tensor& x) {
    if (x.cols() != spec.input_dim()) {
        throw DimensionError("forward: input " + x.shape_str() + " does not match input_dim " +
                             std::to_string(spec.input_dim()));
    }
    std::size_t n = x.rows();
    ForwardResult out;
    Tensor h = x;
    if (h.shape.size() == 1) h.shape = {1, h.size()};
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const Tensor& w = params[2 * i];
        const Tensor& b = params[2 * i + 1];
        Tensor z({n, l.out});
        kernels::matmul(h.values.data(), w.values.data(), z.values.data(), n, l.in, l.out);
        Tensor zb({n, l.out});
        kernels::add_bias(z.values.data(), b.values.data(), zb.values.data(), n, l.out);
        if (l.act == Activation::Relu) {
            Tensor a({n, l.out});
            kernels::relu(zb.values.data(), a.values.data(), zb.size());
            h = std::move(a);
        } else {
            h = std::move(zb);
        }
        if (i + 1 == spec.split_index) out.embedding = h;
    }
    out.logits = std::move(h);
    return out;
}

}  // namespace

ForwardResult forward(const SplitModel& model, const Tensor& x) {
    return plain_forward(model.spec(), model.params(), x);
}

ForwardResult forward(const ModelSnapshot& snapshot, const Tensor& x) {
    return plain_forward(snapshot.spec(), snapshot.params(), x);
}

TapeForward forward(Tape& tape, SplitModel& model, const Tensor& x) {
    const ModelSpec& spec = model.spec();
    if (x.cols() != spec.input_dim()) {
        throw DimensionError("forward: input " + x.shape_str() + " does not match input_dim " +
                             std::to_string(spec.input_dim()));
    }
    Tensor xin = x;
    if (xin.shape.size() == 1) xin.shape = {1, xin.size()};
    Tape::Var h = tape.constant(std::move(xin));
    TapeForward out;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        Tape::Var w = tape.leaf(model.param(2 * i));
        Tape::Var b = tape.leaf(model.param(2 * i + 1));
        h = tape.add_bias(tape.matmul(h, w), b);
        if (spec.layers[i].act == Activation::Relu) h = tape.relu(h);
        if (i + 1 == spec.split_index) out.embedding = h;
    }
    out.logits = h;
    return out;
}

std::vector<double> fake_scores(const Tensor& logits) {
    std::size_t n = logits.rows(), c = logits.cols();
    Tensor probs(logits.shape);
    kernels::softmax_rows(logits.values.data(), probs.values.data(), n, c);
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) scores[i] = probs.values[i * c + 1];
    return scores;
}

ParamPartition param_partition(const ModelSpec& spec) {
    ParamPartition part;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        auto& side = i < spec.split_index ? part.encoder : part.classifier;
        side.push_back(2 * i);
        side.push_back(2 * i + 1);
    }
    return part;
}

ParamPartition param_partition(const SplitModel& model) {
    return param_partition(model.spec());
}

std::string activation_name(Activation a) {
    return a == Activation::Relu ? "relu" : "none";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "none") return Activation::None;
    throw SpecError("unknown activation '" + name + "' (expected relu or none)");
}

namespace {

std::string hex_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec,
                     const std::vector<Tensor>& params) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out << "cldet-model v1\n";
    out << "layers " << spec.layers.size() << "\n";
    for (const LayerSpec& l : spec.layers) {
        out << "layer " << l.in << " " << l.out << " " << activation_name(l.act) << "\n";
    }
    out << "split " << spec.split_index << "\n";
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& p = params[i];
        std::string name = (i % 2 == 0 ? "w" : "b") + std::to_string(i / 2);
        out << "tensor " << name << " " << p.rows() << " " << p.cols() << "\n";
        for (std::size_t r = 0; r < p.rows(); ++r) {
            for (std::size_t c = 0; c < p.cols(); ++c) {
                if (c) out << " ";
                out << hex_double(p.at(r, c));
            }
            out << "\n";
        }
    }
    if (!out) throw IoError("write failed for checkpoint " + path.string());
}

SplitModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read checkpoint " + path.string());
    std::string line;
    std::size_t lineno = 0;
    auto next_line = [&]() -> std::string& {
        if (!std::getline(in, line)) {
            throw ParseError(path.string() + ": unexpected end of file at line " +
                             std::to_string(lineno + 1));
        }
        ++lineno;
        return line;
    };

    if (next_line() != "cldet-model v1") {
        throw ParseError(path.string() + ":1: not a cldet checkpoint");
    }
    std::istringstream hdr(next_line());
    std::string tag;
    std::size_t n_layers = 0;
    if (!(hdr >> tag >> n_layers) || tag != "layers" || n_layers == 0) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected layer count");
    }
    ModelSpec spec;
    for (std::size_t i = 0; i < n_layers; ++i) {
        std::istringstream ls(next_line());
        LayerSpec l;
        std::string act;
        if (!(ls >> tag >> l.in >> l.out >> act) || tag != "layer") {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected layer line");
        }
        try {
            l.act = activation_from_name(act);
        } catch (const SpecError&) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": unknown activation '" + act + "'");
        }
        spec.layers.push_back(l);
    }
    std::istringstream ss(next_line());
    if (!(ss >> tag >> spec.split_index) || tag != "split") {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected split line");
    }

    std::vector<Tensor> params;
    for (std::size_t i = 0; i < n_layers * 2; ++i) {
        std::istringstream ts(next_line());
        std::string name;
        std::size_t r = 0, c = 0;
        if (!(ts >> tag >> name >> r >> c) || tag != "tensor") {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected tensor line");
        }
        Tensor p(i % 2 == 0 ? std::vector<std::size_t>{r, c} : std::vector<std::size_t>{1, c});
        if (p.rows() != r || p.size() != r * c) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad tensor shape");
        }
        for (std::size_t row = 0; row < r; ++row) {
            std::istringstream vs(next_line());
            std::string tok;
            for (std::size_t col = 0; col < c; ++col) {
                if (!(vs >> tok)) {
                    throw ParseError(path.string() + ":" + std::to_string(lineno) +
                                     ": expected " + std::to_string(c) + " values");
                }
                char* end = nullptr;
                p.values[row * c + col] = std::strtod(tok.c_str(), &end);
                if (end == tok.c_str() || *end != '\0') {
                    throw ParseError(path.string() + ":" + std::to_string(lineno) +
                                     ": bad value '" + tok + "'");
                }
            }
        }
        p.trainable = true;
        params.push_back(std::move(p));
    }
    return SplitModel(std::move(spec), std::move(params));
}

}  // namespace cldet
