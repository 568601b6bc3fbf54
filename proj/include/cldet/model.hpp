#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cldet/tape.hpp"
#include "cldet/tensor.hpp"

namespace cldet {

enum class Activation { Relu, None };

struct LayerSpec {
    std::size_t in = 0;
    std::size_t out = 0;
    Activation act = Activation::Relu;
};

// A layered detector partitioned at split_index into an encoder (layers
// [0, split_index)) and a classifier (layers [split_index, n)). The encoder
// output is the embedding; the final layer emits two raw logits.
struct ModelSpec {
    std::vector<LayerSpec> layers;
    std::size_t split_index = 1;

    std::size_t n_layers() const { return layers.size(); }
    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    std::size_t embedding_dim() const { return layers[split_index - 1].out; }

    // throws SpecError naming the violated constraint
    void validate() const;

    // default desk-scale detector: 32 -> 64(relu) -> 32(relu) | 16(relu) -> 2
    static ModelSpec default_spec();
};

// Parameters are ordered w0, b0, w1, b1, ... and their count never changes.
class SplitModel {
public:
    static SplitModel init(const ModelSpec& spec, std::uint64_t seed);
    SplitModel(ModelSpec spec, std::vector<Tensor> params);

    const ModelSpec& spec() const { return spec_; }
    std::size_t n_params() const { return params_.size(); }
    Tensor& param(std::size_t i) { return params_[i]; }
    const Tensor& param(std::size_t i) const { return params_[i]; }
    std::vector<Tensor>& params() { return params_; }
    const std::vector<Tensor>& params() const { return params_; }

    void set_params(const std::vector<Tensor>& params);
    void zero_grads();

private:
    ModelSpec spec_;
    std::vector<Tensor> params_;
};

// Immutable deep copy used as the distillation teacher. Never touched by an
// optimizer; its forward output is constant for its entire lifetime.
class ModelSnapshot {
public:
    explicit ModelSnapshot(const SplitModel& model);

    const ModelSpec& spec() const { return spec_; }
    const std::vector<Tensor>& params() const { return params_; }

private:
    ModelSpec spec_;
    std::vector<Tensor> params_;
};

struct ForwardResult {
    Tensor embedding;  // n x embedding_dim
    Tensor logits;     // n x 2, pre-softmax
};

struct TapeForward {
    Tape::Var embedding;
    Tape::Var logits;
};

// No-grad forward; shares kernels with the recorded path so both produce
// bitwise-identical values.
ForwardResult forward(const SplitModel& model, const Tensor& x);
ForwardResult forward(const ModelSnapshot& snapshot, const Tensor& x);

// Recorded forward for training.
TapeForward forward(Tape& tape, SplitModel& model, const Tensor& x);

// fake-class probability softmax(logits)[:, 1], one entry per row
std::vector<double> fake_scores(const Tensor& logits);

struct ParamPartition {
    std::vector<std::size_t> encoder;
    std::vector<std::size_t> classifier;
};

// Disjoint, exhaustive split of parameter ids: layer i belongs to the encoder
// iff i < split_index.
ParamPartition param_partition(const SplitModel& model);
ParamPartition param_partition(const ModelSpec& spec);

// Text checkpoint; parameter values are written as hexfloats so that
// save -> load round-trips are value-exact.
void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec,
                     const std::vector<Tensor>& params);
SplitModel load_checkpoint(const std::filesystem::path& path);

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

}  // namespace cldet
