#pragma once

#include <vector>

#include "cldet/model.hpp"
#include "cldet/tape.hpp"
#include "cldet/tensor.hpp"

namespace cldet {

struct LossWeights {
    double ce = 1.0;
    double lwf = 1.0;
    double psa = 1.0;
};

struct LossConfig {
    LossWeights weights;
    double temperature = 2.0;
    bool psa_normalize = false;  // distance on raw embeddings by default
};

struct LossBreakdown {
    double ce = 0.0;
    double lwf = 0.0;
    double psa = 0.0;
    double total = 0.0;
    LossWeights weights;
};

// mean over samples of -log softmax(logits)[i, y_i]
Tape::Var cross_entropy(Tape& tape, Tape::Var logits, const std::vector<int>& labels);

// T^2 * mean over samples of KL(softmax(old/T) || softmax(new/T)); the old
// logits are a constant, so gradient flows only into the new logits.
Tape::Var lwf_loss(Tape& tape, Tape::Var new_logits, const Tensor& old_logits,
                   double temperature);

// mean squared embedding distance over authentic (y == 0) samples; 0 when the
// batch holds no authentic samples. Old embeddings are constants.
Tape::Var psa_loss(Tape& tape, Tape::Var new_emb, const Tensor& old_emb,
                   const std::vector<int>& labels, bool normalize = false);

// Exact weighted composition of the three component values.
LossBreakdown dfwf_total(double ce, double lwf, double psa, const LossWeights& weights);

struct DfwfVars {
    Tape::Var total;
    LossBreakdown breakdown;
};

// Assembles the full objective on the tape. Passing teacher == nullptr (first
// task) or a zero weight skips that term's tape ops entirely, so the recorded
// graph is identical to plain fine-tuning when distillation is off.
DfwfVars dfwf_loss(Tape& tape, Tape::Var logits, Tape::Var embedding,
                   const ForwardResult* teacher, const std::vector<int>& labels,
                   const LossConfig& cfg);

// no-grad cross-entropy, used for validation monitoring
double cross_entropy_value(const Tensor& logits, const std::vector<int>& labels);

}  // namespace cldet
