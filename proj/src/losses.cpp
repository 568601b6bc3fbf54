#include "cldet/losses.hpp"

#include <cmath>

#include "cldet/errors.hpp"

namespace cldet {

Tape::Var cross_entropy(Tape& tape, Tape::Var logits, const std::vector<int>& labels) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            throw LabelError("cross_entropy: label " + std::to_string(labels[i]) +
                             " outside {0,1} at row " + std::to_string(i));
        }
    }
    return tape.pick_nll(tape.log_softmax_rows(logits), labels);
}

Tape::Var lwf_loss(Tape& tape, Tape::Var new_logits, const Tensor& old_logits,
                   double temperature) {
    if (temperature <= 0.0) {
        throw HyperError("lwf_loss: temperature must be positive, got " +
                         std::to_string(temperature));
    }
    const Tensor& nl = tape.value(new_logits);
    if (!nl.same_shape(old_logits)) {
        throw DimensionError("lwf_loss: new logits " + nl.shape_str() + " vs old logits " +
                             old_logits.shape_str());
    }
    std::size_t n = old_logits.rows(), c = old_logits.cols();

    // teacher distribution at temperature T, constant w.r.t. the tape
    Tensor scaled_old(old_logits.shape);
    kernels::scale(old_logits.values.data(), 1.0 / temperature, scaled_old.values.data(),
                   old_logits.size());
    Tensor log_p(old_logits.shape);
    kernels::log_softmax_rows(scaled_old.values.data(), log_p.values.data(), n, c);
    Tensor p(old_logits.shape);
    for (std::size_t i = 0; i < p.size(); ++i) p.values[i] = std::exp(log_p.values[i]);

    // KL(p || q) per row = sum_c p * (log p - log q), meaned over rows
    Tape::Var log_q = tape.log_softmax_rows(tape.scale(new_logits, 1.0 / temperature));
    Tape::Var diff = tape.sub(tape.constant(std::move(log_p)), log_q);
    Tape::Var terms = tape.mul_const(diff, std::move(p));
    // reduce_mean averages over n*c entries; restore the per-row sum with *c
    return tape.scale(tape.reduce_mean(terms),
                      temperature * temperature * static_cast<double>(c));
}

Tape::Var psa_loss(Tape& tape, Tape::Var new_emb, const Tensor& old_emb,
                   const std::vector<int>& labels, bool normalize) {
    const Tensor& ne = tape.value(new_emb);
    if (!ne.same_shape(old_emb)) {
        throw DimensionError("psa_loss: new embedding " + ne.shape_str() +
                             " vs old embedding " + old_emb.shape_str());
    }
    if (labels.size() != ne.rows()) {
        throw DimensionError("psa_loss: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(ne.rows()) + " rows");
    }
    Tape::Var student = new_emb;
    Tensor reference = old_emb;
    if (normalize) {
        student = tape.l2_normalize_rows(student);
        Tensor normed(old_emb.shape);
        std::size_t r = old_emb.rows(), c = old_emb.cols();
        for (std::size_t i = 0; i < r; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                double v = old_emb.values[i * c + j];
                s += v * v;
            }
            double inv = s > 0.0 ? 1.0 / std::sqrt(s) : 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                normed.values[i * c + j] = old_emb.values[i * c + j] * inv;
            }
        }
        reference = std::move(normed);
    }
    Tape::Var diff = tape.sub(student, tape.constant(std::move(reference)));
    Tape::Var sq = tape.squared_l2_rows(diff);
    std::vector<double> authentic(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) authentic[i] = labels[i] == 0 ? 1.0 : 0.0;
    return tape.masked_mean(sq, std::move(authentic));
}

LossBreakdown dfwf_total(double ce, double lwf, double psa, const LossWeights& weights) {
    if (weights.ce < 0.0 || weights.lwf < 0.0 || weights.psa < 0.0) {
        throw HyperError("dfwf_total: negative loss weight");
    }
    LossBreakdown b;
    b.ce = ce;
    b.lwf = lwf;
    b.psa = psa;
    b.weights = weights;
    b.total = weights.ce * ce;
    b.total += weights.lwf * lwf;
    b.total += weights.psa * psa;
    return b;
}

DfwfVars dfwf_loss(Tape& tape, Tape::Var logits, Tape::Var embedding,
                   const ForwardResult* teacher, const std::vector<int>& labels,
                   const LossConfig& cfg) {
    if (cfg.weights.ce < 0.0 || cfg.weights.lwf < 0.0 || cfg.weights.psa < 0.0) {
        throw HyperError("dfwf_loss: negative loss weight");
    }
    Tape::Var ce = cross_entropy(tape, logits, labels);
    double ce_v = tape.value(ce).item();
    double lwf_v = 0.0;
    double psa_v = 0.0;

    Tape::Var total = tape.scale(ce, cfg.weights.ce);
    if (teacher != nullptr && cfg.weights.lwf > 0.0) {
        Tape::Var lwf = lwf_loss(tape, logits, teacher->logits, cfg.temperature);
        lwf_v = tape.value(lwf).item();
        total = tape.add(total, tape.scale(lwf, cfg.weights.lwf));
    }
    if (teacher != nullptr && cfg.weights.psa > 0.0) {
        Tape::Var psa = psa_loss(tape, embedding, teacher->embedding, labels, cfg.psa_normalize);
        psa_v = tape.value(psa).item();
        total = tape.add(total, tape.scale(psa, cfg.weights.psa));
    }
    return {total, dfwf_total(ce_v, lwf_v, psa_v, cfg.weights)};
}

double cross_entropy_value(const Tensor& logits, const std::vector<int>& labels) {
    std::size_t n = logits.rows(), c = logits.cols();
    if (labels.size() != n) {
        throw DimensionError("cross_entropy_value: " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(n) + " rows");
    }
    Tensor log_p(logits.shape);
    kernels::log_softmax_rows(logits.values.data(), log_p.values.data(), n, c);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            throw LabelError("cross_entropy_value: label " + std::to_string(labels[i]) +
                             " outside {0,1} at row " + std::to_string(i));
        }
        sum -= log_p.values[i * c + static_cast<std::size_t>(labels[i])];
    }
    return sum / static_cast<double>(n);
}

}  // namespace cldet
