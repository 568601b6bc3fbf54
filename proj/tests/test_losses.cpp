#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "cldet/errors.hpp"
#include "cldet/losses.hpp"
#include "cldet/model.hpp"
#include "cldet/rng.hpp"
#include "cldet/tape.hpp"

using namespace cldet;

namespace {

// reference KL-based distillation computed with plain doubles
double lwf_reference(const Tensor& old_logits, const Tensor& new_logits, double t) {
    double acc = 0.0;
    for (std::size_t r = 0; r < old_logits.rows(); ++r) {
        std::vector<double> p(old_logits.cols()), q(new_logits.cols());
        double zp = 0.0, zq = 0.0;
        for (std::size_t c = 0; c < old_logits.cols(); ++c) {
            p[c] = std::exp(old_logits.at(r, c) / t);
            q[c] = std::exp(new_logits.at(r, c) / t);
            zp += p[c];
            zq += q[c];
        }
        for (std::size_t c = 0; c < old_logits.cols(); ++c) {
            p[c] /= zp;
            q[c] /= zq;
            acc += p[c] * std::log(p[c] / q[c]);
        }
    }
    return t * t * acc / static_cast<double>(old_logits.rows());
}

Tensor random_matrix(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({n, d});
    for (double& v : t.values) v = rng.normal();
    return t;
}

}  // namespace

TEST_CASE("cross entropy matches hand computation") {
    // logits [ln 3, 0]: p(class0) = 3/4, so label 0 costs -ln(3/4)
    Tape tape;
    Tape::Var logits = tape.constant(Tensor::matrix(1, 2, {std::log(3.0), 0.0}));
    double v = tape.value(cross_entropy(tape, logits, {0})).item();
    CHECK(v == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
}

TEST_CASE("cross entropy averages rows") {
    Tape tape;
    Tape::Var logits = tape.constant(Tensor::matrix(2, 2, {0.0, 0.0, 0.0, 0.0}));
    double v = tape.value(cross_entropy(tape, logits, {0, 1})).item();
    CHECK(v == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("lwf matches the double-precision reference") {
    Tensor old_logits = random_matrix(5, 2, 21);
    Tensor new_logits = random_matrix(5, 2, 22);
    for (double t : {1.0, 2.0, 3.5}) {
        Tape tape;
        Tape::Var nv = tape.constant(new_logits);
        double got = tape.value(lwf_loss(tape, nv, old_logits, t)).item();
        CHECK(got == doctest::Approx(lwf_reference(old_logits, new_logits, t)).epsilon(1e-10));
    }
}

TEST_CASE("lwf hand-checked point value") {
    // old [2,0], new [0,0], T = 2: p = softmax([1,0]), q = (1/2,1/2)
    Tensor old_logits = Tensor::matrix(1, 2, {2.0, 0.0});
    Tape tape;
    Tape::Var nv = tape.constant(Tensor::matrix(1, 2, {0.0, 0.0}));
    double got = tape.value(lwf_loss(tape, nv, old_logits, 2.0)).item();
    double p0 = std::exp(1.0) / (std::exp(1.0) + 1.0);
    double expect = 4.0 * (p0 * std::log(2.0 * p0) + (1.0 - p0) * std::log(2.0 * (1.0 - p0)));
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("lwf is exactly zero when teacher equals student") {
    Tensor logits = random_matrix(6, 2, 30);
    Tape tape;
    Tape::Var nv = tape.constant(logits);
    CHECK(tape.value(lwf_loss(tape, nv, logits, 2.0)).item() == 0.0);
}

TEST_CASE("psa is the mean squared distance over authentic rows only") {
    Tensor new_emb = Tensor::matrix(3, 2, {1.0, 0.0, 5.0, 5.0, 0.0, 3.0});
    Tensor old_emb = Tensor::matrix(3, 2, {0.0, 0.0, -5.0, -5.0, 0.0, 1.0});
    std::vector<int> labels = {0, 1, 0};  // fake row must not contribute
    Tape tape;
    Tape::Var nv = tape.constant(new_emb);
    double got = tape.value(psa_loss(tape, nv, old_emb, labels)).item();
    CHECK(got == doctest::Approx((1.0 + 4.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("psa is exactly zero with no authentic samples or identical embeddings") {
    Tensor new_emb = random_matrix(4, 3, 40);
    Tensor other = random_matrix(4, 3, 41);
    {
        Tape tape;
        Tape::Var nv = tape.constant(new_emb);
        CHECK(tape.value(psa_loss(tape, nv, other, {1, 1, 1, 1})).item() == 0.0);
    }
    {
        Tape tape;
        Tape::Var nv = tape.constant(new_emb);
        CHECK(tape.value(psa_loss(tape, nv, new_emb, {0, 0, 1, 0})).item() == 0.0);
    }
}

TEST_CASE("normalized psa ignores embedding scale") {
    Tensor new_emb = Tensor::matrix(1, 2, {3.0, 4.0});
    Tensor old_emb = Tensor::matrix(1, 2, {30.0, 40.0});
    Tape tape;
    Tape::Var nv = tape.constant(new_emb);
    CHECK(tape.value(psa_loss(tape, nv, old_emb, {0}, true)).item() ==
          doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("dfwf_total composes the weighted sum exactly") {
    LossWeights w{0.5, 2.0, 3.0};
    LossBreakdown b = dfwf_total(1.0, 0.25, 0.125, w);
    CHECK(b.total == 0.5 * 1.0 + 2.0 * 0.25 + 3.0 * 0.125);
    CHECK(b.ce == 1.0);
    CHECK(b.lwf == 0.25);
    CHECK(b.psa == 0.125);
}

TEST_CASE("dfwf gradients match finite differences") {
    ModelSpec spec{{{3, 5, Activation::Relu}, {5, 2, Activation::None}}, 1};
    SplitModel model = SplitModel::init(spec, 51);
    SplitModel teacher_model = SplitModel::init(spec, 52);
    Tensor x = random_matrix(6, 3, 53);
    std::vector<int> labels = {0, 1, 0, 1, 0, 0};
    ForwardResult teacher = forward(teacher_model, x);
    LossConfig cfg;

    std::vector<Tensor*> leaves;
    for (std::size_t i = 0; i < model.n_params(); ++i) leaves.push_back(&model.param(i));

    auto loss = [&](bool with_grad) {
        Tape tape;
        TapeForward f = forward(tape, model, x);
        DfwfVars v = dfwf_loss(tape, f.logits, f.embedding, &teacher, labels, cfg);
        if (with_grad) {
            model.zero_grads();
            tape.backward(v.total);
        }
        return v.breakdown.total;
    };
    CHECK(grad_check(loss, leaves, 1e-6) < 1e-6);
}

TEST_CASE("zero weights with a teacher reproduce the plain objective bitwise") {
    ModelSpec spec{{{4, 6, Activation::Relu}, {6, 2, Activation::None}}, 1};
    SplitModel a = SplitModel::init(spec, 61);
    SplitModel b = SplitModel::init(spec, 61);
    SplitModel teacher_model = SplitModel::init(spec, 62);
    Tensor x = random_matrix(5, 4, 63);
    std::vector<int> labels = {0, 1, 1, 0, 0};
    ForwardResult teacher = forward(teacher_model, x);

    LossConfig off;
    off.weights.lwf = 0.0;
    off.weights.psa = 0.0;

    auto run = [&](SplitModel& m, const ForwardResult* t) {
        Tape tape;
        TapeForward f = forward(tape, m, x);
        DfwfVars v = dfwf_loss(tape, f.logits, f.embedding, t, labels, off);
        m.zero_grads();
        tape.backward(v.total);
        std::vector<double> grads;
        for (std::size_t i = 0; i < m.n_params(); ++i)
            grads.insert(grads.end(), m.param(i).grad.begin(), m.param(i).grad.end());
        return std::pair(v.breakdown.total, grads);
    };

    auto [la, ga] = run(a, &teacher);
    auto [lb, gb] = run(b, nullptr);
    CHECK(la == lb);
    CHECK(ga == gb);
}

TEST_CASE("dfwf skipping is visible in the breakdown") {
    ModelSpec spec{{{3, 4, Activation::Relu}, {4, 2, Activation::None}}, 1};
    SplitModel model = SplitModel::init(spec, 71);
    Tensor x = random_matrix(4, 3, 72);
    std::vector<int> labels = {0, 1, 0, 1};

    Tape tape;
    TapeForward f = forward(tape, model, x);
    DfwfVars v = dfwf_loss(tape, f.logits, f.embedding, nullptr, labels, LossConfig{});
    CHECK(v.breakdown.lwf == 0.0);
    CHECK(v.breakdown.psa == 0.0);
    CHECK(v.breakdown.total == v.breakdown.ce);
}

TEST_CASE("cross_entropy_value agrees with the tape version") {
    Tensor logits = random_matrix(7, 2, 81);
    std::vector<int> labels = {0, 1, 0, 0, 1, 1, 0};
    Tape tape;
    double taped = tape.value(cross_entropy(tape, tape.constant(logits), labels)).item();
    CHECK(cross_entropy_value(logits, labels) == taped);
}

TEST_CASE("loss preconditions are enforced") {
    Tape tape;
    Tape::Var logits = tape.constant(Tensor::matrix(2, 2, {0, 0, 0, 0}));
    CHECK_THROWS_AS(cross_entropy(tape, logits, {0}), DimensionError);
    CHECK_THROWS_AS(cross_entropy(tape, logits, {0, 3}), LabelError);
    CHECK_THROWS_AS(lwf_loss(tape, logits, Tensor::matrix(1, 2, {0, 0}), 2.0), DimensionError);
    CHECK_THROWS_AS(lwf_loss(tape, logits, Tensor::matrix(2, 2, {0, 0, 0, 0}), 0.0), HyperError);
}
