#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <unistd.h>
#include <vector>

#include "cldet/errors.hpp"
#include "cldet/model.hpp"
#include "cldet/rng.hpp"

using namespace cldet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("cldet_model_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

Tensor random_input(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    Tensor x({n, d});
    for (double& v : x.values) v = rng.normal();
    return x;
}

}  // namespace

TEST_CASE("default spec shape and partition") {
    ModelSpec spec = ModelSpec::default_spec();
    spec.validate();
    CHECK(spec.input_dim() == 32);
    CHECK(spec.embedding_dim() == 32);
    CHECK(spec.layers.back().out == 2);

    ParamPartition part = param_partition(spec);
    CHECK(part.encoder.size() + part.classifier.size() == 2 * spec.n_layers());
    CHECK(part.encoder.size() == 2 * spec.split_index);
    for (std::size_t id : part.encoder) CHECK(id < 2 * spec.split_index);
    for (std::size_t id : part.classifier) CHECK(id >= 2 * spec.split_index);
}

TEST_CASE("spec validation rejects broken specs") {
    ModelSpec bad;
    CHECK_THROWS_AS(bad.validate(), SpecError);

    ModelSpec mismatch{{{4, 8, Activation::Relu}, {7, 2, Activation::None}}, 1};
    CHECK_THROWS_AS(mismatch.validate(), SpecError);

    ModelSpec wrong_out{{{4, 8, Activation::Relu}, {8, 3, Activation::None}}, 1};
    CHECK_THROWS_AS(wrong_out.validate(), SpecError);

    ModelSpec bad_split{{{4, 8, Activation::Relu}, {8, 2, Activation::None}}, 2};
    CHECK_THROWS_AS(bad_split.validate(), SpecError);
}

TEST_CASE("init is deterministic in the seed") {
    ModelSpec spec = ModelSpec::default_spec();
    SplitModel a = SplitModel::init(spec, 5);
    SplitModel b = SplitModel::init(spec, 5);
    SplitModel c = SplitModel::init(spec, 6);
    REQUIRE(a.n_params() == b.n_params());
    bool all_equal = true;
    bool any_differs_from_c = false;
    for (std::size_t i = 0; i < a.n_params(); ++i) {
        if (a.param(i).values != b.param(i).values) all_equal = false;
        if (a.param(i).values != c.param(i).values) any_differs_from_c = true;
    }
    CHECK(all_equal);
    CHECK(any_differs_from_c);
}

TEST_CASE("plain and recorded forward agree bitwise") {
    ModelSpec spec = ModelSpec::default_spec();
    SplitModel model = SplitModel::init(spec, 3);
    Tensor x = random_input(7, spec.input_dim(), 9);

    ForwardResult plain = forward(model, x);
    Tape tape;
    TapeForward rec = forward(tape, model, x);

    CHECK(plain.logits.values == tape.value(rec.logits).values);
    CHECK(plain.embedding.values == tape.value(rec.embedding).values);
    CHECK(plain.logits.rows() == 7);
    CHECK(plain.logits.cols() == 2);
    CHECK(plain.embedding.cols() == spec.embedding_dim());
}

TEST_CASE("snapshot forward is frozen at copy time") {
    ModelSpec spec = ModelSpec::default_spec();
    SplitModel model = SplitModel::init(spec, 3);
    Tensor x = random_input(4, spec.input_dim(), 10);

    ModelSnapshot snap(model);
    Tensor before = forward(snap, x).logits;

    for (double& v : model.param(0).values) v += 0.25;
    Tensor after = forward(snap, x).logits;
    CHECK(before.values == after.values);

    Tensor moved = forward(model, x).logits;
    CHECK(moved.values != before.values);
}

TEST_CASE("forward rejects wrong input width") {
    SplitModel model = SplitModel::init(ModelSpec::default_spec(), 1);
    Tensor x = random_input(3, 8, 1);
    CHECK_THROWS_AS(forward(model, x), DimensionError);
}

TEST_CASE("fake_scores is the softmax fake-class column") {
    Tensor logits = Tensor::matrix(2, 2, {0.0, 0.0, 1.0, 3.0});
    std::vector<double> s = fake_scores(logits);
    REQUIRE(s.size() == 2);
    CHECK(s[0] == doctest::Approx(0.5));
    CHECK(s[1] == doctest::Approx(std::exp(3.0) / (std::exp(1.0) + std::exp(3.0))));
}

TEST_CASE("checkpoint round-trip is value-exact") {
    TempDir tmp;
    ModelSpec spec = ModelSpec::default_spec();
    SplitModel model = SplitModel::init(spec, 17);
    // exercise awkward values explicitly
    model.param(0).values[0] = 1.0 / 3.0;
    model.param(0).values[1] = -0.0;
    model.param(1).values[0] = 1e-300;

    fs::path ckpt = tmp.path / "model.ckpt";
    save_checkpoint(ckpt, spec, model.params());
    SplitModel back = load_checkpoint(ckpt);

    CHECK(back.spec().split_index == spec.split_index);
    REQUIRE(back.n_params() == model.n_params());
    for (std::size_t i = 0; i < model.n_params(); ++i) {
        CHECK(back.param(i).shape == model.param(i).shape);
        REQUIRE(back.param(i).values.size() == model.param(i).values.size());
        for (std::size_t j = 0; j < model.param(i).values.size(); ++j) {
            CHECK(back.param(i).values[j] == model.param(i).values[j]);
        }
    }
}

TEST_CASE("checkpoint loader rejects damaged files") {
    TempDir tmp;
    fs::path missing = tmp.path / "missing.ckpt";
    CHECK_THROWS_AS(load_checkpoint(missing), IoError);

    fs::path junk = tmp.path / "junk.ckpt";
    {
        std::FILE* f = std::fopen(junk.string().c_str(), "w");
        REQUIRE(f != nullptr);
        std::fputs("not a checkpoint\n", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(junk), ParseError);
}

TEST_CASE("set_params enforces shape agreement") {
    ModelSpec spec = ModelSpec::default_spec();
    SplitModel model = SplitModel::init(spec, 2);
    std::vector<Tensor> wrong = model.params();
    wrong.pop_back();
    CHECK_THROWS_AS(model.set_params(wrong), ContractError);
}

TEST_CASE("activation names round-trip") {
    CHECK(activation_from_name(activation_name(Activation::Relu)) == Activation::Relu);
    CHECK(activation_from_name(activation_name(Activation::None)) == Activation::None);
    CHECK_THROWS_AS(activation_from_name("tanh"), SpecError);
}
