#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mugat/numerics/gradients.hpp"
#include "mugat/numerics/ops.hpp"
#include "support.hpp"

using namespace mugat;
using namespace mugat::testing;

namespace {

Tensor<double> eval(const std::function<Var(Graph<double>&)>& f)
{
    Graph<double> g;
    return g.value(f(g));
}

constexpr int kSeeds = 5;
constexpr double kTol = 1e-4;

}  // namespace

TEST(Tensor, RejectsInconsistentData)
{
    EXPECT_THROW(Tensor<double>({2, 3}, std::vector<double>(5)), ShapeError);
    EXPECT_THROW(Tensor<double>(Shape{2, 0}), ShapeError);
    const auto m = Tensor<double>::matrix(2, 2, {1, 2, 3, 4});
    EXPECT_EQ(m.at(1, 0), 3.0);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged)
{
    std::mt19937_64 rng(3);
    const auto a = random_tensor({3, 3}, rng);
    auto out = eval([&](Graph<double>& g) {
        return ops::matmul(g, g.constant(Tensor<double>::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1})), g.constant(a));
    });
    EXPECT_EQ(out, a);
}

TEST(Matmul, HandExample)
{
    auto out = eval([](Graph<double>& g) {
        return ops::matmul(g, g.constant(Tensor<double>::matrix(2, 2, {1, 2, 3, 4})), g.constant(Tensor<double>::matrix(2, 1, {0, 1})));
    });
    EXPECT_EQ(out, Tensor<double>::matrix(2, 1, {2, 4}));
}

TEST(Matmul, MatchesTripleLoop)
{
    std::mt19937_64 rng(11);
    const auto a = random_tensor({4, 5}, rng), b = random_tensor({5, 3}, rng);
    const auto out = eval([&](Graph<double>& g) { return ops::matmul(g, g.constant(a), g.constant(b)); });
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < 5; ++k) s += a.at(i, k) * b.at(k, j);
            EXPECT_LT(std::abs(out.at(i, j) - s), 1e-12);
        }
    }
}

TEST(Matmul, ShapeErrorNamesBothShapes)
{
    Graph<double> g;
    try {
        ops::matmul(g, g.constant(Tensor<double>({2, 3})), g.constant(Tensor<double>({4, 2})));
        FAIL() << "no exception";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[4x2]"), std::string::npos) << msg;
    }
}

TEST(Softmax, UniformInput)
{
    const auto out = eval([](Graph<double>& g) { return ops::softmax(g, g.constant(Tensor<double>::matrix(1, 3, {0, 0, 0})), 1); });
    for (double v : out.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, MatchesDirectEvaluation)
{
    const auto out = eval([](Graph<double>& g) { return ops::softmax(g, g.constant(Tensor<double>::matrix(1, 3, {1, 2, 3})), 1); });
    long double z = std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(out[static_cast<std::size_t>(i)], static_cast<double>(std::exp(1.0L + i) / z), 1e-12);
    EXPECT_NEAR(out[0], 0.09003, 1e-5);
    EXPECT_NEAR(out[1], 0.24473, 1e-5);
    EXPECT_NEAR(out[2], 0.66524, 1e-5);
}

TEST(Softmax, LargeInputsDoNotOverflow)
{
    const auto out = eval([](Graph<double>& g) { return ops::softmax(g, g.constant(Tensor<double>::matrix(1, 2, {1000, 0})), 1); });
    EXPECT_EQ(out[0], 1.0);
    EXPECT_EQ(out[1], 0.0);
}

TEST(Softmax, SlicesSumToOneOnEitherAxis)
{
    std::mt19937_64 rng(5);
    for (std::size_t axis : {0u, 1u}) {
        const auto x = random_tensor({6, 7}, rng, 1e3);
        const auto out = eval([&](Graph<double>& g) { return ops::softmax(g, g.constant(x), axis); });
        const std::size_t outer = axis == 1 ? 6 : 7, inner = axis == 1 ? 7 : 6;
        for (std::size_t o = 0; o < outer; ++o) {
            double s = 0;
            for (std::size_t i = 0; i < inner; ++i) s += axis == 1 ? out.at(o, i) : out.at(i, o);
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
    }
}

TEST(LayerNorm, Examples)
{
    auto run = [](std::vector<double> row, double gain, double bias) {
        const std::size_t d = row.size();
        return eval([&](Graph<double>& g) {
            return ops::layer_norm(g, g.constant(Tensor<double>({1, d}, row)), g.constant(Tensor<double>({d}, gain)),
                                   g.constant(Tensor<double>({d}, bias)));
        });
    };
    const auto flat = run({1, 1, 1}, 1, 0);
    for (double v : flat.values()) EXPECT_EQ(v, 0.0);
    const auto two = run({-1, 1}, 1, 0);
    EXPECT_NEAR(two[0], -1.0, 1e-4);
    EXPECT_NEAR(two[1], 1.0, 1e-4);
    const auto gained = run({3, -2, 7}, 0, 0.25);
    for (double v : gained.values()) EXPECT_EQ(v, 0.25);
}

TEST(Gelu, Examples)
{
    auto at = [](double x, GeluForm f) {
        return eval([&](Graph<double>& g) { return ops::gelu(g, g.constant(Tensor<double>::scalar(x)), f); })[0];
    };
    EXPECT_EQ(at(0.0, GeluForm::exact), 0.0);
    EXPECT_NEAR(at(10.0, GeluForm::exact), 10.0, 1e-6);
    const long double phi1 = 0.5L * (1.0L + std::erf(1.0L / std::sqrt(2.0L)));
    EXPECT_NEAR(at(1.0, GeluForm::exact), static_cast<double>(phi1), 1e-15);
    EXPECT_NEAR(at(1.0, GeluForm::exact), 0.8413, 1e-3);
    EXPECT_NEAR(at(1.0, GeluForm::tanh), 0.8413, 1e-3);
}

TEST(CrossEntropy, UniformLogitsGiveLogVocab)
{
    const auto loss = eval([](Graph<double>& g) {
        return ops::cross_entropy_logits(g, g.constant(Tensor<double>({3, 4})), {1, 2, 3}, 0);
    });
    EXPECT_NEAR(loss[0], std::log(4.0), 1e-12);
}

TEST(CrossEntropy, LossVanishesWithMargin)
{
    double prev = std::numeric_limits<double>::infinity();
    for (double margin : {1.0, 5.0, 20.0, 50.0}) {
        const auto loss = eval([&](Graph<double>& g) {
            return ops::cross_entropy_logits(g, g.constant(Tensor<double>::matrix(1, 3, {0, margin, 0})), {1}, -1);
        });
        EXPECT_LT(loss[0], prev);
        prev = loss[0];
    }
    EXPECT_LT(prev, 1e-20);
}

TEST(CrossEntropy, MatchesDirectNegativeLogLikelihood)
{
    std::mt19937_64 rng(8);
    const auto logits = random_tensor({3, 5}, rng, 3.0);
    const std::vector<int> targets{4, 0, 2};
    const auto loss = eval([&](Graph<double>& g) { return ops::cross_entropy_logits(g, g.constant(logits), targets, -1); });
    long double total = 0;
    for (std::size_t r = 0; r < 3; ++r) {
        long double z = 0;
        for (std::size_t c = 0; c < 5; ++c) z += std::exp(static_cast<long double>(logits.at(r, c)));
        total += -std::log(std::exp(static_cast<long double>(logits.at(r, static_cast<std::size_t>(targets[r])))) / z);
    }
    EXPECT_NEAR(loss[0], static_cast<double>(total / 3), 1e-10);
}

TEST(CrossEntropy, PaddingAndRangeErrors)
{
    Graph<double> g;
    const Var l = g.constant(Tensor<double>({2, 4}));
    EXPECT_THROW(ops::cross_entropy_logits(g, l, {0, 0}, 0), std::invalid_argument);
    EXPECT_THROW(ops::cross_entropy_logits(g, l, {1, 4}, 0), std::out_of_range);
    const auto half = g.value(ops::cross_entropy_logits(g, l, {0, 2}, 0));
    EXPECT_NEAR(half[0], std::log(4.0), 1e-12);
}

TEST(Gradients, SumOfSquares)
{
    ParameterStore<double> store;
    const auto x = store.add("x", Tensor<double>::vector({1, 2}), ParamGroup::decoder);
    Graph<double> g;
    const Var xv = g.param(store[x]);
    const auto grads = gradients(g, ops::sum(g, ops::mul(g, xv, xv)), store);
    EXPECT_EQ(grads.at("x"), Tensor<double>::vector({2, 4}));
}

TEST(Gradients, SoftmaxTotalIsConstant)
{
    ParameterStore<double> store;
    const auto x = store.add("x", Tensor<double>::matrix(1, 4, {0.3, -1.2, 2.0, 0.1}), ParamGroup::decoder);
    Graph<double> g;
    const auto grads = gradients(g, ops::sum(g, ops::softmax(g, g.param(store[x]), 1)), store);
    for (double v : grads.at("x").values()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Gradients, FrozenParametersAreOmittedAndUntouchedAreZero)
{
    ParameterStore<double> store;
    const auto a = store.add("a", Tensor<double>::vector({1, 2}), ParamGroup::encoder);
    store.add("unused", Tensor<double>::vector({5}), ParamGroup::decoder);
    store.set_trainable(ParamGroup::encoder, false);
    Graph<double> g;
    const auto grads = gradients(g, ops::sum(g, g.param(store[a])), store);
    EXPECT_EQ(grads.count("a"), 0u);
    EXPECT_EQ(grads.at("unused"), Tensor<double>::vector({0}));
}

TEST(Gradients, NonFiniteGradientNamesParameter)
{
    ParameterStore<double> store;
    const auto a = store.add("a", Tensor<double>::vector({1.5e308}), ParamGroup::encoder);
    const auto b = store.add("b", Tensor<double>::vector({1e-10}), ParamGroup::decoder);
    store.set_trainable(ParamGroup::encoder, false);
    Graph<double> g;
    const Var av = g.param(store[a]), bv = g.param(store[b]);
    const Var once = ops::sum(g, ops::mul(g, av, bv));
    const Var loss = ops::add(g, once, ops::sum(g, ops::mul(g, av, bv)));
    try {
        gradients(g, loss, store);
        FAIL() << "no exception";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("parameter b"), std::string::npos) << e.what();
    }
}

TEST(Numerics, ForwardRejectsNonFiniteResults)
{
    Graph<double> g;
    const Var x = g.constant(Tensor<double>::vector({1e200}));
    EXPECT_THROW(ops::mul(g, x, x), NumericError);
}

TEST(Numerics, ExtremeMagnitudesStayFinite)
{
    std::mt19937_64 rng(21);
    for (int seed = 0; seed < kSeeds; ++seed) {
        const auto x = random_tensor({5, 8}, rng, 1e3);
        Graph<double> g;
        const Var xv = g.constant(x);
        EXPECT_TRUE(g.value(ops::softmax(g, xv, 1)).all_finite());
        EXPECT_TRUE(g.value(ops::layer_norm(g, xv, g.constant(Tensor<double>({8}, 1.0)), g.constant(Tensor<double>({8})))).all_finite());
        EXPECT_TRUE(g.value(ops::gelu(g, xv)).all_finite());
        EXPECT_TRUE(g.value(ops::gelu(g, xv, GeluForm::tanh)).all_finite());
        EXPECT_TRUE(g.value(ops::cross_entropy_logits(g, xv, {0, 1, 2, 3, 4}, -1)).all_finite());
        EXPECT_TRUE(g.value(ops::attention(g, xv, xv, xv, 2)).all_finite());
    }
}

// ---- finite-difference contract, one case per differentiable op -----------

class FiniteDifference : public ::testing::TestWithParam<int> {};

TEST_P(FiniteDifference, EveryOpMatchesCentralDifferences)
{
    const int seed = GetParam();
    for (const auto& c : op_cases()) {
        const auto check = check_op_case(c, static_cast<std::uint64_t>(seed));
        EXPECT_LT(check.max_rel_error, kTol) << c.name << " seed " << seed << " worst " << check.worst;
        EXPECT_GT(check.checked, 0u) << c.name;
    }
}

INSTANTIATE_TEST_SUITE_P(Seeds, FiniteDifference, ::testing::Range(1, 1 + kSeeds));

TEST(Attention, MaskedWeightsAreExactlyZeroAndRowsSumToOne)
{
    std::mt19937_64 rng(2);
    AttentionMask mask(3, 4, true);
    mask.set(0, 1, false);
    mask.set(2, 3, false);
    AttentionTrace trace;
    trace.keep_weights = true;
    Graph<double> g;
    ops::attention(g, g.constant(random_tensor({3, 4}, rng)), g.constant(random_tensor({4, 4}, rng)), g.constant(random_tensor({4, 4}, rng)),
                   2, &mask, &trace);
    ASSERT_EQ(trace.calls.size(), 1u);
    EXPECT_EQ(trace.calls[0].score_entries(), 2u * 3u * 4u);
    for (const auto& w : trace.calls[0].weights) {
        EXPECT_EQ(w.at(0, 1), 0.0);
        EXPECT_EQ(w.at(2, 3), 0.0);
        for (std::size_t i = 0; i < 3; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < 4; ++j) s += w.at(i, j);
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
    }
}

TEST(Attention, FullyMaskedRowIsAnError)
{
    Graph<double> g;
    AttentionMask mask(2, 2, true);
    mask.set(1, 0, false);
    mask.set(1, 1, false);
    const Var x = g.constant(Tensor<double>({2, 4}, 0.5));
    EXPECT_THROW(ops::attention(g, x, x, x, 1, &mask), std::invalid_argument);
}
