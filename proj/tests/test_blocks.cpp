#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mugat/blocks/attention.hpp"
#include "mugat/blocks/feed_forward.hpp"
#include "mugat/blocks/page_positions.hpp"
#include "support.hpp"

using namespace mugat;
using mugat::testing::check_gradients;
using mugat::testing::random_tensor;

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix to_rows(const Tensor<double>& t)
{
    Matrix m(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t i = 0; i < t.rows(); ++i) {
        for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
    }
    return m;
}

Matrix affine(const Matrix& x, const Tensor<double>& w, const Tensor<double>& b)
{
    Matrix out(x.size(), std::vector<double>(w.cols()));
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) {
            double s = b[j];
            for (std::size_t k = 0; k < w.rows(); ++k) s += x[i][k] * w.at(k, j);
            out[i][j] = s;
        }
    }
    return out;
}

// Plain loops over heads, scores and softmax.
Matrix reference_mha(const ParameterStore<double>& s, const blocks::AttentionParams& p, std::size_t heads, const Matrix& xq,
                     const Matrix& xs, const AttentionMask* mask)
{
    const Matrix q = affine(xq, s[p.wq].value, s[p.bq].value);
    const Matrix k = affine(xs, s[p.wk].value, s[p.bk].value);
    const Matrix v = affine(xs, s[p.wv].value, s[p.bv].value);
    const std::size_t d = q[0].size(), dh = d / heads;
    Matrix o(q.size(), std::vector<double>(d, 0.0));
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < q.size(); ++i) {
            std::vector<double> w(k.size(), 0.0);
            double z = 0;
            for (std::size_t j = 0; j < k.size(); ++j) {
                if (mask && !(*mask)(i, j)) continue;
                double dot = 0;
                for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) dot += q[i][c] * k[j][c];
                w[j] = std::exp(dot / std::sqrt(static_cast<double>(dh)));
                z += w[j];
            }
            for (std::size_t j = 0; j < k.size(); ++j) {
                for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) o[i][c] += w[j] / z * v[j][c];
            }
        }
    }
    return affine(o, s[p.wo].value, s[p.bo].value);
}

void randomize(ParameterStore<double>& s, std::mt19937_64& rng, double scale = 0.5)
{
    for (auto& p : s.all()) p.value = random_tensor(p.value.shape(), rng, scale);
}

}  // namespace

TEST(AttentionConfig, Validation)
{
    EXPECT_NO_THROW((blocks::AttentionConfig{64, 4}.validate()));
    EXPECT_THROW((blocks::AttentionConfig{10, 4}.validate()), std::invalid_argument);
    EXPECT_THROW((blocks::AttentionConfig{8, 0}.validate()), std::invalid_argument);
    EXPECT_EQ((blocks::AttentionConfig{64, 4}.d_head()), 16u);
}

TEST(MultiHeadAttention, MatchesPerHeadLoops)
{
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        std::mt19937_64 rng(seed);
        const blocks::AttentionConfig cfg{8, 2};
        ParameterStore<double> s;
        const auto p = blocks::add_attention(s, "mha", cfg, ParamGroup::decoder, rng);
        randomize(s, rng);
        const auto xq = random_tensor({3, 8}, rng), xs = random_tensor({5, 8}, rng);
        Graph<double> g;
        const auto out = g.value(blocks::multi_head_attention(g, s, p, cfg, g.constant(xq), g.constant(xs)));
        const auto ref = reference_mha(s, p, 2, to_rows(xq), to_rows(xs), nullptr);
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(out.at(i, j), ref[i][j], 1e-12);
        }
    }
}

TEST(MultiHeadAttention, CausalSelfAttentionMatchesLoops)
{
    std::mt19937_64 rng(9);
    const blocks::AttentionConfig cfg{8, 4};
    ParameterStore<double> s;
    const auto p = blocks::add_attention(s, "self", cfg, ParamGroup::decoder, rng);
    randomize(s, rng);
    const auto x = random_tensor({4, 8}, rng);
    const auto mask = blocks::causal_mask(4);
    Graph<double> g;
    const auto out = g.value(blocks::multi_head_attention(g, s, p, cfg, g.constant(x), g.constant(x), &mask));
    const auto ref = reference_mha(s, p, 4, to_rows(x), to_rows(x), &mask);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(out.at(i, j), ref[i][j], 1e-12);
    }
}

TEST(MultiHeadAttention, RejectsWrongWidth)
{
    std::mt19937_64 rng(1);
    const blocks::AttentionConfig cfg{8, 2};
    ParameterStore<double> s;
    const auto p = blocks::add_attention(s, "mha", cfg, ParamGroup::decoder, rng);
    Graph<double> g;
    EXPECT_THROW(blocks::multi_head_attention(g, s, p, cfg, g.constant(Tensor<double>({2, 8})), g.constant(Tensor<double>({2, 6}))),
                 ShapeError);
}

TEST(MultiHeadAttention, TraceCountsScoreEntries)
{
    std::mt19937_64 rng(4);
    const blocks::AttentionConfig cfg{8, 2};
    ParameterStore<double> s;
    const auto p = blocks::add_attention(s, "mha", cfg, ParamGroup::adapter, rng);
    AttentionTrace trace;
    Graph<double> g;
    blocks::multi_head_attention(g, s, p, cfg, g.constant(random_tensor({2, 8}, rng)), g.constant(random_tensor({12, 8}, rng)), nullptr,
                                 &trace);
    ASSERT_EQ(trace.calls.size(), 1u);
    EXPECT_EQ(trace.calls[0].queries, 2u);
    EXPECT_EQ(trace.calls[0].keys, 12u);
    EXPECT_EQ(trace.calls[0].score_entries(), 2u * 2u * 12u);
}

TEST(CausalMask, LowerTriangular)
{
    const auto m = blocks::causal_mask(5);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(m(i, j), j <= i);
    }
    EXPECT_EQ(m.allowed_count(), 15u);
    EXPECT_THROW(blocks::causal_mask(0), std::invalid_argument);
}

TEST(FeedForward, MatchesDirectFormula)
{
    std::mt19937_64 rng(6);
    ParameterStore<double> s;
    const auto p = blocks::add_feed_forward(s, "ffn", 4, 2, ParamGroup::encoder, rng);
    randomize(s, rng);
    EXPECT_EQ(s[p.w1].value.shape(), (Shape{4, 8}));
    EXPECT_EQ(s[p.w2].value.shape(), (Shape{8, 4}));
    const auto x = random_tensor({3, 4}, rng);
    Graph<double> g;
    const auto out = g.value(blocks::feed_forward(g, s, p, g.constant(x)));
    Matrix h = affine(to_rows(x), s[p.w1].value, s[p.b1].value);
    for (auto& row : h) {
        for (auto& v : row) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
    }
    const Matrix ref = affine(h, s[p.w2].value, s[p.b2].value);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out.at(i, j), ref[i][j], 1e-12);
    }
}

TEST(LayerNormBlock, InitialisedToIdentityAffine)
{
    ParameterStore<double> s;
    const auto p = blocks::add_layer_norm(s, "ln", 3, ParamGroup::decoder);
    EXPECT_EQ(s[p.gain].value, Tensor<double>::vector({1, 1, 1}));
    EXPECT_EQ(s[p.bias].value, Tensor<double>::vector({0, 0, 0}));
    Graph<double> g;
    const auto out = g.value(blocks::layer_norm(g, s, p, g.constant(Tensor<double>::matrix(1, 3, {1, 2, 3}))));
    const double sd = std::sqrt(2.0 / 3.0 + 1e-5);
    EXPECT_NEAR(out[0], -1.0 / sd, 1e-12);
    EXPECT_NEAR(out[1], 0.0, 1e-12);
    EXPECT_NEAR(out[2], 1.0 / sd, 1e-12);
}

TEST(Initialisation, WeightsAreSmallAndBiasesZero)
{
    std::mt19937_64 rng(12);
    ParameterStore<double> s;
    const auto p = blocks::add_attention(s, "a", blocks::AttentionConfig{64, 4}, ParamGroup::encoder, rng);
    const auto& w = s[p.wq].value;
    double sum = 0, sq = 0;
    for (double v : w.values()) {
        sum += v;
        sq += v * v;
    }
    const double n = static_cast<double>(w.size());
    EXPECT_NEAR(sum / n, 0.0, 0.002);
    EXPECT_NEAR(std::sqrt(sq / n), blocks::kInitStddev, 0.002);
    for (double v : s[p.bo].value.values()) EXPECT_EQ(v, 0.0);
}

TEST(PagePositions, AddsSlotAndPositionRows)
{
    std::mt19937_64 rng(13);
    ParameterStore<double> s;
    const auto pe = blocks::add_page_positions_params(s, "pp", 2, 3, ParamGroup::adapter, rng);
    EXPECT_EQ(s[pe.inter_page].value.shape(), (Shape{3, 3}));
    EXPECT_EQ(s[pe.intra_page].value.shape(), (Shape{2, 3}));
    const auto prev = random_tensor({2, 3}, rng), curr = random_tensor({2, 3}, rng), next = random_tensor({2, 3}, rng);
    Graph<double> g;
    const auto out = g.value(blocks::add_page_positions(g, s, pe, g.constant(prev), g.constant(curr), g.constant(next)));
    ASSERT_EQ(out.shape(), (Shape{6, 3}));
    const Tensor<double>* pages[] = {&prev, &curr, &next};
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t i = 0; i < 2; ++i) {
            for (std::size_t c = 0; c < 3; ++c) {
                const double expect = pages[k]->at(i, c) + s[pe.inter_page].value.at(k, c) + s[pe.intra_page].value.at(i, c);
                EXPECT_NEAR(out.at(k * 2 + i, c), expect, 1e-15);
            }
        }
    }
}

TEST(PagePositions, RejectsMismatchedPages)
{
    std::mt19937_64 rng(14);
    ParameterStore<double> s;
    const auto pe = blocks::add_page_positions_params(s, "pp", 2, 3, ParamGroup::adapter, rng);
    Graph<double> g;
    const Var a = g.constant(Tensor<double>({2, 3})), b = g.constant(Tensor<double>({3, 3}));
    EXPECT_THROW(blocks::add_page_positions(g, s, pe, a, b, a), ShapeError);
    EXPECT_THROW(blocks::add_page_positions(g, s, pe, b, b, b), ShapeError);
}

TEST(BlockGradients, AttentionFeedForwardAndPositions)
{
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        std::mt19937_64 rng(seed);
        ParameterStore<double> s;
        const blocks::AttentionConfig cfg{4, 2};
        const auto ln = blocks::add_layer_norm(s, "ln", 4, ParamGroup::adapter);
        const auto att = blocks::add_attention(s, "att", cfg, ParamGroup::adapter, rng);
        const auto ffn = blocks::add_feed_forward(s, "ffn", 4, 2, ParamGroup::adapter, rng);
        const auto pe = blocks::add_page_positions_params(s, "pp", 2, 4, ParamGroup::adapter, rng);
        randomize(s, rng);
        const auto q = random_tensor({2, 4}, rng);
        const auto pages = random_tensor({2, 4}, rng);
        const auto weights = random_tensor({2, 4}, rng);
        const auto mask = blocks::causal_mask(2);
        const auto r = check_gradients(s, [&](Graph<double>& g) {
            const Var src = blocks::add_page_positions(g, s, pe, g.constant(pages), g.constant(pages), g.constant(pages));
            Var x = blocks::multi_head_attention(g, s, att, cfg, blocks::layer_norm(g, s, ln, g.constant(q)), src);
            x = ops::add(g, x, blocks::multi_head_attention(g, s, att, cfg, x, x, &mask));
            x = blocks::feed_forward(g, s, ffn, x);
            return ops::sum(g, ops::mul(g, x, g.constant(weights)));
        });
        EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed << " worst " << r.worst;
        EXPECT_GT(r.checked, 50u);
    }
}

TEST(MultiHeadAttention, SingleKeyReturnsItsValue)
{
    std::mt19937_64 rng(15);
    const blocks::AttentionConfig cfg{4, 2};
    ParameterStore<double> s;
    const auto p = blocks::add_attention(s, "mha", cfg, ParamGroup::decoder, rng);
    for (ParamId w : {p.wq, p.wk, p.wv, p.wo}) {
        auto& t = s[w].value;
        t.fill(0.0);
        for (std::size_t i = 0; i < 4; ++i) t.at(i, i) = 1.0;
    }
    const auto q = random_tensor({1, 4}, rng), src = random_tensor({1, 4}, rng);
    Graph<double> g;
    const auto out = g.value(blocks::multi_head_attention(g, s, p, cfg, g.constant(q), g.constant(src)));
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out[j], src[j], 1e-15);
}

TEST(MultiHeadAttention, IdenticalKeysGiveUniformWeights)
{
    std::mt19937_64 rng(16);
    const blocks::AttentionConfig cfg{4, 2};
    ParameterStore<double> s;
    const auto p = blocks::add_attention(s, "mha", cfg, ParamGroup::decoder, rng);
    randomize(s, rng);
    const auto row = random_tensor({1, 4}, rng);
    Tensor<double> src({5, 4});
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 4; ++j) src.at(i, j) = row[j];
    }
    AttentionTrace trace;
    trace.keep_weights = true;
    Graph<double> g;
    blocks::multi_head_attention(g, s, p, cfg, g.constant(random_tensor({3, 4}, rng)), g.constant(src), nullptr, &trace);
    for (const auto& w : trace.calls.at(0).weights) {
        for (double v : w.values()) EXPECT_NEAR(v, 0.2, 1e-12);
    }
}

TEST(MultiHeadAttention, OneHeadTinyCaseMatchesDirectFormula)
{
    std::mt19937_64 rng(17);
    const blocks::AttentionConfig cfg{4, 1};
    ParameterStore<double> s;
    const auto p = blocks::add_attention(s, "mha", cfg, ParamGroup::decoder, rng);
    randomize(s, rng);
    const auto xq = random_tensor({2, 4}, rng), xs = random_tensor({3, 4}, rng);
    Graph<double> g;
    const auto out = g.value(blocks::multi_head_attention(g, s, p, cfg, g.constant(xq), g.constant(xs)));
    const auto ref = reference_mha(s, p, 1, to_rows(xq), to_rows(xs), nullptr);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 4; ++j) EXPECT_LT(std::abs(out.at(i, j) - ref[i][j]), 1e-10);
    }
}

TEST(CausalMask, SmallSizes)
{
    const auto one = blocks::causal_mask(1);
    EXPECT_TRUE(one(0, 0));
    EXPECT_EQ(blocks::causal_mask(3).allowed_count(), 6u);
}

TEST(FeedForward, ZeroWeightsGiveZeroOutput)
{
    std::mt19937_64 rng(18);
    ParameterStore<double> s;
    const auto p = blocks::add_feed_forward(s, "ffn", 4, 4, ParamGroup::decoder, rng);
    for (auto& q : s.all()) q.value.fill(0.0);
    Graph<double> g;
    const auto out = g.value(blocks::feed_forward(g, s, p, g.constant(random_tensor({3, 4}, rng))));
    for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(FeedForward, RowsAreProcessedIndependently)
{
    std::mt19937_64 rng(19);
    ParameterStore<double> s;
    const auto p = blocks::add_feed_forward(s, "ffn", 4, 4, ParamGroup::decoder, rng);
    randomize(s, rng);
    const auto x = random_tensor({3, 4}, rng);
    const std::size_t perm[] = {2, 0, 1};
    Tensor<double> xp({3, 4});
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) xp.at(i, j) = x.at(perm[i], j);
    }
    Graph<double> g;
    const auto a = g.value(blocks::feed_forward(g, s, p, g.constant(x)));
    const auto b = g.value(blocks::feed_forward(g, s, p, g.constant(xp)));
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(b.at(i, j), a.at(perm[i], j));
    }
}

TEST(PagePositions, ZeroInputsExposeEncodings)
{
    std::mt19937_64 rng(20);
    ParameterStore<double> s;
    const auto pe = blocks::add_page_positions_params(s, "pp", 4, 3, ParamGroup::adapter, rng);
    const Tensor<double> zero({4, 3});
    Graph<double> g;
    const auto out = g.value(blocks::add_page_positions(g, s, pe, g.constant(zero), g.constant(zero), g.constant(zero)));
    const auto& inter = s[pe.inter_page].value;
    const auto& intra = s[pe.intra_page].value;
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out.at(k * 4 + i, c), inter.at(k, c) + intra.at(i, c));
        }
    }
    for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_NEAR(out.at(4, c) - out.at(0, c), inter.at(1, c) - inter.at(0, c), 1e-15);
        EXPECT_NEAR(out.at(8, c) - out.at(4, c), inter.at(2, c) - inter.at(1, c), 1e-15);
    }
}
