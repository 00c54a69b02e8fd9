#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mugat/metrics/report.hpp"
#include "oracles.hpp"

using namespace mugat;
using namespace mugat::metrics;
using namespace mugat::testing;

namespace {

using Words = std::vector<std::string>;

Words words(const std::string& s) { return whitespace_tokens(s); }

Words random_words(std::mt19937_64& rng, std::size_t max_len, const Words& vocab)
{
    std::uniform_int_distribution<std::size_t> len(0, max_len), pick(0, vocab.size() - 1);
    Words out(len(rng));
    for (auto& w : out) w = vocab[pick(rng)];
    return out;
}

std::string random_string(std::mt19937_64& rng, std::size_t max_len, const std::string& alphabet)
{
    std::uniform_int_distribution<std::size_t> len(0, max_len), pick(0, alphabet.size() - 1);
    std::string out(len(rng), ' ');
    for (auto& c : out) c = alphabet[pick(rng)];
    return out;
}

}  // namespace

TEST(EditDistance, Examples)
{
    EXPECT_EQ(edit_distance("abc", "abc").raw, 0u);
    EXPECT_EQ(edit_distance("abc", "abc").normalized, 0.0);
    EXPECT_EQ(edit_distance("kitten", "sitting").raw, 3u);
    EXPECT_DOUBLE_EQ(edit_distance("kitten", "sitting").normalized, 3.0 / 7.0);
    EXPECT_EQ(edit_distance("", "ab").raw, 2u);
    EXPECT_EQ(edit_distance("", "ab").normalized, 1.0);
    EXPECT_EQ(edit_distance("", "").raw, 0u);
    EXPECT_EQ(edit_distance("", "").normalized, 0.0);
}

TEST(EditDistance, KittenMatchesExhaustiveScripts)
{
    EXPECT_EQ(exhaustive_edit_distance("kitten", "sitting"), 3u);
    std::mt19937_64 rng(2);
    for (int i = 0; i < 40; ++i) {
        const auto a = random_string(rng, 8, "abcdef"), b = random_string(rng, 8, "abcdef");
        ASSERT_EQ(edit_distance(a, b).raw, exhaustive_edit_distance(a, b)) << a << " / " << b;
    }
}

TEST(EditDistance, ShortPairsMatchSearchOverKittenLetters)
{
    // All strings up to 4 letters over the letters of "kitten" and "sitting".
    const EditGraph graph("eikgnst", 4);
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<std::size_t> pick(0, graph.strings().size() - 1);
    for (int i = 0; i < 200; ++i) {
        const std::size_t a = pick(rng);
        const auto dist = graph.distances_from(a);
        for (int k = 0; k < 50; ++k) {
            const std::size_t b = pick(rng);
            ASSERT_EQ(edit_distance(graph.strings()[a], graph.strings()[b]).raw, dist[b]);
        }
    }
}

TEST(EditDistance, MatchesExhaustiveSearchOverAbc)
{
    const EditGraph graph("abc", 5);
    const auto& strings = graph.strings();
    ASSERT_EQ(strings.size(), 364u);
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < strings.size(); ++a) {
        const auto dist = graph.distances_from(a);
        for (std::size_t b = 0; b < strings.size(); ++b) {
            ASSERT_EQ(edit_distance(strings[a], strings[b]).raw, dist[b]) << strings[a] << " -> " << strings[b];
            ++pairs;
        }
    }
    EXPECT_EQ(pairs, 364u * 364u);
}

TEST(EditDistance, MetricAxiomsOnRandomPairs)
{
    std::mt19937_64 rng(7);
    for (int i = 0; i < 1000; ++i) {
        const auto a = random_string(rng, 12, "abcd ");
        const auto b = random_string(rng, 12, "abcd ");
        const auto c = random_string(rng, 12, "abcd ");
        const auto ab = edit_distance(a, b), ba = edit_distance(b, a);
        EXPECT_EQ(ab.raw, ba.raw);
        EXPECT_EQ(ab.normalized, ba.normalized);
        EXPECT_EQ(ab.raw == 0, a == b);
        EXPECT_LE(ab.raw, edit_distance(a, c).raw + edit_distance(c, b).raw);
        EXPECT_GE(ab.normalized, 0.0);
        EXPECT_LE(ab.normalized, 1.0);
        EXPECT_EQ(edit_distance(a, a).raw, 0u);
    }
}

TEST(Bleu, IdentityIsOne)
{
    const auto x = words("the cat sat on the mat");
    EXPECT_EQ(bleu(x, x).value, 1.0);
    EXPECT_EQ(bleu(words("a b c d"), words("a b c d")).value, 1.0);
}

TEST(Bleu, ClippedUnigramPrecision)
{
    const auto s = bleu(words("the the the the"), words("the cat"), 1);
    ASSERT_EQ(s.precisions.size(), 1u);
    EXPECT_NEAR(s.precisions[0], 0.25, 1e-12);
    EXPECT_EQ(s.brevity_penalty, 1.0);
    EXPECT_NEAR(s.value, 0.25, 1e-12);
    // With bigrams there is no overlap at all, so no smoothing means zero.
    EXPECT_EQ(bleu(words("the the the the"), words("the cat")).value, 0.0);
}

TEST(Bleu, BrevityPenalty)
{
    const auto s = bleu(words("a b"), words("a b c d"), 2);
    EXPECT_NEAR(s.brevity_penalty, std::exp(-1.0), 1e-12);
    EXPECT_NEAR(s.value, std::exp(-1.0), 1e-12);
    EXPECT_NEAR(std::exp(-1.0), 0.3679, 1e-4);
}

TEST(Bleu, HandComputedMixedOrders)
{
    // pred: a b c x, gt: a b c d. p1 = 3/4, p2 = 2/3, p3 = 1/2, p4 = 0.
    const auto s = bleu(words("a b c x"), words("a b c d"), 3);
    EXPECT_NEAR(s.precisions[0], 0.75, 1e-12);
    EXPECT_NEAR(s.precisions[1], 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(s.precisions[2], 0.5, 1e-12);
    EXPECT_NEAR(s.value, std::cbrt(0.75 * 2.0 / 3.0 * 0.5), 1e-12);
    EXPECT_EQ(bleu(words("a b c x"), words("a b c d")).value, 0.0);
}

TEST(Bleu, EmptyPredictionIsFlagged)
{
    const auto s = bleu({}, words("a b"));
    EXPECT_EQ(s.value, 0.0);
    EXPECT_TRUE(s.empty_prediction);
    EXPECT_THROW(bleu(words("a"), words("a"), 0), std::invalid_argument);
}

TEST(Meteor, DisjointIsZero)
{
    EXPECT_EQ(meteor(words("a b"), words("c d")).value, 0.0);
    EXPECT_EQ(meteor({}, words("c d")).value, 0.0);
}

TEST(Meteor, IdentityClosedForm)
{
    for (std::size_t m = 1; m <= 12; ++m) {
        Words x;
        for (std::size_t i = 0; i < m; ++i) x.push_back("w" + std::to_string(i % 5));
        const auto s = meteor(x, x);
        EXPECT_EQ(s.chunks, 1u);
        EXPECT_NEAR(s.value, 1.0 - 0.5 / std::pow(static_cast<double>(m), 3.0), 1e-12) << m;
    }
    EXPECT_NEAR(meteor(words("a b c"), words("a b c")).value, 0.98148, 1e-5);
}

TEST(Meteor, ReorderedThreeChunks)
{
    const auto s = meteor(words("a c b"), words("a b c"));
    EXPECT_EQ(s.matches, 3u);
    EXPECT_EQ(s.chunks, 3u);
    EXPECT_NEAR(s.fmean, 1.0, 1e-12);
    EXPECT_NEAR(s.value, 0.5, 1e-12);
}

TEST(Meteor, MatchesExhaustiveAlignment)
{
    std::mt19937_64 rng(3);
    const Words vocab{"a", "b", "c"};
    for (int trial = 0; trial < 3000; ++trial) {
        const Words p = random_words(rng, 6, vocab);
        const Words g = random_words(rng, 6, vocab);
        const AlignmentOracle oracle(p, g);
        const auto s = meteor(p, g);
        ASSERT_TRUE(s.exhaustive);
        ASSERT_EQ(s.matches, oracle.matches());
        ASSERT_EQ(s.chunks, oracle.chunks());
        ASSERT_NEAR(s.value, oracle.score(), 1e-12);
    }
}

TEST(WordSet, Examples)
{
    auto pr = word_set_pr("a b c", "b c d");
    EXPECT_DOUBLE_EQ(pr.precision, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(pr.recall, 2.0 / 3.0);
    pr = word_set_pr("x y", "x y");
    EXPECT_EQ(pr.precision, 1.0);
    EXPECT_EQ(pr.recall, 1.0);
    pr = word_set_pr("a a b", "a b");
    EXPECT_EQ(pr.precision, 1.0);
    EXPECT_EQ(pr.recall, 1.0);
    pr = word_set_pr("", "a");
    EXPECT_EQ(pr.precision, 0.0);
    EXPECT_EQ(pr.recall, 0.0);
    pr = word_set_pr("a", "");
    EXPECT_EQ(pr.precision, 0.0);
    EXPECT_EQ(pr.recall, 0.0);
    EXPECT_EQ(word_set_pr("A", "a").precision, 0.0);
}

TEST(Metrics, AxiomsOnRandomPairs)
{
    std::mt19937_64 rng(19);
    const Words vocab{"a", "b", "c", "d", "e", "|", "^x"};
    for (int i = 0; i < 1000; ++i) {
        const Words p = random_words(rng, 10, vocab);
        const Words g = random_words(rng, 10, vocab);
        std::string ps, gs;
        for (const auto& w : p) ps += w + " ";
        for (const auto& w : g) gs += w + " ";
        const auto r = score_sample(ps, gs, Scenario::full);
        for (double v : {r.ed, r.bleu, r.meteor, r.precision, r.recall}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        const auto pr = word_set_pr(ps, gs), rp = word_set_pr(gs, ps);
        EXPECT_EQ(pr.precision, rp.recall);
        EXPECT_EQ(pr.recall, rp.precision);
        const auto mpg = meteor(p, g), mgp = meteor(g, p);
        EXPECT_EQ(mpg.matches, mgp.matches);
        if (!p.empty()) {
            EXPECT_EQ(bleu(p, p).value, p.size() >= 4 ? 1.0 : 0.0);
            EXPECT_NEAR(meteor(p, p).value, 1.0 - 0.5 / std::pow(static_cast<double>(p.size()), 3.0), 1e-12);
        }
    }
}

TEST(Aggregate, SingleRecordIsItself)
{
    const MetricsRecord r{0.1, 0.2, 0.3, 0.4, 0.5, Scenario::prev_curr};
    const auto t = aggregate({r});
    ASSERT_EQ(t.rows.size(), 2u);
    for (const auto* row : {t.find("prev_curr"), &t.overall()}) {
        ASSERT_NE(row, nullptr);
        EXPECT_EQ(row->count, 1u);
        EXPECT_EQ(row->ed, 0.1);
        EXPECT_EQ(row->bleu, 0.2);
        EXPECT_EQ(row->meteor, 0.3);
        EXPECT_EQ(row->precision, 0.4);
        EXPECT_EQ(row->recall, 0.5);
    }
    EXPECT_EQ(t.find("full"), nullptr);
}

TEST(Aggregate, MeansPerScenario)
{
    const std::vector<MetricsRecord> recs{{0.0, 1.0, 1.0, 1.0, 1.0, Scenario::full},
                                          {0.5, 0.5, 0.5, 0.5, 0.5, Scenario::full},
                                          {1.0, 0.0, 0.0, 0.0, 0.0, Scenario::curr_only}};
    const auto t = aggregate(recs);
    ASSERT_EQ(t.rows.size(), 3u);
    EXPECT_EQ(t.rows[0].label, "curr_only");
    EXPECT_EQ(t.rows[1].label, "full");
    EXPECT_DOUBLE_EQ(t.find("full")->ed, 0.25);
    EXPECT_DOUBLE_EQ(t.find("full")->bleu, 0.75);
    EXPECT_DOUBLE_EQ(t.overall().ed, 0.5);
    EXPECT_DOUBLE_EQ(t.overall().recall, 0.5);
    EXPECT_THROW(aggregate({}), std::invalid_argument);
}

TEST(Aggregate, CountsPartitionAndBoundsHold)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<MetricsRecord> recs;
    for (int i = 0; i < 500; ++i) {
        recs.push_back({u(rng), u(rng), u(rng), u(rng), u(rng), kScenarios[static_cast<std::size_t>(i * 7 % 4)]});
    }
    const auto t = aggregate(recs);
    std::size_t total = 0;
    for (std::size_t i = 0; i + 1 < t.rows.size(); ++i) total += t.rows[i].count;
    EXPECT_EQ(total, recs.size());
    EXPECT_EQ(t.overall().count, recs.size());
    for (const auto& r : t.rows) {
        for (double v : {r.ed, r.bleu, r.meteor, r.precision, r.recall}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Report, CsvLayout)
{
    const auto t = aggregate({{0.123456, 1.0, 0.5, 0.25, 0.125, Scenario::curr_next}});
    const std::string csv = to_csv(t);
    EXPECT_NE(csv.find("# meteor: exact unigram matching only"), std::string::npos);
    EXPECT_NE(csv.find("without case folding"), std::string::npos);
    EXPECT_NE(csv.find("scenario,count,ed,bleu,meteor,precision,recall,ed_x100\n"), std::string::npos);
    EXPECT_NE(csv.find("curr_next,1,0.1235,1.0000,0.5000,0.2500,0.1250,12.35\n"), std::string::npos);
    EXPECT_NE(csv.find("overall,1,0.1235,"), std::string::npos);
}

TEST(Report, JsonRoundTrip)
{
    const auto t = aggregate({{0.1, 0.9, 0.8, 0.7, 0.6, Scenario::full}, {0.3, 0.5, 0.4, 0.3, 0.2, Scenario::curr_only}});
    const auto j = to_json(t);
    EXPECT_DOUBLE_EQ(j["rows"][0]["ed_x100"].get<double>(), 30.0);
    const auto back = table_from_json(nlohmann::json::parse(j.dump()));
    ASSERT_EQ(back.rows.size(), t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        EXPECT_EQ(back.rows[i].label, t.rows[i].label);
        EXPECT_EQ(back.rows[i].count, t.rows[i].count);
        EXPECT_EQ(back.rows[i].ed, t.rows[i].ed);
        EXPECT_EQ(back.rows[i].meteor, t.rows[i].meteor);
    }
}
