#include "sbrnn/estimation/sliding.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

using namespace sbrnn;
using namespace sbrnn::estimation;
using nn::Tensor;

namespace {

Tensor random_posteriors(std::size_t rows, std::size_t m, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> d(0.01, 1.0);
    Tensor t = Tensor::matrix(rows, m);
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0;
        for (double& v : t.row(r)) s += (v = d(rng));
        for (double& v : t.row(r)) v /= s;
    }
    return t;
}

// Materializes every window's output for slots 1..T+W-1 and averages, per
// slot i in 1..T, the windows k in 1..T with k <= i <= k+W-1.
Tensor brute_force_fusion(const std::vector<Tensor>& windows, std::size_t w)
{
    const std::size_t T = windows.size();
    const std::size_t m = windows[0].cols();
    Tensor out = Tensor::matrix(T, m);
    for (std::size_t i = 1; i <= T; ++i) {
        std::vector<double> acc(m, 0.0);
        int count = 0;
        for (std::size_t k = 1; k <= T; ++k) {
            if (i < k || i > k + w - 1) continue;
            for (std::size_t c = 0; c < m; ++c) acc[c] += windows[k - 1](i - k, c);
            ++count;
        }
        for (std::size_t c = 0; c < m; ++c) out(i - 1, c) = acc[c] / count;
    }
    return out;
}

std::uint32_t max_scan(std::span<const double> p)
{
    std::uint32_t best = 1;
    double v = p[0];
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > v) v = p[i], best = static_cast<std::uint32_t>(i + 1);
    return best;
}

std::string binary(std::uint32_t g, unsigned bits)
{
    std::string s;
    for (unsigned b = bits; b-- > 0;) s.push_back(g >> b & 1u ? '1' : '0');
    return s;
}

Tensor random_received(std::size_t rows, std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(0.0, 0.5);
    Tensor t = Tensor::matrix(rows, n);
    for (double& v : t.values) v = d(rng);
    return t;
}

void randomize(nn::ParamSet& ps, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-0.6, 0.6);
    for (auto& p : ps)
        for (double& v : p.value.values) v = d(rng);
}

} // namespace

// ---------------------------------------------------------------------------
// Fusion

TEST(Fusion, SingleSlotWindowIsIdentity)
{
    std::mt19937_64 rng(1);
    std::vector<Tensor> windows;
    for (int k = 0; k < 7; ++k) windows.push_back(random_posteriors(1, 5, rng));
    const auto fused = fuse_windows(windows);
    for (std::size_t k = 0; k < 7; ++k) {
        EXPECT_EQ(fused.counts[k], 1u);
        for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(fused.probs(k, c), windows[k](0, c));
    }
}

TEST(Fusion, WorkedExampleWindowThreeSlotByslot)
{
    std::mt19937_64 rng(2);
    // windows[k-1] = outputs p^(k) for slots k..k+2.
    std::vector<Tensor> w;
    for (int k = 0; k < 4; ++k) w.push_back(random_posteriors(3, 4, rng));
    const auto fused = fuse_windows(w);
    ASSERT_EQ(fused.slots(), 4u);
    auto p = [&](int slot, int window, std::size_t c) { return w[window - 1](slot - window, c); };
    for (std::size_t c = 0; c < 4; ++c) {
        EXPECT_NEAR(fused.probs(0, c), p(1, 1, c), 1e-15);
        EXPECT_NEAR(fused.probs(1, c), (p(2, 1, c) + p(2, 2, c)) / 2, 1e-15);
        EXPECT_NEAR(fused.probs(2, c), (p(3, 1, c) + p(3, 2, c) + p(3, 3, c)) / 3, 1e-15);
        EXPECT_NEAR(fused.probs(3, c), (p(4, 2, c) + p(4, 3, c) + p(4, 4, c)) / 3, 1e-15);
    }
    EXPECT_EQ(fused.counts, (std::vector<std::size_t>{1, 2, 3, 3}));
}

TEST(Fusion, ExhaustiveAgainstBruteForce)
{
    std::mt19937_64 rng(3);
    for (std::size_t T = 1; T <= 12; ++T)
        for (std::size_t W = 1; W <= 6; ++W) {
            std::vector<Tensor> windows;
            for (std::size_t k = 0; k < T; ++k) windows.push_back(random_posteriors(W, 8, rng));
            const auto fused = fuse_windows(windows);
            const Tensor oracle = brute_force_fusion(windows, W);
            ASSERT_EQ(fused.probs.shape, oracle.shape);
            for (std::size_t i = 0; i < oracle.size(); ++i)
                ASSERT_NEAR(fused.probs[i], oracle[i], 1e-12) << "T=" << T << " W=" << W;
            for (std::size_t i = 0; i < T; ++i) {
                EXPECT_GE(fused.counts[i], 1u);
                EXPECT_LE(fused.counts[i], W);
                double s = 0;
                for (double v : fused.probs.row(i)) {
                    EXPECT_GE(v, 0.0);
                    s += v;
                }
                EXPECT_NEAR(s, 1.0, 1e-12);
            }
        }
}

TEST(Fusion, PermutationEquivariant)
{
    std::mt19937_64 rng(4);
    std::vector<std::size_t> perm(16);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Tensor> windows;
    std::vector<Tensor> relabeled;
    for (int k = 0; k < 20; ++k) {
        windows.push_back(random_posteriors(5, 16, rng));
        Tensor r = Tensor::matrix(5, 16);
        for (std::size_t j = 0; j < 5; ++j)
            for (std::size_t c = 0; c < 16; ++c) r(j, perm[c]) = windows.back()(j, c);
        relabeled.push_back(r);
    }
    const auto a = decide_all(fuse_windows(windows));
    const auto b = decide_all(fuse_windows(relabeled));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(b[i], perm[a[i] - 1] + 1);
}

TEST(Fusion, RejectsInconsistentShapes)
{
    EXPECT_THROW(fuse_windows({}), std::invalid_argument);
    EXPECT_THROW(fuse_windows({Tensor::matrix(3, 4), Tensor::matrix(2, 4)}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Decisions and metrics

TEST(Decide, Examples)
{
    std::vector<double> p(64, 0.0);
    p[4] = 1.0;
    EXPECT_EQ(decide(p), 5u);
    EXPECT_EQ(decide(std::vector<double>(64, 1.0 / 64)), 1u);
    EXPECT_EQ(decide(std::vector<double>{0.2, 0.4, 0.4}), 2u);
}

TEST(Decide, MatchesMaxScan)
{
    std::mt19937_64 rng(5);
    for (int i = 0; i < 500; ++i) {
        const Tensor p = random_posteriors(1, 64, rng);
        EXPECT_EQ(decide(p.row(0)), max_scan(p.row(0)));
    }
}

TEST(Bler, Examples)
{
    const std::vector<std::uint32_t> t{1, 2, 3, 4};
    EXPECT_EQ(bler(t, t), 0.0);
    EXPECT_EQ(bler(t, std::vector<std::uint32_t>{2, 3, 4, 1}), 1.0);
    std::mt19937_64 rng(6);
    std::vector<std::uint32_t> a(1000), b(1000);
    std::size_t diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = 1 + rng() % 64;
        b[i] = rng() % 3 ? a[i] : 1 + rng() % 64;
        diff += a[i] != b[i];
    }
    EXPECT_DOUBLE_EQ(bler(a, b), diff / 1000.0);
}

TEST(Gray, Examples)
{
    EXPECT_EQ(gray_code(1, 64), "000000");
    EXPECT_EQ(gray_code(2, 64), "000001");
    EXPECT_EQ(gray_code(3, 64), "000011");
    EXPECT_EQ(gray_code(4, 64), "000010");
    EXPECT_THROW(gray_code(0, 64), std::out_of_range);
    EXPECT_THROW(gray_code(65, 64), std::out_of_range);
    EXPECT_THROW(bits_per_message(48), std::invalid_argument);
}

TEST(Gray, FullTableIsAGrayCode)
{
    std::set<std::string> seen;
    for (std::uint32_t m = 1; m <= 64; ++m) {
        const std::string g = gray_code(m, 64);
        EXPECT_EQ(g, binary(gray_index(m, 64), 6));
        EXPECT_TRUE(seen.insert(g).second);
        if (m > 1) {
            const std::string prev = gray_code(m - 1, 64);
            int d = 0;
            for (int i = 0; i < 6; ++i) d += prev[i] != g[i];
            EXPECT_EQ(d, 1) << m;
        }
    }
    EXPECT_EQ(seen.size(), 64u);
}

TEST(Ber, Examples)
{
    std::vector<std::uint32_t> t(50, 7);
    EXPECT_EQ(ber(t, t, 64), 0.0);
    auto d = t;
    d[10] = 8; // Gray-adjacent to 7
    EXPECT_DOUBLE_EQ(ber(t, d, 64), 1.0 / (6 * 50));
}

TEST(Ber, MatchesBitStringComparisonAndBounds)
{
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::uint32_t> a(200), b(200);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = 1 + rng() % 64;
            b[i] = rng() % 4 ? a[i] : 1 + rng() % 64;
        }
        std::size_t flips = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const std::string x = gray_code(a[i], 64);
            const std::string y = gray_code(b[i], 64);
            for (int k = 0; k < 6; ++k) flips += x[k] != y[k];
        }
        const auto r = count_errors(a, b, 64);
        EXPECT_EQ(r.bit_errors, flips);
        EXPECT_DOUBLE_EQ(r.ber, flips / 1200.0);
        EXPECT_LE(r.ber, r.bler);
        EXPECT_GE(r.ber, r.bler / 6 - 1e-15);
        EXPECT_LE(r.bler, 1.0);
    }
}

TEST(Metrics, AggregateIsMeanOfRates)
{
    const std::vector<std::uint32_t> t{1, 2, 3, 4};
    const ErrorReport a = count_errors(t, t, 4);
    const ErrorReport b = count_errors(t, std::vector<std::uint32_t>{1, 2, 3, 1}, 4);
    const std::vector<ErrorReport> rs{a, b};
    const ErrorReport s = aggregate(rs);
    EXPECT_DOUBLE_EQ(s.bler, (a.bler + b.bler) / 2);
    EXPECT_DOUBLE_EQ(s.ber, (a.ber + b.ber) / 2);
    EXPECT_EQ(s.messages, 8u);
    EXPECT_EQ(s.bit_errors, a.bit_errors + b.bit_errors);
}

// ---------------------------------------------------------------------------
// Sliding-window estimation over a receiver network

class Sliding : public ::testing::TestWithParam<model::CellKind> {
protected:
    model::Transceiver make(std::size_t m, std::size_t n, std::uint64_t seed)
    {
        model::Transceiver net({m, n, GetParam(), 4}, seed);
        randomize(net.params(), seed);
        return net;
    }
};

TEST_P(Sliding, BatchedWindowsEqualSequentialReference)
{
    auto net = make(8, 5, 10);
    const Tensor rx = random_received(23, 5, 11);
    for (auto rule : {CarryRule::none, CarryRule::forward})
        for (std::size_t W : {1u, 3u, 7u}) {
            const auto fast = window_posteriors(net, rx, W, rule);
            const auto ref = window_posteriors_sequential(net, rx, W, rule);
            ASSERT_EQ(fast.size(), ref.size());
            for (std::size_t k = 0; k < ref.size(); ++k)
                for (std::size_t i = 0; i < ref[k].size(); ++i)
                    ASSERT_NEAR(fast[k][i], ref[k][i], 1e-12) << to_string(rule) << " W=" << W << " k=" << k;
        }
}

TEST_P(Sliding, OutputLengthExcludesTail)
{
    auto net = make(4, 3, 12);
    const Tensor rx = random_received(20, 3, 13);
    for (auto rule : {CarryRule::none, CarryRule::forward, CarryRule::both})
        for (std::size_t W : {1u, 5u, 20u}) {
            const auto fused = sliding_estimate(net, rx, W, rule);
            EXPECT_EQ(fused.slots(), 20 - W + 1);
            for (std::size_t i = 0; i < fused.slots(); ++i) {
                double s = 0;
                for (double v : fused.probs.row(i)) s += v;
                EXPECT_NEAR(s, 1.0, 1e-12);
            }
        }
    EXPECT_THROW(sliding_estimate(net, rx, 21), std::invalid_argument);
    EXPECT_THROW(sliding_estimate(net, random_received(20, 4, 1), 3), std::invalid_argument);
}

TEST_P(Sliding, UnitWindowIsPerBlockArgmax)
{
    auto net = make(8, 4, 14);
    const Tensor rx = random_received(15, 4, 15);
    for (auto rule : {CarryRule::none, CarryRule::forward}) {
        const auto raw = window_posteriors_sequential(net, rx, 1, rule);
        const auto d = decide_all(sliding_estimate(net, rx, 1, rule));
        for (std::size_t k = 0; k < raw.size(); ++k) EXPECT_EQ(d[k], decide(raw[k].row(0)));
    }
}

TEST_P(Sliding, ForwardCarryMatchesSinglePass)
{
    // With the forward state carried from each window's first slot, the
    // forward outputs inside every window equal those of one pass over the
    // whole sequence.
    auto net = make(4, 3, 16);
    const Tensor rx = random_received(9, 3, 17);
    const auto seq = window_posteriors_sequential(net, rx, 4, CarryRule::forward);
    nn::Tape tape;
    auto b = net.bind(tape);
    std::vector<nn::Var> blocks;
    const nn::Var all = tape.constant(rx);
    for (std::size_t t = 0; t < 9; ++t) blocks.push_back(nn::gather_rows(tape, all, {t}));
    const auto res = model::rx_decode(tape, b, blocks, tape.constant(Tensor::matrix(1, 8)),
                                      tape.constant(Tensor::matrix(1, 8)));
    // The last window ends at the last slot, so its backward pass matches too.
    const auto& last = seq.back();
    for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(last(j, c), tape.value(res.probs[5 + j])[c], 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Cells, Sliding, ::testing::Values(model::CellKind::vanilla, model::CellKind::lstm_gru),
                         [](const auto& info) { return info.param == model::CellKind::vanilla ? "Vanilla" : "LstmGru"; });
