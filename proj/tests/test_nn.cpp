#include "sbrnn/nn/adam.hpp"
#include "sbrnn/nn/checkpoint.hpp"
#include "sbrnn/nn/ops.hpp"
#include "sbrnn/nn/params.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

using namespace sbrnn::nn;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> d(lo, hi);
    for (double& v : t.values) v = d(rng);
    return t;
}

// Central differences of a scalar function over every entry of the inputs.
void expect_gradients(const std::function<Var(Tape&, std::vector<Var>&)>& f, std::vector<Parameter>& inputs,
                      double tol = 1e-4, double h = 1e-5)
{
    Tape tape;
    std::vector<Var> vars;
    for (auto& p : inputs) {
        p.zero_grad();
        vars.push_back(tape.parameter(p));
    }
    tape.backward(f(tape, vars));
    for (auto& p : inputs) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            auto eval = [&](double x) {
                const double saved = p.value[i];
                p.value[i] = x;
                Tape t;
                std::vector<Var> vs;
                for (auto& q : inputs) vs.push_back(t.constant(q.value));
                const double out = t.value(f(t, vs))[0];
                p.value[i] = saved;
                return out;
            };
            const double numeric = (eval(p.value[i] + h) - eval(p.value[i] - h)) / (2 * h);
            const double rel = std::abs(numeric - p.grad[i]) / std::max({std::abs(numeric), std::abs(p.grad[i]), 1e-6});
            EXPECT_LT(rel, tol) << p.name << "[" << i << "] analytic " << p.grad[i] << " numeric " << numeric;
        }
    }
}

// Keeps samples at least `margin` away from the kinks of relu/clip_tx.
void push_off_kinks(Tensor& t, double margin = 1e-3)
{
    for (double& v : t.values)
        for (double k : {0.0, kClipLevel})
            if (std::abs(v - k) < margin) v = k + (v < k ? -2 * margin : 2 * margin);
}

} // namespace

// ---------------------------------------------------------------------------
// Scalar activations and losses

TEST(Softmax, SymmetricPair)
{
    const auto p = softmax(std::vector<double>{0.0, 0.0});
    EXPECT_DOUBLE_EQ(p[0], 0.5);
    EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Softmax, ConstantInputIsUniform)
{
    for (double c : {-1e3, -2.5, 0.0, 7.0, 1e3}) {
        const auto p = softmax(std::vector<double>{c, c, c, c});
        for (double v : p) EXPECT_NEAR(v, 0.25, 1e-15);
    }
}

TEST(Softmax, MatchesDirectFormulaInExtendedPrecision)
{
    const auto p = softmax(std::vector<double>{1.0, 2.0, 3.0});
    long double z = 0;
    for (int i = 1; i <= 3; ++i) z += std::exp(static_cast<long double>(i));
    for (int i = 0; i < 3; ++i)
        EXPECT_NEAR(p[i], static_cast<double>(std::exp(static_cast<long double>(i + 1)) / z), 1e-15);
}

TEST(Softmax, SumsToOneAndShiftInvariant)
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> d(-30, 30);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> x(1 + trial % 70);
        for (double& v : x) v = d(rng);
        const auto p = softmax(x);
        double s = 0;
        for (double v : p) {
            EXPECT_GT(v, 0.0);
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
        const double shift = d(rng);
        for (double& v : x) v += shift;
        const auto q = softmax(x);
        for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
    }
}

TEST(Softmax, RejectsNonFinite)
{
    EXPECT_THROW(softmax(std::vector<double>{0.0, std::nan("")}), std::domain_error);
}

TEST(Relu, Examples)
{
    const auto y = relu(std::vector<double>{-1.0, 0.0, 2.0});
    EXPECT_EQ(y, (std::vector<double>{0.0, 0.0, 2.0}));
    for (double v : relu(std::vector<double>{-3.0, -0.1, -1e-300})) EXPECT_EQ(v, 0.0);
}

TEST(Relu, MatchesMaxOracle)
{
    std::mt19937_64 rng(2);
    std::normal_distribution<double> d;
    for (int i = 0; i < 1000; ++i) {
        const double x = d(rng);
        EXPECT_EQ(relu(x), std::max(x, 0.0));
    }
}

TEST(ClipTx, ThreePieces)
{
    const double pi = std::numbers::pi;
    EXPECT_EQ(clip_tx(-1.0), 0.0);
    EXPECT_DOUBLE_EQ(clip_tx(pi / 8), pi / 8);
    EXPECT_DOUBLE_EQ(clip_tx(1.0), pi / 4);
    EXPECT_EQ(clip_tx(0.0), 0.0);
    EXPECT_DOUBLE_EQ(clip_tx(pi / 4), pi / 4);
}

TEST(ClipTx, ClampOracleRangeAndMonotone)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(-3, 3);
    std::vector<double> xs(2000);
    for (double& x : xs) x = d(rng);
    std::sort(xs.begin(), xs.end());
    double prev = -1;
    for (double x : xs) {
        const double y = clip_tx(x);
        EXPECT_NEAR(y, std::min(std::max(x, 0.0), std::numbers::pi / 4), 1e-15);
        EXPECT_GE(y, 0.0);
        EXPECT_LE(y, kClipLevel);
        EXPECT_GE(y, prev);
        prev = y;
    }
}

TEST(ClipTx, SubgradientZeroAtKinks)
{
    EXPECT_EQ(clip_tx_derivative(0.0), 0.0);
    EXPECT_EQ(clip_tx_derivative(kClipLevel), 0.0);
    EXPECT_EQ(clip_tx_derivative(0.3), 1.0);
    EXPECT_EQ(relu_derivative(0.0), 0.0);
}

TEST(Sigmoid, Examples)
{
    EXPECT_EQ(sigmoid(0.0), 0.5);
    EXPECT_NEAR(sigmoid(40.0), 1.0, 1e-12);
    EXPECT_NEAR(sigmoid(-40.0), 0.0, 1e-12);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> d(-20, 20);
    for (int i = 0; i < 1000; ++i) {
        const double x = d(rng);
        const long double ref = 1.0L / (1.0L + std::exp(-static_cast<long double>(x)));
        EXPECT_NEAR(sigmoid(x), static_cast<double>(ref), 1e-15);
    }
}

TEST(CrossEntropy, Examples)
{
    std::vector<double> onehot(64, 0.0);
    onehot[0] = 1.0;
    EXPECT_EQ(cross_entropy(onehot, 0), 0.0);
    const std::vector<double> uniform(64, 1.0 / 64);
    EXPECT_NEAR(cross_entropy(uniform, 17), std::log(64.0), 1e-12);
    EXPECT_NEAR(std::log(64.0), 4.1589, 1e-4);
    // Log floor keeps a zero-probability target finite.
    EXPECT_NEAR(cross_entropy(onehot, 3), -std::log(1e-12), 1e-9);
}

TEST(CrossEntropy, BatchMean)
{
    Tape tape;
    const Var p = tape.constant(Tensor({2, 4}, {0.5, 0.25, 0.25, 0.0, 0.25, 0.25, 0.25, 0.25}));
    const Var loss = cross_entropy(tape, p, {0, 2});
    EXPECT_NEAR(tape.value(loss)[0], (std::log(2.0) + std::log(4.0)) / 2, 1e-15);
}

// ---------------------------------------------------------------------------
// Autodiff

TEST(Tape, SquareHasGradientSix)
{
    std::vector<Parameter> x{Parameter("x", Tensor({1}, 3.0))};
    Tape tape;
    const Var v = tape.parameter(x[0]);
    tape.backward(mul(tape, v, v));
    EXPECT_EQ(x[0].grad[0], 6.0);
}

TEST(Tape, SoftmaxCrossEntropyGradientIsPMinusOneHot)
{
    std::mt19937_64 rng(5);
    Parameter z("z", random_tensor({3, 7}, rng, -3, 3));
    Tape tape;
    const Var probs = softmax(tape, tape.parameter(z));
    const std::vector<std::size_t> targets{0, 4, 6};
    tape.backward(cross_entropy(tape, probs, targets));
    const Tensor& p = tape.value(probs);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 7; ++c)
            EXPECT_NEAR(z.grad[r * 7 + c], (p(r, c) - (c == targets[r] ? 1.0 : 0.0)) / 3.0, 1e-14);
}

TEST(Tape, GradientsAccumulateAcrossUses)
{
    std::vector<Parameter> x{Parameter("x", Tensor({1, 2}, {1.5, -2.0}))};
    expect_gradients([](Tape& t, std::vector<Var>& v) { return sum(t, mul(t, add(t, v[0], v[0]), sin(t, v[0]))); }, x);
}

TEST(OpGradients, Elementwise)
{
    std::mt19937_64 rng(6);
    std::vector<Parameter> in{Parameter("a", random_tensor({3, 4}, rng)), Parameter("b", random_tensor({3, 4}, rng))};
    for (auto& p : in) push_off_kinks(p.value);
    const Tensor wt = random_tensor({12}, rng);
    const std::vector<double> w(wt.values.begin(), wt.values.end());
    expect_gradients([&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, add(t, v[0], v[1]), w); }, in);
    expect_gradients([&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, sub(t, v[0], v[1]), w); }, in);
    expect_gradients([&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, mul(t, v[0], v[1]), w); }, in);
    expect_gradients([&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, scale(t, v[0], -1.7), w); }, in);
    expect_gradients([&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, one_minus(t, v[1]), w); }, in);
    expect_gradients([&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, relu(t, v[0]), w); }, in);
    expect_gradients([&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, clip_tx(t, v[1]), w); }, in);
    expect_gradients([&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, sigmoid(t, v[0]), w); }, in);
    expect_gradients([&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, sin(t, v[0]), w); }, in);
    expect_gradients([&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, softmax(t, v[0]), w); }, in);
}

TEST(OpGradients, ClipTxOnEachPiece)
{
    std::vector<Parameter> in{Parameter("x", Tensor({1, 6}, {-0.5, -1e-2, 0.2, 0.5, 0.8, 2.0}))};
    expect_gradients([](Tape& t, std::vector<Var>& v) { return weighted_sum(t, clip_tx(t, v[0]), {1, 2, 3, 4, 5, 6}); },
                     in);
    EXPECT_EQ(in[0].grad, (Buffer{0, 0, 3, 4, 0, 0}));
}

TEST(OpGradients, AffineWithDenseAndOneHotSegments)
{
    std::mt19937_64 rng(7);
    std::vector<Parameter> in{Parameter("x", random_tensor({4, 3}, rng)), Parameter("W", random_tensor({5, 9}, rng)),
                              Parameter("b", random_tensor({5}, rng))};
    const Tensor wt = random_tensor({20}, rng);
    const std::vector<double> w(wt.values.begin(), wt.values.end());
    expect_gradients(
        [&](Tape& t, std::vector<Var>& v) {
            return weighted_sum(t, affine(t, {Segment::onehot({5, 0, 2, 5}, 6), Segment::of(v[0], 3)}, v[1], v[2]), w);
        },
        in);
}

TEST(Affine, OneHotEqualsExplicitMultiplication)
{
    std::mt19937_64 rng(8);
    const Tensor w = random_tensor({3, 6}, rng);
    const Tensor b = random_tensor({3}, rng);
    Tape tape;
    const Var y = affine(tape, {Segment::onehot({1, 4}, 6)}, tape.constant(w), tape.constant(b));
    Tensor onehot = Tensor::matrix(2, 6);
    onehot(0, 1) = 1.0;
    onehot(1, 4) = 1.0;
    const Var z = affine(tape, tape.constant(onehot), tape.constant(w), tape.constant(b));
    for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(tape.value(y)[i], tape.value(z)[i]);
}

TEST(Affine, MatchesLoopOracle)
{
    std::mt19937_64 rng(9);
    const Tensor x = random_tensor({3, 5}, rng);
    const Tensor w = random_tensor({4, 5}, rng);
    const Tensor b = random_tensor({4}, rng);
    Tape tape;
    const Tensor& y = tape.value(affine(tape, tape.constant(x), tape.constant(w), tape.constant(b)));
    ASSERT_EQ(y.shape, (std::vector<std::size_t>{3, 4}));
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t o = 0; o < 4; ++o) {
            double acc = b[o];
            for (std::size_t i = 0; i < 5; ++i) acc += x(r, i) * w(o, i);
            EXPECT_NEAR(y(r, o), acc, 1e-14);
        }
}

TEST(Affine, RejectsWidthMismatch)
{
    Tape tape;
    const Var x = tape.constant(Tensor::matrix(2, 3));
    EXPECT_THROW(affine(tape, x, tape.constant(Tensor::matrix(4, 5)), tape.constant(Tensor::vector(4))),
                 std::invalid_argument);
}

TEST(OpGradients, LayoutOps)
{
    std::mt19937_64 rng(10);
    std::vector<Parameter> in{Parameter("a", random_tensor({3, 4}, rng)), Parameter("b", random_tensor({2, 4}, rng))};
    const Tensor wt = random_tensor({20}, rng);
    const std::vector<double> w(wt.values.begin(), wt.values.end());
    expect_gradients(
        [&](Tape& t, std::vector<Var>& v) {
            const Var series = scatter_blocks(t, {v[0], v[1]}, {{4, 0, 2}, {1, 3}}, 5);
            return weighted_sum(t, series, w);
        },
        in);
    expect_gradients(
        [&](Tape& t, std::vector<Var>& v) {
            const Var s = concat_rows(t, {v[0], v[1]});
            return weighted_sum(t, gather_blocks(t, s, {4, 1, 1, 0, 2}, 4), w);
        },
        in);
    expect_gradients(
        [&](Tape& t, std::vector<Var>& v) {
            return weighted_sum(t, gather_windows(t, v[0], {0, 3, 7, 8}, 4), std::vector<double>(w.begin(), w.begin() + 16));
        },
        in);
    expect_gradients(
        [&](Tape& t, std::vector<Var>& v) {
            return weighted_sum(t, gather_rows(t, v[0], {2, 2, 0}), std::vector<double>(w.begin(), w.begin() + 12));
        },
        in);
}

TEST(Layout, ScatterThenGatherIsIdentity)
{
    std::mt19937_64 rng(11);
    const std::size_t batch = 5;
    const std::size_t window = 4;
    const std::size_t n = 3;
    Tape tape;
    std::vector<Var> parts;
    std::vector<std::vector<std::size_t>> placement(window);
    for (std::size_t t = 0; t < window; ++t) {
        parts.push_back(tape.constant(random_tensor({batch, n}, rng)));
        for (std::size_t i = 0; i < batch; ++i) placement[t].push_back(i * window + t);
    }
    const Var series = scatter_blocks(tape, parts, placement, batch * window);
    for (std::size_t t = 0; t < window; ++t)
        EXPECT_EQ(tape.value(gather_blocks(tape, series, placement[t], n)).values, tape.value(parts[t]).values);
}

TEST(Layout, ScatterRejectsHolesAndCollisions)
{
    Tape tape;
    const Var a = tape.constant(Tensor::matrix(2, 3));
    EXPECT_THROW(scatter_blocks(tape, {a}, {{0, 0}}, 2), std::invalid_argument);
    EXPECT_THROW(scatter_blocks(tape, {a}, {{0, 1}}, 3), std::invalid_argument);
}

TEST(Tape, ValuesStayFiniteAndShapesMatch)
{
    std::mt19937_64 rng(12);
    Parameter x("x", random_tensor({4, 6}, rng, -50, 50));
    Tape tape;
    const Var p = softmax(tape, tape.parameter(x));
    const Var loss = cross_entropy(tape, p, {0, 1, 2, 3});
    tape.backward(loss);
    EXPECT_TRUE(tape.value(p).all_finite());
    EXPECT_EQ(x.grad.size(), x.value.size());
    for (double g : x.grad) EXPECT_TRUE(std::isfinite(g));
}

// ---------------------------------------------------------------------------
// Parameters and optimizer

TEST(Params, GlorotUniformBoundsAndZeroBias)
{
    ParamSet ps;
    std::mt19937_64 rng(13);
    add_dense(ps, {"layer", 30, 20, Activation::relu, ""}, rng);
    const auto& w = ps.at("layer.W");
    const auto& b = ps.at("layer.b");
    EXPECT_EQ(w.value.shape, (std::vector<std::size_t>{20, 30}));
    EXPECT_EQ(b.value.shape, (std::vector<std::size_t>{20}));
    const double limit = std::sqrt(6.0 / 50.0);
    double max_abs = 0;
    for (double v : w.value.values) max_abs = std::max(max_abs, std::abs(v));
    EXPECT_LE(max_abs, limit);
    EXPECT_GT(max_abs, 0.9 * limit);
    for (double v : b.value.values) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(add_dense(ps, {"layer", 1, 1, Activation::relu, ""}, rng), std::invalid_argument);
}

TEST(Adam, ZeroGradientIsNoOp)
{
    ParamSet ps;
    ps.add("w", Tensor({2, 2}, {1, -2, 3, 0.5}));
    const auto before = ps.at("w").value.values;
    Adam adam;
    for (int i = 0; i < 5; ++i) adam.step(ps);
    EXPECT_EQ(ps.at("w").value.values, before);
    EXPECT_EQ(adam.step_count(), 5);
}

TEST(Adam, FirstStepMovesByLearningRate)
{
    ParamSet ps;
    ps.add("w", Tensor({1}, 0.0));
    ps.at("w").grad[0] = 1.0;
    Adam adam;
    adam.step(ps);
    // m_hat = 1, v_hat = 1 after bias correction.
    EXPECT_NEAR(ps.at("w").value[0], -0.001 / (1.0 + 1e-8), 1e-18);
}

TEST(Adam, MatchesReferenceOverSeveralSteps)
{
    ParamSet ps;
    ps.add("w", Tensor({3}, {0.5, -1.0, 2.0}));
    const std::vector<std::vector<double>> grads{{0.3, -1.0, 0.0}, {0.3, -1.0, 0.0}, {-2.0, 0.5, 1e-3}};
    Adam adam({0.01, 0.8, 0.99, 1e-6});

    std::vector<double> theta{0.5, -1.0, 2.0};
    std::vector<double> m(3, 0.0);
    std::vector<double> v(3, 0.0);
    for (std::size_t t = 1; t <= grads.size(); ++t) {
        ps.at("w").grad.assign(grads[t - 1].begin(), grads[t - 1].end());
        adam.step(ps);
        for (std::size_t i = 0; i < 3; ++i) {
            const double g = grads[t - 1][i];
            m[i] = 0.8 * m[i] + 0.2 * g;
            v[i] = 0.99 * v[i] + 0.01 * g * g;
            const double mh = m[i] / (1 - std::pow(0.8, t));
            const double vh = v[i] / (1 - std::pow(0.99, t));
            theta[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-6);
        }
        for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(ps.at("w").value[i], theta[i], 1e-15);
    }
}

TEST(Adam, RejectsNonFiniteGradient)
{
    ParamSet ps;
    ps.add("w", Tensor({1}, 0.0));
    ps.at("w").grad[0] = std::numeric_limits<double>::infinity();
    Adam adam;
    EXPECT_THROW(adam.step(ps), std::domain_error);
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST(Tensor, StorageIsVectorAligned)
{
    for (std::size_t n : {1u, 3u, 7u, 48u, 1001u}) {
        const Tensor t({n});
        EXPECT_EQ(reinterpret_cast<std::uintptr_t>(t.values.data()) % EIGEN_MAX_ALIGN_BYTES, 0u);
        const Parameter p("p", t);
        EXPECT_EQ(reinterpret_cast<std::uintptr_t>(p.grad.data()) % EIGEN_MAX_ALIGN_BYTES, 0u);
    }
}

TEST(Checkpoint, DocumentedByteLayout)
{
    Checkpoint c;
    c.metadata = {{"k", "v"}};
    c.tensors.emplace_back("a", Tensor({1, 2}, {1.0, -2.0}));
    const std::string bytes = encode_checkpoint(c);
    std::string expected("SBRNNCKP", 8);
    auto u32 = [&](std::uint32_t x) {
        for (int i = 0; i < 4; ++i) expected.push_back(static_cast<char>(x >> (8 * i) & 0xff));
    };
    auto u64 = [&](std::uint64_t x) {
        for (int i = 0; i < 8; ++i) expected.push_back(static_cast<char>(x >> (8 * i) & 0xff));
    };
    u32(1);
    u32(4);
    expected += "k=v\n";
    u32(1);
    u32(1);
    expected += "a";
    u32(2);
    u64(1);
    u64(2);
    u64(std::bit_cast<std::uint64_t>(1.0));
    u64(std::bit_cast<std::uint64_t>(-2.0));
    EXPECT_EQ(bytes, expected);
}

TEST(Checkpoint, RoundTripIsByteIdentical)
{
    ParamSet ps;
    std::mt19937_64 rng(14);
    add_dense(ps, {"txf", 7, 5, Activation::clip_tx, ""}, rng);
    add_dense(ps, {"rxf", 5, 3, Activation::relu, "2"}, rng);
    const Checkpoint c = Checkpoint::from(ps, {{"system", "vanilla"}, {"seed", "3"}});
    const std::string a = encode_checkpoint(c);
    const Checkpoint back = decode_checkpoint(a);
    EXPECT_EQ(encode_checkpoint(back), a);
    EXPECT_EQ(back.meta("system"), "vanilla");

    ParamSet other;
    std::mt19937_64 rng2(99);
    add_dense(other, {"txf", 7, 5, Activation::clip_tx, ""}, rng2);
    add_dense(other, {"rxf", 5, 3, Activation::relu, "2"}, rng2);
    back.load_into(other);
    EXPECT_EQ(other.at("rxf.W2").value.values, ps.at("rxf.W2").value.values);
    EXPECT_EQ(encode_checkpoint(Checkpoint::from(other, c.metadata)), a);
}

TEST(Checkpoint, RejectsCorruptInput)
{
    ParamSet ps;
    ps.add("x", Tensor({2}, {1.0, 2.0}));
    const std::string good = encode_checkpoint(Checkpoint::from(ps));
    EXPECT_THROW(decode_checkpoint(good.substr(0, good.size() - 1)), std::runtime_error);
    EXPECT_THROW(decode_checkpoint(good + "x"), std::runtime_error);
    std::string bad = good;
    bad[0] = 'X';
    EXPECT_THROW(decode_checkpoint(bad), std::runtime_error);

    ParamSet wrong;
    wrong.add("x", Tensor({3}));
    EXPECT_THROW(decode_checkpoint(good).load_into(wrong), std::runtime_error);
}
