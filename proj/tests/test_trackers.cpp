#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "poltrack/channel.hpp"
#include "poltrack/trackers.hpp"

using namespace poltrack;

namespace {

std::vector<Vec2> transmit(const Mat2& h, const std::vector<Vec2>& s)
{
    std::vector<Vec2> x(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) x[k] = h * s[k];
    return x;
}

template <class Tracker>
std::vector<Vec2> run(Tracker& t, const std::vector<Vec2>& x, const Mat2* h = nullptr)
{
    std::vector<Vec2> out;
    for (std::size_t k = 0; k < x.size(); ++k) t.push(x[k], SymbolContext{k, h}, out);
    t.finish(out);
    return out;
}

/// Framed payload: pilots at pilot positions, random symbols elsewhere.
std::vector<Vec2> framed(Rng& rng, const Constellation& c, const FramePlan& plan, std::size_t n)
{
    auto s = oracle::random_symbols(rng, c, n);
    for (std::size_t k = 0; k < n; ++k) {
        if (plan.is_pilot(k)) s[k] = plan.pilot_at(k);
    }
    return s;
}

}  // namespace

TEST(KabschRotation, NoiselessRecovery)
{
    Rng rng(2);
    const Constellation c(16);
    for (int i = 0; i < 100; ++i) {
        const Mat2 q = haar_unitary(rng);
        const auto s = oracle::random_symbols(rng, c, 24);
        EXPECT_LE(frob_norm(kabsch_rotation(transmit(q, s), s, Mat2::identity()) - q), 1e-10);
    }
}

TEST(KabschRotation, PolarFactorExamples)
{
    const std::vector<Vec2> s{{1.0, 0.0}, {0.0, 1.0}};
    const Mat2 m1 = Mat2::diag(2.0, 1.0);
    const std::vector<Vec2> x1{m1.col(0), m1.col(1)};
    EXPECT_LE(frob_norm(kabsch_rotation(x1, s, Mat2::identity()) - Mat2::identity()), 1e-14);
    const Mat2 m2{0.0, 2.0, 1.0, 0.0};
    const std::vector<Vec2> x2{m2.col(0), m2.col(1)};
    const Mat2 expect{0.0, 1.0, 1.0, 0.0};
    EXPECT_LE(frob_norm(kabsch_rotation(x2, s, Mat2::identity()) - expect), 1e-14);
}

TEST(KabschRotation, ProcrustesOptimality)
{
    EXPECT_EQ(oracle::procrustes_violations(100, 1000, 77), 0u);
}

TEST(KabschRotation, RejectsBadBlocks)
{
    const std::vector<Vec2> a(4), b(3), one(1);
    EXPECT_THROW(kabsch_rotation(a, b, Mat2::identity()), LengthMismatch);
    EXPECT_THROW(kabsch_rotation(one, one, Mat2::identity()), std::invalid_argument);
}

TEST(SwLsUpdate, NoiselessIdentities)
{
    Rng rng(3);
    const Constellation c(16);
    for (int i = 0; i < 100; ++i) {
        const Mat2 h = oracle::random_matrix(rng);
        const auto s = oracle::random_symbols(rng, c, 24);
        const auto x = transmit(h, s);
        EXPECT_LE(frob_norm(sw_ls_update(x, s, Mat2::identity()) - h), 1e-10 * frob_norm(h));
        EXPECT_LE(frob_norm(sw_ls_update(x, s, h) - Mat2::identity()), 1e-9);
    }
}

TEST(SwLsUpdate, RankOneWindowIsSingular)
{
    const Constellation c(16);
    const std::vector<Vec2> s(24, Vec2{c.point(5), c.point(9)});
    EXPECT_THROW(sw_ls_update(s, s, Mat2::identity()), SingularMatrix);
}

TEST(SwLsUpdate, ResidualOptimality) { EXPECT_EQ(oracle::ls_violations(10000, 78), 0u); }

TEST(CoarseEstimate, ExactOnNoiselessPilots)
{
    Rng rng(4);
    const FramePlan plan = make_frame_plan(16, 1016, Constellation(4), rng);
    const Mat2 h = oracle::random_matrix(rng);
    EXPECT_LE(frob_norm(ls_coarse_estimate(transmit(h, plan.pilots), plan) - h), 1e-12 * frob_norm(h));
    EXPECT_LE(frob_norm(ls_coarse_estimate(plan.pilots, plan) - Mat2::identity()), 1e-15);
    EXPECT_THROW(ls_coarse_estimate(std::vector<Vec2>(15), plan), LengthMismatch);
}

TEST(CoarseEstimate, ErrorVarianceMatchesPilotEnergy)
{
    const auto v = oracle::coarse_estimate_variance(10000, 79);
    EXPECT_NEAR(v.ratio(), 1.0, 0.1);
}

TEST(KabschTracker, StaticChannelFixedPoint)
{
    Rng rng(5);
    const Constellation c(16);
    const Mat2 h = haar_unitary(rng);
    KabschTracker t(c, {24, 6}, h);
    const auto s = oracle::random_symbols(rng, c, 5000);
    const auto out = run(t, transmit(h, s));
    EXPECT_EQ(out, s);
    EXPECT_LE(frob_norm(t.channel_estimate() - h), 1e-9);
}

TEST(KabschTracker, EmitsOneDecisionPerSample)
{
    const Constellation c(16);
    Rng rng(6);
    for (std::size_t n : {0u, 5u, 24u, 25u, 100u, 1001u}) {
        KabschTracker t(c, {24, 6});
        EXPECT_EQ(run(t, oracle::random_symbols(rng, c, n)).size(), n);
    }
    EXPECT_THROW(KabschTracker(c, {24, 25}), std::invalid_argument);
    EXPECT_THROW(KabschTracker(c, {1, 1}), std::invalid_argument);
}

TEST(KabschTracker, UpdateRateFollowsStride)
{
    const Constellation c(16);
    Rng rng(7);
    const auto x = oracle::random_symbols(rng, c, 48000);
    KabschTracker sw(c, {24, 6});
    KabschTracker dd = make_dd_kabsch(c);
    run(sw, x);
    run(dd, x);
    EXPECT_EQ(sw.updates(), (48000u - 24u) / 6u + 1u);
    EXPECT_EQ(dd.updates(), 48000u / 16u);
}

TEST(KabschTracker, BlockVariantMatchesSlidingWithFullStride)
{
    const Constellation c(16);
    Rng rng(8);
    Channel ch({20, 3.57e-5, 0.0, {}, 8});
    std::vector<Vec2> x;
    const NoiseConfig noise{18.0, 1.0};
    for (const Vec2& s : oracle::random_symbols(rng, c, 20000)) {
        x.push_back(ch.transmit(s, noise, rng));
        ch.step();
    }
    KabschTracker a(c, {16, 16});
    KabschTracker b = make_dd_kabsch(c, 16);
    EXPECT_EQ(run(a, x), run(b, x));
}

TEST(KabschTracker, TracksSlowDrift)
{
    const Constellation c(16);
    Rng rng(9);
    Channel ch({20, 1e-6, 0.0, {}, 9});
    const auto s = oracle::random_symbols(rng, c, 20000);
    std::vector<Vec2> x;
    for (const Vec2& v : s) {
        x.push_back(ch.transmit(v, NoiseConfig::noiseless(), rng));
        ch.step();
    }
    KabschTracker t(c, {24, 6}, ch.matrix());
    run(t, x);
    // the estimate ends close to the channel up to a quadrant phase and swap
    const Mat2 r = adjoint(t.channel_estimate()) * ch.matrix();
    const double diag = std::abs(r.m00) + std::abs(r.m11);
    const double off = std::abs(r.m01) + std::abs(r.m10);
    EXPECT_GT(std::max(diag, off), 1.98);
}

TEST(SwLsTracker, NonUnitaryStaticChannelNoiseless)
{
    Rng rng(10);
    const Constellation c(16);
    const FramePlan plan = make_frame_plan(16, 1016, Constellation(4), rng);
    const Mat2 h = Mat2::diag(std::sqrt(1.3), std::sqrt(0.7));
    const auto s = framed(rng, c, plan, 5000);
    SwLsTracker t(c, plan);
    const auto out = run(t, transmit(h, s));
    ASSERT_EQ(out.size(), s.size());
    std::size_t errors = 0;
    for (std::size_t k = plan.k_s; k < s.size(); ++k) errors += out[k] != s[k];
    EXPECT_EQ(errors, 0u);
    EXPECT_LE(frob_norm(t.channel_estimate() - h), 1e-9);
}

TEST(SwLsTracker, SkipsSingularUpdates)
{
    Rng rng(11);
    const Constellation c(16);
    const FramePlan plan = make_frame_plan(16, 1016, Constellation(4), rng);
    SwLsTracker t(c, plan);
    const auto out = run(t, std::vector<Vec2>(200));
    EXPECT_EQ(out.size(), 200u);
    EXPECT_GT(t.skipped_updates(), 0u);
    EXPECT_EQ(t.updates(), 0u);
    EXPECT_EQ(t.channel_estimate(), Mat2::identity());
}

TEST(HybridTracker, StaticChannelNoiselessIsErrorFree)
{
    Rng rng(12);
    const Constellation c(16);
    const FramePlan plan = make_frame_plan(16, 1016, Constellation(4), rng);
    const Mat2 h = Mat2{0.9, C64{0.2, 0.1}, C64{-0.3, 0.4}, 0.7};
    const auto s = framed(rng, c, plan, 4000);
    const auto x = transmit(h, s);

    HybridTracker<KabschTracker> kab(plan, KabschTracker(c));
    EXPECT_EQ(run(kab, x), s);
    EXPECT_LE(frob_norm(kab.coarse_estimate() - h), 1e-12);
    EXPECT_EQ(kab.refreshes(), 4u);

    HybridTracker<DdLmsEqualizer> lms(plan, DdLmsEqualizer(c));
    EXPECT_EQ(run(lms, x), s);
}

TEST(HybridTracker, KeepsPreviousEstimateWhenPilotsAreSingular)
{
    Rng rng(13);
    const Constellation c(16);
    const FramePlan plan = make_frame_plan(16, 100, Constellation(4), rng);
    const Mat2 h = Mat2::diag(1.2, 0.8);
    auto s = framed(rng, c, plan, 300);
    auto x = transmit(h, s);
    for (int k = 100; k < 116; ++k) x[k] = Vec2{};  // second frame's pilots lost
    HybridTracker<KabschTracker> t(plan, KabschTracker(c));
    const auto out = run(t, x);
    EXPECT_EQ(t.refreshes(), 2u);
    EXPECT_EQ(t.rejected_refreshes(), 1u);
    for (std::size_t k = 116; k < 200; ++k) EXPECT_EQ(out[k], s[k]);
}

TEST(Mcma, DispersionConstant)
{
    const Constellation c(16);
    EXPECT_NEAR(McmaEqualizer(c).dispersion_constant(), 0.82, 1e-14);
}

TEST(Mcma, IdentityIsNearFixedPoint)
{
    const Constellation c(16);
    Rng rng(14);
    McmaEqualizer eq(c, {1e-3, 1e-3, 1});
    run(eq, oracle::random_symbols(rng, c, 10000));
    EXPECT_LE(frob_norm(eq.taps() - Mat2::identity()), 0.05);
}

TEST(Mcma, DivergenceRaisesTapBlowup)
{
    const Constellation c(16);
    McmaEqualizer eq(c, {1.0, 1.0, 1});
    std::vector<Vec2> out;
    EXPECT_THROW(
        {
            for (int k = 0; k < 1000; ++k) eq.push(Vec2{C64{5.0, 5.0}, C64{-5.0, 5.0}}, {}, out);
        },
        TapBlowup);
}

TEST(DdLms, IdentityIsExactFixedPoint)
{
    const Constellation c(16);
    Rng rng(15);
    DdLmsEqualizer eq(c);
    run(eq, oracle::random_symbols(rng, c, 5000));
    EXPECT_EQ(eq.taps(), Mat2::identity());
}

TEST(DdLms, ConvergesLocally)
{
    const Constellation c(16);
    Rng rng(16);
    const Mat2 h = haar_unitary(rng) * Mat2::diag(1.1, 0.9);
    const Mat2 target = inv2(h);
    const Mat2 w0 = target + C64{0.02, 0.0} * oracle::random_matrix(rng);
    DdLmsEqualizer eq(c, {1e-2, 1e-2, 1}, w0);
    const auto x = transmit(h, oracle::random_symbols(rng, c, 1000));
    std::vector<Vec2> out;
    double prev = frob_norm(eq.taps() - target);
    const double start = prev;
    for (std::size_t k = 0; k < x.size(); ++k) {
        eq.push(x[k], {}, out);
        if ((k + 1) % 250 == 0) {
            const double cur = frob_norm(eq.taps() - target);
            EXPECT_LT(cur, prev);
            prev = cur;
        }
    }
    EXPECT_LT(prev, 0.1 * start);
}

TEST(StepSchedule, TwoStages)
{
    const StepSchedule s{1e-2, 1e-3, 100};
    EXPECT_EQ(s.at(0), 1e-2);
    EXPECT_EQ(s.at(99), 1e-2);
    EXPECT_EQ(s.at(100), 1e-3);
    EXPECT_THROW((StepSchedule{1e-3, 1e-2, 1}.validate()), std::invalid_argument);
    EXPECT_THROW((StepSchedule{1e-3, 0.0, 1}.validate()), std::invalid_argument);
}

TEST(MlDetect, MatchesBruteForceOverAllPairs)
{
    const Constellation c(16);
    Rng rng(17);
    for (int i = 0; i < 2000; ++i) {
        const Mat2 h = oracle::random_matrix(rng);
        const Vec2 s = oracle::random_symbols(rng, c, 1)[0];
        const Vec2 x = h * s + Vec2{oracle::cgauss(rng, 0.4), oracle::cgauss(rng, 0.4)};
        double best = std::numeric_limits<double>::infinity();
        Vec2 arg{};
        for (C64 a : c.points()) {
            for (C64 b : c.points()) {
                const double m = norm2(x - h * Vec2{a, b});
                if (m < best) {
                    best = m;
                    arg = {a, b};
                }
            }
        }
        const Vec2 ml = ml_detect(x, h, c);
        EXPECT_NEAR(norm2(x - h * ml), best, 1e-12 * (1.0 + best));
        if (ml != arg) {
            EXPECT_NEAR(norm2(x - h * ml), best, 1e-12);
        }
    }
}

TEST(MlDetect, UnitaryChannelEqualsZeroForcing)
{
    const Constellation c(16);
    Rng rng(18);
    for (int i = 0; i < 2000; ++i) {
        const Mat2 h = haar_unitary(rng);
        const Vec2 x = h * oracle::random_symbols(rng, c, 1)[0] + Vec2{oracle::cgauss(rng, 0.2), oracle::cgauss(rng, 0.2)};
        EXPECT_EQ(ml_detect(x, h, c), detect(x, h, c));
    }
}

TEST(GenieMl, NoiselessExactAndNeedsChannel)
{
    const Constellation c(16);
    Rng rng(19);
    const Mat2 h = oracle::random_matrix(rng);
    const auto s = oracle::random_symbols(rng, c, 500);
    GenieMl ml(c);
    EXPECT_EQ(run(ml, transmit(h, s), &h), s);
    std::vector<Vec2> out;
    EXPECT_THROW(ml.push(s[0], {}, out), std::invalid_argument);
}

TEST(GenieSwap, Examples)
{
    const Constellation c(16);
    Rng rng(20);
    const auto truth = oracle::random_symbols(rng, c, 100);
    auto r = genie_swap_resolve(truth, truth);
    EXPECT_FALSE(r.swapped);
    EXPECT_EQ(r.errors, 0u);

    std::vector<Vec2> sw(truth.size());
    for (std::size_t k = 0; k < truth.size(); ++k) sw[k] = swap_polarizations(truth[k]);
    sw[3].a = c.point(c.index_of(sw[3].a) ^ 1);
    r = genie_swap_resolve(sw, truth);
    EXPECT_TRUE(r.swapped);
    EXPECT_EQ(r.errors, 1u);
    EXPECT_EQ(r.corrected[0], truth[0]);

    // one position right in identity, one right in swap: tie keeps identity
    const std::vector<Vec2> t2{{c.point(0), c.point(1)}, {c.point(2), c.point(3)}};
    const std::vector<Vec2> d2{{c.point(0), c.point(1)}, {c.point(3), c.point(2)}};
    r = genie_swap_resolve(d2, t2);
    EXPECT_FALSE(r.swapped);
    EXPECT_EQ(r.errors, 2u);
}

TEST(GenieSwap, DifferentialCarriesDecoderState)
{
    const Constellation c(16);
    Rng rng(21);
    const auto payload = oracle::random_symbols(rng, c, 200);
    const auto tx = diff_encode(payload, c);
    std::vector<Vec2> rx(tx.size());
    for (std::size_t k = 0; k < tx.size(); ++k) rx[k] = kJ * (k >= 100 ? swap_polarizations(tx[k]) : tx[k]);
    DiffDecoder dec(c);
    using Block = std::span<const Vec2>;
    const auto a = genie_swap_resolve_differential(Block(rx.data(), 100), Block(payload.data(), 100), dec);
    const auto b = genie_swap_resolve_differential(Block(rx.data() + 100, 100), Block(payload.data() + 100, 100), dec);
    EXPECT_FALSE(a.swapped);
    EXPECT_TRUE(b.swapped);
    EXPECT_LE(a.errors, 2u);  // first symbol lacks a phase reference
    // the swap boundary costs at most one symbol per polarization
    EXPECT_LE(b.errors, 2u);
}
