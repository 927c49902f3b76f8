// Monte Carlo comparisons between trackers. Slower than the unit suites.

#include <gtest/gtest.h>

#include "poltrack/experiment_config.hpp"
#include "poltrack/sim.hpp"

using namespace poltrack;

namespace {

ExperimentSpec base(int trials)
{
    ExperimentSpec s;
    s.trials = trials;
    s.symbols_per_trial = 100000;
    s.master_seed = 99;
    return s;
}

const SweepRow& row(const SweepResult& r, TrackerKind k)
{
    for (const auto& x : r.rows) {
        if (x.tracker == k) return x;
    }
    throw std::logic_error("missing row");
}

}  // namespace

TEST(Statistical, SwKabschNearKnownChannelAtModerateDrift)
{
    ExperimentSpec s = base(20);
    s.trackers = {TrackerKind::Ml, TrackerKind::SwKabsch};
    s.drift_grid = {1e-6};
    const SweepResult r = run_sweep(s);
    EXPECT_LE(row(r, TrackerKind::SwKabsch).ser, 2.0 * row(r, TrackerKind::Ml).ser);
}

TEST(Statistical, McmaFallsBehindSwKabsch)
{
    ExperimentSpec s = base(20);
    s.trackers = {TrackerKind::Mcma, TrackerKind::SwKabsch};
    s.drift_grid = {3.57e-6};
    s.settings.mu_grid = true;
    const SweepResult r = run_sweep(s);
    EXPECT_GT(row(r, TrackerKind::Mcma).ser, row(r, TrackerKind::SwKabsch).ser);
}

TEST(Statistical, HybridKabschBeatsHybridLmsAtLowPdl)
{
    ExperimentSpec s = base(20);
    s.trackers = {TrackerKind::LsDdlms, TrackerKind::LsSwKabsch};
    s.phi_grid_db = {0.25};
    s.snr_grid_db = {reference_snr_db(0.25)};
    s.drift_grid = {3.57e-5};
    s.settings.mu_grid = true;
    const SweepResult r = run_sweep(s);
    EXPECT_LT(row(r, TrackerKind::LsSwKabsch).ci95_high, row(r, TrackerKind::LsDdlms).ci95_low);
}

TEST(Statistical, SerGrowsWithDrift)
{
    ExperimentSpec s = base(8);
    s.trackers = {TrackerKind::Ml, TrackerKind::DdKabsch, TrackerKind::SwKabsch};
    s.drift_grid = log_grid(1e-8, 1e-3, 6);
    const SweepResult r = run_sweep(s);
    for (TrackerKind k : s.trackers) {
        const SweepRow* prev = nullptr;
        for (double d : s.drift_grid) {
            const SweepRow* cur = r.find(k, 18.0, d, 0.0);
            ASSERT_NE(cur, nullptr);
            if (prev) {
                EXPECT_GE(cur->ci95_high, prev->ci95_low) << tracker_name(k) << " at drift " << d;
            }
            prev = cur;
        }
    }
}

TEST(Statistical, SerFallsWithSnrAndMlIsALowerBound)
{
    // Blind unitary trackers floor under this much PDL, so only the
    // pilot-aided ones are expected to improve with SNR here.
    ExperimentSpec s = base(6);
    s.trackers = {TrackerKind::Ml, TrackerKind::SwLs, TrackerKind::LsSwKabsch};
    s.phi_grid_db = {0.70};
    s.drift_grid = {3.57e-6};
    s.snr_grid_db = {14, 16, 18, 20};
    const SweepResult r = run_sweep(s);
    for (TrackerKind k : s.trackers) {
        const SweepRow* prev = nullptr;
        for (double snr : s.snr_grid_db) {
            const SweepRow* cur = r.find(k, snr, 3.57e-6, 0.70);
            ASSERT_NE(cur, nullptr);
            if (prev) {
                EXPECT_LE(cur->ci95_low, prev->ci95_high) << tracker_name(k) << " at " << snr << " dB";
            }
            prev = cur;
        }
    }
    for (double snr : s.snr_grid_db) {
        const SweepRow* ml = r.find(TrackerKind::Ml, snr, 3.57e-6, 0.70);
        for (TrackerKind k : s.trackers) {
            const SweepRow* other = r.find(k, snr, 3.57e-6, 0.70);
            const double width = other->ci95_high - other->ci95_low;
            EXPECT_LE(ml->ser, other->ser + 2.0 * width) << tracker_name(k) << " at " << snr << " dB";
        }
    }
}
