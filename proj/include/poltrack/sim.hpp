#pragma once

// Monte Carlo experiment engine: seeded trials, sweeps over (SNR, drift, PDL)
// cells, SER pooling with Wilson intervals, and CSV output.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "poltrack/channel.hpp"
#include "poltrack/random.hpp"
#include "poltrack/signal.hpp"
#include "poltrack/trackers.hpp"

namespace poltrack {

enum class TrackerKind { Ml, Mcma, DdKabsch, SwKabsch, SwLs, LsDdlms, LsSwKabsch };

inline constexpr std::array kAllTrackers{TrackerKind::Ml,   TrackerKind::Mcma,    TrackerKind::DdKabsch,
                                         TrackerKind::SwKabsch, TrackerKind::SwLs, TrackerKind::LsDdlms,
                                         TrackerKind::LsSwKabsch};

inline std::string_view tracker_name(TrackerKind k)
{
    switch (k) {
    case TrackerKind::Ml: return "ml";
    case TrackerKind::Mcma: return "mcma";
    case TrackerKind::DdKabsch: return "dd-kabsch";
    case TrackerKind::SwKabsch: return "sw-kabsch";
    case TrackerKind::SwLs: return "sw-ls";
    case TrackerKind::LsDdlms: return "ls-ddlms";
    case TrackerKind::LsSwKabsch: return "ls-sw-kabsch";
    }
    return "?";
}

inline std::optional<TrackerKind> parse_tracker(std::string_view name)
{
    for (TrackerKind k : kAllTrackers) {
        if (tracker_name(k) == name) return k;
    }
    return std::nullopt;
}

/// Pilot-aided trackers see framed, non-differential streams; the others see
/// differentially encoded payload without pilots.
inline bool is_pilot_aided(TrackerKind k)
{
    return k == TrackerKind::SwLs || k == TrackerKind::LsDdlms || k == TrackerKind::LsSwKabsch;
}

inline bool uses_step_size(TrackerKind k) { return k == TrackerKind::Mcma || k == TrackerKind::LsDdlms; }

struct TrackerSettings {
    WindowParams window{24, 6};
    int dd_block = 16;
    StepSchedule mu{};
    /// Evaluate every (mu1 >= mu2) pair of mu_grid_values and report the best.
    bool mu_grid = false;
    std::vector<double> mu_grid_values{1e-4, 3e-4, 1e-3, 3e-3, 1e-2};

    std::vector<StepSchedule> schedules() const
    {
        if (!mu_grid) return {mu};
        std::vector<StepSchedule> out;
        for (double m1 : mu_grid_values) {
            for (double m2 : mu_grid_values) {
                if (m2 <= m1) out.push_back({m1, m2, mu.stage_len});
            }
        }
        return out;
    }
};

struct ExperimentSpec {
    int n_segments = 20;
    std::vector<double> phi_grid_db{0.0};
    std::vector<double> snr_grid_db{18.0};
    std::vector<double> drift_grid{1e-8};
    std::vector<TrackerKind> trackers{TrackerKind::Ml};
    TrackerSettings settings{};
    int constellation_order = 16;
    int k_p = 16;
    int k_s = 1016;
    int trials = 20;
    std::uint64_t symbols_per_trial = 100000;
    std::uint64_t master_seed = 1;
    std::uint64_t skip_blind = 10000;
    std::uint64_t skip_pilot = 0;

    void validate() const
    {
        if (trials < 1) throw std::invalid_argument("experiment: trials must be >= 1");
        if (n_segments < 1) throw std::invalid_argument("experiment: n_segments must be >= 1");
        if (phi_grid_db.empty() || snr_grid_db.empty() || drift_grid.empty() || trackers.empty()) {
            throw std::invalid_argument("experiment: grids and tracker list must be non-empty");
        }
        for (double d : drift_grid) {
            if (!(d >= 0.0)) throw std::invalid_argument("experiment: drift values must be >= 0");
        }
        for (double p : phi_grid_db) {
            if (!(p >= 0.0)) throw std::invalid_argument("experiment: phi values must be >= 0");
        }
        for (TrackerKind k : trackers) {
            if (symbols_per_trial <= skip_for(k)) {
                throw std::invalid_argument("experiment: symbols_per_trial must exceed the skip length");
            }
        }
        if (k_p <= 2 || k_p % 2 != 0 || k_p > k_s) throw InvalidFrame("experiment: invalid frame parameters");
        settings.window.validate();
        settings.mu.validate();
        if (settings.dd_block < 2) throw std::invalid_argument("experiment: dd_block must be >= 2");
    }

    std::uint64_t skip_for(TrackerKind k) const
    {
        if (k == TrackerKind::Ml) return 0;
        return is_pilot_aided(k) ? skip_pilot : skip_blind;
    }
};

/// One (PDL, drift, SNR) point of a sweep.
struct Cell {
    std::size_t index = 0;
    double phi_db = 0.0;
    double drift = 0.0;
    double snr_db = 0.0;
};

inline std::vector<Cell> enumerate_cells(const ExperimentSpec& spec)
{
    std::vector<Cell> cells;
    for (double phi : spec.phi_grid_db) {
        for (double drift : spec.drift_grid) {
            for (double snr : spec.snr_grid_db) cells.push_back({cells.size(), phi, drift, snr});
        }
    }
    return cells;
}

/// Seed of one trial; trackers in the same cell share it, so they see the same
/// channel, noise and payload realizations.
inline std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t cell_index, std::uint64_t trial_index)
{
    return derive_seed({master_seed, static_cast<std::uint64_t>(cell_index), trial_index});
}

enum class StreamKind { Differential, Framed };

/// Transmitted, received and true-channel sequences of one trial.
struct TrialStream {
    StreamKind kind = StreamKind::Differential;
    std::vector<Vec2> payload;  // ground truth the SER is counted against
    std::vector<Vec2> tx;       // channel input
    std::vector<Vec2> rx;
    std::vector<Mat2> h;        // H_k, only when requested
};

namespace stream_id {
inline constexpr std::uint64_t kChannel = 1, kNoise = 2, kPayload = 3, kPilots = 4;
}

/// The fixed pilot matrix of an experiment, drawn once per master seed.
inline FramePlan experiment_frame_plan(const ExperimentSpec& spec)
{
    Rng rng(derive_seed({spec.master_seed, stream_id::kPilots}));
    return make_frame_plan(spec.k_p, spec.k_s, Constellation(4), rng, 1.0);
}

inline TrialStream generate_stream(const ExperimentSpec& spec, const Cell& cell, std::uint64_t seed, StreamKind kind,
                                   const Constellation& cset, const FramePlan& plan, bool keep_h)
{
    const std::uint64_t n = spec.symbols_per_trial;
    ChannelConfig cc;
    cc.n_segments = spec.n_segments;
    cc.dp_tot_times_T = cell.drift;
    cc.phi_db = cell.phi_db;
    cc.seed = derive_seed({seed, stream_id::kChannel});
    Channel channel(cc);
    Rng noise_rng(derive_seed({seed, stream_id::kNoise}));
    Rng payload_rng(derive_seed({seed, stream_id::kPayload}));
    std::uniform_int_distribution<int> pick(0, cset.order() - 1);
    const NoiseConfig noise{cell.snr_db, 1.0};

    TrialStream ts;
    ts.kind = kind;
    ts.payload.resize(n);
    ts.tx.resize(n);
    ts.rx.resize(n);
    if (keep_h) ts.h.resize(n);
    DiffEncoder enc(cset);
    for (std::uint64_t k = 0; k < n; ++k) {
        const int ia = pick(payload_rng);
        const int ib = pick(payload_rng);
        ts.payload[k] = {cset.point(ia), cset.point(ib)};
        if (kind == StreamKind::Differential) {
            ts.tx[k] = enc.encode(ts.payload[k]);
        } else {
            if (plan.is_pilot(k)) ts.payload[k] = plan.pilot_at(k);
            ts.tx[k] = ts.payload[k];
        }
        if (keep_h) ts.h[k] = channel.matrix();
        ts.rx[k] = channel.transmit(ts.tx[k], noise, noise_rng);
        channel.step();
    }
    return ts;
}

struct TrialOutcome {
    SerCount ser{};
    bool failed = false;
};

/// Per-stride channel-estimate telemetry: (k, tracker, estimate).
using TelemetrySink = std::function<void(std::uint64_t, TrackerKind, const Mat2&)>;

namespace detail {

using AnyTracker = std::variant<GenieMl, McmaEqualizer, KabschTracker, SwLsTracker, HybridTracker<DdLmsEqualizer>,
                                HybridTracker<KabschTracker>>;

inline AnyTracker make_tracker(TrackerKind kind, const TrackerSettings& s, const StepSchedule& mu,
                               const Constellation& cset, const FramePlan& plan)
{
    switch (kind) {
    case TrackerKind::Ml: return GenieMl(cset);
    case TrackerKind::Mcma: return McmaEqualizer(cset, mu);
    case TrackerKind::DdKabsch: return make_dd_kabsch(cset, s.dd_block);
    case TrackerKind::SwKabsch: return KabschTracker(cset, s.window);
    case TrackerKind::SwLs: return SwLsTracker(cset, plan, s.window);
    case TrackerKind::LsDdlms: return HybridTracker<DdLmsEqualizer>(plan, DdLmsEqualizer(cset, mu));
    case TrackerKind::LsSwKabsch: return HybridTracker<KabschTracker>(plan, KabschTracker(cset, s.window));
    }
    throw std::logic_error("unknown tracker");
}

}  // namespace detail

/// Run one tracker over a pre-generated stream: stream the samples, resolve the
/// polarization swap per k_s block with the genie, differentially decode when
/// the stream is differential, and count errors past `skip`.
inline TrialOutcome evaluate_tracker(TrackerKind kind, const TrackerSettings& settings, const StepSchedule& mu,
                                     const TrialStream& ts, const Constellation& cset, const FramePlan& plan,
                                     std::uint64_t skip, const TelemetrySink* telemetry = nullptr,
                                     std::uint64_t telemetry_every = 6)
{
    if (kind == TrackerKind::Ml && ts.h.size() != ts.rx.size()) {
        throw std::invalid_argument("evaluate_tracker: genie ML needs the true channel sequence");
    }
    const std::size_t n = ts.rx.size();
    std::vector<Vec2> decided;
    decided.reserve(n);
    TrialOutcome outcome;
    try {
        auto tracker = detail::make_tracker(kind, settings, mu, cset, plan);
        std::visit(
            [&](auto& t) {
                for (std::size_t k = 0; k < n; ++k) {
                    const SymbolContext ctx{k, ts.h.empty() ? nullptr : &ts.h[k]};
                    t.push(ts.rx[k], ctx, decided);
                    if (telemetry != nullptr && (k + 1) % telemetry_every == 0) (*telemetry)(k + 1, kind, t.channel_estimate());
                }
                t.finish(decided);
            },
            tracker);
    } catch (const TapBlowup&) {
        outcome.failed = true;
        return outcome;
    }
    if (decided.size() != n) throw std::logic_error("tracker emitted a different number of decisions than it consumed");

    const std::size_t block = static_cast<std::size_t>(plan.k_s);
    std::vector<Vec2> resolved;
    resolved.reserve(n);
    DiffDecoder decoder(cset);
    for (std::size_t start = 0; start < n; start += block) {
        const std::size_t len = std::min(block, n - start);
        const std::span<const Vec2> d(decided.data() + start, len);
        const std::span<const Vec2> truth(ts.payload.data() + start, len);
        SwapResolution r = ts.kind == StreamKind::Differential
                               ? genie_swap_resolve_differential(d, truth, decoder)
                               : genie_swap_resolve(d, truth);
        resolved.insert(resolved.end(), r.corrected.begin(), r.corrected.end());
    }
    outcome.ser = count_ser(resolved, ts.payload, skip, ts.kind == StreamKind::Framed ? &plan : nullptr);
    return outcome;
}

/// One seeded trial of one tracker in one cell.
inline TrialOutcome run_trial(const ExperimentSpec& spec, const Cell& cell, TrackerKind kind, std::uint64_t trial_index,
                              std::optional<StepSchedule> mu = std::nullopt, const TelemetrySink* telemetry = nullptr)
{
    spec.validate();
    const Constellation cset(spec.constellation_order);
    const FramePlan plan = experiment_frame_plan(spec);
    const StreamKind sk = is_pilot_aided(kind) ? StreamKind::Framed : StreamKind::Differential;
    const TrialStream ts = generate_stream(spec, cell, trial_seed(spec.master_seed, cell.index, trial_index), sk, cset,
                                           plan, kind == TrackerKind::Ml);
    return evaluate_tracker(kind, spec.settings, mu.value_or(spec.settings.mu), ts, cset, plan, spec.skip_for(kind),
                            telemetry);
}

/// Wilson score interval for a binomial proportion.
inline std::pair<double, double> wilson_ci(std::uint64_t errors, std::uint64_t counted, double level = 0.95)
{
    if (counted == 0) throw std::invalid_argument("wilson_ci: counted must be >= 1");
    const boost::math::normal_distribution<double> nd;
    const double z = boost::math::quantile(nd, 0.5 + 0.5 * level);
    const double n = static_cast<double>(counted);
    const double p = static_cast<double>(errors) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    // The score interval touches 0 (or 1) exactly when no (or every) symbol is in error.
    const double lo = errors == 0 ? 0.0 : std::max(0.0, center - half);
    const double hi = errors == counted ? 1.0 : std::min(1.0, center + half);
    return {lo, hi};
}

struct SweepRow {
    TrackerKind tracker{};
    double snr_db = 0.0;
    double dp_tot_t = 0.0;
    double phi_db = 0.0;
    int n_segments = 0;
    int trials = 0;
    std::uint64_t counted_symbols = 0;
    std::uint64_t errors = 0;
    double ser = 0.0;
    double ci95_low = 0.0;
    double ci95_high = 0.0;
    int failed_trials = 0;
    /// Step sizes behind this row (gradient trackers only).
    std::optional<StepSchedule> mu{};
};

struct SweepResult {
    std::vector<SweepRow> rows;

    const SweepRow* find(TrackerKind t, double snr_db, double drift, double phi_db) const
    {
        for (const auto& r : rows) {
            if (r.tracker == t && r.snr_db == snr_db && r.dp_tot_t == drift && r.phi_db == phi_db) return &r;
        }
        return nullptr;
    }
};

inline constexpr std::string_view kSweepCsvHeader =
    "tracker,snr_db,dp_tot_t,phi_db,n_segments,trials,counted_symbols,errors,ser,ci95_low,ci95_high,failed_trials";

inline void write_sweep_csv(std::ostream& os, const SweepResult& result)
{
    os << kSweepCsvHeader << '\n';
    char buf[512];
    for (const auto& r : result.rows) {
        std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g,%.10g,%d,%d,%llu,%llu,%.10g,%.10g,%.10g,%d\n",
                      std::string(tracker_name(r.tracker)).c_str(), r.snr_db, r.dp_tot_t, r.phi_db, r.n_segments,
                      r.trials, static_cast<unsigned long long>(r.counted_symbols),
                      static_cast<unsigned long long>(r.errors), r.ser, r.ci95_low, r.ci95_high, r.failed_trials);
        os << buf;
    }
}

/// Counted symbols of one successful trial: both polarizations of every
/// non-skipped payload position.
inline std::uint64_t counted_per_trial(const ExperimentSpec& spec, TrackerKind kind)
{
    const std::uint64_t skip = spec.skip_for(kind);
    std::uint64_t positions = spec.symbols_per_trial - skip;
    if (is_pilot_aided(kind)) {
        const FramePlan layout{spec.k_p, spec.k_s, {}, 0.0};
        for (std::uint64_t k = skip; k < spec.symbols_per_trial; ++k) positions -= layout.is_pilot(k);
    }
    return 2 * positions;
}

struct SweepOptions {
    unsigned workers = 1;
    /// Per-cell summary lines, when non-null.
    std::ostream* progress = nullptr;
};

/// Full cross-product of cells and trackers. Each (cell, trial) stream is
/// generated once and replayed through every tracker and step-size variant.
/// Results depend only on the experiment settings, never on the worker count or scheduling.
inline SweepResult run_sweep(const ExperimentSpec& spec, const SweepOptions& opt = {})
{
    spec.validate();
    const Constellation cset(spec.constellation_order);
    const FramePlan plan = experiment_frame_plan(spec);
    const std::vector<Cell> cells = enumerate_cells(spec);

    struct Variant {
        TrackerKind kind;
        StepSchedule mu;
    };
    std::vector<Variant> variants;
    std::vector<std::pair<std::size_t, std::size_t>> variant_range;  // per tracker: [begin, end)
    for (TrackerKind k : spec.trackers) {
        const std::size_t begin = variants.size();
        if (uses_step_size(k)) {
            for (const auto& s : spec.settings.schedules()) variants.push_back({k, s});
        } else {
            variants.push_back({k, spec.settings.mu});
        }
        variant_range.emplace_back(begin, variants.size());
    }
    const bool any_blind = std::any_of(spec.trackers.begin(), spec.trackers.end(), [](auto k) { return !is_pilot_aided(k); });
    const bool any_pilot = std::any_of(spec.trackers.begin(), spec.trackers.end(), [](auto k) { return is_pilot_aided(k); });
    const bool any_ml = std::find(spec.trackers.begin(), spec.trackers.end(), TrackerKind::Ml) != spec.trackers.end();

    const std::size_t trials = static_cast<std::size_t>(spec.trials);
    const std::size_t units = cells.size() * trials;
    std::vector<TrialOutcome> outcomes(units * variants.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};

    auto work = [&] {
        try {
            for (std::size_t u = next++; u < units && !failed; u = next++) {
                const Cell& cell = cells[u / trials];
                const std::uint64_t seed = trial_seed(spec.master_seed, cell.index, u % trials);
                std::optional<TrialStream> blind, framed;
                if (any_blind) blind = generate_stream(spec, cell, seed, StreamKind::Differential, cset, plan, any_ml);
                if (any_pilot) framed = generate_stream(spec, cell, seed, StreamKind::Framed, cset, plan, false);
                for (std::size_t v = 0; v < variants.size(); ++v) {
                    const TrackerKind k = variants[v].kind;
                    const TrialStream& ts = is_pilot_aided(k) ? *framed : *blind;
                    outcomes[u * variants.size() + v] =
                        evaluate_tracker(k, spec.settings, variants[v].mu, ts, cset, plan, spec.skip_for(k));
                }
            }
        } catch (...) {
            if (!failed.exchange(true)) error = std::current_exception();
        }
    };
    const unsigned w = std::max(1u, opt.workers);
    if (w == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < w; ++i) pool.emplace_back(work);
    }
    if (error) std::rethrow_exception(error);

    SweepResult result;
    for (const Cell& cell : cells) {
        for (std::size_t t = 0; t < spec.trackers.size(); ++t) {
            const TrackerKind kind = spec.trackers[t];
            SweepRow best;
            bool have = false;
            double best_ser = 0.0;
            for (std::size_t v = variant_range[t].first; v < variant_range[t].second; ++v) {
                SerCount pooled;
                int nfail = 0;
                for (std::size_t tr = 0; tr < trials; ++tr) {
                    const TrialOutcome& o = outcomes[(cell.index * trials + tr) * variants.size() + v];
                    if (o.failed) {
                        ++nfail;
                    } else {
                        pooled += o.ser;
                    }
                }
                // A variant whose every trial diverged ranks last; its row reports NaN.
                const double rank = pooled.total ? pooled.rate() : 2.0;
                if (!have || rank < best_ser) {
                    have = true;
                    best_ser = rank;
                    best = SweepRow{};
                    best.tracker = kind;
                    best.snr_db = cell.snr_db;
                    best.dp_tot_t = cell.drift;
                    best.phi_db = cell.phi_db;
                    best.n_segments = spec.n_segments;
                    best.trials = spec.trials;
                    best.counted_symbols = pooled.total;
                    best.errors = pooled.errors;
                    best.ser = pooled.total ? pooled.rate() : std::numeric_limits<double>::quiet_NaN();
                    best.failed_trials = nfail;
                    if (uses_step_size(kind)) best.mu = variants[v].mu;
                    if (pooled.total) {
                        std::tie(best.ci95_low, best.ci95_high) = wilson_ci(pooled.errors, pooled.total);
                    } else {
                        best.ci95_low = 0.0;
                        best.ci95_high = 1.0;
                    }
                }
            }
            result.rows.push_back(best);
            if (opt.progress != nullptr) {
                char buf[256];
                std::snprintf(buf, sizeof buf, "%-13s snr=%5.2f dB drift=%.3g phi=%.2f dB  SER=%.4e [%.3e, %.3e]  failed=%d",
                              std::string(tracker_name(kind)).c_str(), cell.snr_db, cell.drift, cell.phi_db, best.ser,
                              best.ci95_low, best.ci95_high, best.failed_trials);
                *opt.progress << buf;
                if (best.mu) *opt.progress << "  mu=(" << best.mu->mu1 << ", " << best.mu->mu2 << ")";
                *opt.progress << '\n';
            }
        }
    }
    return result;
}

}  // namespace poltrack
