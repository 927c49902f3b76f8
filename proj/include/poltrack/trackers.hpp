#pragma once

// Streaming polarization trackers. Every tracker consumes one received sample
// per push() and appends finalized decisions to an output vector; over a whole
// stream (push ... finish) it emits exactly one decision per consumed sample,
// in order.

#include <concepts>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "poltrack/linalg2.hpp"
#include "poltrack/signal.hpp"

namespace poltrack {

/// Equalizer taps grew past the divergence threshold.
class TapBlowup : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-sample side information: absolute symbol index, and the true channel
/// matrix for genie-aided receivers (null otherwise).
struct SymbolContext {
    std::uint64_t k = 0;
    const Mat2* channel = nullptr;
};

template <class T>
concept StreamingTracker = requires(T t, const T ct, const Vec2& x, const SymbolContext& ctx, std::vector<Vec2>& out) {
    t.push(x, ctx, out);
    t.finish(out);
    { ct.channel_estimate() } -> std::convertible_to<Mat2>;
};

// ---------------------------------------------------------------------------
// Block estimators

namespace detail {

inline void require_blocks(std::span<const Vec2> x, std::span<const Vec2> s, const char* who)
{
    if (x.size() != s.size()) throw LengthMismatch(std::string(who) + ": blocks differ in length");
    if (x.size() < 2) throw std::invalid_argument(std::string(who) + ": window length must be >= 2");
}

/// X S^H for column blocks X and S.
inline Mat2 cross(std::span<const Vec2> x, std::span<const Vec2> s)
{
    Mat2 m = Mat2::zero();
    for (std::size_t i = 0; i < x.size(); ++i) m += outer(x[i], s[i]);
    return m;
}

}  // namespace detail

/// Orthogonal Procrustes solution argmin_R ||X - R H S|| over unitary R:
/// R = U V^H with U S V^H = svd(X S^H H^H).
inline Mat2 kabsch_rotation(std::span<const Vec2> x_block, std::span<const Vec2> s_hat_block, const Mat2& h_hat)
{
    detail::require_blocks(x_block, s_hat_block, "kabsch_rotation");
    const Svd2 s = svd2(detail::cross(x_block, s_hat_block) * adjoint(h_hat));
    return s.u * adjoint(s.v);
}

/// Unconstrained least-squares G = X S^H H^H (H S S^H H^H)^-1.
/// Throws SingularMatrix when the Gram matrix is ill-conditioned.
inline Mat2 sw_ls_update(std::span<const Vec2> x_block, std::span<const Vec2> s_hat_block, const Mat2& h_hat)
{
    detail::require_blocks(x_block, s_hat_block, "sw_ls_update");
    const Mat2 hh = adjoint(h_hat);
    const Mat2 gram = h_hat * detail::cross(s_hat_block, s_hat_block) * hh;
    return detail::cross(x_block, s_hat_block) * hh * inv2(gram);
}

/// Coarse channel estimate from one received pilot block: (1/delta) X^p (S^p)^H.
inline Mat2 ls_coarse_estimate(std::span<const Vec2> x_pilot_block, const FramePlan& plan)
{
    if (x_pilot_block.size() != static_cast<std::size_t>(plan.k_p)) {
        throw LengthMismatch("ls_coarse_estimate: block length must equal k_p");
    }
    return (1.0 / plan.delta) * detail::cross(x_pilot_block, plan.pilots);
}

// ---------------------------------------------------------------------------
// Sliding-window trackers

struct WindowParams {
    int length = 24;
    int stride = 6;

    void validate() const
    {
        if (length < 2 || stride < 1 || stride > length) {
            throw std::invalid_argument("window: need length >= 2 and 1 <= stride <= length");
        }
    }
};

/// Decision-directed sliding-window Kabsch tracker with a unitary estimate.
///
/// Once `length` samples are buffered, all of them are decided with the
/// current estimate, the Procrustes rotation over the window updates the
/// estimate, and the `stride` oldest decisions are emitted. With
/// stride == length this is the block-wise DD-Kabsch receiver.
class KabschTracker {
public:
    /// Strides between projections of the estimate back onto the unitary group.
    static constexpr std::uint64_t kReunitarizeEvery = 10000;

    KabschTracker(const Constellation& cset, WindowParams p = {}, const Mat2& h0 = Mat2::identity())
        : cset_(&cset)
        , p_(p)
        , h_(h0)
    {
        p_.validate();
        x_.reserve(p_.length);
        s_.resize(p_.length);
    }

    void push(const Vec2& x, const SymbolContext&, std::vector<Vec2>& out)
    {
        x_.push_back(x);
        if (x_.size() == static_cast<std::size_t>(p_.length)) process(out);
    }

    /// Decide whatever is still buffered with the current estimate.
    void finish(std::vector<Vec2>& out)
    {
        const Mat2 hinv = inv2(h_);
        for (const Vec2& x : x_) out.push_back(cset_->slice(hinv * x));
        x_.clear();
    }

    Mat2 channel_estimate() const { return h_; }
    void reset_estimate(const Mat2& h = Mat2::identity()) { h_ = h; }
    std::uint64_t updates() const { return updates_; }
    const WindowParams& params() const { return p_; }

private:
    void process(std::vector<Vec2>& out)
    {
        const Mat2 hinv = inv2(h_);
        for (std::size_t i = 0; i < x_.size(); ++i) s_[i] = cset_->slice(hinv * x_[i]);
        h_ = kabsch_rotation(x_, s_, h_) * h_;
        if (++updates_ % kReunitarizeEvery == 0) h_ = nearest_unitary(h_);
        out.insert(out.end(), s_.begin(), s_.begin() + p_.stride);
        x_.erase(x_.begin(), x_.begin() + p_.stride);
    }

    const Constellation* cset_;
    WindowParams p_;
    Mat2 h_;
    std::vector<Vec2> x_;
    std::vector<Vec2> s_;
    std::uint64_t updates_ = 0;
};

/// Block-wise DD-Kabsch benchmark: a Kabsch tracker whose stride equals its window.
inline KabschTracker make_dd_kabsch(const Constellation& cset, int block = 16)
{
    return KabschTracker(cset, WindowParams{block, block});
}

/// Pilot-aided sliding-window least-squares tracker.
///
/// Window samples at pilot positions use the known pilot column as the
/// decision, payload positions use the minimum-distance decision under the
/// current estimate. A singular Gram matrix skips the update for that stride.
class SwLsTracker {
public:
    SwLsTracker(const Constellation& cset, const FramePlan& plan, WindowParams p = {},
                const Mat2& h0 = Mat2::identity())
        : cset_(&cset)
        , plan_(&plan)
        , p_(p)
        , h_(h0)
    {
        p_.validate();
        x_.reserve(p_.length);
        s_.resize(p_.length);
    }

    void push(const Vec2& x, const SymbolContext& ctx, std::vector<Vec2>& out)
    {
        if (x_.empty()) k0_ = ctx.k;
        x_.push_back(x);
        if (x_.size() == static_cast<std::size_t>(p_.length)) process(out);
    }

    void finish(std::vector<Vec2>& out)
    {
        decide_window();
        out.insert(out.end(), s_.begin(), s_.begin() + static_cast<std::ptrdiff_t>(x_.size()));
        x_.clear();
    }

    Mat2 channel_estimate() const { return h_; }
    std::uint64_t updates() const { return updates_; }
    std::uint64_t skipped_updates() const { return skipped_; }

private:
    void decide_window()
    {
        const Mat2 hinv = inv2(h_);
        for (std::size_t i = 0; i < x_.size(); ++i) {
            const std::uint64_t k = k0_ + i;
            s_[i] = plan_->is_pilot(k) ? plan_->pilot_at(k) : cset_->slice(hinv * x_[i]);
        }
    }

    void process(std::vector<Vec2>& out)
    {
        decide_window();
        try {
            const Mat2 next = sw_ls_update(x_, s_, h_) * h_;
            if (is_finite(next) && condition_estimate(next) <= kMaxCondition) {
                h_ = next;
                ++updates_;
            } else {
                ++skipped_;
            }
        } catch (const SingularMatrix&) {
            ++skipped_;
        }
        out.insert(out.end(), s_.begin(), s_.begin() + p_.stride);
        x_.erase(x_.begin(), x_.begin() + p_.stride);
        k0_ += static_cast<std::uint64_t>(p_.stride);
    }

    const Constellation* cset_;
    const FramePlan* plan_;
    WindowParams p_;
    Mat2 h_;
    std::vector<Vec2> x_;
    std::vector<Vec2> s_;
    std::uint64_t k0_ = 0;
    std::uint64_t updates_ = 0;
    std::uint64_t skipped_ = 0;
};

// ---------------------------------------------------------------------------
// Gradient-descent equalizers

/// Two-stage step size: mu1 for the first stage_len samples, mu2 afterwards.
struct StepSchedule {
    double mu1 = 1e-2;
    double mu2 = 1e-3;
    std::uint64_t stage_len = 10000;

    double at(std::uint64_t n) const { return n < stage_len ? mu1 : mu2; }
    void validate() const
    {
        if (!(mu2 > 0.0) || !(mu1 >= mu2)) throw std::invalid_argument("step schedule: need mu1 >= mu2 > 0");
    }
};

inline constexpr double kTapBlowupNorm = 1e6;

namespace detail {

/// y = W x equalizer shared by MCMA and DD-LMS; Derived supplies error(y).
template <class Derived>
class GradientEqualizer {
public:
    GradientEqualizer(const Constellation& cset, StepSchedule mu, const Mat2& w0)
        : cset_(&cset)
        , mu_(mu)
        , w_(w0)
    {
        mu_.validate();
    }

    void push(const Vec2& x, const SymbolContext&, std::vector<Vec2>& out)
    {
        const Vec2 y = w_ * x;
        const Vec2 decided = cset_->slice(y);
        const Vec2 e = static_cast<const Derived&>(*this).error(y, decided);
        w_ += mu_.at(n_++) * outer(e, x);
        if (!(frob_norm(w_) <= kTapBlowupNorm)) throw TapBlowup("equalizer taps diverged");
        out.push_back(decided);
    }

    void finish(std::vector<Vec2>&) {}

    /// Telemetry view of the channel, W^-1 (W itself when singular).
    Mat2 channel_estimate() const
    {
        try {
            return inv2(w_);
        } catch (const SingularMatrix&) {
            return w_;
        }
    }
    const Mat2& taps() const { return w_; }
    void reset_estimate(const Mat2& h = Mat2::identity()) { w_ = inv2(h); }
    const StepSchedule& schedule() const { return mu_; }

protected:
    const Constellation* cset_;

private:
    StepSchedule mu_;
    Mat2 w_;
    std::uint64_t n_ = 0;
};

}  // namespace detail

/// Modified CMA: per-dimension dispersion error y_re (R - y_re^2) + j y_im (R - y_im^2).
class McmaEqualizer : public detail::GradientEqualizer<McmaEqualizer> {
public:
    McmaEqualizer(const Constellation& cset, StepSchedule mu = {}, const Mat2& w0 = Mat2::identity())
        : GradientEqualizer(cset, mu, w0)
        , r_(cset.dispersion_constant())
    {
    }

    Vec2 error(const Vec2& y, const Vec2&) const { return {err(y.a), err(y.b)}; }
    double dispersion_constant() const { return r_; }

private:
    C64 err(C64 y) const
    {
        const double re = y.real(), im = y.imag();
        return {re * (r_ - re * re), im * (r_ - im * im)};
    }
    double r_;
};

/// Decision-directed LMS: e = slice(y) - y.
class DdLmsEqualizer : public detail::GradientEqualizer<DdLmsEqualizer> {
public:
    DdLmsEqualizer(const Constellation& cset, StepSchedule mu = {}, const Mat2& w0 = Mat2::identity())
        : GradientEqualizer(cset, mu, w0)
    {
    }

    Vec2 error(const Vec2& y, const Vec2& decided) const { return decided - y; }
};

// ---------------------------------------------------------------------------
// Pilot-aided hybrid

/// Per-frame coarse LS compensation followed by an inner tracker on the
/// residual channel. The inner estimate is reset to identity every time the
/// coarse estimate is refreshed; an ill-conditioned coarse estimate keeps the
/// previous frame's compensation.
template <class Inner>
class HybridTracker {
public:
    HybridTracker(const FramePlan& plan, Inner inner)
        : plan_(&plan)
        , inner_(std::move(inner))
    {
        pilot_rx_.reserve(plan.k_p);
    }

    void push(const Vec2& x, const SymbolContext& ctx, std::vector<Vec2>& out)
    {
        const auto pos = static_cast<int>(ctx.k % static_cast<std::uint64_t>(plan_->k_s));
        if (pos < plan_->k_p) {
            if (pos == 0) {
                inner_.finish(out);
                pilot_rx_.clear();
            }
            pilot_rx_.push_back(x);
            out.push_back(plan_->pilot_at(ctx.k));
            if (pos == plan_->k_p - 1 && pilot_rx_.size() == static_cast<std::size_t>(plan_->k_p)) refresh();
            return;
        }
        inner_.push(comp_ * x, ctx, out);
    }

    void finish(std::vector<Vec2>& out) { inner_.finish(out); }

    /// Overall estimate coarse * inner.
    Mat2 channel_estimate() const { return coarse_ * inner_.channel_estimate(); }
    const Mat2& coarse_estimate() const { return coarse_; }
    const Inner& inner() const { return inner_; }
    std::uint64_t refreshes() const { return refreshes_; }
    std::uint64_t rejected_refreshes() const { return rejected_; }

private:
    void refresh()
    {
        const Mat2 h0 = ls_coarse_estimate(pilot_rx_, *plan_);
        try {
            comp_ = inv2(h0);
            coarse_ = h0;
            ++refreshes_;
        } catch (const SingularMatrix&) {
            ++rejected_;
        }
        inner_.reset_estimate();
    }

    const FramePlan* plan_;
    Inner inner_;
    std::vector<Vec2> pilot_rx_;
    Mat2 coarse_ = Mat2::identity();
    Mat2 comp_ = Mat2::identity();
    std::uint64_t refreshes_ = 0;
    std::uint64_t rejected_ = 0;
};

// ---------------------------------------------------------------------------
// Genie-aided references

/// Maximum-likelihood decision argmin_{c in S^2} ||x - H c||^2 with the metric
/// taken in the received domain. For each first-polarization candidate the
/// optimal second symbol is the slice of the projection onto H's second column,
/// which makes this exact while visiting only M candidates.
inline Vec2 ml_detect(const Vec2& x, const Mat2& h, const Constellation& cset)
{
    const Vec2 h1 = h.col(0);
    const Vec2 h2 = h.col(1);
    const double h2n = norm2(h2);
    Vec2 best{};
    double best_metric = std::numeric_limits<double>::infinity();
    for (C64 ca : cset.points()) {
        const Vec2 r = x - ca * h1;
        const C64 cb = h2n > 0.0 ? cset.slice(dot(h2, r) / h2n) : cset.point(0);
        const double metric = norm2(r - cb * h2);
        if (metric < best_metric) {
            best_metric = metric;
            best = {ca, cb};
        }
    }
    return best;
}

/// ML detection with perfect knowledge of H_k (taken from SymbolContext::channel).
class GenieMl {
public:
    explicit GenieMl(const Constellation& cset)
        : cset_(&cset)
    {
    }

    void push(const Vec2& x, const SymbolContext& ctx, std::vector<Vec2>& out)
    {
        if (ctx.channel == nullptr) throw std::invalid_argument("genie ML: true channel not supplied");
        last_ = *ctx.channel;
        out.push_back(ml_detect(x, last_, *cset_));
    }
    void finish(std::vector<Vec2>&) {}
    Mat2 channel_estimate() const { return last_; }

private:
    const Constellation* cset_;
    Mat2 last_ = Mat2::identity();
};

static_assert(StreamingTracker<KabschTracker>);
static_assert(StreamingTracker<SwLsTracker>);
static_assert(StreamingTracker<McmaEqualizer>);
static_assert(StreamingTracker<DdLmsEqualizer>);
static_assert(StreamingTracker<HybridTracker<KabschTracker>>);
static_assert(StreamingTracker<GenieMl>);

// ---------------------------------------------------------------------------
// Genie-aided polarization-swap resolution

inline Vec2 swap_polarizations(const Vec2& v) { return {v.b, v.a}; }

struct SwapResolution {
    bool swapped = false;
    std::vector<Vec2> corrected;
    std::uint64_t errors = 0;
};

namespace detail {

inline std::uint64_t mismatches(const Vec2& a, const Vec2& b) { return (a.a != b.a) + (a.b != b.b); }

}  // namespace detail

/// Choose identity or polarization swap for a block, whichever matches the
/// ground truth better. Ties keep the identity.
inline SwapResolution genie_swap_resolve(std::span<const Vec2> decided, std::span<const Vec2> truth)
{
    if (decided.size() != truth.size()) throw LengthMismatch("genie_swap_resolve: blocks differ in length");
    std::uint64_t e_id = 0, e_sw = 0;
    for (std::size_t i = 0; i < decided.size(); ++i) {
        e_id += detail::mismatches(decided[i], truth[i]);
        e_sw += detail::mismatches(swap_polarizations(decided[i]), truth[i]);
    }
    SwapResolution r;
    r.swapped = e_sw < e_id;
    r.errors = r.swapped ? e_sw : e_id;
    r.corrected.assign(decided.begin(), decided.end());
    if (r.swapped) {
        for (Vec2& v : r.corrected) v = swap_polarizations(v);
    }
    return r;
}

/// Differential variant: each candidate is differentially decoded from the
/// decoder's current state and compared with the payload; the winner's
/// decoded block is returned and the decoder state is advanced accordingly.
inline SwapResolution genie_swap_resolve_differential(std::span<const Vec2> decided, std::span<const Vec2> payload,
                                                      DiffDecoder& decoder)
{
    if (decided.size() != payload.size()) throw LengthMismatch("genie_swap_resolve: blocks differ in length");
    SwapResolution best;
    DiffDecoder best_dec = decoder;
    for (int candidate = 0; candidate < 2; ++candidate) {
        DiffDecoder dec = decoder;
        std::vector<Vec2> out;
        out.reserve(decided.size());
        std::uint64_t errors = 0;
        for (std::size_t i = 0; i < decided.size(); ++i) {
            const Vec2 v = candidate ? swap_polarizations(decided[i]) : decided[i];
            out.push_back(dec.decode(v));
            errors += detail::mismatches(out.back(), payload[i]);
        }
        if (candidate == 0 || errors < best.errors) {
            best.swapped = candidate == 1;
            best.errors = errors;
            best.corrected = std::move(out);
            best_dec = dec;
        }
    }
    decoder = best_dec;
    return best;
}

}  // namespace poltrack
