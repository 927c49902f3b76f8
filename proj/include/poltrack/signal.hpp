#pragma once

// Constellations, minimum-distance slicing, quadrant-differential coding,
// pilot frame layout and symbol-error accounting.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "poltrack/linalg2.hpp"

namespace poltrack {

class InvalidFrame : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class LengthMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Square QAM alphabet (QPSK or 16-QAM) normalized to unit average energy.
///
/// Point index = i_re + levels * i_im with level value (2 i - (levels - 1)) * scale.
/// Every point is j^q * b for a quadrant q in 0..3 and a first-quadrant base
/// point b; the base point's rank among first-quadrant points is its residue.
class Constellation {
public:
    explicit Constellation(int order)
    {
        if (order == 4) {
            levels_ = 2;
        } else if (order == 16) {
            levels_ = 4;
        } else {
            throw std::invalid_argument("constellation: order must be 4 or 16");
        }
        order_ = order;
        // E|c|^2 = 2 E[a^2]; E[a^2] = (L^2 - 1) / 3 for levels {+-1, +-3, ...}
        scale_ = 1.0 / std::sqrt(2.0 * (levels_ * levels_ - 1) / 3.0);
        for (int im = 0; im < levels_; ++im) {
            for (int re = 0; re < levels_; ++re) points_.emplace_back(level(re), level(im));
        }
        for (int i = 0; i < order_; ++i) {
            if (points_[i].real() > 0 && points_[i].imag() > 0) base_.push_back(i);
        }
        quadrant_.resize(order_);
        residue_.resize(order_);
        for (int i = 0; i < order_; ++i) {
            C64 c = points_[i];
            int q = 0;
            while (!(c.real() > 0 && c.imag() > 0)) {
                c *= C64{0.0, -1.0};
                ++q;
            }
            quadrant_[i] = q;
            residue_[i] = residue_index(index_of(c));
        }
        compose_.assign(base_.size() * 4, 0);
        for (int i = 0; i < order_; ++i) compose_[residue_[i] * 4 + quadrant_[i]] = i;
    }

    int order() const { return order_; }
    int levels() const { return levels_; }
    double scale() const { return scale_; }
    const std::vector<C64>& points() const { return points_; }
    C64 point(int index) const { return points_[index]; }

    /// Nearest point index (minimum Euclidean distance, per real dimension).
    int slice_index(C64 y) const { return slice_level(y.real()) + levels_ * slice_level(y.imag()); }
    C64 slice(C64 y) const { return points_[slice_index(y)]; }
    Vec2 slice(const Vec2& y) const { return {slice(y.a), slice(y.b)}; }

    /// Exact index of a constellation point (the point must belong to the alphabet).
    int index_of(C64 c) const { return slice_index(c); }

    int quadrant(int index) const { return quadrant_[index]; }
    int residue(int index) const { return residue_[index]; }
    /// Point with the given residue rotated into quadrant q.
    int compose(int residue, int q) const { return compose_[residue * 4 + (q & 3)]; }
    int residues() const { return static_cast<int>(base_.size()); }

    /// E[a^4] / E[a^2] of one real dimension (the MCMA dispersion constant).
    double dispersion_constant() const
    {
        double m2 = 0.0, m4 = 0.0;
        for (int i = 0; i < levels_; ++i) {
            const double a = level(i);
            m2 += a * a;
            m4 += a * a * a * a;
        }
        return m4 / m2;
    }

private:
    double level(int i) const { return (2.0 * i - (levels_ - 1)) * scale_; }

    int slice_level(double v) const
    {
        const double t = std::floor((v / scale_ + levels_) / 2.0);
        if (!(t >= 0.0)) return 0;  // also maps NaN to the lowest level
        return t >= levels_ - 1 ? levels_ - 1 : static_cast<int>(t);
    }

    int residue_index(int base_point) const
    {
        for (std::size_t r = 0; r < base_.size(); ++r) {
            if (base_[r] == base_point) return static_cast<int>(r);
        }
        throw std::logic_error("constellation: base point not found");
    }

    int order_ = 0;
    int levels_ = 0;
    double scale_ = 1.0;
    std::vector<C64> points_;
    std::vector<int> base_;
    std::vector<int> quadrant_;
    std::vector<int> residue_;
    std::vector<int> compose_;
};

inline Constellation make_constellation(int order) { return Constellation(order); }

/// Minimum Euclidean distance decision on the equalized sample h_hat^-1 x.
/// The metric separates per polarization, so each entry is sliced independently.
inline Vec2 detect(const Vec2& x, const Mat2& h_hat, const Constellation& cset)
{
    return cset.slice(inv2(h_hat) * x);
}

/// Ordered run of dual-polarization samples starting at symbol index start_k.
struct SymbolBlock {
    std::vector<Vec2> columns;
    std::uint64_t start_k = 0;
};

/// Quadrant-differential encoder state for one stream of Vec2 symbols.
class DiffEncoder {
public:
    explicit DiffEncoder(const Constellation& cset)
        : cset_(&cset)
    {
    }

    Vec2 encode(const Vec2& s)
    {
        return {encode_one(s.a, state_[0]), encode_one(s.b, state_[1])};
    }

private:
    C64 encode_one(C64 c, int& state)
    {
        const int idx = cset_->index_of(c);
        state = (state + cset_->quadrant(idx)) & 3;
        return cset_->point(cset_->compose(cset_->residue(idx), state));
    }

    const Constellation* cset_;
    std::array<int, 2> state_{0, 0};
};

/// Decoder matching DiffEncoder; inputs are sliced to the alphabet first.
class DiffDecoder {
public:
    explicit DiffDecoder(const Constellation& cset)
        : cset_(&cset)
    {
    }

    Vec2 decode(const Vec2& r)
    {
        return {decode_one(r.a, state_[0]), decode_one(r.b, state_[1])};
    }

    /// Previous transmitted quadrant per polarization.
    std::array<int, 2> state() const { return state_; }
    void set_state(std::array<int, 2> s) { state_ = s; }

private:
    C64 decode_one(C64 c, int& state)
    {
        const int idx = cset_->slice_index(c);
        const int q = cset_->quadrant(idx);
        const int diff = (q - state) & 3;
        state = q;
        return cset_->point(cset_->compose(cset_->residue(idx), diff));
    }

    const Constellation* cset_;
    std::array<int, 2> state_{0, 0};
};

inline std::vector<Vec2> diff_encode(std::span<const Vec2> symbols, const Constellation& cset)
{
    DiffEncoder enc(cset);
    std::vector<Vec2> out;
    out.reserve(symbols.size());
    for (const Vec2& s : symbols) out.push_back(enc.encode(s));
    return out;
}

inline std::vector<Vec2> diff_decode(std::span<const Vec2> symbols, const Constellation& cset)
{
    DiffDecoder dec(cset);
    std::vector<Vec2> out;
    out.reserve(symbols.size());
    for (const Vec2& s : symbols) out.push_back(dec.decode(s));
    return out;
}

/// Pilot/payload layout: every block of k_s symbols starts with k_p pilots.
struct FramePlan {
    int k_p = 16;
    int k_s = 1016;
    /// Columns of the 2 x k_p pilot matrix S^p.
    std::vector<Vec2> pilots;
    /// S^p (S^p)^H = delta I.
    double delta = 0.0;

    bool is_pilot(std::uint64_t k) const { return static_cast<int>(k % static_cast<std::uint64_t>(k_s)) < k_p; }
    const Vec2& pilot_at(std::uint64_t k) const { return pilots[k % static_cast<std::uint64_t>(k_s)]; }
    double overhead_percent() const { return 100.0 * k_p / k_s; }
};

inline bool is_pilot(std::uint64_t k, const FramePlan& plan) { return plan.is_pilot(k); }

/// Rows [a, a] and [a, -a] for a random QPSK row a of length k_p / 2 scaled to
/// per-symbol power `power`, which makes S^p (S^p)^H = k_p * power * I exactly.
template <class Rng>
FramePlan make_frame_plan(int k_p, int k_s, const Constellation& pilot_cset, Rng& rng, double power = 1.0)
{
    if (k_p <= 2 || k_p % 2 != 0 || k_p > k_s) {
        throw InvalidFrame("frame plan: k_p must be even with 2 < k_p <= k_s");
    }
    if (!(power > 0.0)) throw InvalidFrame("frame plan: power must be positive");
    std::uniform_int_distribution<int> pick(0, pilot_cset.order() - 1);
    const double amp = std::sqrt(power);
    const int half = k_p / 2;
    std::vector<C64> row(half);
    for (C64& a : row) a = amp * pilot_cset.point(pick(rng));

    FramePlan plan;
    plan.k_p = k_p;
    plan.k_s = k_s;
    plan.pilots.resize(k_p);
    for (int i = 0; i < half; ++i) {
        plan.pilots[i] = {row[i], row[i]};
        plan.pilots[half + i] = {row[i], -row[i]};
    }
    plan.delta = k_p * power;
    return plan;
}

/// S^p (S^p)^H.
inline Mat2 pilot_gram(const FramePlan& plan)
{
    Mat2 g = Mat2::zero();
    for (const Vec2& p : plan.pilots) g += outer(p, p);
    return g;
}

struct SerCount {
    std::uint64_t errors = 0;
    std::uint64_t total = 0;

    SerCount& operator+=(const SerCount& o)
    {
        errors += o.errors;
        total += o.total;
        return *this;
    }
    double rate() const { return total ? static_cast<double>(errors) / static_cast<double>(total) : 0.0; }
};

/// Per-polarization symbol mismatches over indices >= skip. Pilot positions
/// (absolute index start_k + i) are excluded from both counts when a plan is given.
inline SerCount count_ser(std::span<const Vec2> decided, std::span<const Vec2> truth, std::size_t skip,
                          const FramePlan* plan = nullptr, std::uint64_t start_k = 0)
{
    if (decided.size() != truth.size()) throw LengthMismatch("count_ser: decided and truth differ in length");
    SerCount out;
    for (std::size_t i = skip; i < decided.size(); ++i) {
        if (plan != nullptr && plan->is_pilot(start_k + i)) continue;
        out.total += 2;
        out.errors += (decided[i].a != truth[i].a) + (decided[i].b != truth[i].b);
    }
    return out;
}

}  // namespace poltrack
