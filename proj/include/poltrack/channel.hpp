#pragma once

// Dual-polarization channel with N concatenated (PDL, SOP-drift) segments.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "poltrack/linalg2.hpp"
#include "poltrack/random.hpp"

namespace poltrack {

class DegeneratePdl : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ChannelConfig {
    int n_segments = 20;
    /// Total polarization linewidth times symbol duration.
    double dp_tot_times_T = 0.0;
    /// Segment-wise PDL in dB, identical for every segment.
    double phi_db = 0.0;
    /// Optional per-segment PDL in dB; overrides phi_db when non-empty.
    std::vector<double> phi_db_per_segment{};
    std::uint64_t seed = 1;
};

/// Symbol rate used when converting wall-clock windows to symbol counts.
inline constexpr double kSymbolRateBaud = 28e9;

/// Invert phi = 10 log10((1 + gamma) / (1 - gamma)).
inline double gamma_from_phi(double phi_db)
{
    const double r = std::pow(10.0, phi_db / 10.0);
    return (r - 1.0) / (r + 1.0);
}

inline double phi_from_gamma(double gamma) { return 10.0 * std::log10((1.0 + gamma) / (1.0 - gamma)); }

struct NoiseConfig {
    /// Per-polarization SNR = P / sigma_z^2 in dB; +inf disables noise.
    double snr_db = std::numeric_limits<double>::infinity();
    double power = 1.0;

    static NoiseConfig noiseless() { return {}; }
    bool enabled() const { return std::isfinite(snr_db); }
    /// Total variance of one complex noise entry.
    double variance() const { return enabled() ? power / std::pow(10.0, snr_db / 10.0) : 0.0; }
};

/// Channel state H_k = Gamma_N J_{k,N} ... Gamma_1 J_{k,1}, advanced one symbol at a time.
class Channel {
public:
    /// Steps between projections of each J back onto the unitary group.
    static constexpr std::uint64_t kReunitarizeEvery = 10000;

    explicit Channel(const ChannelConfig& cfg)
        : rng_(cfg.seed)
    {
        if (cfg.n_segments < 1) throw std::invalid_argument("channel: n_segments must be >= 1");
        if (!(cfg.dp_tot_times_T >= 0.0)) throw std::invalid_argument("channel: dp_tot_times_T must be >= 0");
        if (!cfg.phi_db_per_segment.empty() &&
            cfg.phi_db_per_segment.size() != static_cast<std::size_t>(cfg.n_segments)) {
            throw std::invalid_argument("channel: phi_db_per_segment length must equal n_segments");
        }
        const auto n = static_cast<std::size_t>(cfg.n_segments);
        sigma_p_ = std::sqrt(2.0 * std::numbers::pi * cfg.dp_tot_times_T / static_cast<double>(n));
        j_.reserve(n);
        gamma_.reserve(n);
        gamma_mat_.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double phi = cfg.phi_db_per_segment.empty() ? cfg.phi_db : cfg.phi_db_per_segment[i];
            if (!(phi >= 0.0) || !std::isfinite(phi)) throw std::invalid_argument("channel: phi_db must be finite and >= 0");
            const double g = gamma_from_phi(phi);
            gamma_.push_back(g);
            gamma_mat_.push_back(Mat2::diag(std::sqrt(1.0 + g), std::sqrt(1.0 - g)));
        }
        for (std::size_t i = 0; i < n; ++i) j_.push_back(haar_unitary(rng_));
        refresh();
    }

    /// H_k at the current symbol index.
    const Mat2& matrix() const { return h_; }

    /// Draw alpha_{k,n} ~ N(0, sigma_p^2 I3) for every segment and rotate J.
    void step()
    {
        if (sigma_p_ > 0.0) {
            for (Mat2& j : j_) {
                const Vec3R alpha{sigma_p_ * gauss_(rng_), sigma_p_ * gauss_(rng_), sigma_p_ * gauss_(rng_)};
                j = pauli_exp(alpha) * j;
            }
            if (++since_reunitarize_ == kReunitarizeEvery) {
                for (Mat2& j : j_) j = nearest_unitary(j);
                since_reunitarize_ = 0;
            }
            refresh();
        }
        ++k_;
    }

    /// x = H_k s + z with z ~ CN(0, sigma_z^2 I2).
    template <class R>
    Vec2 transmit(const Vec2& s, const NoiseConfig& noise, R& rng) const
    {
        Vec2 x = h_ * s;
        if (noise.enabled()) {
            const double sd = std::sqrt(0.5 * noise.variance());
            std::normal_distribution<double> g(0.0, sd);
            x.a += C64{g(rng), g(rng)};
            x.b += C64{g(rng), g(rng)};
        }
        return x;
    }

    /// Aggregated PDL ratio sigma_max^2 / sigma_min^2 of H_k (linear).
    double aggregated_pdl() const
    {
        const Svd2 s = svd2(h_);
        if (s.sigma[1] < 1e-12 * s.sigma[0]) throw DegeneratePdl("aggregated_pdl: channel matrix collapsed");
        const double r = s.sigma[0] / s.sigma[1];
        return r * r;
    }

    std::uint64_t symbol_index() const { return k_; }
    double sigma_p() const { return sigma_p_; }
    std::size_t n_segments() const { return j_.size(); }
    const std::vector<Mat2>& sop_elements() const { return j_; }
    const std::vector<Mat2>& pdl_elements() const { return gamma_mat_; }
    const std::vector<double>& gammas() const { return gamma_; }

    /// Overwrite one SOP element (tests and controlled experiments).
    void set_sop(std::size_t n, const Mat2& j)
    {
        j_.at(n) = j;
        refresh();
    }

private:
    void refresh()
    {
        Mat2 h = Mat2::identity();
        for (std::size_t n = 0; n < j_.size(); ++n) h = gamma_mat_[n] * j_[n] * h;
        h_ = h;
    }

    Rng rng_;
    std::normal_distribution<double> gauss_{0.0, 1.0};
    std::vector<Mat2> j_;
    std::vector<double> gamma_;
    std::vector<Mat2> gamma_mat_;
    Mat2 h_ = Mat2::identity();
    double sigma_p_ = 0.0;
    std::uint64_t k_ = 0;
    std::uint64_t since_reunitarize_ = 0;
};

inline double to_db(double linear) { return 10.0 * std::log10(linear); }

/// 10 log10 of the ensemble mean of the per-sequence time-averaged rho_k.
/// Trial t uses seed derive_seed({cfg.seed, t}).
inline double average_aggregated_pdl_db(int trials, int symbols, const ChannelConfig& cfg)
{
    if (trials < 1 || symbols < 1) throw std::invalid_argument("average_aggregated_pdl_db: trials and symbols must be >= 1");
    double acc = 0.0;
    for (int t = 0; t < trials; ++t) {
        ChannelConfig c = cfg;
        c.seed = derive_seed({cfg.seed, static_cast<std::uint64_t>(t)});
        Channel ch(c);
        double sum = 0.0;
        for (int k = 0; k < symbols; ++k) {
            sum += ch.aggregated_pdl();
            ch.step();
        }
        acc += sum / symbols;
    }
    return to_db(acc / trials);
}

struct PdlSample {
    std::uint64_t k;
    double rho_db;
};

/// Aggregated PDL in dB over time, one sample every `decimation` symbols.
inline std::vector<PdlSample> pdl_trace(const ChannelConfig& cfg, std::uint64_t duration_symbols,
                                        std::uint64_t decimation = 1)
{
    if (decimation == 0) throw std::invalid_argument("pdl_trace: decimation must be >= 1");
    Channel ch(cfg);
    std::vector<PdlSample> out;
    out.reserve(duration_symbols / decimation + 1);
    for (std::uint64_t k = 0; k < duration_symbols; ++k) {
        if (k % decimation == 0) out.push_back({k, to_db(ch.aggregated_pdl())});
        ch.step();
    }
    return out;
}

/// Number of symbols in a window of the given duration at the 28 Gbaud reference rate.
inline std::uint64_t symbols_in(double seconds) { return static_cast<std::uint64_t>(std::llround(seconds * kSymbolRateBaud)); }

inline void write_pdl_trace_csv(std::ostream& os, const std::vector<PdlSample>& trace)
{
    os << "k,rho_db\n";
    char buf[64];
    for (const auto& s : trace) {
        std::snprintf(buf, sizeof buf, "%llu,%.12g\n", static_cast<unsigned long long>(s.k), s.rho_db);
        os << buf;
    }
}

namespace detail {

inline std::array<double, 3> stokes(const Vec2& e)
{
    const C64 cross = e.a * std::conj(e.b);
    const double s0 = norm2(e);
    return {(std::norm(e.a) - std::norm(e.b)) / s0, 2.0 * cross.real() / s0, -2.0 * cross.imag() / s0};
}

}  // namespace detail

/// Mean great-circle angle (rad/symbol) on the Poincare sphere between the
/// output polarizations of consecutive H_k for the probe input (1, 0).
inline double mean_sop_angle(const ChannelConfig& cfg, std::uint64_t steps)
{
    if (steps < 1) throw std::invalid_argument("mean_sop_angle: steps must be >= 1");
    Channel ch(cfg);
    auto prev = detail::stokes(ch.matrix().col(0));
    double sum = 0.0;
    for (std::uint64_t i = 0; i < steps; ++i) {
        ch.step();
        const auto cur = detail::stokes(ch.matrix().col(0));
        const double d = prev[0] * cur[0] + prev[1] * cur[1] + prev[2] * cur[2];
        const double cx = prev[1] * cur[2] - prev[2] * cur[1];
        const double cy = prev[2] * cur[0] - prev[0] * cur[2];
        const double cz = prev[0] * cur[1] - prev[1] * cur[0];
        sum += std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), d);
        prev = cur;
    }
    return sum / static_cast<double>(steps);
}

}  // namespace poltrack
