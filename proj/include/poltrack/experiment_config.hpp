#pragma once

// INI experiment configuration, value-grid syntax and named presets.
//
// Sections and keys:
//   [channel]  n_segments, phi_db, drift
//   [noise]    snr_db
//   [frame]    k_p, k_s
//   [trackers] ids, window_length, window_stride, dd_block, mu1, mu2,
//              stage_len, mu_grid, mu_grid_values
//   [run]      trials, symbols, seed, skip_blind, skip_pilot, constellation,
//              trace_symbols
// List values are comma separated; an item of the form a:b:step expands to
// the inclusive arithmetic range.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "poltrack/channel.hpp"
#include "poltrack/sim.hpp"

namespace poltrack {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    ExperimentSpec spec{};
    /// Length of each pdl-trace sequence (1 us at 28 Gbaud by default).
    std::uint64_t trace_symbols = 28000;
};

namespace detail {

inline std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto p = s.find(sep, start);
        out.push_back(trim(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start)));
        if (p == std::string_view::npos) break;
        start = p + 1;
    }
    return out;
}

template <class T>
T parse_number(std::string_view text, std::string_view what)
{
    text = trim(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    T v{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        throw ConfigError(std::string(what) + ": cannot parse '" + std::string(text) + "'");
    }
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(v)) throw ConfigError(std::string(what) + ": value must be finite");
    }
    return v;
}

inline std::string format_double(double v)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

}  // namespace detail

/// Inclusive range "start:stop:step" (step > 0, stop >= start).
inline std::vector<double> parse_range(std::string_view text)
{
    const auto parts = detail::split(text, ':');
    if (parts.size() != 3) throw ConfigError("range '" + std::string(text) + "': expected start:stop:step");
    const double a = detail::parse_number<double>(parts[0], "range start");
    const double b = detail::parse_number<double>(parts[1], "range stop");
    const double step = detail::parse_number<double>(parts[2], "range step");
    if (!(step > 0.0) || b < a) throw ConfigError("range '" + std::string(text) + "': need step > 0 and stop >= start");
    const double span = (b - a) / step;
    const auto count = static_cast<std::size_t>(std::floor(span + 1e-9)) + 1;
    if (count > 100000) throw ConfigError("range '" + std::string(text) + "': too many points");
    std::vector<double> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(a + static_cast<double>(i) * step);
    return out;
}

/// Comma-separated numbers and ranges.
inline std::vector<double> parse_grid(std::string_view text)
{
    if (detail::trim(text).empty()) throw ConfigError("empty value list");
    std::vector<double> out;
    for (std::string_view item : detail::split(text, ',')) {
        if (item.find(':') != std::string_view::npos) {
            const auto r = parse_range(item);
            out.insert(out.end(), r.begin(), r.end());
        } else {
            out.push_back(detail::parse_number<double>(item, "value list"));
        }
    }
    return out;
}

inline std::vector<TrackerKind> parse_tracker_list(std::string_view text)
{
    std::vector<TrackerKind> out;
    for (std::string_view item : detail::split(text, ',')) {
        const auto k = parse_tracker(item);
        if (!k) throw ConfigError("unknown tracker '" + std::string(item) + "'");
        out.push_back(*k);
    }
    return out;
}

/// n points spaced evenly in log10 between lo and hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, int n)
{
    if (!(lo > 0.0) || !(hi >= lo) || n < 1) throw std::invalid_argument("log_grid: need 0 < lo <= hi and n >= 1");
    std::vector<double> out;
    const double a = std::log10(lo), b = std::log10(hi);
    for (int i = 0; i < n; ++i) out.push_back(n == 1 ? lo : std::pow(10.0, a + (b - a) * i / (n - 1)));
    return out;
}

inline std::string join_grid(const std::vector<double>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + detail::format_double(v[i]);
    return s;
}

inline std::string join_trackers(const std::vector<TrackerKind>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::string(tracker_name(v[i]));
    return s;
}

/// Apply every key of an INI stream on top of `cfg`. Unknown sections or keys
/// and malformed values raise ConfigError.
inline void apply_config(std::istream& in, RunConfig& cfg)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    ExperimentSpec& s = cfg.spec;
    for (const auto& [section, body] : tree) {
        if (!body.data().empty()) throw ConfigError("config: key '" + section + "' outside a section");
        for (const auto& [key, node] : body) {
            const std::string& v = node.data();
            const std::string where = section + "." + key;
            auto u64 = [&] { return detail::parse_number<std::uint64_t>(v, where); };
            auto i32 = [&] { return detail::parse_number<int>(v, where); };
            auto f64 = [&] { return detail::parse_number<double>(v, where); };
            auto boolean = [&] {
                const auto t = detail::trim(v);
                if (t == "true" || t == "1") return true;
                if (t == "false" || t == "0") return false;
                throw ConfigError(where + ": expected true or false");
            };
            bool known = true;
            if (section == "channel") {
                if (key == "n_segments") s.n_segments = i32();
                else if (key == "phi_db") s.phi_grid_db = parse_grid(v);
                else if (key == "drift") s.drift_grid = parse_grid(v);
                else known = false;
            } else if (section == "noise") {
                if (key == "snr_db") s.snr_grid_db = parse_grid(v);
                else known = false;
            } else if (section == "frame") {
                if (key == "k_p") s.k_p = i32();
                else if (key == "k_s") s.k_s = i32();
                else known = false;
            } else if (section == "trackers") {
                if (key == "ids") s.trackers = parse_tracker_list(v);
                else if (key == "window_length") s.settings.window.length = i32();
                else if (key == "window_stride") s.settings.window.stride = i32();
                else if (key == "dd_block") s.settings.dd_block = i32();
                else if (key == "mu1") s.settings.mu.mu1 = f64();
                else if (key == "mu2") s.settings.mu.mu2 = f64();
                else if (key == "stage_len") s.settings.mu.stage_len = u64();
                else if (key == "mu_grid") s.settings.mu_grid = boolean();
                else if (key == "mu_grid_values") s.settings.mu_grid_values = parse_grid(v);
                else known = false;
            } else if (section == "run") {
                if (key == "trials") s.trials = i32();
                else if (key == "symbols") s.symbols_per_trial = u64();
                else if (key == "seed") s.master_seed = u64();
                else if (key == "skip_blind") s.skip_blind = u64();
                else if (key == "skip_pilot") s.skip_pilot = u64();
                else if (key == "constellation") s.constellation_order = i32();
                else if (key == "trace_symbols") cfg.trace_symbols = u64();
                else known = false;
            } else {
                throw ConfigError("config: unknown section [" + section + "]");
            }
            if (!known) throw ConfigError("config: unknown key '" + where + "'");
        }
    }
}

/// INI text that apply_config() maps back to the same RunConfig.
inline void dump_config(std::ostream& os, const RunConfig& cfg)
{
    const ExperimentSpec& s = cfg.spec;
    const auto f = detail::format_double;
    os << "[channel]\n"
       << "n_segments = " << s.n_segments << '\n'
       << "phi_db = " << join_grid(s.phi_grid_db) << '\n'
       << "drift = " << join_grid(s.drift_grid) << "\n\n"
       << "[noise]\n"
       << "snr_db = " << join_grid(s.snr_grid_db) << "\n\n"
       << "[frame]\n"
       << "k_p = " << s.k_p << '\n'
       << "k_s = " << s.k_s << "\n\n"
       << "[trackers]\n"
       << "ids = " << join_trackers(s.trackers) << '\n'
       << "window_length = " << s.settings.window.length << '\n'
       << "window_stride = " << s.settings.window.stride << '\n'
       << "dd_block = " << s.settings.dd_block << '\n'
       << "mu1 = " << f(s.settings.mu.mu1) << '\n'
       << "mu2 = " << f(s.settings.mu.mu2) << '\n'
       << "stage_len = " << s.settings.mu.stage_len << '\n'
       << "mu_grid = " << (s.settings.mu_grid ? "true" : "false") << '\n'
       << "mu_grid_values = " << join_grid(s.settings.mu_grid_values) << "\n\n"
       << "[run]\n"
       << "trials = " << s.trials << '\n'
       << "symbols = " << s.symbols_per_trial << '\n'
       << "seed = " << s.master_seed << '\n'
       << "skip_blind = " << s.skip_blind << '\n'
       << "skip_pilot = " << s.skip_pilot << '\n'
       << "constellation = " << s.constellation_order << '\n'
       << "trace_symbols = " << cfg.trace_symbols << '\n';
}

inline bool operator==(const StepSchedule& a, const StepSchedule& b)
{
    return a.mu1 == b.mu1 && a.mu2 == b.mu2 && a.stage_len == b.stage_len;
}

inline bool operator==(const RunConfig& a, const RunConfig& b)
{
    const ExperimentSpec &x = a.spec, &y = b.spec;
    return x.n_segments == y.n_segments && x.phi_grid_db == y.phi_grid_db && x.snr_grid_db == y.snr_grid_db &&
           x.drift_grid == y.drift_grid && x.trackers == y.trackers &&
           x.settings.window.length == y.settings.window.length &&
           x.settings.window.stride == y.settings.window.stride && x.settings.dd_block == y.settings.dd_block &&
           x.settings.mu == y.settings.mu && x.settings.mu_grid == y.settings.mu_grid &&
           x.settings.mu_grid_values == y.settings.mu_grid_values &&
           x.constellation_order == y.constellation_order && x.k_p == y.k_p && x.k_s == y.k_s &&
           x.trials == y.trials && x.symbols_per_trial == y.symbols_per_trial && x.master_seed == y.master_seed &&
           x.skip_blind == y.skip_blind && x.skip_pilot == y.skip_pilot && a.trace_symbols == b.trace_symbols;
}

// ---------------------------------------------------------------------------
// Presets

/// Drift values of the three operating regimes: quasi-static, moderate, fast.
inline const std::vector<double> kDriftPresets{1e-8, 3.57e-6, 3.57e-5};

/// Per-segment PDL values of the PDL study.
inline const std::vector<double> kPdlPresetsDb{0.25, 0.70, 1.10};

/// SNR at which the known-channel ML receiver with differential coding reaches
/// SER ~1e-3 on a 20-segment link with the given per-segment PDL.
inline double reference_snr_db(double phi_db)
{
    if (phi_db == 0.0) return 18.0;
    if (phi_db == 0.25) return 17.9;
    if (phi_db == 0.70) return 18.5;
    if (phi_db == 1.10) return 19.2;
    throw std::invalid_argument("reference_snr_db: no calibrated value for this PDL");
}

inline std::vector<std::string> preset_names()
{
    return {"fig2", "fig4", "fig4a", "fig4b", "fig4c", "fig5a", "fig5b", "fig5c", "fig6a", "fig6b", "fig6c"};
}

inline std::optional<RunConfig> preset(std::string_view name)
{
    RunConfig c;
    ExperimentSpec& s = c.spec;
    s.trials = 20;
    s.symbols_per_trial = 100000;
    const std::vector<TrackerKind> blind{TrackerKind::Ml, TrackerKind::Mcma, TrackerKind::DdKabsch,
                                         TrackerKind::SwKabsch};
    const std::vector<TrackerKind> pilot{TrackerKind::Ml, TrackerKind::SwLs, TrackerKind::LsDdlms,
                                         TrackerKind::LsSwKabsch};
    const std::vector<double> snr_sweep = parse_range("12:22:1");

    if (name == "fig2") {
        s.phi_grid_db = {0.70};
        s.drift_grid = kDriftPresets;
        s.trials = 1;
        return c;
    }
    if (name == "fig4") {
        s.trackers = blind;
        s.drift_grid = log_grid(1e-8, 1e-3, 11);
        s.settings.mu_grid = true;
        return c;
    }
    if (name.size() == 5 && name.substr(0, 4) == "fig4" && name[4] >= 'a' && name[4] <= 'c') {
        s.trackers = blind;
        s.drift_grid = {kDriftPresets[name[4] - 'a']};
        s.snr_grid_db = snr_sweep;
        s.settings.mu_grid = true;
        return c;
    }
    if (name.size() == 5 && name.substr(0, 4) == "fig5" && name[4] >= 'a' && name[4] <= 'c') {
        const double phi = kPdlPresetsDb[name[4] - 'a'];
        s.trackers = pilot;
        s.phi_grid_db = {phi};
        s.snr_grid_db = {reference_snr_db(phi)};
        s.drift_grid = log_grid(1e-8, 1e-3, 11);
        s.settings.mu_grid = true;
        return c;
    }
    if (name.size() == 5 && name.substr(0, 4) == "fig6" && name[4] >= 'a' && name[4] <= 'c') {
        s.trackers = pilot;
        s.phi_grid_db = {0.70};
        s.drift_grid = {kDriftPresets[name[4] - 'a']};
        s.snr_grid_db = snr_sweep;
        s.settings.mu_grid = true;
        return c;
    }
    return std::nullopt;
}

}  // namespace poltrack
