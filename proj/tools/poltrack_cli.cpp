// poltrack command-line front end.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "poltrack/channel.hpp"
#include "poltrack/experiment_config.hpp"
#include "poltrack/sim.hpp"

namespace {

using namespace poltrack;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct Options {
    std::string config;
    std::string out;
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::optional<std::uint64_t> symbols;
    std::optional<int> segments;
    std::string snr;
    std::string drift;
    std::string phi;
    std::string trackers;
    std::optional<bool> mu_grid;
    unsigned workers = 1;
    bool quiet = false;
    std::string telemetry;
};

void add_common(CLI::App& sub, Options& o)
{
    sub.add_option("--config", o.config, "INI configuration file");
    sub.add_option("--out", o.out, "Output CSV path");
    sub.add_option("--preset", o.preset, "Named parameter set applied before --config")
        ->check(CLI::IsMember(preset_names()));
    sub.add_option("--seed", o.seed, "Master seed");
    sub.add_option("--trials", o.trials, "Trials per cell")->check(CLI::PositiveNumber);
    sub.add_option("--symbols", o.symbols, "Symbols per trial");
    sub.add_option("--segments", o.segments, "Number of fiber segments")->check(CLI::PositiveNumber);
    sub.add_option("--snr", o.snr, "SNR grid in dB, e.g. 12:22:1 or 16,18,20");
    sub.add_option("--drift", o.drift, "Drift grid (dp_tot * T)");
    sub.add_option("--phi", o.phi, "Per-segment PDL grid in dB");
    sub.add_option("--trackers", o.trackers, "Comma-separated tracker ids");
    sub.add_option("--mu-grid", o.mu_grid, "Search the two-stage step-size grid (true/false)");
    sub.add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub.add_flag("--quiet", o.quiet, "Suppress per-cell summary lines");
}

/// Preset, then config file, then explicit flags.
RunConfig resolve(const Options& o)
{
    RunConfig cfg;
    if (!o.preset.empty()) {
        auto p = preset(o.preset);
        if (!p) throw ConfigError("unknown preset '" + o.preset + "'");
        cfg = *p;
    }
    if (!o.config.empty()) {
        std::ifstream in(o.config);
        if (!in) throw ConfigError("cannot open config file '" + o.config + "'");
        apply_config(in, cfg);
    }
    ExperimentSpec& s = cfg.spec;
    if (o.seed) s.master_seed = *o.seed;
    if (o.trials) s.trials = *o.trials;
    if (o.symbols) s.symbols_per_trial = *o.symbols;
    if (o.segments) s.n_segments = *o.segments;
    if (!o.snr.empty()) s.snr_grid_db = parse_grid(o.snr);
    if (!o.drift.empty()) s.drift_grid = parse_grid(o.drift);
    if (!o.phi.empty()) s.phi_grid_db = parse_grid(o.phi);
    if (!o.trackers.empty()) s.trackers = parse_tracker_list(o.trackers);
    if (o.mu_grid) s.settings.mu_grid = *o.mu_grid;
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

std::ofstream open_out(const std::string& path)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    return f;
}

void require_out(const Options& o, const CLI::App& sub)
{
    if (o.out.empty()) throw ConfigError("--out is required\n" + sub.help());
}

int cmd_sweep(const Options& o, const CLI::App& sub)
{
    require_out(o, sub);
    const RunConfig cfg = resolve(o);
    SweepOptions so;
    so.workers = o.workers;
    so.progress = o.quiet ? nullptr : &std::cout;
    const SweepResult r = run_sweep(cfg.spec, so);
    auto f = open_out(o.out);
    write_sweep_csv(f, r);
    return kExitOk;
}

/// Output path for one drift value when several traces are requested.
std::string trace_path(const std::string& out, double drift, bool several)
{
    if (!several) return out;
    char tag[64];
    std::snprintf(tag, sizeof tag, "_drift%g", drift);
    const auto dot = out.find_last_of('.');
    const auto slash = out.find_last_of('/');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return out + tag;
    return out.substr(0, dot) + tag + out.substr(dot);
}

int cmd_pdl_trace(const Options& o, const CLI::App& sub)
{
    require_out(o, sub);
    const RunConfig cfg = resolve(o);
    const ExperimentSpec& s = cfg.spec;
    if (s.phi_grid_db.size() != 1) throw ConfigError("pdl-trace takes exactly one PDL value");
    const bool several = s.drift_grid.size() > 1;
    for (double drift : s.drift_grid) {
        ChannelConfig cc;
        cc.n_segments = s.n_segments;
        cc.dp_tot_times_T = drift;
        cc.phi_db = s.phi_grid_db.front();
        cc.seed = s.master_seed;
        const auto trace = pdl_trace(cc, cfg.trace_symbols);
        const std::string path = trace_path(o.out, drift, several);
        auto f = open_out(path);
        write_pdl_trace_csv(f, trace);
        if (!o.quiet) {
            double mean = 0.0, sq = 0.0;
            for (const auto& p : trace) mean += p.rho_db;
            mean /= static_cast<double>(trace.size());
            for (const auto& p : trace) sq += (p.rho_db - mean) * (p.rho_db - mean);
            std::printf("drift=%g  rows=%zu  mean=%.4f dB  var=%.6g dB^2  -> %s\n", drift, trace.size(), mean,
                        sq / static_cast<double>(trace.size()), path.c_str());
        }
    }
    return kExitOk;
}

int cmd_single_run(const Options& o, const CLI::App& sub)
{
    require_out(o, sub);
    RunConfig cfg = resolve(o);
    ExperimentSpec& s = cfg.spec;
    s.phi_grid_db.resize(1);
    s.drift_grid.resize(1);
    s.snr_grid_db.resize(1);
    SweepOptions so;
    so.workers = o.workers;
    so.progress = o.quiet ? nullptr : &std::cout;
    const SweepResult r = run_sweep(s, so);
    {
        auto f = open_out(o.out);
        write_sweep_csv(f, r);
    }
    if (!o.telemetry.empty()) {
        auto f = open_out(o.telemetry);
        f << "tracker,k,h00_re,h00_im,h01_re,h01_im,h10_re,h10_im,h11_re,h11_im\n";
        const TelemetrySink sink = [&f](std::uint64_t k, TrackerKind t, const Mat2& h) {
            char buf[320];
            std::snprintf(buf, sizeof buf, "%s,%llu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                          std::string(tracker_name(t)).c_str(), static_cast<unsigned long long>(k), h.m00.real(),
                          h.m00.imag(), h.m01.real(), h.m01.imag(), h.m10.real(), h.m10.imag(), h.m11.real(),
                          h.m11.imag());
            f << buf;
        };
        const Cell cell{0, s.phi_grid_db[0], s.drift_grid[0], s.snr_grid_db[0]};
        for (TrackerKind k : s.trackers) {
            std::optional<StepSchedule> mu;
            if (const SweepRow* row = r.find(k, cell.snr_db, cell.drift, cell.phi_db); row && row->mu) mu = row->mu;
            run_trial(s, cell, k, 0, mu, &sink);
        }
    }
    return kExitOk;
}

int cmd_dump_config(const Options& o)
{
    const RunConfig cfg = resolve(o);
    if (o.out.empty()) {
        dump_config(std::cout, cfg);
    } else {
        auto f = open_out(o.out);
        dump_config(f, cfg);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Polarization and PDL tracking simulator"};
    app.require_subcommand(1);
    Options o;
    auto* drift = app.add_subcommand("sweep-drift", "SER versus drift; writes a sweep CSV");
    auto* snr = app.add_subcommand("sweep-snr", "SER versus SNR; writes a sweep CSV");
    auto* trace = app.add_subcommand("pdl-trace", "Aggregated PDL over time; writes k,rho_db CSV");
    auto* single = app.add_subcommand("single-run", "One cell, every configured tracker");
    auto* dump = app.add_subcommand("dump-config", "Print the effective configuration as INI");
    for (auto* sub : {drift, snr, trace, single, dump}) add_common(*sub, o);
    single->add_option("--telemetry", o.telemetry, "Per-stride channel-estimate CSV for trial 0");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitConfig;
    }

    try {
        if (drift->parsed()) return cmd_sweep(o, *drift);
        if (snr->parsed()) return cmd_sweep(o, *snr);
        if (trace->parsed()) return cmd_pdl_trace(o, *trace);
        if (single->parsed()) return cmd_single_run(o, *single);
        if (dump->parsed()) return cmd_dump_config(o);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const InvalidFrame& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitConfig;
}
