// Command-line front end: desk-scale experiment reproductions plus the
// broker/worker service. Every run writes its data artifacts under --out
// together with a manifest recording the resolved inputs.
#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "icarusq/bias.hpp"
#include "icarusq/board.hpp"
#include "icarusq/broker.hpp"
#include "icarusq/capture_io.hpp"
#include "icarusq/config.hpp"
#include "icarusq/job.hpp"
#include "icarusq/job_store.hpp"
#include "icarusq/signal_core.hpp"
#include "icarusq/worker.hpp"

using namespace icarusq;
namespace fs = std::filesystem;

namespace {

struct CommonOpts {
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    std::string config_path;

    Config config() const {
        return config_path.empty() ? Config{} : Config::from_file(config_path);
    }
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--out", o.out_dir, "Output directory for artifacts");
    cmd->add_option("--seed", o.seed, "Seed for all randomness in this run");
    cmd->add_option("--config", o.config_path, "key = value configuration file");
}

/// Every run records what it resolved and what it wrote.
struct RunManifest {
    std::string command;
    json inputs = json::object();
    std::vector<std::string> outputs;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    void write(const CommonOpts& o) const {
        json j{{"command", command},
               {"seed", o.seed},
               {"config", o.config_path},
               {"inputs", inputs},
               {"outputs", outputs},
               {"duration_s",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count()}};
        const auto path = fs::path(o.out_dir) / (command + "-manifest.json");
        write_file(path.string(), j.dump(2) + "\n");
    }
};

std::string artifact(const CommonOpts& o, RunManifest& m, const std::string& name) {
    fs::create_directories(o.out_dir);
    const auto path = (fs::path(o.out_dir) / name).string();
    m.outputs.push_back(path);
    return path;
}

std::string csv_double(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

// Mean SNR of an ideal synthesized tone through the calibrated capture
// chain, amplitude set by the decoder reconstruction roll-off.
double bench_snr(double f_tone, double dac_rate, double adc_rate,
                 const BoardConfig& cfg, DecoderMode mode, std::uint64_t seed,
                 int n_seeds) {
    const double amp =
        std::abs(reconstruction_response(mode, f_tone, dac_rate)) * dac_rate;
    const double f_alias = alias_to_first_zone(f_tone, adc_rate);
    double acc = 0.0;
    for (int s = 0; s < n_seeds; ++s) {
        Board board(cfg);
        auto cap = board.capture_source(
            TriggerEvent{.raw_time_s = 0.0, .synced_time_s = 0.0},
            [&](double t) {
                return amp * std::sin(2.0 * std::numbers::pi * f_tone * t);
            },
            seed + static_cast<std::uint64_t>(s) + 1);
        auto spec = spectrum(cap.waveform(0), Window::hann);
        acc += snr(spec, f_alias);
    }
    return acc / n_seeds;
}

// ---------------------------------------------------------------------------

int cmd_pink_noise(const CommonOpts& o, std::size_t n, int rows) {
    RunManifest m{.command = "pink-noise"};
    m.inputs = {{"n", n}, {"rows", rows}};
    auto x = voss_pink_noise(n, rows, o.seed);
    std::ostringstream os;
    os << "index,value\n";
    for (std::size_t i = 0; i < x.size(); ++i)
        os << i << "," << csv_double(x[i]) << "\n";
    write_file(artifact(o, m, "pink-noise.csv"), os.str());

    auto spec = spectrum(Waveform(x, 1.0));
    std::ostringstream ps;
    ps << "normalized_frequency,magnitude\n";
    for (std::size_t k = 1; k < spec.magnitudes.size(); ++k)
        ps << csv_double(spec.bin_frequencies_hz[k]) << ","
           << csv_double(spec.magnitudes[k]) << "\n";
    write_file(artifact(o, m, "pink-noise-spectrum.csv"), ps.str());
    m.write(o);
    return 0;
}

int cmd_snr_sweep(const CommonOpts& o, const std::string& zones, double f0,
                  double adc_rate, double dac_rate, int seeds_per_zone) {
    RunManifest m{.command = "snr-sweep"};
    int zone_lo = 1, zone_hi = 9;
    if (std::sscanf(zones.c_str(), "%d..%d", &zone_lo, &zone_hi) != 2 || zone_lo < 1 ||
        zone_hi < zone_lo)
        throw std::invalid_argument("snr-sweep: --zones expects e.g. 1..9");
    m.inputs = {{"zones", zones}, {"f0", f0}, {"adc_rate", adc_rate},
                {"dac_rate", dac_rate}, {"seeds_per_zone", seeds_per_zone}};

    auto cfg = o.config().board_config();
    std::ostringstream os;
    os << "zone,tone_hz,alias_hz,snr\n";
    for (int z = zone_lo; z <= zone_hi; ++z) {
        // The tone in zone z whose alias is f0.
        const double base = static_cast<double>(z - 1) * adc_rate / 2.0;
        const double tone = (z % 2 == 1) ? base + f0 : base + (adc_rate / 2.0 - f0);
        const double s = bench_snr(tone, dac_rate, adc_rate, cfg, cfg.decoder_mode,
                                   o.seed + static_cast<std::uint64_t>(z) * 1000,
                                   seeds_per_zone);
        os << z << "," << csv_double(tone) << ","
           << csv_double(alias_to_first_zone(tone, adc_rate)) << ","
           << csv_double(s) << "\n";
    }
    write_file(artifact(o, m, "snr-sweep.csv"), os.str());
    m.write(o);
    return 0;
}

int cmd_power_sweep(const CommonOpts& o, double f_start, double f_stop,
                    double f_step, double dac_rate) {
    RunManifest m{.command = "power-sweep"};
    m.inputs = {{"f_start", f_start}, {"f_stop", f_stop}, {"f_step", f_step},
                {"dac_rate", dac_rate}};
    const double cal = o.config().full_scale_dbm();
    BalunModel balun;
    std::ostringstream os;
    os << "frequency_hz,nrz_dbm,mix_dbm\n";
    for (double f = f_start; f <= f_stop + f_step / 2.0; f += f_step)
        os << csv_double(f) << ","
           << csv_double(expected_output_power_dbm(f, dac_rate, DecoderMode::NRZ,
                                                   balun, cal))
           << ","
           << csv_double(expected_output_power_dbm(f, dac_rate, DecoderMode::Mix,
                                                   balun, cal))
           << "\n";
    write_file(artifact(o, m, "power-sweep.csv"), os.str());
    m.write(o);
    return 0;
}

int cmd_alias(const CommonOpts& o, double f, double fs) {
    RunManifest m{.command = "alias"};
    m.inputs = {{"f", f}, {"fs", fs}};
    const double alias = alias_to_first_zone(f, fs);
    const int zone = nyquist_zone_of(f, fs);
    std::cout << "input " << f << " Hz sampled at " << fs << " S/s\n"
              << "alias " << alias << " Hz, Nyquist zone " << zone << "\n";
    json j{{"input_hz", f}, {"sample_rate_hz", fs}, {"alias_hz", alias},
           {"zone", zone}};
    write_file(artifact(o, m, "alias.json"), j.dump(2) + "\n");
    m.write(o);
    return 0;
}

int cmd_feedback_demo(const CommonOpts& o, double switch_after_s) {
    RunManifest m{.command = "feedback-demo"};
    m.inputs = {{"switch_after_s", switch_after_s}};
    auto cfg = o.config().board_config();
    std::vector<Board> boards;
    boards.emplace_back(cfg);
    auto& board = boards.front();

    // Upper gang: a flat-top pulse. Lower gang: a tone. The switch swaps
    // channel 0's output to the lower-gang buffer mid-playback.
    const std::size_t n = 8192;
    std::vector<double> flat(n, 0.8), tone(n);
    for (std::size_t i = 0; i < n; ++i)
        tone[i] = 0.8 * std::sin(2.0 * std::numbers::pi * 200e6 *
                                 static_cast<double>(i) / cfg.dac_rate_hz());
    board.load_waveform(0, flat);
    board.load_waveform(8, tone);
    board.arm_all();

    Wiring w;
    w.links.push_back(WiringLink{0, 0, 0, 0, 1.0, std::nullopt});
    std::vector<ScheduleEntry> schedule{{0.0, TriggerTarget::DAC},
                                        {0.0, TriggerTarget::ADC},
                                        {switch_after_s, TriggerTarget::Switch}};
    // The switch entry must stay inside the playback window.
    std::sort(schedule.begin(), schedule.end(),
              [](const auto& a, const auto& b) { return a.time_s < b.time_s; });
    auto reps = run_sequence(boards, w, schedule, 1, ClockDomain{}, o.seed);
    write_file(artifact(o, m, "feedback-demo.csv"),
               capture_to_csv({reps[0][0].channel_codes[0]}));
    m.write(o);
    return 0;
}

int cmd_sync_demo(const CommonOpts& o, int n_triggers) {
    RunManifest m{.command = "sync-demo"};
    m.inputs = {{"n_triggers", n_triggers}};
    ClockDomain clock;
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> dist(0.0, 1e-3);
    std::ostringstream os;
    os << "raw_s,synced_s,jitter_s\n";
    for (int i = 0; i < n_triggers; ++i) {
        TriggerEvent t{.raw_time_s = dist(rng)};
        auto s = flipflop_sync(clock, t);
        os << csv_double(t.raw_time_s) << "," << csv_double(*s.synced_time_s)
           << "," << csv_double(*s.synced_time_s - t.raw_time_s) << "\n";
    }
    write_file(artifact(o, m, "sync-demo.csv"), os.str());

    // Two boards on the shared clock line start bit-identically.
    Board a(o.config().board_config(), "a");
    Board b(o.config().board_config(), "b");
    std::vector<double> wf(128, 0.5);
    a.load_waveform(0, wf);
    b.load_waveform(0, wf);
    a.arm_all();
    b.arm_all();
    auto t = flipflop_sync(clock, TriggerEvent{.raw_time_s = 4.2e-5});
    const bool identical =
        a.trigger_dacs(t)[0].start_time_s == b.trigger_dacs(t)[0].start_time_s;
    std::cout << "two-board start times bit-identical: "
              << (identical ? "yes" : "no") << "\n";
    m.inputs["two_board_identical"] = identical;
    m.write(o);
    return identical ? 0 : 1;
}

int cmd_bias_noise(const CommonOpts& o, double setpoint_ma, double rate,
                   double duration_s) {
    RunManifest m{.command = "bias-noise"};
    m.inputs = {{"setpoint_ma", setpoint_ma}, {"rate", rate},
                {"duration_s", duration_s}};
    BiasChannel ch;
    auto trace = simulate_trace(ch, setpoint_ma * 1e-3, rate, duration_s, o.seed);
    auto spec = amplitude_noise_spectrum(trace);
    std::ostringstream os;
    os << "frequency_hz,asd_a_per_rthz\n";
    for (std::size_t k = 1; k < spec.magnitudes.size(); ++k)
        os << csv_double(spec.bin_frequencies_hz[k]) << ","
           << csv_double(spec.magnitudes[k]) << "\n";
    write_file(artifact(o, m, "bias-noise.csv"), os.str());

    const double hi = std::min(10e3, spec.bin_frequencies_hz.back());
    const double rms = total_rms_noise(spec, 0.1, hi);
    std::cout << "total rms noise over 0.1 Hz - " << hi << " Hz: " << rms
              << " A\n";
    m.inputs["total_rms_a"] = rms;
    m.write(o);
    return 0;
}

int cmd_allan(const CommonOpts& o, double hours, double rate,
              double setpoint_ma) {
    RunManifest m{.command = "allan"};
    m.inputs = {{"hours", hours}, {"rate", rate}, {"setpoint_ma", setpoint_ma}};
    BiasChannel ch;
    auto trace =
        simulate_trace(ch, setpoint_ma * 1e-3, rate, hours * 3600.0, o.seed, 195e-9);
    // Log-spaced taus from 10 samples up to a fifth of the trace, always
    // including the 500 s benchmark point when it fits.
    const double t_total = hours * 3600.0;
    std::vector<double> taus;
    for (double tau = 10.0 / rate; tau < t_total / 5.0; tau *= 2.0)
        taus.push_back(std::round(tau * rate) / rate);
    if (500.0 * rate == std::round(500.0 * rate) && 500.0 < t_total / 2.0)
        taus.push_back(500.0);
    std::sort(taus.begin(), taus.end());
    auto adev = overlapping_allan_deviation(trace, taus);
    std::ostringstream os;
    os << "tau_s,fractional_adev\n";
    for (std::size_t i = 0; i < taus.size(); ++i)
        os << csv_double(taus[i]) << "," << csv_double(adev[i]) << "\n";
    write_file(artifact(o, m, "allan.csv"), os.str());
    m.write(o);
    return 0;
}

int cmd_flux_map(const CommonOpts& o, double span_ma, int bias_points,
                 int probe_points) {
    RunManifest m{.command = "flux-map"};
    m.inputs = {{"span_ma", span_ma}, {"bias_points", bias_points},
                {"probe_points", probe_points}};
    FluxMapParams p;
    std::vector<double> biases, probes;
    for (int k = 0; k < bias_points; ++k)
        biases.push_back((-span_ma + 2.0 * span_ma * k / (bias_points - 1)) * 1e-3);
    const double f_lo = p.cavity_f0_hz - 1.5 * p.shift_amplitude_hz;
    const double f_hi = p.cavity_f0_hz + 1.5 * p.shift_amplitude_hz;
    for (int k = 0; k < probe_points; ++k)
        probes.push_back(f_lo + (f_hi - f_lo) * k / (probe_points - 1));
    auto map = cavity_transmission_map(p, biases, probes);
    std::ostringstream os;
    os << "bias_ma,probe_hz,transmission\n";
    for (std::size_t r = 0; r < map.size(); ++r)
        for (std::size_t c = 0; c < map[r].size(); ++c)
            os << csv_double(biases[r] * 1e3) << "," << csv_double(probes[c])
               << "," << csv_double(map[r][c]) << "\n";
    write_file(artifact(o, m, "flux-map.csv"), os.str());
    m.write(o);
    return 0;
}

int cmd_serve(const CommonOpts& o, const std::string& dir, const std::string& host,
              int port, const std::string& token, double lease_s) {
    auto store = std::make_shared<JobStore>(dir, lease_s);
    Broker broker(store, token);
    std::cout << "broker serving on " << host << ":" << port << ", store at "
              << dir << "\n";
    if (!broker.listen(host, port))
        throw std::runtime_error("serve: cannot bind " + host + ":" +
                                 std::to_string(port));
    return 0;
}

int cmd_work(const CommonOpts& o, const std::string& host, int port,
             const std::string& token, bool once) {
    Worker worker(host, port, token, o.config());
    if (once)
        return worker.poll_once() ? 0 : 1;
    std::atomic<bool> stop{false};
    std::cout << "worker polling " << host << ":" << port << "\n";
    worker.run(stop);
    return 0;
}

int cmd_submit(const CommonOpts& o, const std::string& host, int port,
               const std::string& file) {
    std::string payload;
    if (file.empty() || file == "-") {
        std::ostringstream os;
        os << std::cin.rdbuf();
        payload = os.str();
    } else {
        payload = read_file(file);
    }
    httplib::Client client(host, port);
    auto res = client.Post("/jobs", payload, "application/json");
    if (!res)
        throw std::runtime_error("submit: cannot reach broker at " + host + ":" +
                                 std::to_string(port));
    if (res->status != 201) {
        std::cerr << res->body << "\n";
        return 1;
    }
    std::cout << json::parse(res->body)["id"].get<std::string>() << "\n";
    return 0;
}

int cmd_fetch(const CommonOpts& o, const std::string& host, int port,
              const std::string& id, const std::string& out_file) {
    httplib::Client client(host, port);
    auto st = client.Get("/jobs/" + id);
    if (!st)
        throw std::runtime_error("fetch: cannot reach broker at " + host + ":" +
                                 std::to_string(port));
    if (st->status != 200) {
        std::cerr << st->body << "\n";
        return 1;
    }
    const json job = json::parse(st->body);
    const std::string status = job["status"];
    if (status != "done") {
        std::cout << "status: " << status;
        if (status == "failed")
            std::cout << " (" << job["failure_reason"].get<std::string>() << ")";
        std::cout << "\n";
        return 1;
    }
    auto res = client.Get("/jobs/" + id + "/result");
    if (!res || res->status != 200)
        throw std::runtime_error("fetch: result download failed");
    write_file(out_file, res->body);
    std::cout << "wrote " << res->body.size() << " bytes to " << out_file << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Virtual RF control stack: direct-sampling experiments and "
                 "the job service"};
    app.require_subcommand(1);

    CommonOpts common;

    // pink-noise
    std::size_t pn_n = 65536;
    int pn_rows = 16;
    auto* pink = app.add_subcommand("pink-noise", "Generate Voss pink noise");
    add_common(pink, common);
    pink->add_option("--n", pn_n, "Number of samples");
    pink->add_option("--rows", pn_rows, "Generator rows (1-32)");

    // snr-sweep
    std::string sw_zones = "1..9";
    double sw_f0 = 800e6, sw_adc = 1.96608e9, sw_dac = 6.144e9;
    int sw_seeds = 4;
    auto* sweep = app.add_subcommand("snr-sweep", "SNR per Nyquist zone");
    add_common(sweep, common);
    sweep->add_option("--zones", sw_zones, "Zone range, e.g. 1..9");
    sweep->add_option("--f0", sw_f0, "First-zone alias frequency, Hz");
    sweep->add_option("--adc-rate", sw_adc, "Capture rate, S/s");
    sweep->add_option("--dac-rate", sw_dac, "Generation rate, S/s");
    sweep->add_option("--averages", sw_seeds, "Captures averaged per zone");

    // power-sweep
    double pw_start = 7e9, pw_stop = 10e9, pw_step = 1e6, pw_rate = 6.144e9;
    auto* power = app.add_subcommand("power-sweep",
                                     "Expected output power vs frequency");
    add_common(power, common);
    power->add_option("--f-start", pw_start, "Sweep start, Hz");
    power->add_option("--f-stop", pw_stop, "Sweep stop, Hz");
    power->add_option("--f-step", pw_step, "Sweep step, Hz");
    power->add_option("--dac-rate", pw_rate, "Generation rate, S/s");

    // alias
    double al_f = 7.06432e9, al_fs = 1.96608e9;
    auto* alias = app.add_subcommand("alias", "Fold a tone to the first zone");
    add_common(alias, common);
    alias->add_option("--f", al_f, "Tone frequency, Hz");
    alias->add_option("--fs", al_fs, "Sample rate, S/s");

    // feedback-demo
    double fb_switch = 6e-7;
    auto* feedback = app.add_subcommand("feedback-demo",
                                        "Mid-playback gang switch capture");
    add_common(feedback, common);
    feedback->add_option("--switch-after", fb_switch,
                         "Switch trigger time, seconds");

    // sync-demo
    int sd_n = 10000;
    auto* sync = app.add_subcommand("sync-demo", "Trigger-sync jitter sample");
    add_common(sync, common);
    sync->add_option("--triggers", sd_n, "Number of random triggers");

    // bias-noise
    double bn_set = 1.0, bn_rate = 32768.0, bn_dur = 4.0;
    auto* bias = app.add_subcommand("bias-noise",
                                    "Bias-source amplitude noise spectrum");
    add_common(bias, common);
    bias->add_option("--setpoint-ma", bn_set, "Setpoint, mA");
    bias->add_option("--rate", bn_rate, "Digitizer rate, S/s");
    bias->add_option("--duration", bn_dur, "Trace length, seconds");

    // allan
    double av_hours = 18.0, av_rate = 16.0, av_set = 1.0;
    auto* allan = app.add_subcommand("allan", "Long-term stability (Allan)");
    add_common(allan, common);
    allan->add_option("--hours", av_hours, "Simulated bench duration, hours");
    allan->add_option("--rate", av_rate, "Digitizer rate, S/s");
    allan->add_option("--setpoint-ma", av_set, "Setpoint, mA");

    // flux-map
    double fm_span = 2.0;
    int fm_bias = 81, fm_probe = 201;
    auto* flux = app.add_subcommand("flux-map", "Flux-tuned cavity map");
    add_common(flux, common);
    flux->add_option("--span-ma", fm_span, "Bias half-span, mA");
    flux->add_option("--bias-points", fm_bias, "Bias grid points");
    flux->add_option("--probe-points", fm_probe, "Probe grid points");

    // serve
    std::string sv_dir = "broker-data", sv_host = "0.0.0.0",
                sv_token = "change-me";
    int sv_port = 8425;
    double sv_lease = 300.0;
    auto* serve = app.add_subcommand("serve", "Run the job broker");
    add_common(serve, common);
    serve->add_option("--dir", sv_dir, "Durable store directory");
    serve->add_option("--host", sv_host, "Bind address");
    serve->add_option("--port", sv_port, "Bind port");
    serve->add_option("--token", sv_token, "Worker bearer token");
    serve->add_option("--lease", sv_lease, "Claim lease timeout, seconds");

    // work
    std::string wk_host = "127.0.0.1", wk_token = "change-me";
    int wk_port = 8425;
    bool wk_once = false;
    auto* work = app.add_subcommand("work", "Run an instrument worker");
    add_common(work, common);
    work->add_option("--host", wk_host, "Broker host");
    work->add_option("--port", wk_port, "Broker port");
    work->add_option("--token", wk_token, "Worker bearer token");
    work->add_flag("--once", wk_once, "Poll a single time and exit");

    // submit
    std::string sb_host = "127.0.0.1", sb_file;
    int sb_port = 8425;
    auto* submit = app.add_subcommand("submit", "Submit a job (JSON payload)");
    add_common(submit, common);
    submit->add_option("--host", sb_host, "Broker host");
    submit->add_option("--port", sb_port, "Broker port");
    submit->add_option("--file", sb_file, "Payload file ('-' for stdin)");

    // fetch
    std::string ft_host = "127.0.0.1", ft_id, ft_out = "result.bin";
    int ft_port = 8425;
    auto* fetch = app.add_subcommand("fetch", "Fetch a job status/result");
    add_common(fetch, common);
    fetch->add_option("--host", ft_host, "Broker host");
    fetch->add_option("--port", ft_port, "Broker port");
    fetch->add_option("--id", ft_id, "Job id")->required();
    fetch->add_option("--out-file", ft_out, "Result destination file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (pink->parsed())
            return cmd_pink_noise(common, pn_n, pn_rows);
        if (sweep->parsed())
            return cmd_snr_sweep(common, sw_zones, sw_f0, sw_adc, sw_dac, sw_seeds);
        if (power->parsed())
            return cmd_power_sweep(common, pw_start, pw_stop, pw_step, pw_rate);
        if (alias->parsed())
            return cmd_alias(common, al_f, al_fs);
        if (feedback->parsed())
            return cmd_feedback_demo(common, fb_switch);
        if (sync->parsed())
            return cmd_sync_demo(common, sd_n);
        if (bias->parsed())
            return cmd_bias_noise(common, bn_set, bn_rate, bn_dur);
        if (allan->parsed())
            return cmd_allan(common, av_hours, av_rate, av_set);
        if (flux->parsed())
            return cmd_flux_map(common, fm_span, fm_bias, fm_probe);
        if (serve->parsed())
            return cmd_serve(common, sv_dir, sv_host, sv_port, sv_token, sv_lease);
        if (work->parsed())
            return cmd_work(common, wk_host, wk_port, wk_token, wk_once);
        if (submit->parsed())
            return cmd_submit(common, sb_host, sb_port, sb_file);
        if (fetch->parsed())
            return cmd_fetch(common, ft_host, ft_port, ft_id, ft_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
