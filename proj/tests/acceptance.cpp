// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Each check runs the real library code paths end to end.
#include <atomic>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "icarusq/bias.hpp"
#include "icarusq/board.hpp"
#include "icarusq/broker.hpp"
#include "icarusq/job.hpp"
#include "icarusq/job_store.hpp"
#include "icarusq/signal_core.hpp"
#include "icarusq/worker.hpp"

using namespace icarusq;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(const std::string& name, bool ok, const std::string& detail = "") {
    std::printf("%s: %s%s%s\n", ok ? "PASS" : "FAIL", name.c_str(),
                detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!ok)
        ++g_failures;
}

std::string fmt(const char* f, ...) {
    char buf[256];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof buf, f, args);
    va_end(args);
    return buf;
}

// --- 1. alias oracle equivalence -----------------------------------------

void check_alias_oracle() {
    const double fs = 1.96608e9;
    const std::size_t n = 65536;
    const double bin_hz = fs / static_cast<double>(n);
    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> freq(0.0, 10e9);

    BoardConfig cfg;
    cfg.adc_noise_density = 0.0;
    int checked = 0, mismatches = 0;
    double worst = 0.0;
    while (checked < 1000) {
        const double f = freq(rng);
        const double expected = alias_to_first_zone(f, fs);
        // Tones folding within two bins of DC or Nyquist are ambiguous at
        // this resolution; draw another.
        if (expected < 2.0 * bin_hz || expected > fs / 2.0 - 2.0 * bin_hz)
            continue;
        Board board(cfg);
        auto cap = board.capture_source(
            TriggerEvent{.raw_time_s = 0.0, .synced_time_s = 0.0},
            [f](double t) {
                return 0.9 * std::sin(2.0 * std::numbers::pi * f * t);
            });
        auto spec = spectrum(cap.waveform(0));
        std::size_t peak = 1;
        for (std::size_t k = 2; k < spec.magnitudes.size(); ++k)
            if (spec.magnitudes[k] > spec.magnitudes[peak])
                peak = k;
        const double measured = static_cast<double>(peak) * bin_hz;
        const double err = std::abs(measured - expected);
        worst = std::max(worst, err);
        if (err > bin_hz)
            ++mismatches;
        ++checked;
    }
    report("alias oracle equivalence over 1000 random tones", mismatches == 0,
           fmt("%d mismatches, worst error %.1f Hz (bin %.1f Hz)", mismatches,
               worst, bin_hz));
}

// --- 2. reconstruction nulls ----------------------------------------------

void check_reconstruction_nulls() {
    const double fs = 6.144e9;
    const double nrz = std::abs(reconstruction_response(DecoderMode::NRZ, fs, fs));
    const double mix =
        std::abs(reconstruction_response(DecoderMode::Mix, 2.0 * fs, fs));
    report("reconstruction response nulls at 6.144 and 12.288 GHz",
           nrz <= 1e-12 && mix <= 1e-12,
           fmt("|R_nrz(fs)| = %.2e, |R_mix(2fs)| = %.2e", nrz, mix));
}

// --- 3. output power band means -------------------------------------------

void check_power_band_means() {
    const double fs = 6.144e9;
    const double cal = Config{}.full_scale_dbm();
    BalunModel balun;
    double nrz_sum = 0.0, mix_sum = 0.0;
    int count = 0;
    for (double f = 7e9; f <= 10e9; f += 1e6) {
        nrz_sum += expected_output_power_dbm(f, fs, DecoderMode::NRZ, balun, cal);
        mix_sum += expected_output_power_dbm(f, fs, DecoderMode::Mix, balun, cal);
        ++count;
    }
    const double nrz_mean = nrz_sum / count;
    const double mix_mean = mix_sum / count;

    bool pointwise = true;
    for (double f = fs / 2.0 + 1e6; f < 1.5 * fs; f += 1e6)
        pointwise &= std::abs(reconstruction_response(DecoderMode::Mix, f, fs)) >
                     std::abs(reconstruction_response(DecoderMode::NRZ, f, fs));

    const bool ok = std::abs(nrz_mean - (-24.1)) <= 3.0 &&
                    std::abs(mix_mean - (-20.4)) <= 3.0 && pointwise;
    report("7-10 GHz power means and Mix > NRZ in zones 2-3", ok,
           fmt("NRZ mean %.2f dBm, Mix mean %.2f dBm, pointwise %s", nrz_mean,
               mix_mean, pointwise ? "yes" : "no"));
}

// --- 4. SNR degradation across Nyquist zones -------------------------------

double bench_snr(double f_tone, int n_seeds) {
    const double fs_dac = 6.144e9;
    const double amp =
        std::abs(reconstruction_response(DecoderMode::NRZ, f_tone, fs_dac)) *
        fs_dac;
    const double f_alias = alias_to_first_zone(f_tone, 1.96608e9);
    double acc = 0.0;
    for (int s = 0; s < n_seeds; ++s) {
        Board board{BoardConfig{}};
        auto cap = board.capture_source(
            TriggerEvent{.raw_time_s = 0.0, .synced_time_s = 0.0},
            [&](double t) {
                return amp * std::sin(2.0 * std::numbers::pi * f_tone * t);
            },
            9000 + static_cast<std::uint64_t>(s));
        auto spec = spectrum(cap.waveform(0), Window::hann);
        acc += snr(spec, f_alias);
    }
    return acc / n_seeds;
}

void check_snr_zones() {
    const double snr1 = bench_snr(800e6, 8);      // first zone
    const double snr8 = bench_snr(7.06432e9, 8);  // eighth zone, same alias
    const double factor = snr1 / snr8;
    const bool ok = snr1 > 1e3 && snr1 < 4e3 && factor >= 3.0 && factor <= 8.0;
    report("first-zone SNR near 2e3 with eighth zone 3-8x lower", ok,
           fmt("zone 1: %.0f, zone 8: %.0f, factor %.2f", snr1, snr8, factor));
}

// --- 5. pink-noise slope ----------------------------------------------------

void check_pink_slope() {
    auto x = voss_pink_noise(1 << 20, 16, 11);
    auto spec = spectrum(Waveform(x, 1.0));
    // Log-bucket power-law fit over two central decades.
    const int buckets = 40;
    std::vector<double> lx, ly;
    for (int b = 0; b < buckets; ++b) {
        const double lo = 1e-4 * std::pow(100.0, static_cast<double>(b) / buckets);
        const double hi =
            1e-4 * std::pow(100.0, static_cast<double>(b + 1) / buckets);
        double acc = 0.0, facc = 0.0;
        std::size_t cnt = 0;
        for (std::size_t k = 1; k < spec.magnitudes.size(); ++k) {
            const double f = spec.bin_frequencies_hz[k];
            if (f < lo || f >= hi)
                continue;
            acc += spec.magnitudes[k] * spec.magnitudes[k];
            facc += f;
            ++cnt;
        }
        if (!cnt)
            continue;
        lx.push_back(std::log10(facc / cnt));
        ly.push_back(10.0 * std::log10(acc / cnt));
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
    }
    const double nn = static_cast<double>(lx.size());
    const double slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
    report("pink-noise periodogram slope -10 +- 2 dB/decade",
           std::abs(slope + 10.0) <= 2.0, fmt("slope %.2f dB/decade", slope));
}

// --- 6. quantization SNRs ----------------------------------------------------

double quantized_sine_snr_db(int bits) {
    const std::size_t n = 65536;
    const std::size_t bin = 12345;
    Quantizer q(bits);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = q.decode(q.encode(
            std::sin(2.0 * std::numbers::pi * static_cast<double>(bin) *
                     static_cast<double>(i) / static_cast<double>(n))));
    auto spec = spectrum(Waveform(x, 1.0));
    double sig = spec.magnitudes[bin] * spec.magnitudes[bin];
    double noise = 0.0;
    for (std::size_t k = 1; k < spec.magnitudes.size(); ++k)
        if (k != bin)
            noise += spec.magnitudes[k] * spec.magnitudes[k];
    return 10.0 * std::log10(sig / noise);
}

void check_quantization_snr() {
    const double dac = quantized_sine_snr_db(14);
    const double adc = quantized_sine_snr_db(12);
    const bool ok = std::abs(dac - 86.0) <= 2.0 && std::abs(adc - 74.0) <= 2.0;
    report("quantization SNR 86 +- 2 dB (14-bit) and 74 +- 2 dB (12-bit)", ok,
           fmt("14-bit: %.2f dB, 12-bit: %.2f dB", dac, adc));
}

// --- 7. trigger jitter and multi-board alignment -----------------------------

void check_trigger_sync() {
    ClockDomain clock;
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> dist(0.0, 1e-3);
    bool bounds_ok = true;
    double max_jitter = 0.0;
    for (int i = 0; i < 10000; ++i) {
        TriggerEvent t{.raw_time_s = dist(rng)};
        auto s = flipflop_sync(clock, t);
        const double j = *s.synced_time_s - t.raw_time_s;
        bounds_ok &= j > 0.0 && j <= 8.139e-9;
        max_jitter = std::max(max_jitter, j);
    }

    Board a(BoardConfig{}, "a");
    Board b(BoardConfig{}, "b");
    std::vector<double> wf(128, 0.5);
    a.load_waveform(0, wf);
    b.load_waveform(0, wf);
    a.arm_all();
    b.arm_all();
    auto t = flipflop_sync(clock, TriggerEvent{.raw_time_s = 5.1e-5});
    const bool identical =
        a.trigger_dacs(t)[0].start_time_s == b.trigger_dacs(t)[0].start_time_s;
    report("trigger jitter in (0, 8.139 ns] and bit-identical board starts",
           bounds_ok && identical,
           fmt("max jitter %.4f ns, boards identical: %s", max_jitter * 1e9,
               identical ? "yes" : "no"));
}

// --- 8. FIFO and timing limits ------------------------------------------------

void check_device_limits() {
    Board board{BoardConfig{}};
    bool overflow = false;
    try {
        board.load_waveform(0, std::vector<double>(65537, 0.0));
    } catch (const FifoOverflowError&) {
        overflow = true;
    }

    board.load_waveform(0, std::vector<double>(1024, 0.5));
    board.arm_all();
    ClockDomain clock;
    auto t0 = flipflop_sync(clock, TriggerEvent{.raw_time_s = 0.0});
    auto sigs = board.trigger_dacs(t0);
    bool retrigger_blocked = false;
    try {
        board.trigger_dacs(
            flipflop_sync(clock, TriggerEvent{.raw_time_s = t0.time() + 10e-6}));
    } catch (const RetriggerViolation&) {
        retrigger_blocked = true;
    }

    Wiring w;
    w.links.push_back(WiringLink{0, 0, 0, 0, 1.0, std::nullopt});
    auto cap = board.capture(
        flipflop_sync(clock, TriggerEvent{.raw_time_s = t0.time(),
                                          .target = TriggerTarget::ADC}),
        sigs, w);
    bool lengths_ok = cap.channel_codes.size() == 8;
    for (const auto& ch : cap.channel_codes)
        lengths_ok &= ch.size() == 65536;

    report("FIFO overflow, 30 us re-trigger and fixed capture length",
           overflow && retrigger_blocked && lengths_ok,
           fmt("overflow %s, retrigger blocked %s, lengths %s",
               overflow ? "yes" : "no", retrigger_blocked ? "yes" : "no",
               lengths_ok ? "yes" : "no"));
}

// --- 9. current mapping ---------------------------------------------------------

void check_current_map() {
    BiasChannel ch;
    const bool ok = current_of_code(ch, 0) == -4.096e-3 &&
                    current_of_code(ch, 32768) == 0.0 &&
                    current_of_code(ch, 65535) == 4.096e-3 - 125e-9;
    report("bias codes {0, 32768, 65535} map to {-4.096 mA, 0, +4.096 mA - 125 nA}",
           ok,
           fmt("%.9f / %.9f / %.9f A", current_of_code(ch, 0),
               current_of_code(ch, 32768), current_of_code(ch, 65535)));
}

// --- 10. Allan estimator ---------------------------------------------------------

void check_allan() {
    BiasChannel ch;
    // Oracle match on short traces.
    auto t = simulate_trace(ch, 1e-3, 100.0, 0.64, 5, 1e-12);
    bool oracle_ok = true;
    for (std::size_t m : {1u, 2u, 5u, 10u, 31u}) {
        auto fast =
            overlapping_allan_deviation(t, {static_cast<double>(m) / 100.0});
        // Naive O(N^2) overlapping estimator, fractional.
        const auto& y = t.samples_amps;
        double mean = 0.0;
        for (double v : y)
            mean += v;
        mean /= static_cast<double>(y.size());
        double acc = 0.0;
        const std::size_t terms = y.size() - 2 * m + 1;
        for (std::size_t j = 0; j < terms; ++j) {
            double a = 0.0, b = 0.0;
            for (std::size_t i = j; i < j + m; ++i) {
                a += y[i + m];
                b += y[i];
            }
            const double d = (a - b) / static_cast<double>(m);
            acc += d * d;
        }
        const double naive =
            std::sqrt(acc / (2.0 * static_cast<double>(terms))) / std::abs(mean);
        oracle_ok &= std::abs(fast[0] - naive) <= 1e-12 * std::max(1.0, naive);
    }

    // White-noise slope -1/2.
    BiasChannel white = ch;
    white.drift_coefficient_a2_per_s = 0.0;
    auto tw = simulate_trace(white, 1e-3, 1000.0, 200.0, 9, 1e-12);
    std::vector<double> taus;
    for (std::size_t m = 1; m <= 1024; m *= 4)
        taus.push_back(static_cast<double>(m) / 1000.0);
    auto adev = overlapping_allan_deviation(tw, taus);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < taus.size(); ++i) {
        const double x = std::log10(taus[i]);
        const double y = std::log10(adev[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double nn = static_cast<double>(taus.size());
    const double slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);

    // 18 h decimated bench run at 16 S/s, tau = 500 s.
    auto tl = simulate_trace(ch, 1e-3, 16.0, 18.0 * 3600.0, 2026, 195e-9);
    const double adev500 = overlapping_allan_deviation(tl, {500.0})[0];

    const bool ok = oracle_ok && std::abs(slope + 0.5) <= 0.05 &&
                    adev500 >= 4e-4 / 3.0 && adev500 <= 4e-4 * 3.0;
    report("Allan estimator oracle, white slope and 500 s stability", ok,
           fmt("oracle %s, slope %.3f, adev(500 s) %.2e", oracle_ok ? "ok" : "BAD",
               slope, adev500));
}

// --- 11. flux map -----------------------------------------------------------------

void check_flux_map() {
    FluxMapParams p;
    const int n = 8001;
    int maxima = 0;
    double prev = 0.0, cur = 0.0;
    for (int k = 0; k < n; ++k) {
        const double i_amps = (-2.0 + 4.0 * k / (n - 1)) * 1e-3;
        const double next = flux_map_center(p, i_amps);
        if (k >= 2 && cur > prev && cur > next)
            ++maxima;
        prev = cur;
        cur = next;
    }
    report("flux map completes 3 oscillations over -2 to +2 mA", maxima == 3,
           fmt("%d interior maxima", maxima));
}

// --- 12. scheduler round trip --------------------------------------------------------

void check_scheduler() {
    const fs::path dir =
        fs::temp_directory_path() /
        ("icarusq-acceptance-" +
         std::to_string(
             std::chrono::steady_clock::now().time_since_epoch().count()));
    bool ok = true;
    std::string detail;
    try {
        json req{{"repetitions", 1},
                 {"trigger_timings",
                  json::array({{{"time_s", 0.0}, {"target", "dac"}},
                               {{"time_s", 0.0}, {"target", "adc"}}})},
                 {"pulse_sequence",
                  json::array({{{"channel", 0},
                                {"kind", "sine"},
                                {"frequency_hz", 800e6},
                                {"n_samples", 512}}})},
                 {"seed", 31}};

        std::string id1, id2, direct;
        {
            auto store = std::make_shared<JobStore>(dir);
            Broker broker(store, "token");
            const int port = broker.start_async();
            httplib::Client client("127.0.0.1", port);

            auto s1 = client.Post("/jobs", req.dump(), "application/json");
            json req2 = req;
            req2["seed"] = 32;
            auto s2 = client.Post("/jobs", req2.dump(), "application/json");
            id1 = json::parse(s1->body)["id"];
            id2 = json::parse(s2->body)["id"];

            Worker worker("127.0.0.1", port, "token");
            ok &= worker.poll_once(); // completes id1, leaves id2 queued
            direct = execute_job(job_from_request(req));
            auto bytes = client.Get("/jobs/" + id1 + "/result");
            ok &= bytes && bytes->status == 200 && bytes->body == direct;
            broker.stop();
        } // broker killed mid-queue with id2 still pending

        {
            auto store = std::make_shared<JobStore>(dir);
            ok &= store->queued_count() == 1; // nothing lost
            Broker broker(store, "token");
            const int port = broker.start_async();
            Worker worker("127.0.0.1", port, "token");
            ok &= worker.poll_once();
            httplib::Client client("127.0.0.1", port);
            auto st = client.Get("/jobs/" + id2);
            ok &= st && json::parse(st->body)["status"] == "done";
            // id1's result survived the restart byte for byte.
            auto bytes = client.Get("/jobs/" + id1 + "/result");
            ok &= bytes && bytes->status == 200 && bytes->body == direct;
            broker.stop();
        }

        // Lease expiry re-dispatches exactly once.
        {
            JobStore store(dir / "lease", 0.05);
            const auto id = store.submit(job_from_request(req));
            auto first = store.poll_next();
            ok &= first.has_value();
            ok &= !store.poll_next().has_value();
            std::this_thread::sleep_for(std::chrono::milliseconds(80));
            auto second = store.poll_next();
            ok &= second.has_value() && second->id == id &&
                  second->claim_token != first->claim_token;
            ok &= !store.poll_next().has_value();
        }
        detail = "submit/poll/execute/fetch byte-identical, restart lossless, "
                 "lease re-dispatched once";
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    std::error_code ec;
    fs::remove_all(dir, ec);
    report("scheduler round trip, durability and lease expiry", ok, detail);
}

} // namespace

int main() {
    check_alias_oracle();
    check_reconstruction_nulls();
    check_power_band_means();
    check_snr_zones();
    check_pink_slope();
    check_quantization_snr();
    check_trigger_sync();
    check_device_limits();
    check_current_map();
    check_allan();
    check_flux_map();
    check_scheduler();
    std::printf("%d of 12 criteria passed\n", 12 - g_failures);
    return g_failures == 0 ? 0 : 1;
}
