#ifndef ICARUSQ_BIAS_HPP
#define ICARUSQ_BIAS_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "icarusq/errors.hpp"
#include "icarusq/waveform.hpp"

namespace icarusq {

/// One channel of the bipolar low-noise current source: a 16-bit DAC
/// referenced to 2.048 V across a 500 ohm sense resistor, giving a range
/// of exactly +/-4.096 mA.
struct BiasChannel {
    double v_ref_volts = 2.048;
    double r_sense_ohms = 500.0;
    int dac_bits = 16;
    unsigned code = 32768; // bipolar midpoint, 0 A
    double compliance_volts = 9.9;
    // Calibrated so the mean amplitude noise density over 0.1 Hz - 10 kHz
    // matches the bench characterization.
    double white_noise_density_a_per_rthz = 5.45e-8;
    // Random-walk drift diffusion coefficient, A^2/s, calibrated to the
    // long-term stability point at 500 s averaging time.
    double drift_coefficient_a2_per_s = 9.6e-16;

    double full_scale_amps() const { return v_ref_volts / r_sense_ohms; } // 4.096 mA
    double lsb_amps() const {
        return 2.0 * full_scale_amps() / static_cast<double>(1u << dac_bits);
    }
};

/// A digitized current measurement, as taken with the bench oscilloscope.
struct CurrentTrace {
    std::vector<double> samples_amps;
    double sample_rate_hz = 0.0;
    double resolution_amps = 0.0;

    CurrentTrace() = default;
    CurrentTrace(std::vector<double> s, double rate, double res)
        : samples_amps(std::move(s)), sample_rate_hz(rate), resolution_amps(res) {
        if (samples_amps.size() < 2)
            throw std::invalid_argument("CurrentTrace: need at least two samples");
        if (!(resolution_amps > 0.0))
            throw std::invalid_argument("CurrentTrace: resolution must be > 0");
    }
};

/// Flux-tuned cavity model: a Lorentzian line whose center oscillates
/// periodically with bias current (3 periods over the 4 mA span by default).
struct FluxMapParams {
    double period_ma = 4.0 / 3.0;
    double cavity_f0_hz = 7.5e9;
    double shift_amplitude_hz = 2e6;
    double linewidth_hz = 1e6;

    void validate() const {
        if (!(period_ma > 0.0))
            throw std::invalid_argument("FluxMapParams: period must be > 0");
        if (!(linewidth_hz > 0.0))
            throw std::invalid_argument("FluxMapParams: linewidth must be > 0");
    }
};

/// Linear bipolar code-to-current map: code 0 -> -4.096 mA, code 32768 ->
/// 0 A, code 65535 -> +4.096 mA minus one LSB (125 nA).
inline double current_of_code(const BiasChannel& ch, long code) {
    const long n_codes = 1L << ch.dac_bits;
    if (code < 0 || code >= n_codes)
        throw std::invalid_argument("current_of_code: code out of range");
    return (static_cast<double>(code) - static_cast<double>(n_codes / 2)) * ch.lsb_amps();
}

/// Simulated bench measurement: setpoint plus white noise plus random-walk
/// drift, quantized to the digitizer resolution. Deterministic per seed.
inline CurrentTrace simulate_trace(const BiasChannel& ch, double setpoint_amps,
                                   double sample_rate_hz, double duration_s,
                                   std::uint64_t seed,
                                   double resolution_amps = 390e-9) {
    if (std::abs(setpoint_amps) > ch.full_scale_amps())
        throw ComplianceError("simulate_trace: setpoint exceeds +/-" +
                              std::to_string(ch.full_scale_amps() * 1e3) + " mA range");
    if (!(sample_rate_hz > 0.0) || !(duration_s > 0.0))
        throw std::invalid_argument("simulate_trace: rate and duration must be > 0");
    const auto n = static_cast<std::size_t>(std::llround(sample_rate_hz * duration_s));
    if (n < 2)
        throw std::invalid_argument("simulate_trace: trace too short");

    const double white_sigma =
        ch.white_noise_density_a_per_rthz * std::sqrt(sample_rate_hz / 2.0);
    const double walk_sigma = std::sqrt(ch.drift_coefficient_a2_per_s / sample_rate_hz);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<double> out(n);
    double walk = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (walk_sigma > 0.0)
            walk += walk_sigma * gauss(rng);
        double v = setpoint_amps + walk;
        if (white_sigma > 0.0)
            v += white_sigma * gauss(rng);
        out[i] = std::round(v / resolution_amps) * resolution_amps;
    }
    return CurrentTrace(std::move(out), sample_rate_hz, resolution_amps);
}

/// One-sided amplitude spectral density in A/rtHz, scaled so a white
/// process of density d reads d flat across the band. The mean (setpoint)
/// is removed before the transform.
inline Spectrum amplitude_noise_spectrum(const CurrentTrace& trace) {
    const std::size_t n = trace.samples_amps.size();
    if (n < 16)
        throw std::invalid_argument("amplitude_noise_spectrum: need >= 16 samples");
    double mean = 0.0;
    for (double v : trace.samples_amps)
        mean += v;
    mean /= static_cast<double>(n);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = trace.samples_amps[i] - mean;

    auto bins = real_dft(x);
    Spectrum s;
    s.resolution_hz = trace.sample_rate_hz / static_cast<double>(n);
    s.bin_frequencies_hz.resize(bins.size());
    s.magnitudes.resize(bins.size());
    // PSD[k] = 2 |X_k|^2 / (fs N); ASD is its square root.
    const double scale = 2.0 / (trace.sample_rate_hz * static_cast<double>(n));
    for (std::size_t k = 0; k < bins.size(); ++k) {
        s.bin_frequencies_hz[k] = static_cast<double>(k) * s.resolution_hz;
        s.magnitudes[k] = std::sqrt(scale) * std::abs(bins[k]);
    }
    return s;
}

/// Band-limited rms estimate: mean amplitude density over the band times
/// the square root of the band width.
inline double total_rms_noise(const Spectrum& spec, double band_low_hz,
                              double band_high_hz) {
    if (!(band_low_hz < band_high_hz))
        throw std::invalid_argument("total_rms_noise: need band_low < band_high");
    if (band_low_hz < 0.0 || band_high_hz > spec.bin_frequencies_hz.back())
        throw std::invalid_argument("total_rms_noise: band outside spectrum range");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < spec.bin_frequencies_hz.size(); ++k) {
        const double f = spec.bin_frequencies_hz[k];
        if (f < band_low_hz || f > band_high_hz)
            continue;
        sum += spec.magnitudes[k];
        ++count;
    }
    if (count == 0)
        throw std::invalid_argument("total_rms_noise: empty band");
    return sum / static_cast<double>(count) * std::sqrt(band_high_hz - band_low_hz);
}

/// Fractional overlapping Allan deviation of a current trace at the given
/// averaging times. Each tau must be an integer multiple of the sample
/// period with 2m < N. Normalized by the trace mean.
inline std::vector<double> overlapping_allan_deviation(const CurrentTrace& trace,
                                                       const std::vector<double>& taus) {
    const std::size_t n = trace.samples_amps.size();
    double mean = 0.0;
    for (double v : trace.samples_amps)
        mean += v;
    mean /= static_cast<double>(n);
    if (mean == 0.0)
        throw std::invalid_argument(
            "overlapping_allan_deviation: zero-mean trace has no fractional form");

    // Prefix sums make each tau O(N).
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        prefix[i + 1] = prefix[i] + trace.samples_amps[i];

    std::vector<double> out;
    out.reserve(taus.size());
    for (double tau : taus) {
        const double m_real = tau * trace.sample_rate_hz;
        const auto m = static_cast<std::size_t>(std::llround(m_real));
        if (m < 1 || std::abs(m_real - static_cast<double>(m)) > 1e-6)
            throw std::invalid_argument("overlapping_allan_deviation: tau " +
                                        std::to_string(tau) +
                                        " is not an integer number of samples");
        if (2 * m >= n)
            throw std::invalid_argument("overlapping_allan_deviation: tau " +
                                        std::to_string(tau) + " too large for trace");
        const std::size_t terms = n - 2 * m + 1;
        double acc = 0.0;
        for (std::size_t j = 0; j < terms; ++j) {
            const double d = (prefix[j + 2 * m] - prefix[j + m]) -
                             (prefix[j + m] - prefix[j]);
            acc += d * d;
        }
        const double avar = acc / (2.0 * static_cast<double>(m) * static_cast<double>(m) *
                                   static_cast<double>(terms));
        out.push_back(std::sqrt(avar) / std::abs(mean));
    }
    return out;
}

inline double flux_map_center(const FluxMapParams& params, double bias_amps) {
    return params.cavity_f0_hz +
           params.shift_amplitude_hz *
               std::cos(2.0 * std::numbers::pi * (bias_amps * 1e3) / params.period_ma);
}

/// Cavity transmission magnitude over a (bias, probe-frequency) grid:
/// a unit-height Lorentzian centered at f0 + A cos(2 pi I / period).
inline std::vector<std::vector<double>> cavity_transmission_map(
    const FluxMapParams& params, const std::vector<double>& bias_points_amps,
    const std::vector<double>& probe_freqs_hz) {
    params.validate();
    if (bias_points_amps.empty() || probe_freqs_hz.empty())
        throw std::invalid_argument("cavity_transmission_map: empty grid");
    std::vector<std::vector<double>> out;
    out.reserve(bias_points_amps.size());
    for (double bias : bias_points_amps) {
        const double center = flux_map_center(params, bias);
        std::vector<double> row;
        row.reserve(probe_freqs_hz.size());
        const double hwhm = params.linewidth_hz / 2.0;
        for (double f : probe_freqs_hz) {
            const double d = (f - center) / hwhm;
            row.push_back(1.0 / (1.0 + d * d));
        }
        out.push_back(std::move(row));
    }
    return out;
}

} // namespace icarusq

#endif
