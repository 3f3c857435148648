#ifndef ICARUSQ_SIGNAL_CORE_HPP
#define ICARUSQ_SIGNAL_CORE_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "icarusq/waveform.hpp"

namespace icarusq {

/// DAC decoder mode: NRZ holds each sample for a full period, Mix inverts
/// the held value halfway through, pushing energy into the second and
/// third Nyquist zones.
enum class DecoderMode { NRZ, Mix };

/// Band-pass behaviour of the on-board balun, modeled as a Butterworth-style
/// magnitude with -3 dB corners at the supported band edges.
struct BalunModel {
    double low_cut_hz = 10e6;
    double high_cut_hz = 8e9;
    int rolloff_order = 2;

    void validate() const {
        if (!(low_cut_hz > 0.0) || !(low_cut_hz < high_cut_hz))
            throw std::invalid_argument("BalunModel: need 0 < low_cut < high_cut");
        if (rolloff_order < 1)
            throw std::invalid_argument("BalunModel: rolloff_order must be >= 1");
    }
};

/// sin(pi * u) with exact zeros at integer u (argument reduction keeps the
/// nulls of the reconstruction responses exact in floating point).
inline double sin_pi(double u) {
    const double n = std::nearbyint(u);
    const double r = u - n;
    double s = std::sin(std::numbers::pi * r);
    if (std::fmod(n, 2.0) != 0.0)
        s = -s;
    return s;
}

/// sinc in "pi units": sinc_pi(u) = sin(pi u) / (pi u), sinc_pi(0) = 1.
inline double sinc_pi(double u) {
    if (u == 0.0)
        return 1.0;
    return sin_pi(u) / (std::numbers::pi * u);
}

/// Pink noise via the Voss row-update scheme: n_rows held random values,
/// row k refreshed every 2^k samples, summed and peak-normalized.
inline std::vector<double> voss_pink_noise(std::size_t n_samples, int n_rows,
                                           std::uint64_t seed) {
    if (n_samples < 2)
        throw std::invalid_argument("voss_pink_noise: n_samples must be >= 2");
    if (n_rows < 1 || n_rows > 32)
        throw std::invalid_argument("voss_pink_noise: n_rows must be in [1, 32]");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);

    std::vector<double> rows(static_cast<std::size_t>(n_rows));
    double running = 0.0;
    for (double& r : rows) {
        r = dist(rng);
        running += r;
    }

    std::vector<double> out(n_samples);
    out[0] = running;
    for (std::size_t i = 1; i < n_samples; ++i) {
        // Row index = number of trailing zeros of the sample counter.
        int k = std::countr_zero(i);
        if (k < n_rows) {
            running -= rows[static_cast<std::size_t>(k)];
            rows[static_cast<std::size_t>(k)] = dist(rng);
            running += rows[static_cast<std::size_t>(k)];
        }
        out[i] = running;
    }

    double peak = 0.0;
    for (double v : out)
        peak = std::max(peak, std::abs(v));
    if (peak > 0.0)
        for (double& v : out)
            v /= peak;
    return out;
}

/// Complex reconstruction gain of the DAC decoder at frequency f.
/// NRZ:  R(w) = T exp(-i w T / 2) sinc(w T / 2)
/// Mix:  R(w) = (w T^2 / 4) exp(-i (w T - pi) / 2) sinc^2(w T / 4)
inline std::complex<double> reconstruction_response(DecoderMode mode, double f_hz,
                                                    double sample_rate_hz) {
    if (!(sample_rate_hz > 0.0))
        throw std::invalid_argument("reconstruction_response: sample rate must be > 0");
    if (f_hz < 0.0)
        throw std::invalid_argument(
            "reconstruction_response: negative frequency (alias-fold first)");
    const double T = 1.0 / sample_rate_hz;
    const double w = 2.0 * std::numbers::pi * f_hz;
    const double u = f_hz / sample_rate_hz; // w T / 2 == pi * u
    using namespace std::complex_literals;
    if (mode == DecoderMode::NRZ)
        return T * std::exp(-1i * (w * T / 2.0)) * sinc_pi(u);
    const double s = sinc_pi(u / 2.0); // w T / 4 == pi * u / 2
    return (w * T * T / 4.0) * std::exp(-1i * ((w * T - std::numbers::pi) / 2.0)) * s * s;
}

/// Nyquist zone index (1-based). A frequency exactly at k*fs/2 belongs to
/// zone k+1.
inline int nyquist_zone_of(double f_hz, double sample_rate_hz) {
    if (f_hz < 0.0)
        throw std::invalid_argument("nyquist_zone_of: frequency must be >= 0");
    if (!(sample_rate_hz > 0.0))
        throw std::invalid_argument("nyquist_zone_of: sample rate must be > 0");
    return static_cast<int>(std::floor(f_hz / (sample_rate_hz / 2.0))) + 1;
}

/// First-zone image of f: fold modulo fs, reflect if above fs/2.
inline double alias_to_first_zone(double f_hz, double sample_rate_hz) {
    if (f_hz < 0.0)
        throw std::invalid_argument("alias_to_first_zone: frequency must be >= 0");
    if (!(sample_rate_hz > 0.0))
        throw std::invalid_argument("alias_to_first_zone: sample rate must be > 0");
    double r = std::fmod(f_hz, sample_rate_hz);
    if (r > sample_rate_hz / 2.0)
        r = sample_rate_hz - r;
    return r;
}

/// All image frequencies n*fs +/- f0 up to f_max, ascending, deduplicated.
inline std::vector<double> image_frequencies(double f0_hz, double sample_rate_hz,
                                             double f_max_hz) {
    if (f0_hz < 0.0 || f0_hz > sample_rate_hz / 2.0)
        throw std::invalid_argument("image_frequencies: f0 must lie in [0, fs/2]");
    std::vector<double> out;
    for (long n = 0;; ++n) {
        const double base = static_cast<double>(n) * sample_rate_hz;
        const double lo = base - f0_hz;
        const double hi = base + f0_hz;
        if (lo > f_max_hz)
            break;
        if (lo >= 0.0 && lo <= f_max_hz)
            out.push_back(lo);
        if (hi <= f_max_hz)
            out.push_back(hi);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end(),
                          [](double a, double b) {
                              return std::abs(a - b) <=
                                     1e-9 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
                          }),
              out.end());
    return out;
}

/// Band-pass magnitude of the balun: ~1 in band, monotone roll-off outside,
/// exactly 1/sqrt(2) at the corners.
inline double balun_gain(const BalunModel& model, double f_hz) {
    if (f_hz < 0.0)
        throw std::invalid_argument("balun_gain: frequency must be >= 0");
    model.validate();
    if (f_hz == 0.0)
        return 0.0;
    const int n2 = 2 * model.rolloff_order;
    const double hp = 1.0 / std::sqrt(1.0 + std::pow(model.low_cut_hz / f_hz, n2));
    const double lp = 1.0 / std::sqrt(1.0 + std::pow(f_hz / model.high_cut_hz, n2));
    return hp * lp;
}

/// Predicted output power at frequency f: the calibration constant plus the
/// decoder response (normalized to the NRZ zero-frequency value T) plus the
/// balun response, all in dB. Returns -infinity at exact response nulls so
/// sweeps stay total.
inline double expected_output_power_dbm(double f_hz, double sample_rate_hz,
                                        DecoderMode mode, const BalunModel& balun,
                                        double full_scale_dbm) {
    const double T = 1.0 / sample_rate_hz;
    const double mag = std::abs(reconstruction_response(mode, f_hz, sample_rate_hz)) / T;
    const double g = balun_gain(balun, f_hz);
    if (mag == 0.0 || g == 0.0)
        return -std::numeric_limits<double>::infinity();
    return full_scale_dbm + 20.0 * std::log10(mag) + 20.0 * std::log10(g);
}

} // namespace icarusq

#endif
