#ifndef ICARUSQ_WAVEFORM_HPP
#define ICARUSQ_WAVEFORM_HPP

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <fftw3.h>

#include "icarusq/errors.hpp"

namespace icarusq {

/// A finite block of real samples with an attached sample rate. This is the
/// universal currency between the DAC, channel and ADC models.
struct Waveform {
    std::vector<double> samples;
    double sample_rate_hz = 0.0;

    Waveform() = default;
    Waveform(std::vector<double> s, double rate)
        : samples(std::move(s)), sample_rate_hz(rate) {
        if (samples.empty())
            throw std::invalid_argument("Waveform: need at least one sample");
        if (!(sample_rate_hz > 0.0))
            throw std::invalid_argument("Waveform: sample rate must be > 0");
        for (double v : samples)
            if (!std::isfinite(v))
                throw std::invalid_argument("Waveform: non-finite sample");
    }

    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate_hz;
    }
};

/// One-sided magnitude spectrum. Magnitudes are raw DFT amplitudes |X_k|:
/// a full-scale sine of amplitude A at an exact bin reads A*N/2 at its bin.
/// Parseval bookkeeping: mag[0]^2 + mag[N/2]^2 + 2*sum(interior mag^2)
/// equals N * sum(x^2).
struct Spectrum {
    std::vector<double> bin_frequencies_hz;
    std::vector<double> magnitudes;
    double resolution_hz = 0.0;
};

namespace detail {

// FFTW plan creation is not thread safe; execution of a plan is.
inline std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

} // namespace detail

/// Complex DFT of a real block, bins 0..N/2, via FFTW (any length).
inline std::vector<std::complex<double>> real_dft(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n / 2 + 1);
    std::lock_guard<std::mutex> lock(detail::fftw_mutex());
    fftw_plan plan = fftw_plan_dft_r2c_1d(
        static_cast<int>(n), const_cast<double*>(x.data()),
        reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    return out;
}

inline std::vector<double> inverse_real_dft(std::vector<std::complex<double>> spec,
                                            std::size_t n) {
    std::vector<double> out(n);
    std::lock_guard<std::mutex> lock(detail::fftw_mutex());
    fftw_plan plan = fftw_plan_dft_c2r_1d(
        static_cast<int>(n), reinterpret_cast<fftw_complex*>(spec.data()),
        out.data(), FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    for (double& v : out)
        v /= static_cast<double>(n);
    return out;
}

enum class Window { none, hann };

/// One-sided magnitude spectrum of a waveform. DFT length equals the
/// waveform length; no zero padding, so bin frequencies are bit-stable.
inline Spectrum spectrum(const Waveform& w, Window window = Window::none) {
    const std::size_t n = w.samples.size();
    if (n < 2)
        throw std::invalid_argument("spectrum: need at least two samples");
    std::vector<double> x = w.samples;
    for (double v : x)
        if (!std::isfinite(v))
            throw std::invalid_argument("spectrum: non-finite sample");
    if (window == Window::hann) {
        for (std::size_t i = 0; i < n; ++i)
            x[i] *= 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi *
                                         static_cast<double>(i) /
                                         static_cast<double>(n));
    }
    auto bins = real_dft(x);
    Spectrum s;
    s.resolution_hz = w.sample_rate_hz / static_cast<double>(n);
    s.bin_frequencies_hz.resize(bins.size());
    s.magnitudes.resize(bins.size());
    for (std::size_t k = 0; k < bins.size(); ++k) {
        s.bin_frequencies_hz[k] = static_cast<double>(k) * s.resolution_hz;
        s.magnitudes[k] = std::abs(bins[k]);
    }
    return s;
}

/// Signal peak amplitude in the bin nearest f_signal divided by the mean
/// noise magnitude over a bandwidth centred on it. The signal bin and its
/// two neighbours are excluded from the noise estimate.
inline double snr(const Spectrum& spec, double f_signal_hz,
                  double noise_bandwidth_hz = 100e6) {
    if (spec.magnitudes.size() < 8)
        throw std::invalid_argument("snr: spectrum too short");
    const double fmax = spec.bin_frequencies_hz.back();
    if (f_signal_hz < 0.0 || f_signal_hz > fmax)
        throw std::invalid_argument("snr: signal frequency out of range");
    const double lo = f_signal_hz - noise_bandwidth_hz / 2.0;
    const double hi = f_signal_hz + noise_bandwidth_hz / 2.0;
    if (lo < 0.0 || hi > fmax)
        throw std::invalid_argument("snr: noise window out of spectrum range");

    const double df = spec.resolution_hz;
    const std::size_t k0 =
        static_cast<std::size_t>(std::llround(f_signal_hz / df));
    const std::size_t klo = static_cast<std::size_t>(std::ceil(lo / df));
    const std::size_t khi = static_cast<std::size_t>(std::floor(hi / df));

    double noise_sum = 0.0;
    std::size_t noise_count = 0;
    for (std::size_t k = klo; k <= khi && k < spec.magnitudes.size(); ++k) {
        if (k + 1 >= k0 && k <= k0 + 1)
            continue; // signal bin and immediate neighbours
        noise_sum += spec.magnitudes[k];
        ++noise_count;
    }
    if (noise_count == 0)
        throw std::invalid_argument("snr: no noise bins in window");
    const double noise_mean = noise_sum / static_cast<double>(noise_count);
    if (noise_mean == 0.0)
        return std::numeric_limits<double>::infinity();
    return spec.magnitudes[k0] / noise_mean;
}

} // namespace icarusq

#endif
