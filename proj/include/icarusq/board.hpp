#ifndef ICARUSQ_BOARD_HPP
#define ICARUSQ_BOARD_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "icarusq/errors.hpp"
#include "icarusq/quantizer.hpp"
#include "icarusq/signal_core.hpp"
#include "icarusq/sync.hpp"
#include "icarusq/waveform.hpp"

namespace icarusq {

/// Static limits of one RFSoC board. Converter rates are integer multiples
/// of the master clock and capped at the device ceilings.
struct BoardConfig {
    int n_dac_channels = 16;
    int n_adc_channels = 8;
    int dac_bits = 14;
    int adc_bits = 12;
    std::size_t fifo_depth = 65536;
    double master_clock_hz = 122.88e6;
    int dac_rate_multiplier = 50; // 50 * 122.88 MHz = 6.144 GS/s
    int adc_rate_multiplier = 16; // 16 * 122.88 MHz = 1.96608 GS/s
    DecoderMode decoder_mode = DecoderMode::NRZ;
    double min_retrigger_interval_s = 30e-6;
    double switch_latency_s = 5e-9;
    bool loopback = true; // FIFO reload without host involvement
    double dac_latency_s = 0.0;
    // ADC-input white noise density, relative to full scale, per root-Hz.
    // Default calibrated for first-zone SNR near 2e3 at 800 MHz.
    double adc_noise_density = 1.5e-6;

    double dac_rate_hz() const { return dac_rate_multiplier * master_clock_hz; }
    double adc_rate_hz() const { return adc_rate_multiplier * master_clock_hz; }

    void validate() const {
        if (fifo_depth != 65536)
            throw std::invalid_argument("BoardConfig: fifo_depth is fixed at 65,536");
        if (dac_rate_multiplier < 1 || dac_rate_hz() > 6.554e9)
            throw std::invalid_argument("BoardConfig: DAC rate exceeds 6.554 GS/s ceiling");
        if (adc_rate_multiplier < 1 || adc_rate_hz() > 2.058e9)
            throw std::invalid_argument("BoardConfig: ADC rate exceeds 2.058 GS/s ceiling");
        if (n_dac_channels != 16 || n_adc_channels != 8)
            throw std::invalid_argument("BoardConfig: channel counts are fixed (16 DAC, 8 ADC)");
        if (!(master_clock_hz > 0.0))
            throw std::invalid_argument("BoardConfig: master clock must be > 0");
    }
};

/// Continuous-time view of one DAC channel's playback: the dequantized
/// sample buffer, reconstructed by the decoder kernel (NRZ holds each
/// sample for a full period, Mix inverts the held value mid-period).
/// A gang switch mid-playback swaps to a second buffer at switch_time_s.
struct AnalogSignal {
    std::vector<double> samples;
    std::vector<double> post_switch_samples; // empty when no switch applies
    double switch_time_s = std::numeric_limits<double>::infinity();
    double sample_rate_hz = 0.0;
    DecoderMode mode = DecoderMode::NRZ;
    double start_time_s = 0.0;
    int channel = 0;
    int board_index = 0;
    std::string board_id;

    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate_hz;
    }

    double value(double t) const { return value_at(t - start_time_s); }

    /// Value as a function of time since the signal start. Evaluating on
    /// relative time keeps repeated runs bit-identical regardless of the
    /// absolute offset of each repetition.
    double value_at(double dt) const {
        const double rel = dt * sample_rate_hz;
        if (rel < 0.0)
            return 0.0;
        const auto idx = static_cast<std::size_t>(rel);
        if (idx >= samples.size())
            return 0.0;
        const bool after_switch =
            !post_switch_samples.empty() && dt >= switch_time_s - start_time_s;
        double v = after_switch ? post_switch_samples[idx] : samples[idx];
        if (mode == DecoderMode::Mix && rel - std::floor(rel) >= 0.5)
            v = -v;
        return v;
    }
};

/// Shift a signal's start by the link's residual skew (cable delay minus
/// software compensation). Exact compensation cancels the delay.
inline AnalogSignal apply_skew(const BoardLink& link, AnalogSignal signal) {
    signal.start_time_s += link.effective_skew_s();
    if (std::isfinite(signal.switch_time_s))
        signal.switch_time_s += link.effective_skew_s();
    return signal;
}

/// One loopback cable: a DAC output wired into an ADC input, with a link
/// gain and an optional balun in the path.
struct WiringLink {
    int dac_board = 0;
    int dac_channel = 0;
    int adc_board = 0;
    int adc_channel = 0;
    double gain = 1.0;
    std::optional<BalunModel> balun;
};

struct Wiring {
    std::vector<WiringLink> links;

    void validate(int n_adc_channels = 8) const {
        std::vector<std::pair<int, int>> seen;
        for (const auto& l : links) {
            if (l.adc_channel < 0 || l.adc_channel >= n_adc_channels)
                throw std::invalid_argument("Wiring: ADC channel out of range");
            auto key = std::make_pair(l.adc_board, l.adc_channel);
            for (const auto& s : seen)
                if (s == key)
                    throw std::invalid_argument(
                        "Wiring: each ADC input may be driven by at most one DAC");
            seen.push_back(key);
        }
    }
};

/// Apply the balun's band-pass to a sample block in the frequency domain
/// (at the block's own sample rate).
inline std::vector<double> balun_filter(const std::vector<double>& x, double sample_rate_hz,
                                        const BalunModel& model) {
    auto bins = real_dft(x);
    const double df = sample_rate_hz / static_cast<double>(x.size());
    for (std::size_t k = 0; k < bins.size(); ++k)
        bins[k] *= balun_gain(model, static_cast<double>(k) * df);
    return inverse_real_dft(std::move(bins), x.size());
}

/// One ADC acquisition: fixed 65,536 codes per channel.
struct Capture {
    std::vector<std::vector<std::int16_t>> channel_codes;
    double sample_rate_hz = 0.0;
    int bits = 12;

    Waveform waveform(std::size_t channel) const {
        Quantizer q(bits);
        std::vector<double> s;
        s.reserve(channel_codes.at(channel).size());
        for (auto c : channel_codes[channel])
            s.push_back(q.decode(c));
        return Waveform(std::move(s), sample_rate_hz);
    }
};

/// Behavioral model of one board: FIFO-limited DAC playback, gang
/// switching, and ADC capture with quantization and physical aliasing.
/// A board is a state machine; serialize concurrent access externally.
class Board {
public:
    explicit Board(BoardConfig cfg = {}, std::string id = "board0")
        : cfg_(cfg), id_(std::move(id)) {
        cfg_.validate();
    }

    const BoardConfig& config() const { return cfg_; }
    const std::string& id() const { return id_; }

    /// Clip to [-1, 1], quantize to the DAC bit depth and store. The
    /// channel is disarmed until re-armed.
    void load_waveform(int channel, const std::vector<double>& samples) {
        if (channel < 0 || channel >= cfg_.n_dac_channels)
            throw std::invalid_argument("load_waveform: invalid DAC channel " +
                                        std::to_string(channel));
        if (samples.empty())
            throw std::invalid_argument("load_waveform: need at least one sample");
        if (samples.size() > cfg_.fifo_depth)
            throw FifoOverflowError("load_waveform: " + std::to_string(samples.size()) +
                                    " samples exceed the FIFO depth of " +
                                    std::to_string(cfg_.fifo_depth));
        Quantizer q(cfg_.dac_bits);
        auto& ch = dacs_.at(static_cast<std::size_t>(channel));
        ch.codes = q.encode(samples);
        ch.armed = false;
    }

    void arm(int channel) {
        auto& ch = dacs_.at(static_cast<std::size_t>(channel));
        if (ch.codes.empty())
            throw InvalidStateError("arm: channel " + std::to_string(channel) +
                                    " has no waveform loaded");
        ch.armed = true;
    }

    void arm_all() {
        for (int c = 0; c < cfg_.n_dac_channels; ++c)
            if (!dacs_[static_cast<std::size_t>(c)].codes.empty())
                dacs_[static_cast<std::size_t>(c)].armed = true;
    }

    bool channel_loaded(int channel) const {
        return !dacs_.at(static_cast<std::size_t>(channel)).codes.empty();
    }

    const std::vector<std::int16_t>& channel_codes(int channel) const {
        return dacs_.at(static_cast<std::size_t>(channel)).codes;
    }

    /// Route the lower gang's buffers (channels 8-15) onto the upper-gang
    /// outputs (channels 0-7) for subsequent playback. Idempotent.
    void feedback_switch() {
        bool lower_loaded = false;
        for (int c = cfg_.n_dac_channels / 2; c < cfg_.n_dac_channels; ++c)
            lower_loaded |= channel_loaded(c);
        if (!lower_loaded)
            throw InvalidStateError("feedback_switch: lower gang holds no waveforms");
        switched_ = true;
    }

    bool switched() const { return switched_; }

    /// Start playback on every loaded, armed DAC channel. All emitted
    /// signals share the identical flip-flop-aligned start time.
    std::vector<AnalogSignal> trigger_dacs(const TriggerEvent& trigger) {
        const double t = trigger.time();
        if (last_dac_trigger_ && t < *last_dac_trigger_ + cfg_.min_retrigger_interval_s)
            throw RetriggerViolation(
                "trigger_dacs: re-trigger before the minimum interval of " +
                std::to_string(cfg_.min_retrigger_interval_s * 1e6) + " us");
        bool any_loaded = false;
        for (const auto& ch : dacs_)
            any_loaded |= !ch.codes.empty();
        if (any_loaded) {
            bool any_armed = false;
            for (const auto& ch : dacs_)
                any_armed |= ch.armed;
            if (!any_armed)
                throw NotArmedError("trigger_dacs: no DAC channel is armed");
        }
        last_dac_trigger_ = t;

        Quantizer q(cfg_.dac_bits);
        const double start = t + cfg_.dac_latency_s;
        std::vector<AnalogSignal> out;
        const int half = cfg_.n_dac_channels / 2;
        for (int c = 0; c < cfg_.n_dac_channels; ++c) {
            // Upper-gang outputs play the lower gang's buffers once switched.
            int source = c;
            if (switched_ && c < half && channel_loaded(c + half))
                source = c + half;
            const auto& ch = dacs_[static_cast<std::size_t>(source)];
            if (ch.codes.empty() || !dacs_[static_cast<std::size_t>(c)].armed)
                continue;
            AnalogSignal sig;
            sig.samples.reserve(ch.codes.size());
            for (auto code : ch.codes)
                sig.samples.push_back(q.decode(code));
            sig.sample_rate_hz = cfg_.dac_rate_hz();
            sig.mode = cfg_.decoder_mode;
            sig.start_time_s = start;
            sig.channel = c;
            sig.board_id = id_;
            out.push_back(std::move(sig));
            if (!cfg_.loopback)
                dacs_[static_cast<std::size_t>(c)].armed = false;
        }
        return out;
    }

    /// Swap live upper-gang signals to the lower gang's buffers at
    /// switch_time (plus the modeled switch latency).
    void apply_switch(std::vector<AnalogSignal>& live, double switch_time_s) {
        feedback_switch();
        Quantizer q(cfg_.dac_bits);
        const int half = cfg_.n_dac_channels / 2;
        for (auto& sig : live) {
            if (sig.board_id != id_ || sig.channel >= half)
                continue;
            const int lower = sig.channel + half;
            if (!channel_loaded(lower))
                continue;
            const auto& codes = channel_codes(lower);
            sig.post_switch_samples.clear();
            sig.post_switch_samples.reserve(sig.samples.size());
            for (std::size_t i = 0; i < sig.samples.size(); ++i)
                sig.post_switch_samples.push_back(
                    i < codes.size() ? q.decode(codes[i]) : 0.0);
            sig.switch_time_s = switch_time_s + cfg_.switch_latency_s;
        }
    }

    void disarm_adc() { adc_armed_ = false; }
    void arm_adc() { adc_armed_ = true; }

    /// Digitize every ADC channel: exactly fifo_depth samples per channel,
    /// quantized to the ADC bit depth. Inputs arrive through the wiring;
    /// aliasing happens physically because each output sample is the
    /// reconstructed input value at the sample instant, plus noise.
    Capture capture(const TriggerEvent& trigger, const std::vector<AnalogSignal>& inputs,
                    const Wiring& wiring, std::uint64_t noise_seed = 0,
                    int board_index = 0) {
        if (!adc_armed_)
            throw NotArmedError("capture: ADC is not armed");
        const double t0 = trigger.time();
        if (last_adc_trigger_ && t0 < *last_adc_trigger_ + cfg_.min_retrigger_interval_s)
            throw RetriggerViolation(
                "capture: re-trigger before the minimum interval of " +
                std::to_string(cfg_.min_retrigger_interval_s * 1e6) + " us");
        wiring.validate(cfg_.n_adc_channels);
        last_adc_trigger_ = t0;

        const double rate = cfg_.adc_rate_hz();
        const double sigma = cfg_.adc_noise_density * std::sqrt(rate / 2.0);
        Quantizer q(cfg_.adc_bits);

        Capture cap;
        cap.sample_rate_hz = rate;
        cap.bits = cfg_.adc_bits;
        cap.channel_codes.resize(static_cast<std::size_t>(cfg_.n_adc_channels));

        for (int ch = 0; ch < cfg_.n_adc_channels; ++ch) {
            // Collect the (gain, signal) pairs wired into this input,
            // applying balun filtering once per link.
            std::vector<std::pair<double, AnalogSignal>> sources;
            for (const auto& link : wiring.links) {
                if (link.adc_board != board_index || link.adc_channel != ch)
                    continue;
                for (const auto& sig : inputs) {
                    if (sig.channel != link.dac_channel ||
                        sig.board_index != link.dac_board)
                        continue;
                    AnalogSignal s = sig;
                    if (link.balun) {
                        s.samples = balun_filter(s.samples, s.sample_rate_hz, *link.balun);
                        if (!s.post_switch_samples.empty())
                            s.post_switch_samples = balun_filter(
                                s.post_switch_samples, s.sample_rate_hz, *link.balun);
                    }
                    sources.emplace_back(link.gain, std::move(s));
                }
            }

            std::mt19937_64 rng(noise_seed * 1000003ULL +
                                static_cast<std::uint64_t>(ch));
            std::normal_distribution<double> noise(0.0, sigma);

            // Per-source offset of the capture start, measured in the
            // source's own timebase; sample instants are added relatively.
            std::vector<double> dt0;
            dt0.reserve(sources.size());
            for (const auto& [gain, sig] : sources)
                dt0.push_back(t0 - sig.start_time_s);

            auto& codes = cap.channel_codes[static_cast<std::size_t>(ch)];
            codes.resize(cfg_.fifo_depth);
            for (std::size_t i = 0; i < cfg_.fifo_depth; ++i) {
                double v = 0.0;
                for (std::size_t s = 0; s < sources.size(); ++s)
                    v += sources[s].first *
                         sources[s].second.value_at(dt0[s] +
                                                    static_cast<double>(i) / rate);
                if (sigma > 0.0)
                    v += noise(rng);
                codes[i] = q.encode(v);
            }
        }
        // ADC trigger re-arms once the acquired data has transferred.
        adc_armed_ = true;
        return cap;
    }

    /// Digitize an arbitrary continuous source on ADC channel 0 (the bench
    /// path for external synthesizers in loop tests).
    Capture capture_source(const TriggerEvent& trigger,
                           const std::function<double(double)>& source,
                           std::uint64_t noise_seed = 0) {
        if (!adc_armed_)
            throw NotArmedError("capture_source: ADC is not armed");
        const double t0 = trigger.time();
        const double rate = cfg_.adc_rate_hz();
        const double sigma = cfg_.adc_noise_density * std::sqrt(rate / 2.0);
        Quantizer q(cfg_.adc_bits);
        std::mt19937_64 rng(noise_seed * 1000003ULL);
        std::normal_distribution<double> noise(0.0, sigma);
        Capture cap;
        cap.sample_rate_hz = rate;
        cap.bits = cfg_.adc_bits;
        cap.channel_codes.resize(1);
        auto& codes = cap.channel_codes[0];
        codes.resize(cfg_.fifo_depth);
        for (std::size_t i = 0; i < cfg_.fifo_depth; ++i) {
            double v = source(t0 + static_cast<double>(i) / rate);
            if (sigma > 0.0)
                v += noise(rng);
            codes[i] = q.encode(v);
        }
        return cap;
    }

private:
    struct DacChannel {
        std::vector<std::int16_t> codes;
        bool armed = false;
    };

    BoardConfig cfg_;
    std::string id_;
    std::array<DacChannel, 16> dacs_;
    bool adc_armed_ = true;
    bool switched_ = false;
    std::optional<double> last_dac_trigger_;
    std::optional<double> last_adc_trigger_;
};

struct ScheduleEntry {
    double time_s = 0.0;
    TriggerTarget target = TriggerTarget::DAC;
};

/// Validate a schedule against the re-trigger limits without running it.
/// Throws RetriggerViolation naming the offending index.
inline void validate_schedule(const std::vector<ScheduleEntry>& schedule,
                              double min_retrigger_interval_s) {
    std::optional<double> last_dac, last_adc;
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const auto& e = schedule[i];
        if (i > 0 && e.time_s < schedule[i - 1].time_s)
            throw std::invalid_argument("schedule: entries must be time-ordered");
        if (e.target == TriggerTarget::DAC) {
            if (last_dac && e.time_s < *last_dac + min_retrigger_interval_s)
                throw RetriggerViolation("schedule: DAC re-trigger at index " +
                                             std::to_string(i) +
                                             " violates the minimum interval",
                                         i);
            last_dac = e.time_s;
        } else if (e.target == TriggerTarget::ADC) {
            if (last_adc && e.time_s < *last_adc + min_retrigger_interval_s)
                throw RetriggerViolation("schedule: ADC re-trigger at index " +
                                             std::to_string(i) +
                                             " violates the minimum interval",
                                         i);
            last_adc = e.time_s;
        }
    }
}

/// Run a trigger schedule against a set of boards for several repetitions.
/// DAC and switch triggers fan out to every board (shared trigger line);
/// each ADC trigger captures on every board. Deterministic per seed.
inline std::vector<std::vector<Capture>> run_sequence(
    std::vector<Board>& boards, const Wiring& wiring,
    const std::vector<ScheduleEntry>& schedule, int repetitions,
    const ClockDomain& clock = {}, std::uint64_t seed = 0) {
    if (repetitions < 1)
        throw std::invalid_argument("run_sequence: repetitions must be >= 1");
    if (boards.empty())
        throw std::invalid_argument("run_sequence: need at least one board");
    const double min_rt = boards.front().config().min_retrigger_interval_s;
    validate_schedule(schedule, min_rt);

    // Stride between repetitions: past the last trigger, the longest
    // capture, and the re-trigger interval, rounded to whole clock periods.
    double span = schedule.empty() ? 0.0 : schedule.back().time_s;
    const double capture_dur =
        static_cast<double>(boards.front().config().fifo_depth) /
        boards.front().config().adc_rate_hz();
    const double stride =
        std::ceil((span + capture_dur + 2.0 * min_rt) * clock.frequency_hz) /
        clock.frequency_hz;

    std::vector<std::vector<Capture>> results;
    results.reserve(static_cast<std::size_t>(repetitions));
    std::vector<AnalogSignal> live;

    for (int rep = 0; rep < repetitions; ++rep) {
        std::vector<Capture> captures;
        for (std::size_t i = 0; i < schedule.size(); ++i) {
            TriggerEvent ev;
            ev.raw_time_s = schedule[i].time_s + static_cast<double>(rep) * stride;
            ev.target = schedule[i].target;
            ev = flipflop_sync(clock, ev);
            switch (schedule[i].target) {
            case TriggerTarget::DAC: {
                live.clear();
                for (std::size_t bi = 0; bi < boards.size(); ++bi) {
                    auto sigs = boards[bi].trigger_dacs(ev);
                    for (auto& s : sigs) {
                        s.board_index = static_cast<int>(bi);
                        live.push_back(std::move(s));
                    }
                }
                break;
            }
            case TriggerTarget::Switch: {
                for (auto& b : boards)
                    b.apply_switch(live, ev.time());
                break;
            }
            case TriggerTarget::ADC: {
                const std::uint64_t cap_seed =
                    seed ^ (static_cast<std::uint64_t>(rep) * 0x9E3779B97F4A7C15ULL +
                            i + 1);
                for (std::size_t bi = 0; bi < boards.size(); ++bi)
                    captures.push_back(boards[bi].capture(ev, live, wiring, cap_seed,
                                                          static_cast<int>(bi)));
                break;
            }
            }
        }
        results.push_back(std::move(captures));
    }
    return results;
}

} // namespace icarusq

#endif
