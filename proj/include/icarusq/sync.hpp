#ifndef ICARUSQ_SYNC_HPP
#define ICARUSQ_SYNC_HPP

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace icarusq {

/// The master reference oscillator: frequency plus the phase of its first
/// edge inside [0, 1/f).
struct ClockDomain {
    double frequency_hz = 122.88e6;
    double phase_s = 0.0;

    ClockDomain() = default;
    ClockDomain(double f, double phase) : frequency_hz(f), phase_s(phase) {
        if (!(frequency_hz > 0.0))
            throw std::invalid_argument("ClockDomain: frequency must be > 0");
        if (phase_s < 0.0 || phase_s >= 1.0 / frequency_hz)
            throw std::invalid_argument("ClockDomain: phase must lie in [0, 1/f)");
    }

    double period_s() const { return 1.0 / frequency_hz; }
};

enum class TriggerTarget { DAC, ADC, Switch };

/// A falling-edge trigger assertion, before and (optionally) after
/// flip-flop alignment to the reference clock.
struct TriggerEvent {
    double raw_time_s = 0.0;
    std::optional<double> synced_time_s;
    TriggerTarget target = TriggerTarget::DAC;

    double time() const { return synced_time_s.value_or(raw_time_s); }
};

/// Trigger-distribution path to one board: physical cable delay and the
/// software compensation applied against it.
struct BoardLink {
    std::string board_id;
    double cable_delay_s = 0.0;
    double compensation_s = 0.0;

    double effective_skew_s() const { return cable_delay_s - compensation_s; }
};

/// Resynchronize a trigger to the reference clock: the synced time is the
/// first clock edge strictly after the raw time, so the added jitter is
/// uniform in (0, 1/f].
inline TriggerEvent flipflop_sync(const ClockDomain& clock, TriggerEvent t) {
    if (!std::isfinite(t.raw_time_s))
        throw std::invalid_argument("flipflop_sync: raw time must be finite");
    const double period = clock.period_s();
    double n = std::floor((t.raw_time_s - clock.phase_s) / period);
    double edge = clock.phase_s + (n + 1.0) * period;
    // Strict-after rule: an on-edge trigger latches on the next edge.
    while (edge <= t.raw_time_s)
        edge += period;
    t.synced_time_s = edge;
    return t;
}

/// Per-tile phase offsets of one board's converter tiles (4 DAC tiles of 4
/// channels each). MTS drives all of them to zero.
struct TileSkews {
    std::vector<double> offsets_s = std::vector<double>(4, 0.0);
};

/// Multi-tile synchronization: after alignment every tile reports the same
/// deterministic latency and zero inter-channel skew.
inline TileSkews mts_align(const TileSkews& before) {
    if (before.offsets_s.empty())
        throw std::invalid_argument("mts_align: board must have at least one tile");
    TileSkews after;
    after.offsets_s.assign(before.offsets_s.size(), 0.0);
    return after;
}

} // namespace icarusq

#endif
