#ifndef ICARUSQ_JOB_HPP
#define ICARUSQ_JOB_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "icarusq/board.hpp"
#include "icarusq/capture_io.hpp"
#include "icarusq/bias.hpp"
#include "icarusq/config.hpp"
#include "icarusq/signal_core.hpp"

namespace icarusq {

using json = nlohmann::json;

/// Submission payload failed schema validation; `field` names the
/// offending path, `indices` the offending entries where applicable.
struct JobValidationError : std::runtime_error {
    JobValidationError(std::string f, const std::string& msg,
                       std::vector<std::size_t> idx = {})
        : std::runtime_error(msg), field(std::move(f)), indices(std::move(idx)) {}
    std::string field;
    std::vector<std::size_t> indices;
};

/// One channel's waveform: inline samples or a named primitive.
struct PulseSpec {
    int channel = 0;
    std::string kind = "sine"; // samples | rectangle | gaussian | sine | pink-noise
    std::vector<double> samples;
    double amplitude = 1.0;
    double frequency_hz = 0.0;
    double phase_rad = 0.0;
    std::size_t n_samples = 65536;
    double width_fraction = 0.5; // rectangle duty cycle / gaussian sigma over N
    int rows = 16;               // pink-noise generator rows
    std::uint64_t noise_seed = 0;
};

struct TriggerTiming {
    double time_s = 0.0;
    std::string target = "dac"; // dac | adc | switch
};

struct BiasSetting {
    int channel = 0;
    unsigned code = 32768;
};

enum class JobStatus { queued, running, done, failed };

inline std::string to_string(JobStatus s) {
    switch (s) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
    }
    return "unknown";
}

inline JobStatus job_status_from_string(const std::string& s) {
    if (s == "queued") return JobStatus::queued;
    if (s == "running") return JobStatus::running;
    if (s == "done") return JobStatus::done;
    if (s == "failed") return JobStatus::failed;
    throw std::invalid_argument("unknown job status: " + s);
}

/// A pulse experiment with lifecycle state, as held by the broker.
struct Job {
    std::string id;
    std::string idempotency_key;
    std::vector<TriggerTiming> trigger_timings;
    int repetitions = 1;
    std::vector<PulseSpec> pulse_sequence;
    std::vector<BiasSetting> bias_settings;
    std::string result_format = "binary"; // binary | csv
    std::uint64_t seed = 0;
    JobStatus status = JobStatus::queued;
    std::string failure_reason;
    bool has_result = false;
    double submitted_at = 0.0;
    double finished_at = 0.0;
    std::string claim_token;
    double claimed_at = 0.0;
};

inline json pulse_to_json(const PulseSpec& p) {
    json j{{"channel", p.channel}, {"kind", p.kind}};
    if (p.kind == "samples")
        j["samples"] = p.samples;
    else {
        j["amplitude"] = p.amplitude;
        j["n_samples"] = p.n_samples;
        if (p.kind == "sine") {
            j["frequency_hz"] = p.frequency_hz;
            j["phase_rad"] = p.phase_rad;
        } else if (p.kind == "pink-noise") {
            j["rows"] = p.rows;
            j["noise_seed"] = p.noise_seed;
        } else {
            j["width_fraction"] = p.width_fraction;
        }
    }
    return j;
}

inline json job_to_json(const Job& job) {
    json timings = json::array();
    for (const auto& t : job.trigger_timings)
        timings.push_back({{"time_s", t.time_s}, {"target", t.target}});
    json pulses = json::array();
    for (const auto& p : job.pulse_sequence)
        pulses.push_back(pulse_to_json(p));
    json bias = json::array();
    for (const auto& b : job.bias_settings)
        bias.push_back({{"channel", b.channel}, {"code", b.code}});
    return json{{"id", job.id},
                {"idempotency_key", job.idempotency_key},
                {"trigger_timings", timings},
                {"repetitions", job.repetitions},
                {"pulse_sequence", pulses},
                {"bias_settings", bias},
                {"result_format", job.result_format},
                {"seed", job.seed},
                {"status", to_string(job.status)},
                {"failure_reason", job.failure_reason},
                {"has_result", job.has_result},
                {"submitted_at", job.submitted_at},
                {"finished_at", job.finished_at}};
}

/// Parse and validate a submission payload. Throws JobValidationError with
/// the field path of the first violation. The 30 us re-trigger rule is
/// checked here, at submission time.
inline Job job_from_request(const json& j,
                            double min_retrigger_interval_s = 30e-6) {
    Job job;
    if (!j.is_object())
        throw JobValidationError("", "payload must be a JSON object");

    if (j.contains("idempotency_key")) {
        if (!j["idempotency_key"].is_string())
            throw JobValidationError("idempotency_key", "must be a string");
        job.idempotency_key = j["idempotency_key"];
    }

    if (!j.contains("repetitions") || !j["repetitions"].is_number_integer())
        throw JobValidationError("repetitions", "required integer");
    job.repetitions = j["repetitions"];
    if (job.repetitions < 1)
        throw JobValidationError("repetitions", "must be >= 1");

    if (!j.contains("trigger_timings") || !j["trigger_timings"].is_array() ||
        j["trigger_timings"].empty())
        throw JobValidationError("trigger_timings", "required non-empty array");
    double prev = -1.0;
    std::optional<double> last_dac, last_adc;
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < j["trigger_timings"].size(); ++i) {
        const auto& t = j["trigger_timings"][i];
        const std::string path = "trigger_timings[" + std::to_string(i) + "]";
        if (!t.is_object() || !t.contains("time_s") || !t["time_s"].is_number() ||
            !t.contains("target") || !t["target"].is_string())
            throw JobValidationError(path, "need {time_s: number, target: string}");
        TriggerTiming tt{t["time_s"], t["target"]};
        if (tt.target != "dac" && tt.target != "adc" && tt.target != "switch")
            throw JobValidationError(path + ".target", "must be dac, adc or switch");
        if (tt.time_s < prev)
            throw JobValidationError(path + ".time_s", "timings must be ascending");
        prev = tt.time_s;
        if (tt.target == "dac") {
            if (last_dac && tt.time_s < *last_dac + min_retrigger_interval_s)
                bad.push_back(i);
            last_dac = tt.time_s;
        } else if (tt.target == "adc") {
            if (last_adc && tt.time_s < *last_adc + min_retrigger_interval_s)
                bad.push_back(i);
            last_adc = tt.time_s;
        }
        job.trigger_timings.push_back(tt);
    }
    if (!bad.empty())
        throw JobValidationError("trigger_timings",
                                 "re-trigger spacing below the 30 us minimum", bad);

    if (!j.contains("pulse_sequence") || !j["pulse_sequence"].is_array())
        throw JobValidationError("pulse_sequence", "required array");
    for (std::size_t i = 0; i < j["pulse_sequence"].size(); ++i) {
        const auto& p = j["pulse_sequence"][i];
        const std::string path = "pulse_sequence[" + std::to_string(i) + "]";
        if (!p.is_object() || !p.contains("channel") || !p.contains("kind"))
            throw JobValidationError(path, "need {channel, kind, ...}");
        PulseSpec ps;
        ps.channel = p["channel"];
        ps.kind = p["kind"];
        if (ps.channel < 0 || ps.channel > 15)
            throw JobValidationError(path + ".channel", "must be in [0, 15]");
        if (ps.kind == "samples") {
            if (!p.contains("samples") || !p["samples"].is_array() ||
                p["samples"].empty())
                throw JobValidationError(path + ".samples", "required non-empty array");
            ps.samples = p["samples"].get<std::vector<double>>();
        } else if (ps.kind == "rectangle" || ps.kind == "gaussian" ||
                   ps.kind == "sine" || ps.kind == "pink-noise") {
            ps.amplitude = p.value("amplitude", 1.0);
            ps.n_samples = p.value("n_samples", std::size_t{65536});
            ps.frequency_hz = p.value("frequency_hz", 0.0);
            ps.phase_rad = p.value("phase_rad", 0.0);
            ps.width_fraction = p.value("width_fraction", 0.5);
            ps.rows = p.value("rows", 16);
            ps.noise_seed = p.value("noise_seed", std::uint64_t{0});
            if (ps.n_samples < 1)
                throw JobValidationError(path + ".n_samples", "must be >= 1");
        } else {
            throw JobValidationError(path + ".kind",
                                     "must be samples, rectangle, gaussian, sine "
                                     "or pink-noise");
        }
        job.pulse_sequence.push_back(std::move(ps));
    }

    if (j.contains("bias_settings")) {
        if (!j["bias_settings"].is_array())
            throw JobValidationError("bias_settings", "must be an array");
        for (std::size_t i = 0; i < j["bias_settings"].size(); ++i) {
            const auto& b = j["bias_settings"][i];
            const std::string path = "bias_settings[" + std::to_string(i) + "]";
            if (!b.is_object() || !b.contains("channel") || !b.contains("code"))
                throw JobValidationError(path, "need {channel, code}");
            BiasSetting bs{b["channel"], b["code"]};
            if (bs.code >= 65536u)
                throw JobValidationError(path + ".code", "must be a 16-bit code");
            job.bias_settings.push_back(bs);
        }
    }

    job.result_format = j.value("result_format", std::string("binary"));
    if (job.result_format != "binary" && job.result_format != "csv")
        throw JobValidationError("result_format", "must be binary or csv");
    job.seed = j.value("seed", std::uint64_t{0});
    return job;
}

/// Render a pulse primitive into DAC samples.
inline std::vector<double> render_pulse(const PulseSpec& p, double dac_rate_hz) {
    if (p.kind == "samples")
        return p.samples;
    std::vector<double> out(p.n_samples, 0.0);
    if (p.kind == "rectangle") {
        const auto on = static_cast<std::size_t>(p.width_fraction *
                                                 static_cast<double>(p.n_samples));
        for (std::size_t i = 0; i < on && i < out.size(); ++i)
            out[i] = p.amplitude;
    } else if (p.kind == "gaussian") {
        const double n = static_cast<double>(p.n_samples);
        const double sigma = std::max(1.0, p.width_fraction * n);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double d = (static_cast<double>(i) - n / 2.0) / sigma;
            out[i] = p.amplitude * std::exp(-0.5 * d * d);
        }
    } else if (p.kind == "sine") {
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = p.amplitude *
                     std::sin(2.0 * std::numbers::pi * p.frequency_hz *
                                  static_cast<double>(i) / dac_rate_hz +
                              p.phase_rad);
    } else if (p.kind == "pink-noise") {
        out = voss_pink_noise(p.n_samples, p.rows, p.noise_seed);
        for (double& v : out)
            v *= p.amplitude;
    } else {
        throw std::invalid_argument("render_pulse: unknown kind " + p.kind);
    }
    return out;
}

/// Default experiment bench: one board, DAC channel i looped into ADC
/// channel i for the first eight channels.
inline Wiring default_loopback_wiring() {
    Wiring w;
    for (int c = 0; c < 8; ++c)
        w.links.push_back(WiringLink{0, c, 0, c, 1.0, std::nullopt});
    return w;
}

/// Run a job against the virtual devices: apply bias settings, load
/// waveforms, run the trigger schedule, serialize the captures in the
/// requested format. Deterministic for a fixed job seed.
inline std::string execute_job(const Job& job, const Config& cfg = {}) {
    // Bias settings have no observable effect on the loopback bench beyond
    // range validation; the codes are checked against the 16-bit map here.
    BiasChannel bias;
    for (const auto& b : job.bias_settings)
        current_of_code(bias, static_cast<long>(b.code));

    std::vector<Board> boards;
    boards.emplace_back(cfg.board_config());
    auto& board = boards.front();

    for (const auto& p : job.pulse_sequence)
        board.load_waveform(p.channel, render_pulse(p, board.config().dac_rate_hz()));
    board.arm_all();

    std::vector<ScheduleEntry> schedule;
    for (const auto& t : job.trigger_timings) {
        TriggerTarget target = TriggerTarget::DAC;
        if (t.target == "adc")
            target = TriggerTarget::ADC;
        else if (t.target == "switch")
            target = TriggerTarget::Switch;
        schedule.push_back(ScheduleEntry{t.time_s, target});
    }

    auto reps = run_sequence(boards, default_loopback_wiring(), schedule,
                             job.repetitions, ClockDomain{}, job.seed);

    // Stack every repetition's capture channels into one container.
    std::vector<std::vector<std::int16_t>> channels;
    for (const auto& rep : reps)
        for (const auto& cap : rep)
            for (const auto& ch : cap.channel_codes)
                channels.push_back(ch);
    if (channels.empty())
        throw std::invalid_argument("execute_job: schedule produced no captures");
    return job.result_format == "csv" ? capture_to_csv(channels)
                                      : encode_capture(channels);
}

/// Map device-model failures onto machine-readable job failure reasons.
inline std::string failure_reason_for(const std::exception& e) {
    if (dynamic_cast<const FifoOverflowError*>(&e))
        return "fifo-overflow";
    if (dynamic_cast<const RetriggerViolation*>(&e))
        return "retrigger-violation";
    if (dynamic_cast<const NotArmedError*>(&e))
        return "not-armed";
    if (dynamic_cast<const InvalidStateError*>(&e))
        return "invalid-state";
    if (dynamic_cast<const ComplianceError*>(&e))
        return "compliance";
    return "error";
}

} // namespace icarusq

#endif
