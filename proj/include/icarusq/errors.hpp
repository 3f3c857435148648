#ifndef ICARUSQ_ERRORS_HPP
#define ICARUSQ_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace icarusq {

// Waveform longer than the per-channel AXI stream FIFO (65,536 samples).
struct FifoOverflowError : std::runtime_error {
    explicit FifoOverflowError(const std::string& msg) : std::runtime_error(msg) {}
};

// Trigger asserted before the minimum re-trigger interval elapsed.
struct RetriggerViolation : std::runtime_error {
    explicit RetriggerViolation(const std::string& msg, std::size_t index = 0)
        : std::runtime_error(msg), schedule_index(index) {}
    std::size_t schedule_index;
};

struct NotArmedError : std::runtime_error {
    explicit NotArmedError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidStateError : std::runtime_error {
    explicit InvalidStateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bias setpoint outside the source's output range.
struct ComplianceError : std::runtime_error {
    explicit ComplianceError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace icarusq

#endif
