#ifndef ICARUSQ_QUANTIZER_HPP
#define ICARUSQ_QUANTIZER_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace icarusq {

/// Mid-tread, saturating quantizer. Full scale +/-1.0 maps to
/// +/-(2^(bits-1) - 1); rounding is half-away-from-zero.
struct Quantizer {
    int bits;

    explicit Quantizer(int b) : bits(b) {
        if (b < 2 || b > 16)
            throw std::invalid_argument("Quantizer: bits must be in [2, 16]");
    }

    int max_code() const { return (1 << (bits - 1)) - 1; }

    std::int16_t encode(double x) const {
        const int m = max_code();
        if (x > 1.0)
            x = 1.0;
        else if (x < -1.0)
            x = -1.0;
        double c = std::round(x * m); // std::round is half-away-from-zero
        if (c > m)
            c = m;
        else if (c < -m)
            c = -m;
        return static_cast<std::int16_t>(c);
    }

    double decode(std::int16_t code) const {
        return static_cast<double>(code) / max_code();
    }

    std::vector<std::int16_t> encode(const std::vector<double>& xs) const {
        std::vector<std::int16_t> out;
        out.reserve(xs.size());
        for (double x : xs)
            out.push_back(encode(x));
        return out;
    }
};

} // namespace icarusq

#endif
