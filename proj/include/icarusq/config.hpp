#ifndef ICARUSQ_CONFIG_HPP
#define ICARUSQ_CONFIG_HPP

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "icarusq/board.hpp"

namespace icarusq {

/// Flat key-value configuration: `key = value` lines, '#' comments.
/// Environment variables prefixed ICARUSQ_ (key uppercased, '.' and '-'
/// replaced by '_') override file values.
class Config {
public:
    Config() = default;

    static Config from_file(const std::string& path) {
        std::ifstream f(path);
        if (!f)
            throw std::runtime_error("Config: cannot open " + path);
        std::ostringstream os;
        os << f.rdbuf();
        return from_string(os.str());
    }

    static Config from_string(const std::string& text) {
        Config cfg;
        std::istringstream is(text);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos)
                line = line.substr(0, hash);
            line = trim(line);
            if (line.empty())
                continue;
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("Config: line " + std::to_string(lineno) +
                                         ": expected key = value");
            cfg.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
        }
        return cfg;
    }

    bool has(const std::string& key) const {
        return env_override(key).has_value() || values_.count(key) > 0;
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        if (auto env = env_override(key))
            return *env;
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        if (!has(key))
            return fallback;
        return std::stod(get_string(key, ""));
    }

    long get_int(const std::string& key, long fallback) const {
        if (!has(key))
            return fallback;
        return std::stol(get_string(key, ""));
    }

    BoardConfig board_config() const {
        BoardConfig b;
        b.dac_rate_multiplier = static_cast<int>(get_int("board.dac_rate_multiplier", b.dac_rate_multiplier));
        b.adc_rate_multiplier = static_cast<int>(get_int("board.adc_rate_multiplier", b.adc_rate_multiplier));
        b.master_clock_hz = get_double("board.master_clock_hz", b.master_clock_hz);
        const std::string mode = get_string("board.decoder_mode", "nrz");
        if (mode == "mix" || mode == "Mix")
            b.decoder_mode = DecoderMode::Mix;
        else if (mode == "nrz" || mode == "NRZ")
            b.decoder_mode = DecoderMode::NRZ;
        else
            throw std::runtime_error("Config: board.decoder_mode must be nrz or mix");
        b.min_retrigger_interval_s = get_double("board.min_retrigger_interval_s",
                                                b.min_retrigger_interval_s);
        b.switch_latency_s = get_double("board.switch_latency_s", b.switch_latency_s);
        b.adc_noise_density = get_double("board.adc_noise_density", b.adc_noise_density);
        b.dac_latency_s = get_double("board.dac_latency_s", b.dac_latency_s);
        b.validate();
        return b;
    }

    /// Output power calibration constant (dBm at the zero-frequency
    /// reference of the decoder response).
    double full_scale_dbm() const { return get_double("power.full_scale_dbm", -6.1006); }

private:
    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos)
            return "";
        const auto b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    static std::optional<std::string> env_override(const std::string& key) {
        std::string name = "ICARUSQ_";
        for (char c : key) {
            if (c == '.' || c == '-')
                name.push_back('_');
            else
                name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        }
        if (const char* v = std::getenv(name.c_str()))
            return std::string(v);
        return std::nullopt;
    }

    std::map<std::string, std::string> values_;
};

} // namespace icarusq

#endif
