#pragma once

#include "sbrnn/channel/config.hpp"
#include "sbrnn/estimation/sliding.hpp"
#include "sbrnn/harness/rng.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace sbrnn::harness {

enum class SystemKind { vanilla, lstm_gru, ffnn, pam2_ffnn };

inline std::string to_string(SystemKind k)
{
    switch (k) {
    case SystemKind::vanilla: return "vanilla";
    case SystemKind::lstm_gru: return "lstm-gru";
    case SystemKind::ffnn: return "ffnn";
    case SystemKind::pam2_ffnn: return "pam2-ffnn";
    }
    return "?";
}

inline SystemKind parse_system_kind(const std::string& s)
{
    if (s == "vanilla") return SystemKind::vanilla;
    if (s == "lstm-gru" || s == "gru") return SystemKind::lstm_gru;
    if (s == "ffnn") return SystemKind::ffnn;
    if (s == "pam2-ffnn" || s == "pam2") return SystemKind::pam2_ffnn;
    throw std::invalid_argument("unknown system: " + s);
}

struct SystemSpec {
    SystemKind kind = SystemKind::vanilla;
    double rate_gbps = 42.0;
    std::size_t messages = 64; // M
    std::size_t block = 0;     // n; 0 derives it from the rate
    std::size_t pam2_window = 61;
    std::size_t pam2_layers = 9;
    double pam2_rolloff = 0.25;
    estimation::CarryRule carry = estimation::CarryRule::forward;

    [[nodiscard]] std::size_t bits_per_message() const { return estimation::bits_per_message(messages); }

    /// n such that log2(M) bits per n samples at the simulation rate give the
    /// requested bit rate.
    [[nodiscard]] std::size_t block_length(const channel::ChannelConfig& ch) const
    {
        if (block) return block;
        const double n = ch.simulation_rate_gsps() * bits_per_message() / rate_gbps;
        const auto rounded = static_cast<std::size_t>(std::llround(n));
        if (rounded == 0 || std::abs(n - static_cast<double>(rounded)) > 1e-9)
            throw std::invalid_argument("rate does not give an integer block length");
        return rounded;
    }

    /// PAM2 samples per symbol carrying the same bit rate.
    [[nodiscard]] std::size_t samples_per_symbol(const channel::ChannelConfig& ch) const
    {
        const std::size_t n = block_length(ch);
        if (n % bits_per_message()) throw std::invalid_argument("block length not divisible by bits per message");
        return n / bits_per_message();
    }
};

struct TrainConfig {
    std::size_t batch = 25;
    std::size_t window = 10;
    std::size_t iterations = 10000;
    std::size_t reset_period = 100;
    std::size_t log_stride = 1;
    double learning_rate = 1e-3;
    std::uint64_t seed = 1;
    /// Send all batch windows through one channel pass as a single series;
    /// false gives each batch member its own pass.
    bool single_series = true;
};

struct EvalConfig {
    std::size_t sequences = 100;
    std::size_t sequence_length = 1000;
    std::size_t window = 0; // 0: use the training window
    RngKind rng = RngKind::tausworthe;
    std::uint64_t seed = 1000003;
    std::string checkpoint;
};

struct RunConfig {
    channel::ChannelConfig channel;
    SystemSpec system;
    TrainConfig train;
    EvalConfig eval;

    [[nodiscard]] std::size_t eval_window() const { return eval.window ? eval.window : train.window; }

    void validate() const
    {
        channel.validate();
        if (train.iterations == 0) throw std::invalid_argument("train.iterations must be > 0");
        if (train.batch == 0 || train.window == 0) throw std::invalid_argument("train.batch and train.window must be > 0");
        if (train.log_stride == 0 || train.reset_period == 0)
            throw std::invalid_argument("train.log_stride and train.reset_period must be > 0");
        if (train.reset_period % train.log_stride != 0)
            throw std::invalid_argument("train.log_stride must divide train.reset_period");
        if (eval.rng != RngKind::tausworthe) throw std::invalid_argument("eval.rng must be tausworthe");
        if (eval.seed == train.seed) throw std::invalid_argument("eval.seed must differ from train.seed");
        if (eval.sequence_length <= eval_window())
            throw std::invalid_argument("eval.sequence_length must exceed the processing window");
        (void)system.block_length(channel);
    }
};

namespace detail {

using boost::property_tree::ptree;

template <class Visitor>
void visit_fields(RunConfig& c, Visitor&& v)
{
    v("channel", "fiber_dispersion_ps_nm_km", c.channel.dispersion_ps_nm_km);
    v("channel", "fiber_attenuation_db_km", c.channel.attenuation_db_km);
    v("channel", "wavelength_nm", c.channel.wavelength_nm);
    v("channel", "distance_km", c.channel.length_km);
    v("channel", "lpf_bandwidth_ghz", c.channel.lpf_cutoff_ghz);
    v("channel", "dac_adc_rate_gsps", c.channel.dac_rate_gsps);
    v("channel", "simulation_oversampling", c.channel.oversampling);
    v("channel", "dac_adc_enob", c.channel.enob);
    v("channel", "noise_variance", c.channel.receiver_noise_variance);
    v("channel", "dac_noise", c.channel.dac_noise);
    v("channel", "receiver_noise", c.channel.receiver_noise);
    v("channel", "adc_noise", c.channel.adc_noise);

    v("system", "information_rate_gbps", c.system.rate_gbps);
    v("system", "M", c.system.messages);
    v("system", "n", c.system.block);
    v("system", "pam2_window_Z", c.system.pam2_window);
    v("system", "pam2_layers_L", c.system.pam2_layers);
    v("system", "pam2_rolloff", c.system.pam2_rolloff);

    v("train", "batch_B", c.train.batch);
    v("train", "processing_window_W", c.train.window);
    v("train", "iterations", c.train.iterations);
    v("train", "reset_period", c.train.reset_period);
    v("train", "log_stride", c.train.log_stride);
    v("train", "learning_rate", c.train.learning_rate);
    v("train", "seed", c.train.seed);
    v("train", "single_series", c.train.single_series);

    v("eval", "test_sequences", c.eval.sequences);
    v("eval", "test_sequence_length", c.eval.sequence_length);
    v("eval", "processing_window_W", c.eval.window);
    v("eval", "seed", c.eval.seed);
    v("eval", "checkpoint", c.eval.checkpoint);
}

template <class T>
std::string format_value(const T& v)
{
    if constexpr (std::is_same_v<T, bool>) {
        return v ? "true" : "false";
    } else if constexpr (std::is_same_v<T, std::string>) {
        return v;
    } else {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    }
}

template <class T>
void parse_value(const std::string& text, T& out, const std::string& key)
{
    if constexpr (std::is_same_v<T, bool>) {
        if (text == "true" || text == "1" || text == "on") out = true;
        else if (text == "false" || text == "0" || text == "off") out = false;
        else throw std::invalid_argument("config " + key + ": expected boolean, got '" + text + "'");
    } else if constexpr (std::is_same_v<T, std::string>) {
        out = text;
    } else {
        std::istringstream is(text);
        T v{};
        is >> v;
        if (!is || !(is >> std::ws).eof())
            throw std::invalid_argument("config " + key + ": cannot parse '" + text + "'");
        out = v;
    }
}

} // namespace detail

/// Applies one "section.key=value" assignment.
inline void set_option(RunConfig& c, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("override must look like section.key=value: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    if (path == "system.kind") {
        c.system.kind = parse_system_kind(value);
        return;
    }
    if (path == "system.carry_rule") {
        c.system.carry = estimation::parse_carry_rule(value);
        return;
    }
    if (path == "eval.rng") {
        c.eval.rng = parse_rng_kind(value);
        return;
    }
    bool found = false;
    detail::visit_fields(c, [&](const char* section, const char* key, auto& field) {
        if (path == std::string(section) + "." + key) {
            detail::parse_value(value, field, path);
            found = true;
        }
    });
    if (!found) throw std::invalid_argument("unknown config key: " + path);
}

/// Reads an INI file: sections [channel], [system], [train], [eval].
inline RunConfig load_config(std::istream& in, RunConfig base = {})
{
    boost::property_tree::ptree tree;
    boost::property_tree::ini_parser::read_ini(in, tree);
    for (const auto& [section, keys] : tree)
        for (const auto& [key, value] : keys) set_option(base, section + "." + key + "=" + value.data());
    return base;
}

inline RunConfig load_config_file(const std::string& path, RunConfig base = {})
{
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    return load_config(f, std::move(base));
}

inline std::string format_config(RunConfig c)
{
    boost::property_tree::ptree tree;
    tree.put("system.kind", to_string(c.system.kind));
    tree.put("system.carry_rule", estimation::to_string(c.system.carry));
    tree.put("eval.rng", to_string(c.eval.rng));
    detail::visit_fields(c, [&](const char* section, const char* key, auto& field) {
        tree.put(boost::property_tree::ptree::path_type(std::string(section) + "." + key),
                 detail::format_value(field));
    });
    std::ostringstream os;
    boost::property_tree::ini_parser::write_ini(os, tree);
    return os.str();
}

} // namespace sbrnn::harness
