#pragma once

#include "sbrnn/harness/systems.hpp"
#include "sbrnn/nn/adam.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace sbrnn::harness {

inline constexpr std::uint32_t kTrainNoisePurpose = 0x6e6f6973u;
inline constexpr std::uint32_t kEvalMessagePurpose = 0x6576616cu;
inline constexpr std::uint32_t kEvalNoisePurpose = 0x65766e73u;

struct LossPoint {
    std::size_t step = 0;
    double loss = 0.0;
};

struct RunRecord {
    std::string config; // INI text of the run configuration
    std::vector<LossPoint> loss_trace;
    double wall_seconds = 0.0;
};

/// Step callback for progress reporting; return false to stop early.
using StepHook = std::function<bool(std::size_t step, double loss)>;

/// Trains `sys` in place. Carried states reset every reset_period steps; a
/// non-finite loss aborts the run.
inline RunRecord train(System& sys, const RunConfig& cfg, const StepHook& hook = {})
{
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    RunRecord record;
    record.config = format_config(cfg);

    StepContext ctx;
    ctx.link = std::make_shared<const channel::ImddChannel>(cfg.channel);
    ctx.single_series = cfg.train.single_series;
    const std::uint64_t noise_stream = substream_seed(cfg.train.seed, 0, kTrainNoisePurpose);

    TrainingSource source(cfg.train.batch, cfg.train.seed);
    nn::Adam adam({.learning_rate = cfg.train.learning_rate});
    const auto alphabet = static_cast<std::uint32_t>(cfg.system.messages);

    for (std::size_t step = 0; step < cfg.train.iterations; ++step) {
        if (step % cfg.train.reset_period == 0) sys.reset_state();
        const Slots slots = source.next_windows(cfg.train.window, alphabet);
        ctx.step = step;
        ctx.draw = channel::NoiseDraw::derive(noise_stream, step);

        nn::Tape tape;
        const nn::Var loss = sys.training_loss(tape, slots, ctx);
        const double value = tape.value(loss)[0];
        if (!std::isfinite(value))
            throw std::runtime_error("training diverged: loss is " + std::to_string(value) + " at step " +
                                     std::to_string(step));
        sys.params().zero_grad();
        tape.backward(loss);
        adam.step(sys.params());

        if (step % cfg.train.log_stride == 0) record.loss_trace.push_back({step, value});
        if (hook && !hook(step, value)) break;
    }
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return record;
}

/// Messages of test sequence `index`: an independent Tausworthe stream.
inline model::MessageSequence test_sequence(const EvalConfig& eval, std::size_t alphabet, std::size_t index)
{
    MessageStream stream = MessageStream::make(eval.rng, substream_seed(eval.seed, index, kEvalMessagePurpose));
    model::MessageSequence seq(eval.sequence_length);
    for (auto& m : seq) m = stream.next_message(static_cast<std::uint32_t>(alphabet));
    return seq;
}

/// Error rates over the configured test sequences with window `window`
/// (0: the configured evaluation window).
inline estimation::ErrorReport evaluate(System& sys, const RunConfig& cfg, std::size_t window = 0)
{
    cfg.validate();
    if (window == 0) window = cfg.eval_window();
    const channel::ImddChannel link(cfg.channel);
    const std::uint64_t noise_stream = substream_seed(cfg.eval.seed, 0, kEvalNoisePurpose);
    std::vector<estimation::ErrorReport> reports;
    reports.reserve(cfg.eval.sequences);
    for (std::size_t s = 0; s < cfg.eval.sequences; ++s) {
        const auto seq = test_sequence(cfg.eval, cfg.system.messages, s);
        reports.push_back(sys.evaluate_sequence(seq, link, channel::NoiseDraw::derive(noise_stream, s), window));
    }
    return estimation::aggregate(reports);
}

inline std::unique_ptr<System> fresh_system(const RunConfig& cfg)
{
    return make_system(cfg.system, cfg.channel, cfg.train.window, cfg.train.seed);
}

inline nn::Checkpoint make_checkpoint(System& sys, const RunConfig& cfg)
{
    return sys.checkpoint({{"train_window", std::to_string(cfg.train.window)},
                           {"train_seed", std::to_string(cfg.train.seed)},
                           {"distance_km", detail::format_value(cfg.channel.length_km)}});
}

struct DistancePoint {
    double distance_km = 0.0;
    std::size_t best_run = 0;
    std::uint64_t train_seed = 0;
    estimation::ErrorReport report;
};

struct WindowPoint {
    std::size_t window = 0;
    estimation::ErrorReport report;
};

/// Trains `runs` independent initializations per distance and keeps the
/// lowest BER. Seeds of run k are train.seed + k.
inline std::vector<DistancePoint> sweep_distance(const RunConfig& base, std::span<const double> distances,
                                                 std::size_t runs,
                                                 const std::function<void(const DistancePoint&, System&)>& on_best = {},
                                                 const StepHook& hook = {})
{
    if (runs == 0) throw std::invalid_argument("sweep_distance: runs must be > 0");
    std::vector<DistancePoint> out;
    for (double d : distances) {
        RunConfig cfg = base;
        cfg.channel.length_km = d;
        DistancePoint best;
        std::unique_ptr<System> best_sys;
        for (std::size_t k = 0; k < runs; ++k) {
            cfg.train.seed = base.train.seed + k;
            if (cfg.train.seed == cfg.eval.seed) throw std::invalid_argument("sweep_distance: train seed collides with eval seed");
            auto sys = fresh_system(cfg);
            train(*sys, cfg, hook);
            const auto report = evaluate(*sys, cfg);
            if (!best_sys || report.ber < best.report.ber) {
                best = {d, k, cfg.train.seed, report};
                best_sys = std::move(sys);
            }
        }
        if (on_best) on_best(best, *best_sys);
        out.push_back(best);
    }
    return out;
}

/// Evaluates a trained system for each processing window.
inline std::vector<WindowPoint> sweep_window(System& sys, const RunConfig& cfg, std::span<const std::size_t> windows)
{
    std::vector<WindowPoint> out;
    for (std::size_t w : windows) {
        RunConfig c = cfg;
        c.eval.window = w;
        out.push_back({w, evaluate(sys, c, w)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string format_double(double v)
{
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline void write_loss_trace(std::ostream& os, std::span<const LossPoint> trace)
{
    os << "step,loss\n";
    for (const auto& p : trace) os << p.step << ',' << format_double(p.loss) << '\n';
}

inline std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
}

inline std::vector<LossPoint> read_loss_trace(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line) || line != "step,loss") throw std::runtime_error("loss trace: bad header");
    std::vector<LossPoint> trace;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 2) throw std::runtime_error("loss trace: expected 2 columns: " + line);
        trace.push_back({std::stoul(cells[0]), std::stod(cells[1])});
    }
    return trace;
}

inline constexpr const char* kReportColumns = "ber,bler,bit_errors,bits,block_errors,messages";

inline void write_report_cells(std::ostream& os, const estimation::ErrorReport& r)
{
    os << format_double(r.ber) << ',' << format_double(r.bler) << ',' << r.bit_errors << ',' << r.bits << ','
       << r.block_errors << ',' << r.messages;
}

inline estimation::ErrorReport parse_report_cells(std::span<const std::string> c)
{
    estimation::ErrorReport r;
    r.ber = std::stod(c[0]);
    r.bler = std::stod(c[1]);
    r.bit_errors = std::stoull(c[2]);
    r.bits = std::stoull(c[3]);
    r.block_errors = std::stoull(c[4]);
    r.messages = std::stoull(c[5]);
    return r;
}

inline void write_distance_csv(std::ostream& os, std::span<const DistancePoint> points)
{
    os << "distance_km,best_run,train_seed," << kReportColumns << '\n';
    for (const auto& p : points) {
        os << format_double(p.distance_km) << ',' << p.best_run << ',' << p.train_seed << ',';
        write_report_cells(os, p.report);
        os << '\n';
    }
}

inline std::vector<DistancePoint> read_distance_csv(std::istream& is)
{
    std::string line;
    std::getline(is, line);
    std::vector<DistancePoint> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto c = split_csv(line);
        if (c.size() != 9) throw std::runtime_error("distance csv: expected 9 columns: " + line);
        out.push_back({std::stod(c[0]), std::stoul(c[1]), std::stoull(c[2]),
                       parse_report_cells(std::span(c).subspan(3))});
    }
    return out;
}

inline void write_window_csv(std::ostream& os, std::span<const WindowPoint> points)
{
    os << "window," << kReportColumns << '\n';
    for (const auto& p : points) {
        os << p.window << ',';
        write_report_cells(os, p.report);
        os << '\n';
    }
}

inline std::vector<WindowPoint> read_window_csv(std::istream& is)
{
    std::string line;
    std::getline(is, line);
    std::vector<WindowPoint> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto c = split_csv(line);
        if (c.size() != 7) throw std::runtime_error("window csv: expected 7 columns: " + line);
        out.push_back({std::stoul(c[0]), parse_report_cells(std::span(c).subspan(1))});
    }
    return out;
}

/// Writes <dir>/config.ini and <dir>/loss.csv.
inline void save_run_record(const std::filesystem::path& dir, const RunRecord& record)
{
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "config.ini") << record.config;
    std::ofstream loss(dir / "loss.csv");
    write_loss_trace(loss, record.loss_trace);
    if (!loss) throw std::runtime_error("cannot write " + (dir / "loss.csv").string());
}

} // namespace sbrnn::harness
