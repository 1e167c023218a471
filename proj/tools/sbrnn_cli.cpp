#include "sbrnn/harness/grad_check.hpp"
#include "sbrnn/harness/run.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace sbrnn;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string system;
    std::optional<double> distance;
    std::optional<double> rate;
    std::optional<std::size_t> iterations;
    std::optional<std::size_t> batch;
    std::optional<std::size_t> window;
    std::optional<double> learning_rate;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> sequences;
    std::optional<std::size_t> sequence_length;
    std::string carry;
    bool quiet = false;
};

void add_common(CLI::App* app, Common& c)
{
    app->add_option("--config", c.config_path, "INI config file")->check(CLI::ExistingFile);
    app->add_option("--set", c.overrides, "override section.key=value (repeatable)");
    app->add_option("--system", c.system, "vanilla | lstm-gru | ffnn | pam2-ffnn");
    app->add_option("--distance", c.distance, "channel.distance_km");
    app->add_option("--rate", c.rate, "system.information_rate_gbps");
    app->add_option("--iterations", c.iterations, "train.iterations");
    app->add_option("--batch", c.batch, "train.batch_B");
    app->add_option("--window", c.window, "train.processing_window_W");
    app->add_option("--lr", c.learning_rate, "train.learning_rate");
    app->add_option("--seed", c.seed, "train.seed");
    app->add_option("--sequences", c.sequences, "eval.test_sequences");
    app->add_option("--sequence-length", c.sequence_length, "eval.test_sequence_length");
    app->add_option("--carry", c.carry, "none | forward | both");
    app->add_flag("--quiet", c.quiet, "no progress output");
}

harness::RunConfig resolve(const Common& c)
{
    harness::RunConfig cfg;
    if (!c.config_path.empty()) cfg = harness::load_config_file(c.config_path);
    for (const auto& o : c.overrides) harness::set_option(cfg, o);
    if (!c.system.empty()) cfg.system.kind = harness::parse_system_kind(c.system);
    if (!c.carry.empty()) cfg.system.carry = estimation::parse_carry_rule(c.carry);
    if (c.distance) cfg.channel.length_km = *c.distance;
    if (c.rate) cfg.system.rate_gbps = *c.rate;
    if (c.iterations) cfg.train.iterations = *c.iterations;
    if (c.batch) cfg.train.batch = *c.batch;
    if (c.window) cfg.train.window = *c.window;
    if (c.learning_rate) cfg.train.learning_rate = *c.learning_rate;
    if (c.seed) cfg.train.seed = *c.seed;
    if (c.sequences) cfg.eval.sequences = *c.sequences;
    if (c.sequence_length) cfg.eval.sequence_length = *c.sequence_length;
    cfg.validate();
    return cfg;
}

harness::StepHook progress(const harness::RunConfig& cfg, bool quiet)
{
    if (quiet) return {};
    const std::size_t every = std::max<std::size_t>(1, cfg.train.iterations / 20);
    return [every, total = cfg.train.iterations](std::size_t step, double loss) {
        if (step % every == 0 || step + 1 == total)
            std::cerr << "step " << step << "/" << total << " loss " << loss << '\n';
        return true;
    };
}

void print_report(std::ostream& os, const estimation::ErrorReport& r)
{
    os << "BER " << r.ber << " (" << r.bit_errors << "/" << r.bits << ")  BLER " << r.bler << " (" << r.block_errors
       << "/" << r.messages << ")\n";
}

std::unique_ptr<harness::System> load_system(const std::string& path, const harness::RunConfig& cfg,
                                             const Common& c)
{
    auto sys = harness::system_from_checkpoint(nn::load_checkpoint(path), cfg.channel);
    if (!c.carry.empty()) sys->set_carry_rule(cfg.system.carry);
    return sys;
}

template <class T>
std::vector<T> parse_list(const std::string& text)
{
    std::vector<T> out;
    for (const auto& cell : harness::split_csv(text)) {
        std::istringstream is(cell);
        T v{};
        if (!(is >> v)) throw std::invalid_argument("bad list entry: " + cell);
        out.push_back(v);
    }
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"SBRNN optical autoencoder: training, evaluation and sweeps"};
    app.require_subcommand(1);

    Common train_opts;
    std::string train_out = "run";
    bool train_eval = false;
    auto* train_cmd = app.add_subcommand("train", "train a system and write checkpoint, loss trace and config");
    add_common(train_cmd, train_opts);
    train_cmd->add_option("--out", train_out, "output directory");
    train_cmd->add_flag("--evaluate", train_eval, "evaluate after training and write eval.csv");

    Common eval_opts;
    std::string eval_ckpt;
    std::string eval_csv;
    std::size_t eval_window = 0;
    auto* eval_cmd = app.add_subcommand("evaluate", "BER/BLER of a checkpoint on fresh test sequences");
    add_common(eval_cmd, eval_opts);
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--eval-window", eval_window, "processing window for estimation (default: training W)");
    eval_cmd->add_option("--csv", eval_csv, "write the result row here");

    Common dist_opts;
    std::string dist_list = "10,20,30,40,50,60,70";
    std::size_t dist_runs = 3;
    std::string dist_out = "sweep-distance";
    auto* dist_cmd = app.add_subcommand("sweep-distance", "best-of-k BER over fiber lengths");
    add_common(dist_cmd, dist_opts);
    dist_cmd->add_option("--distances", dist_list, "comma-separated km");
    dist_cmd->add_option("--runs", dist_runs, "initializations per distance");
    dist_cmd->add_option("--out", dist_out, "output directory");

    Common win_opts;
    std::string win_ckpt;
    std::string win_list = "5,10,15,20,25,30,35,40";
    std::string win_csv = "sweep-window.csv";
    auto* win_cmd = app.add_subcommand("sweep-window", "BER of a checkpoint over processing windows");
    add_common(win_cmd, win_opts);
    win_cmd->add_option("--checkpoint", win_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
    win_cmd->add_option("--windows", win_list, "comma-separated W");
    win_cmd->add_option("--csv", win_csv, "output CSV");

    std::string gc_target = "vanilla";
    double gc_tol = 1e-4;
    harness::GradCheckOptions gc;
    auto* gc_cmd = app.add_subcommand("grad-check", "finite-difference check of the analytic gradients");
    gc_cmd->add_option("--system", gc_target, "vanilla | lstm-gru | channel");
    gc_cmd->add_option("--tolerance", gc_tol, "maximum relative error");
    gc_cmd->add_option("--distance", gc.distance_km, "fiber length of the check channel");
    gc_cmd->add_option("--seed", gc.seed, "seed of weights, states and noise");

    Common pc_opts;
    auto* pc_cmd = app.add_subcommand("param-count", "node count of a system");
    add_common(pc_cmd, pc_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) {
            const auto cfg = resolve(train_opts);
            auto sys = harness::fresh_system(cfg);
            const auto record = harness::train(*sys, cfg, progress(cfg, train_opts.quiet));
            harness::save_run_record(train_out, record);
            nn::save_checkpoint((fs::path(train_out) / "checkpoint.bin").string(), harness::make_checkpoint(*sys, cfg));
            std::cout << "final loss " << record.loss_trace.back().loss << " after " << record.wall_seconds
                      << " s; wrote " << train_out << "/{checkpoint.bin,loss.csv,config.ini}\n";
            if (train_eval) {
                const auto report = harness::evaluate(*sys, cfg);
                print_report(std::cout, report);
                std::ofstream os(fs::path(train_out) / "eval.csv");
                harness::write_window_csv(os, std::vector<harness::WindowPoint>{{cfg.eval_window(), report}});
            }
        } else if (*eval_cmd) {
            auto cfg = resolve(eval_opts);
            auto sys = load_system(eval_ckpt, cfg, eval_opts);
            const std::size_t w = eval_window ? eval_window : cfg.eval_window();
            const std::vector<harness::WindowPoint> rows{{w, harness::evaluate(*sys, cfg, w)}};
            print_report(std::cout, rows[0].report);
            if (!eval_csv.empty()) {
                std::ofstream os(eval_csv);
                harness::write_window_csv(os, rows);
            }
        } else if (*dist_cmd) {
            const auto cfg = resolve(dist_opts);
            const auto distances = parse_list<double>(dist_list);
            fs::create_directories(dist_out);
            const auto points = harness::sweep_distance(
                cfg, distances, dist_runs,
                [&](const harness::DistancePoint& p, harness::System& sys) {
                    auto c = cfg;
                    c.channel.length_km = p.distance_km;
                    c.train.seed = p.train_seed;
                    const std::string name = "checkpoint-" + harness::format_double(p.distance_km) + "km.bin";
                    nn::save_checkpoint((fs::path(dist_out) / name).string(), harness::make_checkpoint(sys, c));
                    std::cout << p.distance_km << " km: ";
                    print_report(std::cout, p.report);
                },
                progress(cfg, dist_opts.quiet));
            std::ofstream os(fs::path(dist_out) / "sweep-distance.csv");
            harness::write_distance_csv(os, points);
        } else if (*win_cmd) {
            const auto cfg = resolve(win_opts);
            auto sys = load_system(win_ckpt, cfg, win_opts);
            const auto points = harness::sweep_window(*sys, cfg, parse_list<std::size_t>(win_list));
            for (const auto& p : points) {
                std::cout << "W=" << p.window << ": ";
                print_report(std::cout, p.report);
            }
            std::ofstream os(win_csv);
            harness::write_window_csv(os, points);
        } else if (*gc_cmd) {
            harness::GradCheckResult r;
            if (gc_target == "channel") r = harness::grad_check_channel(gc);
            else r = harness::grad_check_transceiver(model::parse_cell_kind(gc_target), gc);
            std::cout << "max relative error " << r.max_relative_error << " at " << r.worst << " (" << r.checked
                      << " checked, " << r.skipped << " skipped at kinks)\n";
            return r.checked > 0 && r.max_relative_error < gc_tol ? 0 : 1;
        } else if (*pc_cmd) {
            const auto cfg = resolve(pc_opts);
            std::cout << harness::fresh_system(cfg)->node_count() << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
