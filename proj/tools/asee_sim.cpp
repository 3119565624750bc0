// asee_sim: run, serve and evaluate probe-holder scenarios.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <numeric>

#include "CLI11.hpp"

#include "asee/calibration.hpp"
#include "asee/io.hpp"
#include "asee/metrics.hpp"
#include "asee/scenario_io.hpp"
#include "asee/sim.hpp"
#include "asee/teleop.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

int cmd_run(const std::string& scenario, const std::string& out, const std::string& cloud_out) {
    const auto cfg = asee::load_scenario(scenario);
    const auto result = asee::run_scenario(cfg);
    asee::export_logs(result.records, out);
    if (!cloud_out.empty()) asee::io::write_ply(cloud_out, result.final_cloud);
    std::printf("%zu records written to %s\n", result.records.size(), out.c_str());
    return 0;
}

int cmd_serve(const std::string& scenario, unsigned short port, double duration, const std::string& out) {
    const auto cfg = asee::load_scenario(scenario);
    asee::teleop::ServeOptions opt;
    opt.port = port;
    opt.stop = &g_stop;
    opt.keep_log = !out.empty();
    if (duration > 0.0) opt.max_steps = static_cast<std::size_t>(std::llround(duration / cfg.dt()));
    opt.on_listening = [](unsigned short p) {
        std::printf("listening on ws://0.0.0.0:%u\n", p);
        std::fflush(stdout);
    };
    const auto log = asee::teleop::serve(cfg, opt);
    if (!out.empty()) asee::export_logs(log, out);
    return 0;
}

int cmd_replay(const std::string& log_path, unsigned short port) {
    const auto records = asee::load_log(log_path);
    asee::teleop::ServeOptions opt;
    opt.port = port;
    opt.stop = &g_stop;
    opt.on_listening = [&](unsigned short p) {
        std::printf("replaying %zu records on ws://0.0.0.0:%u\n", records.size(), p);
        std::fflush(stdout);
    };
    asee::teleop::replay(records, opt);
    return 0;
}

int cmd_calibrate(const std::string& pairs_path) {
    const auto pairs = asee::load_pose_pairs(pairs_path);
    const auto r = asee::solve_ax_xb(pairs);
    const auto& t = r.x.translation();
    const auto& q = r.x.quaternion();
    std::printf("pairs: %zu\n", pairs.size());
    std::printf("translation_m: %.9f %.9f %.9f\n", t.x(), t.y(), t.z());
    std::printf("quaternion_wxyz: %.9f %.9f %.9f %.9f\n", q.w(), q.x(), q.y(), q.z());
    std::printf("rotation_residual_deg: %.6f\n", asee::rad2deg(r.rotation_residual));
    std::printf("translation_residual_mm: %.6f\n", r.translation_residual * 1e3);
    return 0;
}

int cmd_metrics(const std::string& log_path, double threshold, double f_desired) {
    const auto records = asee::load_log(log_path);
    if (records.empty()) throw asee::IoError("log has no records");
    asee::TimeSeries err, force;
    std::size_t transitions = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        err.push(records[i].t, records[i].err_deg);
        if (records[i].stage == asee::Stage::Scanning) force.push(records[i].t, records[i].force);
        if (i > 0 && records[i].stage != records[i - 1].stage) ++transitions;
    }
    auto mean = [](const std::vector<double>& v) {
        return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    std::printf("records: %zu  duration_s: %.3f\n", records.size(), records.back().t);
    std::printf("angular_error_deg: mean %.4f  max %.4f  final %.4f\n", mean(err.value),
                *std::max_element(err.value.begin(), err.value.end()), err.value.back());
    const auto rt = asee::response_time(err, threshold);
    std::printf("response_times_s (peaks > %.2f deg): %zu", threshold, rt.size());
    for (double r : rt) std::printf(" %.3f", r);
    std::printf("\n");
    if (!rt.empty()) std::printf("response_time_mean_s: %.3f\n", mean(rt));
    std::printf("stage_transitions: %zu\n", transitions);
    if (!force.empty()) {
        const auto s = asee::force_error_stats(force, f_desired);
        std::printf("force_error_n (scanning samples %zu): mean %.4f  std %.4f  mean_abs %.4f  within_0.5N %.2f%%\n",
                    force.size(), s.mean, s.stddev, s.mean_abs, 100.0 * s.fraction_within_half);
    } else {
        std::printf("force_error_n: no scanning samples\n");
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual-camera probe holder simulator"};
    app.require_subcommand(1);

    std::string scenario, out, cloud_out, log_path, pairs;
    unsigned short port = 8765;
    double duration = 0.0, threshold = 5.0, f_desired = 3.5;

    auto* run = app.add_subcommand("run", "Run a scenario as fast as possible and write its log");
    run->add_option("--scenario", scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out, "Log CSV to write")->required();
    run->add_option("--cloud-out", cloud_out, "PLY file for the final processed cloud (world frame)");

    auto* serve = app.add_subcommand("serve", "Run a scenario in real time behind a WebSocket");
    serve->add_option("--scenario", scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
    serve->add_option("--port", port, "TCP port (0 picks a free one)")->required();
    serve->add_option("--duration", duration, "Stop after this many simulated seconds (default: until interrupted)");
    serve->add_option("--out", out, "Write the session log here on exit");

    auto* cal = app.add_subcommand("calibrate", "Solve AX = XB from a pose-pair file");
    cal->add_option("--pairs", pairs, "Pose pairs: tx ty tz qw qx qy qz for A, then B, per line")
        ->required()
        ->check(CLI::ExistingFile);

    auto* met = app.add_subcommand("metrics", "Summarize a log");
    met->add_option("--log", log_path, "Log CSV")->required()->check(CLI::ExistingFile);
    met->add_option("--response-threshold", threshold, "Peak threshold for response times, degrees");
    met->add_option("--f-desired", f_desired, "Target contact force, N");

    auto* rep = app.add_subcommand("replay", "Stream a recorded log over a WebSocket");
    rep->add_option("--log", log_path, "Log CSV")->required()->check(CLI::ExistingFile);
    rep->add_option("--port", port, "TCP port (0 picks a free one)")->required();

    CLI11_PARSE(app, argc, argv);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    try {
        if (*run) return cmd_run(scenario, out, cloud_out);
        if (*serve) return cmd_serve(scenario, port, duration, out);
        if (*cal) return cmd_calibrate(pairs);
        if (*met) return cmd_metrics(log_path, threshold, f_desired);
        if (*rep) return cmd_replay(log_path, port);
    } catch (const asee::ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
