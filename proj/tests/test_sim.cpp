#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "asee/scenario_io.hpp"
#include "asee/scenarios.hpp"

using namespace asee;

namespace {

std::string log_text(const std::vector<LogRecord>& r) {
    std::ostringstream s;
    write_log(s, r);
    return s.str();
}

ScenarioConfig shortened(ScenarioConfig c, double duration) {
    c.duration = duration;
    return c;
}

std::filesystem::path scenario_file(const std::string& name) {
    return std::filesystem::path(ASEE_SOURCE_DIR) / "scenarios" / (name + ".json");
}

void expect_same_records(const std::vector<LogRecord>& a, const std::vector<LogRecord>& b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(a[i].t, b[i].t, tol);
        EXPECT_LE((a[i].q - b[i].q).cwiseAbs().maxCoeff(), tol);
        EXPECT_LE((a[i].normal - b[i].normal).norm(), tol);
        EXPECT_NEAR(a[i].force, b[i].force, tol);
        EXPECT_EQ(a[i].stage, b[i].stage);
    }
}

} // namespace

TEST(ContactForce, SpringExamples) {
    const SurfaceModel s{Plane{Vec3::Zero(), Vec3::UnitZ()}, {}};
    EXPECT_NEAR(contact_force(s, Vec3(0, 0, -0.007), -Vec3::UnitZ(), 500.0), 3.5, 1e-12);
    EXPECT_EQ(contact_force(s, Vec3(0, 0, 0.01), -Vec3::UnitZ(), 500.0), 0.0);
    EXPECT_EQ(contact_force(s, Vec3::Zero(), -Vec3::UnitZ(), 500.0), 0.0);
    EXPECT_THROW(contact_force(s, Vec3::Zero(), -Vec3::UnitZ(), 0.0), InvalidArgument);
}

TEST(Simulator, StepCountMatchesDuration) {
    ScenarioConfig c = scenarios::equilibrium();
    c.duration = 10.0;
    EXPECT_EQ(c.step_count(), 300u);
    const auto run = run_scenario(shortened(scenarios::equilibrium(), 1.0));
    ASSERT_EQ(run.records.size(), 30u);
    EXPECT_NEAR(run.records.back().t, 1.0, 1e-12);
    EXPECT_FALSE(run.final_cloud.empty());
}

TEST(Simulator, EquilibriumIsAFixedPoint) {
    const auto cfg = scenarios::equilibrium();
    const auto run = run_scenario(cfg);
    ASSERT_EQ(run.records.size(), 100u);
    const Vec3 p0 = run.records.front().position;
    for (const auto& r : run.records) {
        EXPECT_NEAR(r.force, 3.5, 1e-6);
        EXPECT_LE((r.position - p0).norm(), 1e-9);
        EXPECT_LE(r.err_deg, 1e-6);
        EXPECT_EQ(r.stage, Stage::Scanning);
    }
}

TEST(Simulator, TiltStepRecoversWithinFiveSeconds) {
    const auto run = run_scenario(scenarios::tilt_step(10.0, 0.5, 5.5, 0.0));
    double peak = 0.0;
    for (const auto& r : run.records) peak = std::max(peak, r.err_deg);
    EXPECT_GT(peak, 9.0);
    EXPECT_LT(run.records.back().err_deg, 1.0);
}

TEST(Simulator, LandingSettlesAtDesiredForce) {
    const auto run = run_scenario(scenarios::landing());
    bool scanning = false;
    const auto& chain = scenarios::landing().chain;
    for (std::size_t i = 0; i < run.records.size(); ++i) {
        const auto& r = run.records[i];
        // Once contact begins the stage stays latched.
        if (scanning) {
            EXPECT_EQ(r.stage, Stage::Scanning);
        }
        scanning = scanning || r.stage == Stage::Scanning;
        EXPECT_NO_THROW(chain.check_limits(r.q));
        if (i > 0) {
            const JointVector qd = (r.q - run.records[i - 1].q) * 30.0;
            for (std::size_t k = 0; k < chain.dof(); ++k)
                EXPECT_LE(std::abs(qd[static_cast<Eigen::Index>(k)]), chain.joints[k].qd_max * (1 + 1e-9));
        }
    }
    EXPECT_TRUE(scanning);
    EXPECT_NEAR(run.records.back().force, 3.5, 0.05);
}

TEST(Simulator, DeterministicForFixedSeed) {
    const auto c = shortened(scenarios::tilt_step(10.0, 0.2, 1.0, 0.0005), 1.0);
    EXPECT_EQ(log_text(run_scenario(c).records), log_text(run_scenario(c).records));
    auto other = c;
    other.rig.seed = 2;
    EXPECT_NE(log_text(run_scenario(c).records), log_text(run_scenario(other).records));
}

TEST(Simulator, TeleopIgnoredOutsideTeleopMode) {
    auto c = shortened(scenarios::equilibrium(), 0.5);
    Simulator a(c);
    for (int i = 0; i < 10; ++i) a.step({0.01, 0.0, 0.0});
    Simulator b(c);
    for (int i = 0; i < 10; ++i) b.step({});
    EXPECT_EQ(a.state().probe_pose.translation(), b.state().probe_pose.translation());

    c.mode = Mode::Teleop;
    Simulator t(c);
    for (int i = 0; i < 10; ++i) t.step({0.01, 0.0, 0.0});
    EXPECT_GT((t.state().probe_pose.translation() - b.state().probe_pose.translation()).norm(), 0.002);
}

TEST(Simulator, PauseRetractAndTune) {
    auto c = shortened(scenarios::equilibrium(), 1.0);
    Simulator sim(c);
    sim.step();
    sim.pause();
    const auto r = sim.step();
    EXPECT_TRUE(r.twist.isZero());
    sim.resume();
    sim.retract();
    const auto up = sim.step();
    EXPECT_NEAR(up.twist[2], -c.retract_speed, 1e-12);
    EXPECT_EQ(up.stage, Stage::Landing);
    for (int i = 0; i < 5; ++i) sim.step();
    EXPECT_LT(sim.state().force, 3.5);
    sim.land();
    EXPECT_TRUE(sim.state().force_engaged);

    EXPECT_TRUE(sim.tune("kp", 2.0));
    EXPECT_DOUBLE_EQ(sim.config().orientation.kp, 2.0);
    EXPECT_FALSE(sim.tune("kp", -1.0));
    EXPECT_FALSE(sim.tune("w", 1.5));
    EXPECT_FALSE(sim.tune("nope", 1.0));
    EXPECT_DOUBLE_EQ(sim.config().orientation.kp, 2.0);
}

TEST(Log, HeaderOnlyWhenEmpty) {
    EXPECT_EQ(log_text({}), std::string(log_header()) + "\n");
}

TEST(Log, RoundTripWithinNineDecimals) {
    const auto run = run_scenario(shortened(scenarios::tilt_step(10.0, 0.2, 1.0, 0.0005), 10.0 / 30.0));
    const std::string text = log_text(run.records);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 11);
    std::istringstream in(text);
    const auto back = parse_log(in);
    expect_same_records(run.records, back, 1e-9);
    for (std::size_t i = 0; i < back.size(); ++i)
        EXPECT_LE((back[i].twist - run.records[i].twist).cwiseAbs().maxCoeff(), 1e-9);
    // Formatting is a fixed point.
    EXPECT_EQ(log_text(back), text);

    const auto path = std::filesystem::temp_directory_path() / "asee_log_roundtrip.csv";
    export_logs(run.records, path);
    EXPECT_EQ(load_log(path).size(), run.records.size());
    std::filesystem::remove(path);
}

TEST(Log, FormatAndParseErrors) {
    EXPECT_EQ(format_log_value(-0.0), "0.000000000");
    EXPECT_EQ(format_log_value(-1e-12), "0.000000000");
    EXPECT_EQ(format_log_value(1.5), "1.500000000");
    std::istringstream empty("");
    EXPECT_THROW(parse_log(empty), IoError);
    std::istringstream header("t,x\n");
    EXPECT_THROW(parse_log(header), IoError);
    std::istringstream short_row(std::string(log_header()) + "\n1,2,3\n");
    EXPECT_THROW(parse_log(short_row), IoError);
}

TEST(ScenarioFiles, MatchBuiltInBuilders) {
    const std::vector<std::pair<std::string, ScenarioConfig>> builtin = {
        {"equilibrium", scenarios::equilibrium()},   {"flat_tracking", scenarios::flat_tracking()},
        {"tilt_step", scenarios::tilt_step()},       {"landing", scenarios::landing()},
        {"slide", scenarios::slide()},               {"dome_capture", scenarios::dome_capture()},
    };
    for (const auto& [name, ref] : builtin) {
        SCOPED_TRACE(name);
        const ScenarioConfig loaded = load_scenario(scenario_file(name));
        EXPECT_EQ(loaded.name, ref.name);
        EXPECT_NEAR(loaded.duration, ref.duration, 1e-12);
        EXPECT_EQ(loaded.mode, ref.mode);
        EXPECT_EQ(loaded.force_control, ref.force_control);
        EXPECT_EQ(loaded.tilt_schedule.size(), ref.tilt_schedule.size());
        EXPECT_EQ(loaded.teleop_script.size(), ref.teleop_script.size());
        EXPECT_DOUBLE_EQ(loaded.rig.noise_sigma, ref.rig.noise_sigma);
        EXPECT_EQ(loaded.surface.shape.index(), ref.surface.shape.index());
        // Same first steps, including the tilt/teleop schedules shifted into view.
        auto a = shortened(loaded, 4.0 / 30.0), b = shortened(ref, 4.0 / 30.0);
        for (auto* c : {&a, &b}) {
            const double shift = c->tilt_schedule.empty() ? 0.0 : c->tilt_schedule.front().t - 2.0 / 30.0;
            for (auto& p : c->tilt_schedule) p.t -= shift;
            for (auto& s : c->teleop_script) s.t0 = 0.0;
        }
        expect_same_records(run_scenario(a).records, run_scenario(b).records, 1e-9);
    }
}

TEST(ScenarioFiles, SeedOverrideFromEnvironment) {
    ::setenv("ASEE_SIM_SEED", "12345", 1);
    const auto c = load_scenario(scenario_file("equilibrium"));
    EXPECT_EQ(c.rig.seed, 12345u);
    EXPECT_EQ(c.pipeline.seed, 12345u);
    ::setenv("ASEE_SIM_SEED", "12x", 1);
    EXPECT_THROW(load_scenario(scenario_file("equilibrium")), ConfigError);
    ::unsetenv("ASEE_SIM_SEED");
    EXPECT_EQ(load_scenario(scenario_file("equilibrium")).rig.seed, 1u);
}

TEST(ScenarioFiles, ConfigErrors) {
    using nlohmann::json;
    auto build = [](const json& j) {
        const auto c = scenario_from_json(j);
        Simulator s(c);
    };
    const json plane = {{"type", "plane"}, {"point", {0, 0, 0}}, {"normal", {0, 0, 1}}};
    EXPECT_NO_THROW(build({{"surface", plane}}));
    EXPECT_THROW(build(json::object()), ConfigError);
    EXPECT_THROW(build({{"surface", {{"type", "torus"}}}}), ConfigError);
    EXPECT_THROW(build({{"surface", {{"type", "plane"}, {"point", {0, 0}}}}}), ConfigError);
    EXPECT_THROW(build({{"surface", plane}, {"duration", -1.0}}), ConfigError);
    EXPECT_THROW(build({{"surface", plane}, {"mode", "dance"}}), ConfigError);
    EXPECT_THROW(build({{"surface", plane}, {"force", {{"w", 1.0}}}}), ConfigError);
    EXPECT_THROW(build({{"surface", plane}, {"duration", "long"}}), ConfigError);
    EXPECT_THROW(load_scenario("/nonexistent/scenario.json"), IoError);
}
