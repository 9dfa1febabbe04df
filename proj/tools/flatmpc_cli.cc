// Scenario-driven runner: synthesize, run, verify.
//
// Exit codes: 0 all checks pass, 1 a guarantee check failed, 2 invalid
// scenario or arguments, 3 the scenario admits no initial plan.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flatmpc/errors.h"
#include "flatmpc/report.h"
#include "flatmpc/scenario.h"
#include "flatmpc/simulator.h"

namespace fs = std::filesystem;

namespace flatmpc {
namespace {

constexpr int kPass = 0;
constexpr int kViolation = 1;
constexpr int kBadScenario = 2;
constexpr int kInfeasible = 3;

struct Args {
  std::string scenario;
  std::string out;
  int seeds = 1;
  std::string profile;
  std::vector<std::string> overrides;
};

Scenario Load(const Args& args) {
  ScenarioOverrides o;
  if (!args.profile.empty()) o.profile = args.profile;
  o.assignments = args.overrides;
  return LoadScenario(args.scenario, o);
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ScenarioError("cannot write '" + path.string() + "'");
  out << text;
}

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int Synthesize(const Args& args) {
  const Scenario scenario = Load(args);
  const Controller controller(scenario, false);
  const std::string json = SynthesisJson(controller);
  std::cout << json;
  if (!args.out.empty()) {
    fs::create_directories(args.out);
    WriteFile(fs::path(args.out) / "synthesis.json", json);
  }
  return kPass;
}

int Run(const Args& args) {
  if (args.out.empty()) throw ScenarioError("run: --out is required");
  if (args.seeds < 1) throw ScenarioError("run: --seeds must be >= 1");
  const Scenario scenario = Load(args);
  const Controller controller(scenario);
  const Simulator sim(controller.planner(), controller.law(),
                      scenario.sim_options());
  fs::create_directories(args.out);
  const fs::path out(args.out);

  if (args.seeds == 1) {
    const SimLog log =
        sim.Run(scenario.start, scenario.disturbance_model(scenario.seed));
    {
      std::ofstream csv(out / "trajectory.csv");
      WriteTrajectoryCsv(log, csv);
      std::ofstream jsonl(out / "replans.jsonl");
      WriteReplansJsonl(log, jsonl);
    }
    const Report report = ComputeReport(log);
    const std::string json = ReportJson(report);
    WriteFile(out / "report.json", json);
    std::cout << json;
    return report.passed() ? kPass : kViolation;
  }

  std::vector<SeedOutcome> outcomes;
  for (int i = 0; i < args.seeds; ++i) {
    SeedOutcome o;
    o.seed = scenario.seed + static_cast<std::uint64_t>(i);
    try {
      o.report = ComputeReport(sim.Run(scenario.start, scenario.disturbance_model(o.seed)));
    } catch (const SingularState& e) {
      o.error = e.what();
    }
    std::cerr << "seed " << o.seed << (o.passed() ? " pass" : " FAIL") << "\n";
    outcomes.push_back(std::move(o));
  }
  const std::string json = AggregateJson(outcomes);
  WriteFile(out / "report.json", json);
  std::cout << json;
  for (const SeedOutcome& o : outcomes) {
    if (!o.passed()) return kViolation;
  }
  return kPass;
}

int Verify(const Args& args) {
  if (args.out.empty()) throw ScenarioError("verify: --out is required");
  const fs::path out(args.out);
  std::ifstream csv(out / "trajectory.csv");
  if (!csv) throw ScenarioError("verify: no trajectory.csv in '" + args.out + "'");
  const Report report = ComputeReport(ReadTrajectoryCsv(csv));
  const std::string recomputed = ReportJson(report);
  const std::string stored = ReadFile(out / "report.json");
  if (recomputed != stored) {
    std::cerr << "verify: report.json does not match the trajectory\n";
    std::cout << recomputed;
    return kViolation;
  }
  std::cout << "verify: report reproduced from trajectory.csv ("
            << (report.passed() ? "passed" : "failed") << ")\n";
  return report.passed() ? kPass : kViolation;
}

int Main(int argc, char** argv) {
  CLI::App app{"Safe multirate planning and tracking for the unicycle"};
  app.require_subcommand(1);
  Args args;
  auto add_common = [&](CLI::App* cmd, bool with_scenario) {
    if (with_scenario) {
      cmd->add_option("--scenario", args.scenario, "Scenario JSON file")->required();
      cmd->add_option("--profile", args.profile, "rover or quadruped")
          ->check(CLI::IsMember({"rover", "quadruped"}));
      cmd->add_option("--override", args.overrides, "key=value, dotted keys");
    }
    cmd->add_option("--out", args.out, "Output directory");
  };
  CLI::App* synth = app.add_subcommand("synthesize", "Print the controller summary");
  add_common(synth, true);
  CLI::App* run = app.add_subcommand("run", "Simulate and write trajectory and report");
  add_common(run, true);
  run->add_option("--seeds", args.seeds, "Number of Monte Carlo seeds");
  CLI::App* verify = app.add_subcommand("verify", "Recompute the report from the CSV");
  add_common(verify, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadScenario;
  }

  try {
    if (*synth) return Synthesize(args);
    if (*run) return Run(args);
    return Verify(args);
  } catch (const InitialInfeasible& e) {
    std::cerr << "InitialInfeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const EmptyTightenedRegion& e) {
    std::cerr << "EmptyTightenedRegion: " << e.what() << "\n";
    return kInfeasible;
  } catch (const SingularState& e) {
    std::cerr << "SingularState: " << e.what() << "\n";
    return kViolation;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadScenario;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadScenario;
  }
}

}  // namespace
}  // namespace flatmpc

int main(int argc, char** argv) { return flatmpc::Main(argc, argv); }
