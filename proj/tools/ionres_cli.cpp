// ionres: run reservoir-engineering scenarios from the command line.
//
//   ionres run <scenario.json>...      design, steady state, propagation, report + CSV
//   ionres steady <scenario.json>...   design and steady-state analysis only
//   ionres design <scenario.json>      print the laser table of the designed reservoir
//   ionres verify                      randomized invariant suite
//
// Exit codes: 0 success, 2 validation failure, 3 numerical failure, 4 I/O.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ionres/ionres.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct Options {
  std::filesystem::path out_dir = "out";
  std::size_t truncation = 0;  // 0 keeps the scenario's value
  bool quiet = false;
  std::vector<std::string> files;
  std::size_t instances = 100;
  std::uint64_t seed = 0x5eed1e55;
};

ionres::Scenario load(const Options& opt, const std::string& file) {
  auto s = ionres::load_scenario(file);
  if (opt.truncation) ionres::override_truncation(s, opt.truncation);
  return s;
}

ionres::Logger logger(const Options& opt) {
  if (opt.quiet) return {};
  return [](const std::string& m) { std::cerr << "[ionres] " << m << '\n'; };
}

void cmd_run(const Options& opt) {
  for (const auto& file : opt.files) {
    const auto s = load(opt, file);
    const auto result = ionres::run_scenario(s, logger(opt));
    const auto dir = ionres::write_artifacts(s, result, opt.out_dir);
    if (!opt.quiet) {
      const auto& ss = result.report["steady_state"];
      std::printf("%s: steady F=%.8f gap=%.6g MHz multiplicity=%zu -> %s\n", s.name.c_str(),
                  ss["fidelity"].get<double>(), ss["spectral_gap_mhz"].get<double>(),
                  ss["multiplicity"].get<std::size_t>(), dir.string().c_str());
    }
  }
}

void cmd_steady(const Options& opt) {
  for (const auto& file : opt.files) {
    const auto s = load(opt, file);
    const auto d = ionres::design_reservoir(s);
    const auto ss = ionres::analyze_steady_state(s, d);
    const ionres::json out{{"scenario", ionres::to_json(s)},
                           {"defaults_applied", s.defaults},
                           {"design", ionres::design_summary(s, d)},
                           {"steady_state", ionres::steady_summary_json(s, ss)}};
    const auto dir = opt.out_dir / s.name;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ionres::IoError("cannot create " + dir.string() + ": " + ec.message());
    ionres::write_json(out, dir / "steady.json");
    if (!opt.quiet)
      std::printf("%s: steady F=%.8f gap=%.6g MHz multiplicity=%zu\n", s.name.c_str(), ss.fidelity,
                  ss.gap * s.physical.gamma_mhz, ss.multiplicity);
  }
}

void cmd_design(const Options& opt) {
  const auto s = load(opt, opt.files.front());
  const auto d = ionres::design_reservoir(s);
  const auto sum = ionres::design_summary(s, d);
  std::printf("scenario %s  target %s  D=%zu\n", s.name.c_str(), ionres::to_string(s.target.kind), s.truncation);
  if (!d.dissipator) {
    std::printf("no engineered reservoir\n");
    return;
  }
  const auto& e = *d.dissipator;
  std::printf("Gamma_eng = %.6g kHz  dark residual %.3e  null dim %zu", e.gamma_eng * s.physical.gamma_mhz * 1e3,
              e.check.residual, e.check.null_dim);
  if (e.condition_number) std::printf("  condition %.3e", *e.condition_number);
  std::printf("\n");
  if (e.drives.empty()) {
    std::printf("abstract jump operator, no laser realization\n");
    return;
  }
  std::printf("%-10s %-8s %2s %8s %12s %10s %24s\n", "label", "kind", "k", "eta", "|Omega| MHz", "phase", "Omega/Omega1");
  for (const auto& row : sum["drives"]) {
    const auto ratio = row["ratio_to_omega1"];
    std::printf("%-10s %-8s %2zu %8.5f %12.6f %10.6f %11.6f %+11.6fi\n", row["label"].get<std::string>().c_str(),
                row["kind"].get<std::string>().c_str(), row["order"].get<std::size_t>(), row["eta"].get<double>(),
                row["abs_mhz"].get<double>(), row["phase_rad"].get<double>(), ratio[0].get<double>(),
                ratio[1].get<double>());
  }
}

int cmd_verify(const Options& opt) {
  const auto r = ionres::run_invariant_suite(opt.instances, opt.seed);
  if (!opt.quiet) {
    std::printf("instances            %zu\n", r.instances);
    std::printf("generator trace      %.3e\n", r.worst_generator_trace);
    std::printf("generator hermiticity %.3e\n", r.worst_generator_hermiticity);
    std::printf("trace drift          %.3e\n", r.worst_trace_drift);
    std::printf("lowest eigenvalue    %.3e\n", r.lowest_eigenvalue);
    std::printf("steady residual      %.3e\n", r.worst_steady_residual);
    std::printf("deterministic        %s\n", r.deterministic ? "yes" : "no");
  }
  for (const auto& f : r.failures) std::fprintf(stderr, "violation: %s\n", f.c_str());
  std::printf("%zu violations\n", r.violations);
  return r.violations == 0 ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Engineered reservoirs for trapped-ion motional states"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--out-dir", opt.out_dir, "Directory for per-scenario output folders")->capture_default_str();
  app.add_option("--truncation-override", opt.truncation, "Fock-space dimension replacing the scenario's")
      ->check(CLI::Range(std::size_t{2}, ionres::kSuperoperatorDimGuard));
  app.add_flag("--quiet", opt.quiet, "Suppress progress messages");

  auto* run = app.add_subcommand("run", "Design, analyse and propagate scenarios");
  run->add_option("scenario", opt.files, "Scenario JSON files")->required();
  auto* steady = app.add_subcommand("steady", "Steady state and spectral gap only");
  steady->add_option("scenario", opt.files, "Scenario JSON files")->required();
  auto* design = app.add_subcommand("design", "Inverse design only; prints the drive table");
  design->add_option("scenario", opt.files, "Scenario JSON file")->required()->expected(1);
  auto* verify = app.add_subcommand("verify", "Run the randomized invariant suite");
  verify->add_option("--instances", opt.instances, "Number of random instances")->capture_default_str();
  verify->add_option("--seed", opt.seed, "Random seed")->capture_default_str();
  for (auto* sub : {run, steady, design, verify}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*run) cmd_run(opt);
    else if (*steady) cmd_steady(opt);
    else if (*design) cmd_design(opt);
    else if (*verify) return cmd_verify(opt);
    return 0;
  } catch (const ionres::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    switch (e.kind()) {
      case ionres::ErrorKind::validation: return kExitValidation;
      case ionres::ErrorKind::numerical: return kExitNumerical;
      case ionres::ErrorKind::io: return kExitIo;
    }
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }
}
