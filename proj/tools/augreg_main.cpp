// augreg command line: fit, simulate, generate, report.
//
// Exit codes: 0 success, 1 internal error, 2 usage or input validation error,
// 3 model fitting error. Errors and warnings go to stderr as one JSON object
// per line; results go to --out (or stdout).

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "augreg/csv.hpp"
#include "augreg/pipeline.hpp"
#include "augreg/report.hpp"
#include "augreg/simulate.hpp"
#include "augreg/spec_json.hpp"
#include "augreg/version.hpp"

namespace {

using namespace augreg;

constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;
constexpr int kExitFit = 3;

// Simulate warns above this many model refits (replicates x resamples x 3 fits).
constexpr double kRefitBudget = 5e6;

void log_line(const char* level, const std::string& kind, const std::string& message) {
  Json j{{"level", level}, {"kind", kind}, {"message", message}};
  std::cerr << j.dump() << std::endl;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::Io, "SHA-256 digest failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

/// Writes to `path`, or stdout for "" / "-".
void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content << std::flush;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  out << content;
  if (!out) throw Error(ErrorKind::Io, "write to '" + path + "' failed");
}

struct PlanFlags {
  std::optional<std::string> method;
  std::optional<int> groups;
  std::optional<int> boot_b;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--method", method, "jackknife or bootstrap")->check(CLI::IsMember({"jackknife", "bootstrap"}));
    cmd->add_option("--groups", groups, "jackknife groups (0: delete-1 up to 2000 units, else 500)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--boot-B", boot_b, "bootstrap resamples (>= 50)")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "random seed");
  }

  void apply(ResamplePlan& plan) const {
    if (method) plan.method = *method == "bootstrap" ? ResampleMethod::Bootstrap : ResampleMethod::Jackknife;
    if (groups) plan.groups = *groups;
    if (boot_b) plan.replicates = *boot_b;
    if (seed) plan.seed = *seed;
  }
};

struct FitArgs {
  std::string data, spec, out, format = "json";
  std::optional<double> alpha;
  int threads = 0;
  bool strict_references = false;
  PlanFlags plan;
};

int run_fit(const FitArgs& args) {
  const std::string spec_bytes = read_file(args.spec);
  Json spec_doc;
  try {
    spec_doc = Json::parse(spec_bytes);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::InvalidArgument, "spec '" + args.spec + "' is not valid JSON: " + e.what());
  }
  AnalysisSpec spec = spec_from_json(spec_doc);
  args.plan.apply(spec.plan);
  if (args.alpha) spec.alpha = *args.alpha;
  spec.plan.threads = resolve_threads(args.threads);

  const std::string data_bytes = read_file(args.data);
  LoadOptions load;
  load.strict_references = args.strict_references;
  const auto loaded = load_study(parse_csv(data_bytes), spec, load);
  for (const auto& w : loaded.warnings) log_line("warning", "ReferencePresentOutsideValidation", w);

  const auto result = run_analysis(loaded.data, spec, true);
  const auto& diag = result.estimate.diagnostics;
  if (diag.pseudo_inverse) log_line("warning", "PseudoInverse", "K is singular to tolerance; pseudo-inverse used");
  if (diag.psd_repair) log_line("warning", "PsdRepair", "augmented covariance had negative eigenvalues; clipped");
  if (diag.no_augmentation) log_line("warning", "NoAugmentation", "K is identically zero; beta_val returned");

  if (args.format == "csv") {
    std::ostringstream out;
    write_fit_report_csv(out, result);
    emit(args.out, out.str());
  } else {
    ReportInputs inputs{sha256_hex(data_bytes), sha256_hex(spec_bytes), loaded.warnings};
    emit(args.out, fit_report_json(result, loaded.data, spec, inputs).dump(2) + "\n");
  }
  return 0;
}

struct SimulateArgs {
  std::string scenario, out, format = "json", dump;
  std::size_t reps = 200;
  Index n_full = 4000, n_val = 400;
  double alpha = 0.05;
  int threads = 0;
  PlanFlags plan;
};

int run_simulate(const SimulateArgs& args) {
  ScenarioSpec scenario = ScenarioSpec::named(args.scenario);
  scenario.n_full = args.n_full;
  scenario.n_val = args.n_val;
  if (args.n_val < 1 || args.n_val >= args.n_full) {
    throw Error(ErrorKind::InvalidArgument, "--n-val must lie in [1, n-full)");
  }
  ResamplePlan plan;
  args.plan.apply(plan);
  scenario.seed = plan.seed;
  plan.threads = resolve_threads(args.threads);

  const double resamples = plan.method == ResampleMethod::Bootstrap
                               ? plan.replicates
                               : (plan.groups > 0 ? std::min<double>(plan.groups, static_cast<double>(args.n_full))
                                                  : (args.n_full <= ResamplePlan::kDeleteOneLimit
                                                         ? static_cast<double>(args.n_full)
                                                         : ResamplePlan::kDefaultGroups));
  const double refits = static_cast<double>(args.reps) * (resamples + 1.0) * 3.0;
  if (refits > kRefitBudget) {
    std::ostringstream msg;
    msg << "about " << refits << " model refits requested (budget " << kRefitBudget << "); this may take a while";
    log_line("warning", "RefitBudget", msg.str());
  }

  const auto summary = run_replications(scenario, args.reps, plan, args.alpha);
  if (summary.failures > 0) {
    log_line("warning", "ReplicateFailures",
             std::to_string(summary.failures) + " of " + std::to_string(summary.replicates) + " replicates failed");
  }
  if (args.format == "csv") {
    std::ostringstream out;
    write_summary_csv(out, summary);
    emit(args.out, out.str());
  } else {
    emit(args.out, summary_json(summary, scenario, plan).dump(2) + "\n");
  }
  if (!args.dump.empty()) {
    std::ostringstream out;
    write_replicate_dump(out, summary);
    emit(args.dump, out.str());
  }
  return 0;
}

struct GenerateArgs {
  std::string scenario, out, spec_out;
  Index n_full = 4000, n_val = 400;
  std::uint64_t seed = 1;
  std::size_t replicate = 0;
};

int run_generate(const GenerateArgs& args) {
  ScenarioSpec scenario = ScenarioSpec::named(args.scenario);
  scenario.n_full = args.n_full;
  scenario.n_val = args.n_val;
  scenario.seed = args.seed;
  const auto study = generate_replicate(scenario, args.replicate);
  std::ostringstream csv;
  write_study_csv(csv, study.data, study.spec);
  emit(args.out, csv.str());
  if (!args.spec_out.empty()) emit(args.spec_out, spec_to_json(study.spec).dump(2) + "\n");
  return 0;
}

int run_report(const std::string& in, const std::string& out) {
  Json doc;
  try {
    doc = Json::parse(read_file(in));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::InvalidArgument, "'" + in + "' is not valid JSON: " + e.what());
  }
  std::ostringstream text;
  render_text(text, doc);
  emit(out, text.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Augmented regression estimates from a validation subsample and error-prone surrogates"};
  app.set_version_flag("--version", std::string(augreg::kVersion));
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "estimate beta_aug from a CSV file and a JSON spec");
  fit_cmd->add_option("--data", fit.data, "CSV data file")->required();
  fit_cmd->add_option("--spec", fit.spec, "JSON analysis spec")->required();
  fit.plan.add_to(fit_cmd);
  fit_cmd->add_option("--alpha", fit.alpha, "two-sided interval level")->check(CLI::Range(0.0, 1.0));
  fit_cmd->add_option("--out", fit.out, "output file (default stdout)");
  fit_cmd->add_option("--format", fit.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  fit_cmd->add_option("--threads", fit.threads, "worker threads (0: AUGREG_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);
  fit_cmd->add_flag("--strict-references", fit.strict_references,
                    "reject reference values outside the validation subsample instead of ignoring them");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo study of a built-in scenario");
  sim_cmd->add_option("--scenario", sim.scenario, "example1 .. example4")
      ->required()
      ->check(CLI::IsMember({"example1", "example2", "example3", "example4"}));
  sim_cmd->add_option("--reps", sim.reps, "replicates")->check(CLI::Range(2, 1000000));
  sim_cmd->add_option("--n-full", sim.n_full, "full sample size")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--n-val", sim.n_val, "validation subsample size")->check(CLI::PositiveNumber);
  sim.plan.add_to(sim_cmd);
  sim_cmd->add_option("--alpha", sim.alpha, "two-sided interval level")->check(CLI::Range(0.0, 1.0));
  sim_cmd->add_option("--threads", sim.threads, "worker threads (0: AUGREG_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);
  sim_cmd->add_option("--out", sim.out, "output file (default stdout)");
  sim_cmd->add_option("--format", sim.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  sim_cmd->add_option("--dump-replicates", sim.dump, "also write per-replicate estimates to this CSV file");

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "write one scenario dataset as CSV (and its spec)");
  gen_cmd->add_option("--scenario", gen.scenario, "example1 .. example4")
      ->required()
      ->check(CLI::IsMember({"example1", "example2", "example3", "example4"}));
  gen_cmd->add_option("--n-full", gen.n_full, "full sample size")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--n-val", gen.n_val, "validation subsample size")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed, "random seed");
  gen_cmd->add_option("--replicate", gen.replicate, "replicate index (same stream as simulate)");
  gen_cmd->add_option("--out", gen.out, "CSV output (default stdout)");
  gen_cmd->add_option("--spec-out", gen.spec_out, "write the matching JSON spec here");

  std::string report_in, report_out;
  auto* report_cmd = app.add_subcommand("report", "render a fit report or simulation summary as text");
  report_cmd->add_option("input", report_in, "JSON file written by fit or simulate")->required();
  report_cmd->add_option("--out", report_out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    log_line("error", "Usage", e.what());
    std::cerr << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitInput;
  }

  try {
    if (fit_cmd->parsed()) return run_fit(fit);
    if (sim_cmd->parsed()) return run_simulate(sim);
    if (gen_cmd->parsed()) return run_generate(gen);
    if (report_cmd->parsed()) return run_report(report_in, report_out);
  } catch (const augreg::Error& e) {
    std::string message = e.what();
    const auto colon = message.find(": ");
    if (colon != std::string::npos) message = message.substr(colon + 2);
    log_line("error", std::string(augreg::to_string(e.kind())), message);
    return augreg::is_fit_error(e.kind()) ? kExitFit : kExitInput;
  } catch (const std::exception& e) {
    log_line("error", "Internal", e.what());
    return kExitInternal;
  }
  return kExitInternal;
}
