// kbesc: batch runner for kernel-based extremum-seeking experiments.
//
//   kbesc run <config> [--out DIR] [--validate-only] [--no-plots]
//   kbesc report <trace.csv>... [--reference ARM] [--theta-star a,b,...]

#include <kbesc/experiment.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;

namespace {

int cmd_run(const std::string& config_path, const std::string& out, bool validate_only, bool no_plots) {
  const auto cfg = kbesc::load_config(config_path);
  kbesc::validate(cfg);
  if (validate_only) {
    std::cout << "config '" << cfg.name << "' is valid\n";
    return 0;
  }
  const fs::path dir = out.empty() ? fs::path("out") / cfg.name : fs::path(out);
  const auto res = kbesc::run_experiment(cfg, dir, cfg.emit_plots && !no_plots);
  for (const auto& s : res.report.arms) {
    std::cout << s.name << ": " << s.updates << " updates, " << s.measurements << " measurements, "
              << s.kernel_steps << " kernel steps";
    if (s.final_f) std::cout << ", final f = " << kbesc::csv::format_double(*s.final_f);
    std::cout << '\n';
  }
  for (const auto& [arm, v] : res.report.measurement_reduction) {
    std::cout << arm << " vs " << res.report.reference << ": measurement reduction " << v << "%, update reduction "
              << res.report.update_reduction.at(arm) << "%\n";
  }
  std::cout << "outputs written to " << dir.string() << '\n';
  int rc = 0;
  for (const auto& a : res.arms) {
    if (a.error) {
      std::cerr << "kbesc: arm " << a.name << " failed: " << *a.error << " (partial outputs kept)\n";
      rc = 2;
    }
  }
  return rc;
}

/// trace_<arm>.csv names the arm; any other file name is used as is.
std::string arm_name(const fs::path& p) {
  std::string stem = p.stem().string();
  if (stem.rfind("trace_", 0) == 0) stem = stem.substr(6);
  return stem;
}

int cmd_report(const std::vector<std::string>& files, const std::string& reference, const std::string& theta_star) {
  std::vector<std::pair<std::string, kbesc::RunTrace>> traces;
  for (const auto& f : files) traces.emplace_back(arm_name(f), kbesc::load_trace(f));
  std::optional<kbesc::Vector> star;
  if (!theta_star.empty()) star = kbesc::config_detail::to_vector("theta-star", theta_star);
  const auto rep = kbesc::make_report("report", traces, star, reference);
  std::cout << kbesc::to_json(rep).dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel-based extremum-seeking control experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  std::string config, out;
  bool validate_only = false, no_plots = false;
  run->add_option("config", config, "Experiment config file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory (default out/<name>)");
  run->add_flag("--validate-only", validate_only, "Check the config and exit");
  run->add_flag("--no-plots", no_plots, "Skip SVG figures");

  auto* report = app.add_subcommand("report", "Summarize trace CSVs as JSON");
  std::vector<std::string> files;
  std::string reference, theta_star;
  report->add_option("traces", files, "Trace CSV files")->required()->check(CLI::ExistingFile);
  report->add_option("--reference", reference, "Arm the others are compared against (default standard)");
  report->add_option("--theta-star", theta_star, "Known optimizer, comma separated");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, out, validate_only, no_plots);
    return cmd_report(files, reference, theta_star);
  } catch (const kbesc::ConfigError& e) {
    std::cerr << "kbesc: config error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "kbesc: " << e.what() << '\n';
    return 1;
  }
}
