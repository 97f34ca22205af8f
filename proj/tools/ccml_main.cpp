#include "ccml/ccml.h"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <string>

namespace {

int jobs_default() {
  if (const char* e = std::getenv("CCML_JOBS")) {
    char* end = nullptr;
    long j = std::strtol(e, &end, 10);
    if (end != e && *end == '\0' && j >= 1 && j <= 4096) return static_cast<int>(j);
    std::fprintf(stderr, "warning: ignoring invalid CCML_JOBS='%s'\n", e);
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sub-Finsler structures, monotone Finsler approximations and Carnot-Caratheodory distances"};
  app.set_version_flag("--version", std::string(ccml_version()));
  app.require_subcommand(1, 1);

  std::string config, out = "out";
  unsigned long long seed = 0;
  int jobs = jobs_default();

  const char* help[][2] = {
      {"info", "structure summary: rank map sample and bracket step"},
      {"hormander", "bracket-generation step at sampled and listed points"},
      {"norm", "horizontal norm rho(x, v) with minimizing controls"},
      {"approx", "build F_1..F_N, validate its properties, run convergence probes"},
      {"distance", "CC distance upper bounds and d_{F_n} tables"},
      {"speed", "metric speed of horizontal paths against rho"},
      {"validate", "property suite over one or more structures"},
  };
  for (auto& h : help) {
    auto* sub = app.add_subcommand(h[0], h[1]);
    sub->add_option("--config", config, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "seed for sampling and restarts")->capture_default_str();
    sub->add_option("--jobs", jobs, "worker threads (default: CCML_JOBS or 1)")
        ->capture_default_str()
        ->check(CLI::Range(1, 4096));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    // Help and version requests succeed; every other parse error is a usage error.
    return rc == 0 ? 0 : 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  int exit_code = 1;
  ccml_status st = ccml_run_file(command.c_str(), config.c_str(), out.c_str(), seed, jobs, &exit_code);
  if (st != CCML_OK) {
    std::fprintf(stderr, "error: %s\n", ccml_last_error());
    return st == CCML_ERR_NUMERICAL || st == CCML_ERR_INTERNAL ? 3 : 1;
  }
  return exit_code;
}
