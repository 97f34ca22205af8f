#include "ccml/ccml.h"

#include "ccml/cc_distance.hpp"
#include "ccml/cli.hpp"
#include "ccml/gallery.hpp"

#include <iostream>
#include <limits>

struct ccml_structure {
  ccml::StructurePtr S;
};

struct ccml_sequence {
  std::shared_ptr<ccml::FinslerSequence> seq;
};

namespace {

thread_local std::string g_error;

ccml_status fail(ccml_status s, const std::string& msg) {
  g_error = msg;
  return s;
}

// Maps exceptions onto status codes and records the message.
template <class F>
ccml_status guard(F&& f) {
  try {
    g_error.clear();
    return f();
  } catch (const ccml::DimensionError& e) {
    return fail(CCML_ERR_DIMENSION, e.what());
  } catch (const ccml::ConfigError& e) {
    return fail(CCML_ERR_CONFIG, e.what());
  } catch (const ccml::NumericalError& e) {
    return fail(CCML_ERR_NUMERICAL, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(CCML_ERR_CONFIG, e.what());
  } catch (const std::exception& e) {
    return fail(CCML_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(CCML_ERR_INTERNAL, "unknown exception");
  }
}

ccml::Vec vec(const double* p, int n) { return Eigen::Map<const ccml::Vec>(p, n); }

nlohmann::json parse(const char* text, const char* what) {
  if (!text) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ccml::ConfigError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

}  // namespace

#define CCML_REQUIRE(cond, msg) \
  if (!(cond)) return fail(CCML_ERR_CONFIG, msg)

extern "C" {

const char* ccml_version(void) { return "1.0.0"; }

const char* ccml_last_error(void) { return g_error.c_str(); }

ccml_status ccml_structure_builtin(const char* name, ccml_structure** out) {
  CCML_REQUIRE(name && out, "null argument");
  return guard([&] {
    *out = new ccml_structure{ccml::builtin(name).structure};
    return CCML_OK;
  });
}

ccml_status ccml_structure_from_json(const char* json, ccml_structure** out) {
  CCML_REQUIRE(json && out, "null argument");
  return guard([&] {
    *out = new ccml_structure{ccml::cli::structure_from_json(parse(json, "structure"), "")};
    return CCML_OK;
  });
}

void ccml_structure_free(ccml_structure* s) { delete s; }

ccml_status ccml_structure_dims(const ccml_structure* s, int* n, int* d) {
  CCML_REQUIRE(s && n && d, "null argument");
  *n = s->S->n();
  *d = s->S->d();
  g_error.clear();
  return CCML_OK;
}

ccml_status ccml_horizontal_norm(const ccml_structure* s, const double* x, const double* v, double* value,
                                 int* finite) {
  CCML_REQUIRE(s && x && v && value, "null argument");
  return guard([&] {
    const int n = s->S->n();
    auto r = ccml::horizontal_norm(*s->S, vec(x, n), vec(v, n));
    *value = r.value();
    if (finite) *finite = r.is_finite() ? 1 : 0;
    return CCML_OK;
  });
}

ccml_status ccml_rank(const ccml_structure* s, const double* x, int* rank) {
  CCML_REQUIRE(s && x && rank, "null argument");
  return guard([&] {
    *rank = ccml::rank(*s->S, vec(x, s->S->n()));
    return CCML_OK;
  });
}

ccml_status ccml_hormander_step(const ccml_structure* s, const double* x, int step_max, int* step) {
  CCML_REQUIRE(s && x && step, "null argument");
  CCML_REQUIRE(step_max >= 1, "step_max must be >= 1");
  return guard([&] {
    *step = ccml::check_hormander(*s->S, {vec(x, s->S->n())}, step_max).step[0];
    return CCML_OK;
  });
}

ccml_status ccml_cc_distance(const ccml_structure* s, const double* x, const double* y, const char* options_json,
                             double* value, double* endpoint_error) {
  CCML_REQUIRE(s && x && y && value, "null argument");
  return guard([&] {
    auto j = parse(options_json, "cc options");
    if (!j.is_object()) throw ccml::ConfigError("cc options must be a JSON object");
    ccml::CCOptions o;
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      if (k == "K") o.K = it->get<int>();
      else if (k == "substeps") o.substeps = it->get<int>();
      else if (k == "restarts") o.restarts = it->get<int>();
      else if (k == "seed") o.seed = it->get<unsigned long long>();
      else if (k == "endpoint_tol") o.endpoint_tol = it->get<double>();
      else if (k == "penalty0") o.penalty0 = it->get<double>();
      else if (k == "penalty_growth") o.penalty_growth = it->get<double>();
      else if (k == "max_rounds") o.max_rounds = it->get<int>();
      else if (k == "max_iters") o.max_iters = it->get<int>();
      else if (k == "jobs") o.jobs = it->get<int>();
      else throw ccml::ConfigError("unknown cc option '" + k + "'");
    }
    if (o.K < 1 || o.substeps < 1 || o.restarts < 1) throw ccml::ConfigError("K, substeps and restarts must be >= 1");
    const int n = s->S->n();
    auto r = ccml::cc_distance_upper(*s->S, vec(x, n), vec(y, n), o);
    *value = r.value;
    if (endpoint_error) *endpoint_error = r.endpoint_error;
    return CCML_OK;
  });
}

ccml_status ccml_sequence_new(const ccml_structure* s, const char* params_json, ccml_sequence** out) {
  CCML_REQUIRE(s && out, "null argument");
  return guard([&] {
    auto p = ccml::params_from_json(parse(params_json, "sequence parameters"));
    if (p.levels < 1) throw ccml::ConfigError("levels must be >= 1");
    *out = new ccml_sequence{std::make_shared<ccml::FinslerSequence>(s->S, p)};
    return CCML_OK;
  });
}

void ccml_sequence_free(ccml_sequence* q) { delete q; }

ccml_status ccml_sequence_levels(const ccml_sequence* q, int* levels) {
  CCML_REQUIRE(q && levels, "null argument");
  *levels = q->seq->levels();
  g_error.clear();
  return CCML_OK;
}

ccml_status ccml_sequence_value(const ccml_sequence* q, int level, const double* x, const double* v, double* value) {
  CCML_REQUIRE(q && x && v && value, "null argument");
  CCML_REQUIRE(level >= 1 && level <= q->seq->levels(), "level out of range");
  return guard([&] {
    const int n = q->seq->structure().n();
    ccml::Vec xv = vec(x, n);
    if (!q->seq->box().contains(xv)) throw ccml::ConfigError("x lies outside the working box");
    *value = q->seq->value(level, xv, vec(v, n));
    return CCML_OK;
  });
}

ccml_status ccml_grid_distance(const ccml_sequence* q, int level, const double* x, const double* y, double h,
                               int stencil, double* value, double* error_bar) {
  CCML_REQUIRE(q && x && y && value, "null argument");
  CCML_REQUIRE(level >= 1 && level <= q->seq->levels(), "level out of range");
  CCML_REQUIRE(h > 0.0 && stencil >= 1, "h must be positive and stencil >= 1");
  return guard([&] {
    const int n = q->seq->structure().n();
    ccml::GridOptions g;
    g.h = h;
    g.stencil = stencil;
    g.box = q->seq->box();
    auto r = ccml::finsler_distance_grid(*q->seq, {level}, vec(x, n), vec(y, n), g);
    *value = r[0].value;
    if (error_bar) *error_bar = r[0].error_bar;
    return CCML_OK;
  });
}

ccml_status ccml_run(const char* command, const char* config_json, const char* out_dir, unsigned long long seed,
                     int jobs, int* exit_code) {
  CCML_REQUIRE(command && config_json && out_dir && exit_code, "null argument");
  return guard([&] {
    ccml::cli::RunRequest req;
    req.command = command;
    req.out_dir = out_dir;
    req.seed = seed;
    req.jobs = jobs;
    try {
      req.config = parse(config_json, "config");
    } catch (const ccml::ConfigError& e) {
      std::cerr << "error: " << e.what() << "\n";
      *exit_code = ccml::cli::kConfigError;
      g_error = e.what();
      return CCML_OK;
    }
    *exit_code = ccml::cli::run(req, std::cout, std::cerr);
    std::cout.flush();
    return CCML_OK;
  });
}

ccml_status ccml_run_file(const char* command, const char* config_path, const char* out_dir, unsigned long long seed,
                          int jobs, int* exit_code) {
  CCML_REQUIRE(command && config_path && out_dir && exit_code, "null argument");
  return guard([&] {
    ccml::cli::RunRequest req;
    req.command = command;
    req.out_dir = out_dir;
    req.seed = seed;
    req.jobs = jobs;
    try {
      req.config = ccml::cli::read_config(config_path);
    } catch (const ccml::ConfigError& e) {
      std::cerr << "error: " << e.what() << "\n";
      *exit_code = ccml::cli::kConfigError;
      g_error = e.what();
      return CCML_OK;
    }
    *exit_code = ccml::cli::run(req, std::cout, std::cerr);
    std::cout.flush();
    return CCML_OK;
  });
}

}  // extern "C"
