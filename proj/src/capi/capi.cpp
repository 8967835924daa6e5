#include "lab/lab.h"

#include <string>

#include "core/commands.hpp"
#include "core/metrics.hpp"

namespace {

thread_local std::string g_last_error;

lab_status to_status(const std::exception& e) {
  g_last_error = e.what();
  return static_cast<lab_status>(lab::status_of_exception(e));
}

template <typename Fn>
lab_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return LAB_OK;
  } catch (const std::exception& e) {
    return to_status(e);
  } catch (...) {
    g_last_error = "unknown error";
    return LAB_ERR_INTERNAL;
  }
}

}  // namespace

struct lab_config {
  lab::RunConfig cfg;
};

extern "C" {

lab_config* lab_config_new(const char* command) {
  try {
    return new lab_config{lab::RunConfig(command ? command : "")};
  } catch (...) {
    return nullptr;
  }
}

void lab_config_free(lab_config* cfg) { delete cfg; }

lab_status lab_config_load_file(lab_config* cfg, const char* path) {
  if (!cfg || !path) {
    g_last_error = "null argument";
    return LAB_ERR_CONFIG;
  }
  return guarded([&] { cfg->cfg.load_file(path); });
}

lab_status lab_config_set(lab_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) {
    g_last_error = "null argument";
    return LAB_ERR_CONFIG;
  }
  return guarded([&] { cfg->cfg.set(key, value); });
}

lab_status lab_run(const lab_config* cfg) {
  if (!cfg) {
    g_last_error = "null config";
    return LAB_ERR_CONFIG;
  }
  return guarded([&] { lab::run_command(cfg->cfg); });
}

const char* lab_last_error(void) { return g_last_error.c_str(); }

const char* lab_status_name(lab_status s) {
  switch (s) {
    case LAB_OK: return "ok";
    case LAB_ERR_INTERNAL: return "internal";
    case LAB_ERR_CONFIG: return "config";
    case LAB_ERR_MISSING_INPUT: return "missing-input";
    case LAB_ERR_NUMERIC: return "numeric";
    case LAB_ERR_DATA: return "data";
  }
  return "?";
}

lab_status lab_screening_indicators(double sensitivity, double specificity, double prevalence,
                                    lab_screening_profile* out) {
  if (!out) {
    g_last_error = "null output pointer";
    return LAB_ERR_CONFIG;
  }
  return guarded([&] {
    lab::ScreeningProfile s = lab::screening_indicators(sensitivity, specificity, prevalence);
    out->sensitivity = s.sensitivity;
    out->specificity = s.specificity;
    out->prevalence = s.prevalence;
    out->ppv = s.ppv;
    out->npv = s.npv;
    out->lr_positive = s.lr_positive;
    out->screen_positive_rate = s.screen_positive_rate;
    out->nns = s.nns;
    out->lr_positive_infinite = s.lr_infinite ? 1 : 0;
    out->nns_infinite = s.nns_infinite ? 1 : 0;
  });
}

}  // extern "C"
