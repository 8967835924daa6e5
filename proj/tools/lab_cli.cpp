// lab CLI: thin front-end over the shared-library C API.
//
//   lab <command> [--config FILE] [--key value]...
//
// commands: gen-data | train-gan | train-lsnet | eval | screen
// Any --key matching a config field overrides the file (and defaults);
// unknown keys are rejected with exit code 2.
#include <cstdio>
#include <cstring>
#include <string>

#include "lab/lab.h"

namespace {

int usage(FILE* to) {
  std::fprintf(to,
               "usage: lab <command> [--config FILE] [--key value]...\n"
               "\n"
               "commands:\n"
               "  gen-data     write a phantom dataset (out=, n_per_class=, side=, seed=)\n"
               "  train-gan    train the translation system (dataset=, out=, epochs=, ...)\n"
               "  train-lsnet  train the screening network (dataset=, out=, attention=, k_rule=, ...)\n"
               "  eval         evaluate a checkpoint or a score,label CSV (checkpoint=|predictions=)\n"
               "  screen       screening indicator table (se=, sp=, prevalences=)\n"
               "\n"
               "exit codes: 0 ok, 2 config, 3 missing input, 4 numeric, 5 data\n");
  return to == stderr ? 2 : 0;
}

int fail(lab_status st) {
  std::fprintf(stderr, "lab: error (%s): %s\n", lab_status_name(st), lab_last_error());
  return static_cast<int>(st);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) return usage(stderr);
  std::string command = argv[1];
  if (command == "-h" || command == "--help" || command == "help") return usage(stdout);

  lab_config* cfg = lab_config_new(command.c_str());
  if (!cfg) {
    std::fprintf(stderr, "lab: out of memory\n");
    return 1;
  }

  int rc = 0;
  for (int i = 2; i < argc; i += 2) {
    const char* arg = argv[i];
    if (std::strncmp(arg, "--", 2) != 0) {
      std::fprintf(stderr, "lab: expected --key, got '%s'\n", arg);
      rc = 2;
      break;
    }
    if (i + 1 >= argc) {
      std::fprintf(stderr, "lab: missing value for '%s'\n", arg);
      rc = 2;
      break;
    }
    const char* key = arg + 2;
    const char* value = argv[i + 1];
    lab_status st = std::strcmp(key, "config") == 0 ? lab_config_load_file(cfg, value)
                                                    : lab_config_set(cfg, key, value);
    if (st != LAB_OK) {
      rc = fail(st);
      break;
    }
  }

  if (rc == 0) {
    lab_status st = lab_run(cfg);
    if (st != LAB_OK) rc = fail(st);
  }
  lab_config_free(cfg);
  return rc;
}
