// Command orchestration: each command validates its config, writes its
// outputs under cfg.out and echoes the resolved configuration there.
#pragma once

#include "config.hpp"

namespace lab {

void cmd_gen_data(const RunConfig& cfg);
void cmd_train_gan(const RunConfig& cfg);
void cmd_train_lsnet(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);
void cmd_screen(const RunConfig& cfg);

void run_command(const RunConfig& cfg);

// exit-code mapping shared by the C API and the CLI:
// 0 ok, 1 internal, 2 config, 3 missing input, 4 numeric, 5 data invariant
int status_of_exception(const std::exception& e);

}  // namespace lab
