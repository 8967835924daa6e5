// Deterministic fan-out: each index writes only its own slot, so results do
// not depend on the worker count. LAB_THREADS caps the pool (default 1).
#pragma once

#include <cstdint>
#include <functional>

namespace lab {

int worker_count();  // from LAB_THREADS, >= 1

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace lab
