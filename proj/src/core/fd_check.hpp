// Central-difference gradient check, the standing oracle for every
// differentiable routine in this codebase.
#pragma once

#include <functional>

#include "tensor.hpp"

namespace lab {

// f rebuilds the graph from the current parameter values and returns the
// scalar loss. Returns max over all parameter entries of
//   |analytic - central_difference| / max(1, |analytic|).
real finite_diff_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                       real eps);

}  // namespace lab
