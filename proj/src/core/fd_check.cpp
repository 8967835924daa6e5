#include "fd_check.hpp"

#include <cmath>

namespace lab {

real finite_diff_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                       real eps) {
  if (eps <= real(0)) throw ConfigError("finite_diff_check: eps must be positive");

  zero_grads(params);
  Tensor loss = f();
  if (!std::isfinite(loss.item()))
    throw NumericError("finite_diff_check: loss is non-finite");
  backward(loss);

  std::vector<std::vector<real>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad());

  real worst = 0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& val = params[pi].value();
    for (size_t i = 0; i < val.size(); ++i) {
      real keep = val[i];
      auto central = [&](real h) {
        val[i] = keep + h;
        real fp = f().item();
        val[i] = keep - h;
        real fm = f().item();
        val[i] = keep;
        if (!std::isfinite(fp) || !std::isfinite(fm))
          throw NumericError("finite_diff_check: non-finite intermediate during perturbation");
        return (fp - fm) / (2 * h);
      };
      real a = analytic[pi][i];
      auto rel_err = [&](real numeric) {
        return std::fabs(a - numeric) / std::max(real(1), std::fabs(a));
      };
      real err = rel_err(central(eps));
      // a wide step may straddle a subdifferentiable point (|x|, selu) even
      // though the evaluation point itself is differentiable; the limit is
      // what the analytic gradient claims, so shrink before judging
      if (err > real(1e-6)) err = std::min(err, rel_err(central(eps / 8)));
      if (err > real(1e-6)) err = std::min(err, rel_err(central(eps / 64)));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace lab
