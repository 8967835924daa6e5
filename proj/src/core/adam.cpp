#include "adam.hpp"

#include <cmath>

namespace lab {

void Adam::step(const std::vector<Tensor>& params) {
  for (const Tensor& p : params) {
    auto& g = p.grad();
    for (real x : g)
      if (!std::isfinite(x))
        throw NumericError("adam: non-finite gradient for parameter '" +
                           (p.name().empty() ? std::string("<unnamed>") : p.name()) + "'");
    State& st = state_[p.node()];
    if (st.m.empty()) {
      st.m.assign(g.size(), real(0));
      st.v.assign(g.size(), real(0));
    }
    ++st.t;
    real c1 = real(1) - std::pow(cfg_.beta1, static_cast<real>(st.t));
    real c2 = real(1) - std::pow(cfg_.beta2, static_cast<real>(st.t));
    auto& val = p.value();
    for (size_t i = 0; i < g.size(); ++i) {
      st.m[i] = cfg_.beta1 * st.m[i] + (real(1) - cfg_.beta1) * g[i];
      st.v[i] = cfg_.beta2 * st.v[i] + (real(1) - cfg_.beta2) * g[i] * g[i];
      real mh = st.m[i] / c1;
      real vh = st.v[i] / c2;
      val[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
    }
  }
}

}  // namespace lab
