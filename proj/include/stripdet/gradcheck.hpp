#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "stripdet/autograd.hpp"

namespace stripdet {

inline constexpr double kGradcheckStep = 1e-4;
inline constexpr double kGradcheckFloor = 1e-12;

// Compares the tape gradient of a scalar function against central finite
// differences. Returns max_k |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
template <typename F>
double gradcheck(F&& f, const Tensor4<double>& x, double step = kGradcheckStep) {
  if (!(step > 0.0)) throw std::invalid_argument("gradcheck: step must be positive");

  auto eval = [&f](const Tensor4<double>& at) {
    const Var<double> out = f(Var<double>(at, false));
    if (out.value().size() != 1) {
      throw std::invalid_argument("gradcheck: function must return a scalar, got " + out.dims().str());
    }
    const double v = out.value()[0];
    if (!std::isfinite(v)) throw std::domain_error("gradcheck: function produced a non-finite value");
    return v;
  };

  Tape<double> tape;
  Var<double> input(x, true);
  Var<double> loss;
  {
    auto rec = tape.record();
    loss = f(input);
  }
  if (!std::isfinite(loss.value()[0])) {
    throw std::domain_error("gradcheck: function produced a non-finite value");
  }
  tape.backward(loss);
  const Tensor4<double> analytic = input.grad();

  double worst = 0.0;
  Tensor4<double> probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = probe[k];
    probe[k] = orig + step;
    const double up = eval(probe);
    probe[k] = orig - step;
    const double down = eval(probe);
    probe[k] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), kGradcheckFloor});
    worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
  }
  return worst;
}

}  // namespace stripdet
