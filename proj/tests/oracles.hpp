#pragma once

// Independent numerical oracles used only by the test suites.

#include <cmath>
#include <algorithm>
#include <functional>
#include <vector>

namespace eos::testing {

// Central finite-difference derivative of f at z using values only, with one
// Richardson step (O(h^4)).
inline double fd_derivative(const std::function<double(double)>& f, double z, int order,
                            double h) {
  auto stencil = [&](double step) {
    const double fp1 = f(z + step), fm1 = f(z - step);
    const double fp2 = f(z + 2 * step), fm2 = f(z - 2 * step);
    const double f0 = f(z);
    switch (order) {
      case 0:
        return f0;
      case 1:
        return (fp1 - fm1) / (2 * step);
      case 2:
        return (fp1 - 2 * f0 + fm1) / (step * step);
      case 3:
        return (fp2 - 2 * fp1 + 2 * fm1 - fm2) / (2 * step * step * step);
      case 4:
        return (fp2 - 4 * fp1 + 6 * f0 - 4 * fm1 + fm2) / (step * step * step * step);
      default:
        return std::nan("");
    }
  };
  const double coarse = stencil(h);
  const double fine = stencil(h / 2);
  return (4 * fine - coarse) / 3;
}

inline double default_fd_step(int order) {
  switch (order) {
    case 1:
      return 1e-3;
    case 2:
      return 1e-2;
    case 3:
      return 2e-2;
    default:
      return 5e-2;
  }
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

// Largest component error of the model gradient against central differences
// of value(), relative to the largest gradient component.
template <class Model>
double gradient_check(Model& model, double step_scale = 1e-6) {
  std::vector<double> theta(model.params().begin(), model.params().end());
  double norm2 = 0.0;
  for (double t : theta) norm2 += t * t;
  const double h = step_scale * (1.0 + std::sqrt(norm2));
  const std::vector<double> g = model.gradient();
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    std::vector<double> p = theta, m = theta;
    p[i] += h;
    m[i] -= h;
    model.set_params(p);
    const double fp = model.value();
    model.set_params(m);
    const double fm = model.value();
    worst = std::max(worst, std::abs((fp - fm) / (2 * h) - g[i]));
    scale = std::max(scale, std::abs(g[i]));
  }
  model.set_params(theta);
  return worst / std::max(scale, 1e-12);
}

}  // namespace eos::testing
