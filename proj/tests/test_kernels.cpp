// Parallel kernels against their serial references.

#include <cstring>
#include <memory>

#include <omp.h>

#include "doctest.h"
#include "eos/bifurcation.hpp"
#include "eos/dataset.hpp"
#include "eos/models.hpp"

using namespace eos;

namespace {

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct ThreadCount {
  explicit ThreadCount(int n) : saved(omp_get_max_threads()) { omp_set_num_threads(n); }
  ~ThreadCount() { omp_set_num_threads(saved); }
  int saved;
};

}  // namespace

TEST_CASE("diagram matches diagram_serial exactly") {
  for (const auto& [loss, lo, hi] : {std::tuple{ScalarLoss::mlsq(1, 2), 0.2505, 0.30},
                                     std::tuple{ScalarLoss::bce(2.0 / 3.0), 9.05, 9.5},
                                     std::tuple{ScalarLoss::degreg(1.0), 0.0, 0.0}}) {
    double a = lo, b = hi;
    if (a == 0.0) {
      const double lpp = loss.d2(1.0);
      a = 2.001 / lpp;
      b = 2.05 / lpp;
    }
    for (int threads : {1, 3, 8}) {
      ThreadCount tc(threads);
      const BifurcationDiagram par = diagram(loss, a, b, 37);
      const BifurcationDiagram ser = diagram_serial(loss, a, b, 37);
      CHECK(bitwise_equal(par.eta, ser.eta));
      CHECK(bitwise_equal(par.z_plus, ser.z_plus));
      CHECK(bitwise_equal(par.z_minus, ser.z_minus));
      CHECK(bitwise_equal(par.residual_plus, ser.residual_plus));
      CHECK(par.monotone == ser.monotone);
    }
  }
}

TEST_CASE("TinyMLP parallel gradient agrees with the serial reference") {
  for (std::size_t n : {7UL, 200UL, 1001UL}) {
    auto data = std::make_shared<const Dataset>(make_two_gaussians(n, 3, 2.0, n));
    for (auto kind : {OutputLoss::kBCE, OutputLoss::kMSE}) {
      TinyMLP m({3, 6, 5, 1}, kind, data, 17);
      std::vector<double> gs(m.dim()), gp(m.dim());
      const double ls = m.loss_and_gradient_serial(gs);
      const double lp = m.loss_and_gradient(gp);
      CHECK(lp == doctest::Approx(ls).epsilon(1e-13));
      for (std::size_t i = 0; i < gs.size(); ++i) {
        CHECK(std::abs(gp[i] - gs[i]) <= 1e-13 * (1 + std::abs(gs[i])));
      }
    }
  }
}

TEST_CASE("TinyMLP parallel gradient does not depend on the thread count") {
  auto data = std::make_shared<const Dataset>(make_two_gaussians(999, 2, 2.0, 5));
  TinyMLP m({2, 8, 8, 1}, OutputLoss::kBCE, data, 3);
  std::vector<double> ref(m.dim());
  double ref_loss = 0;
  {
    ThreadCount tc(1);
    ref_loss = m.loss_and_gradient(ref);
  }
  for (int threads : {2, 5, 16}) {
    ThreadCount tc(threads);
    std::vector<double> g(m.dim());
    const double l = m.loss_and_gradient(g);
    CHECK(std::memcmp(&l, &ref_loss, sizeof(double)) == 0);
    CHECK(bitwise_equal(g, ref));
  }
}
