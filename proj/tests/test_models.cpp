#include "eos/models.hpp"

#include <filesystem>
#include <random>

#include "doctest.h"
#include "eos/dataset.hpp"
#include "eos/errors.hpp"
#include "oracles.hpp"

using namespace eos;
using eos::testing::gradient_check;

namespace {

std::shared_ptr<const Dataset> blobs(std::size_t n, std::size_t features, std::uint64_t seed) {
  return std::make_shared<const Dataset>(make_two_gaussians(n, features, 2.0, seed));
}

}  // namespace

TEST_CASE("AnalyticPolynomial parse, value and gradient") {
  AnalyticPolynomial p = AnalyticPolynomial::parse("1.5*w0^2 + 0.5*w1^2 + w0^3 - 2*w0*w1");
  CHECK(p.dim() == 2);
  p.set_params(std::vector<double>{2.0, -1.0});
  CHECK(p.value() == doctest::Approx(1.5 * 4 + 0.5 + 8 + 4));
  const Vector g = p.gradient();
  CHECK(g[0] == doctest::Approx(3 * 2 + 3 * 4 + 2));
  CHECK(g[1] == doctest::Approx(-1 - 4));

  AnalyticPolynomial q = AnalyticPolynomial::parse("w2^4 - w0", 4);
  CHECK(q.dim() == 4);
  q.set_params(std::vector<double>{1, 0, 2, 0});
  CHECK(q.value() == doctest::Approx(15.0));

  CHECK_THROWS_AS(AnalyticPolynomial::parse("w0^^2"), UsageError);
  CHECK_THROWS_AS(AnalyticPolynomial::parse("x0^2"), UsageError);
  CHECK_THROWS_AS(AnalyticPolynomial::parse(""), UsageError);
  CHECK_THROWS_AS(p.set_params(std::vector<double>{1.0}), UsageError);
}

TEST_CASE("AnalyticPolynomial gradient check on random probes") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  AnalyticPolynomial p = AnalyticPolynomial::parse("0.3*w0^4 - w0*w1*w2 + 2*w1^3 + w2^2 - w0");
  for (int i = 0; i < 50; ++i) {
    p.set_params(std::vector<double>{u(rng), u(rng), u(rng)});
    CHECK(gradient_check(p) <= 1e-5);
  }
}

TEST_CASE("FactoredScalar embeddings") {
  const auto ml = ScalarLoss::mlsq(1, 2);
  FactoredScalar f2(ml, FactoredScalar::Embedding::kProduct, {2.0, 0.5});
  CHECK(f2.dim() == 2);
  CHECK(f2.value() == doctest::Approx(0.0));
  FactoredScalar f1(ScalarLoss::bce(2.0 / 3.0), FactoredScalar::Embedding::kScalar, {0.3});
  CHECK(f1.dim() == 1);
  CHECK(f1.gradient()[0] == doctest::Approx(sigmoid(0.3) - 2.0 / 3.0));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 50; ++i) {
    f2.set_params(std::vector<double>{u(rng), u(rng)});
    CHECK(gradient_check(f2) <= 1e-5);
  }
  CHECK_THROWS_AS(FactoredScalar(ml, FactoredScalar::Embedding::kProduct, {1.0}), UsageError);
}

TEST_CASE("TinyMLP gradient check at 100 random draws") {
  const auto data = blobs(40, 3, 7);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const OutputLoss kind = seed % 2 ? OutputLoss::kMSE : OutputLoss::kBCE;
    TinyMLP m({3, 5, 4, 1}, kind, data, seed);
    std::mt19937_64 rng(seed + 1000);
    std::normal_distribution<double> n(0, 0.8);
    Vector theta(m.dim());
    for (auto& t : theta) t = n(rng);
    m.set_params(theta);
    CHECK(gradient_check(m) <= 1e-5);
  }
}

TEST_CASE("TinyMLP structure and consistency") {
  const auto data = blobs(200, 2, 3);
  TinyMLP m({2, 8, 8, 1}, OutputLoss::kBCE, data, 4);
  CHECK(m.dim() == TinyMLP::parameter_count({2, 8, 8, 1}));
  CHECK(m.dim() == 2 * 8 + 8 + 8 * 8 + 8 + 8 + 1);
  Vector g_par(m.dim()), g_ser(m.dim());
  const double l_par = m.loss_and_gradient(g_par);
  const double l_ser = m.loss_and_gradient_serial(g_ser);
  CHECK(l_par == doctest::Approx(l_ser).epsilon(1e-13));
  CHECK(m.value() == doctest::Approx(l_ser).epsilon(1e-13));
  for (std::size_t i = 0; i < m.dim(); ++i) CHECK(g_par[i] == doctest::Approx(g_ser[i]).epsilon(1e-11));

  const TinyMLP same({2, 8, 8, 1}, OutputLoss::kBCE, data, 4);
  CHECK(std::equal(m.params().begin(), m.params().end(), same.params().begin()));
  auto copy = m.clone();
  CHECK(copy->value() == m.value());

  CHECK_THROWS_AS(TinyMLP({3, 4, 1}, OutputLoss::kBCE, data, 0), UsageError);
  CHECK_THROWS_AS(TinyMLP({2, 4, 2}, OutputLoss::kBCE, data, 0), UsageError);
}

TEST_CASE("ParamGuard restores parameters") {
  AnalyticPolynomial p = AnalyticPolynomial::parse("w0^2 + w1^2");
  p.set_params(std::vector<double>{0.1, 0.2});
  {
    ParamGuard guard(p);
    p.set_params(std::vector<double>{5.0, 5.0});
  }
  CHECK(p.params()[0] == 0.1);
  CHECK(p.params()[1] == 0.2);
  ParamGuard guard(p);
  p.set_params(std::vector<double>{5.0, 5.0});
  guard.restore();
  CHECK(p.params()[1] == 0.2);
}

TEST_CASE("two-Gaussian dataset and CSV round trip") {
  const Dataset d = make_two_gaussians(20, 3, 4.0, 9);
  CHECK(d.size() == 20);
  CHECK(d.features == 3);
  double mean0 = 0, mean1 = 0;
  for (std::size_t i = 0; i < d.size(); ++i) (d.labels[i] == 0 ? mean0 : mean1) += d.row(i)[0] / 10;
  CHECK(mean1 - mean0 > 2.0);
  const Dataset again = make_two_gaussians(20, 3, 4.0, 9);
  CHECK(again.x == d.x);

  const auto path = std::filesystem::temp_directory_path() / "eos_test_dataset.csv";
  write_dataset_csv(d, path);
  const Dataset back = read_dataset_csv(path);
  CHECK(back.features == 3);
  CHECK(back.labels == d.labels);
  CHECK(back.x == d.x);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(make_two_gaussians(5, 0, 1.0, 0), UsageError);
}
