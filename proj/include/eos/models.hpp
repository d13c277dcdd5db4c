#pragma once

// Differentiable models with exact analytic gradients, used by the
// multivariate product-stability probe.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eos/dataset.hpp"
#include "eos/loss_zoo.hpp"

namespace eos {

using Vector = std::vector<double>;

class DifferentiableModel {
 public:
  virtual ~DifferentiableModel() = default;

  std::size_t dim() const { return theta_.size(); }
  std::span<const double> params() const { return theta_; }
  void set_params(std::span<const double> theta);

  virtual double value() const = 0;
  virtual void gradient(std::span<double> out) const = 0;
  virtual std::unique_ptr<DifferentiableModel> clone() const = 0;

  Vector gradient() const {
    Vector g(dim());
    gradient(g);
    return g;
  }

 protected:
  explicit DifferentiableModel(Vector theta) : theta_(std::move(theta)) {}
  DifferentiableModel(const DifferentiableModel&) = default;
  DifferentiableModel& operator=(const DifferentiableModel&) = default;

  Vector theta_;
};

// Saves the parameters and puts them back. restore() verifies the copy is
// bitwise identical and throws std::logic_error otherwise; the destructor
// restores silently.
class ParamGuard {
 public:
  explicit ParamGuard(DifferentiableModel& model);
  ~ParamGuard();
  ParamGuard(const ParamGuard&) = delete;
  ParamGuard& operator=(const ParamGuard&) = delete;

  const Vector& saved() const { return saved_; }
  void restore();

 private:
  DifferentiableModel& model_;
  Vector saved_;
  bool restored_ = false;
};

// Sum of monomials coeff * prod_i w_i^e_i.
class AnalyticPolynomial final : public DifferentiableModel {
 public:
  struct Monomial {
    double coeff;
    std::vector<int> exponents;
  };

  AnalyticPolynomial(std::size_t dim, std::vector<Monomial> terms, Vector theta = {});

  // Parses e.g. "1.5*w0^2 + 0.5*w1^2 + w0^3 - 2*w0*w1"; dim is one more than
  // the largest variable index unless given explicitly.
  static AnalyticPolynomial parse(std::string_view expr, std::size_t dim = 0);

  double value() const override;
  using DifferentiableModel::gradient;
  void gradient(std::span<double> out) const override;
  std::unique_ptr<DifferentiableModel> clone() const override;

  const std::vector<Monomial>& terms() const { return terms_; }

 private:
  std::vector<Monomial> terms_;
};

// A scalar loss embedded as a model: f(w) = l(w) (d = 1) or L(x, y) = l(xy)
// (d = 2).
class FactoredScalar final : public DifferentiableModel {
 public:
  enum class Embedding { kScalar, kProduct };

  FactoredScalar(ScalarLoss loss, Embedding embedding, Vector theta);

  double value() const override;
  using DifferentiableModel::gradient;
  void gradient(std::span<double> out) const override;
  std::unique_ptr<DifferentiableModel> clone() const override;

 private:
  ScalarLoss loss_;
  Embedding embedding_;
};

enum class OutputLoss { kBCE, kMSE };

// Fully connected network, tanh hidden activations, scalar linear output and
// a mean loss over the dataset. Parameters are laid out layer by layer as
// W (out x in, row-major) followed by b.
class TinyMLP final : public DifferentiableModel {
 public:
  TinyMLP(std::vector<std::size_t> widths, OutputLoss loss, std::shared_ptr<const Dataset> data,
          std::uint64_t seed);

  double value() const override;
  using DifferentiableModel::gradient;
  void gradient(std::span<double> out) const override;
  std::unique_ptr<DifferentiableModel> clone() const override;

  // Mean loss and gradient; the parallel kernel reduces fixed sample chunks
  // in index order so the result does not depend on the thread count.
  double loss_and_gradient(std::span<double> grad) const;
  double loss_and_gradient_serial(std::span<double> grad) const;

  double predict(const double* features) const;

  const std::vector<std::size_t>& widths() const { return widths_; }
  const Dataset& data() const { return *data_; }

  static std::size_t parameter_count(const std::vector<std::size_t>& widths);

 private:
  double accumulate(std::size_t begin, std::size_t end, std::span<double> grad,
                    std::vector<double>& scratch) const;

  std::vector<std::size_t> widths_;
  OutputLoss loss_;
  std::shared_ptr<const Dataset> data_;
};

}  // namespace eos
