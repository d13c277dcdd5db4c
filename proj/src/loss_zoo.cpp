#include "eos/loss_zoo.hpp"

#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "eos/errors.hpp"

namespace eos {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// m (m-1) ... (m-k+1) for integers; zero once k > m.
double falling_factorial(int m, int k) {
  if (k > m) return 0.0;
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= static_cast<double>(m - i);
  return r;
}

double int_pow(double z, int e) {
  if (e < 0) return 0.0;
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= z;
  return r;
}

DerivativeLadder bce_ladder(double z, double q) {
  const double s = sigmoid(z);
  const double sm = sigmoid(-z);
  const double p = s * sm;
  const double skew = sm - s;  // 1 - 2s
  DerivativeLadder out;
  out[0] = softplus(z) - q * z;
  out[1] = s - q;
  out[2] = p;
  out[3] = p * skew;
  out[4] = p * (1.0 - 6.0 * p);
  out[5] = p * skew * (1.0 - 12.0 * p);
  return out;
}

DerivativeLadder mlsq_ladder(double z, double a, int n) {
  DerivativeLadder out;
  const double zn = int_pow(z, n);
  out[0] = (zn - a) * (zn - a);
  out[1] = 2.0 * (zn - a) * n * int_pow(z, n - 1);
  for (int k = 2; k <= kMaxDerivativeOrder; ++k) {
    out[k] = falling_factorial(2 * n, k) * int_pow(z, 2 * n - k) -
             2.0 * a * falling_factorial(n, k) * int_pow(z, n - k);
  }
  return out;
}

// f = g^a with g(u) = softplus(u) + softplus(-u), u = z - 1; chain rule via
// the Faa di Bruno expansion up to order five.
DerivativeLadder degreg_ladder(double z, double a) {
  const double u = z - 1.0;
  const double s = sigmoid(u);
  const double sm = sigmoid(-u);
  const double p = s * sm;
  const double skew = sm - s;

  const double g0 = std::abs(u) + 2.0 * std::log1p(std::exp(-std::abs(u)));
  const double g1 = std::tanh(0.5 * u);
  const double g2 = 2.0 * p;
  const double g3 = 2.0 * p * skew;
  const double g4 = 2.0 * p * (1.0 - 6.0 * p);
  const double g5 = 2.0 * p * skew * (1.0 - 12.0 * p);

  std::array<double, 6> outer{};
  double coeff = 1.0;
  for (int k = 0; k <= 5; ++k) {
    outer[static_cast<std::size_t>(k)] = coeff * std::pow(g0, a - k);
    coeff *= (a - k);
  }
  const auto F = [&](int k) { return outer[static_cast<std::size_t>(k)]; };

  DerivativeLadder out;
  out[0] = F(0);
  out[1] = F(1) * g1;
  out[2] = F(2) * g1 * g1 + F(1) * g2;
  out[3] = F(3) * g1 * g1 * g1 + 3.0 * F(2) * g1 * g2 + F(1) * g3;
  out[4] = F(4) * std::pow(g1, 4) + 6.0 * F(3) * g1 * g1 * g2 +
           F(2) * (3.0 * g2 * g2 + 4.0 * g1 * g3) + F(1) * g4;
  out[5] = F(5) * std::pow(g1, 5) + 10.0 * F(4) * std::pow(g1, 3) * g2 +
           F(3) * (15.0 * g1 * g2 * g2 + 10.0 * g1 * g1 * g3) +
           F(2) * (10.0 * g2 * g3 + 5.0 * g1 * g4) + F(1) * g5;
  return out;
}

DerivativeLadder quadratic_ladder(double z, double a) {
  DerivativeLadder out;
  out[0] = (z - a) * (z - a);
  out[1] = 2.0 * (z - a);
  out[2] = 2.0;
  return out;
}

double parse_number(std::string_view text) {
  const std::string s(text);
  const auto slash = s.find('/');
  try {
    std::size_t used = 0;
    if (slash == std::string::npos) {
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    }
    const std::string num = s.substr(0, slash);
    const std::string den = s.substr(slash + 1);
    std::size_t used_den = 0;
    const double n = std::stod(num, &used);
    const double d = std::stod(den, &used_den);
    if (used != num.size() || used_den != den.size() || d == 0.0) {
      throw std::invalid_argument(s);
    }
    return n / d;
  } catch (const std::exception&) {
    throw UsageError(fmt::format("loss string: '{}' is not a number", s));
  }
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

ScalarLoss::ScalarLoss(LossFamily family, double a, int n, double q)
    : family_(family), a_(a), n_(n), q_(q), domain_{-kInf, kInf} {}

ScalarLoss ScalarLoss::bce(double q) {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw UsageError(fmt::format("bce: soft label q={} outside [0, 1]", q));
  }
  ScalarLoss loss(LossFamily::kBCE, 0.0, 1, q);
  if (q > 0.0 && q < 1.0) loss.z_star_ = std::log(q / (1.0 - q));
  return loss;
}

ScalarLoss ScalarLoss::mlsq(double a, int n) {
  if (!(a > 0.0) || n < 1) {
    throw UsageError(fmt::format("mlsq: need a > 0 and n >= 1 (got a={}, n={})", a, n));
  }
  ScalarLoss loss(LossFamily::kMLSq, a, n, 0.0);
  loss.z_star_ = std::pow(a, 1.0 / n);
  return loss;
}

ScalarLoss ScalarLoss::degreg(double a) {
  if (!(a > 0.0 && a <= 1.0)) {
    throw UsageError(fmt::format("degreg: degree a={} outside (0, 1]", a));
  }
  ScalarLoss loss(LossFamily::kDegReg, a, 1, 0.0);
  loss.z_star_ = 1.0;
  return loss;
}

ScalarLoss ScalarLoss::quadratic(double a) {
  if (!std::isfinite(a)) throw UsageError("quad: target must be finite");
  ScalarLoss loss(LossFamily::kQuadratic, a, 1, 0.0);
  loss.z_star_ = a;
  return loss;
}

ScalarLoss ScalarLoss::parse(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  std::map<std::string, double, std::less<>> params;
  if (colon != std::string_view::npos) {
    std::string_view rest = text.substr(colon + 1);
    while (!rest.empty()) {
      const auto comma = rest.find_first_of(",;");
      const std::string_view item = rest.substr(0, comma);
      const auto eq = item.find('=');
      if (eq == std::string_view::npos || eq == 0) {
        throw UsageError(fmt::format("loss string: malformed parameter '{}'", item));
      }
      params[std::string(item.substr(0, eq))] = parse_number(item.substr(eq + 1));
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
  }

  auto take = [&](const char* key, std::optional<double> fallback) {
    auto it = params.find(key);
    if (it == params.end()) {
      if (!fallback) {
        throw UsageError(fmt::format("loss string '{}': missing parameter '{}'", text, key));
      }
      return *fallback;
    }
    const double v = it->second;
    params.erase(it);
    return v;
  };

  std::optional<ScalarLoss> loss;
  if (name == "bce") {
    loss = bce(take("q", std::nullopt));
  } else if (name == "mlsq") {
    const double a = take("a", 1.0);
    const double n = take("n", 2.0);
    if (n != std::floor(n)) throw UsageError("mlsq: exponent n must be an integer");
    loss = mlsq(a, static_cast<int>(n));
  } else if (name == "degreg") {
    loss = degreg(take("a", 1.0));
  } else if (name == "quad") {
    loss = quadratic(take("a", 0.0));
  } else {
    throw UsageError(fmt::format("unknown loss family '{}' (expected bce|mlsq|degreg|quad)", name));
  }
  if (!params.empty()) {
    throw UsageError(
        fmt::format("loss string '{}': unknown parameter '{}'", text, params.begin()->first));
  }
  return *loss;
}

std::string ScalarLoss::to_string() const {
  switch (family_) {
    case LossFamily::kBCE:
      return fmt::format("bce:q={:.17g}", q_);
    case LossFamily::kMLSq:
      return fmt::format("mlsq:a={:.17g},n={}", a_, n_);
    case LossFamily::kDegReg:
      return fmt::format("degreg:a={:.17g}", a_);
    case LossFamily::kQuadratic:
      return fmt::format("quad:a={:.17g}", a_);
  }
  return {};
}

void ScalarLoss::check_domain(double z) const {
  if (!std::isfinite(z) || !domain_.contains(z)) {
    throw DomainError(fmt::format("{}: z={} outside the valid domain", to_string(), z));
  }
}

DerivativeLadder ScalarLoss::ladder(double z) const {
  check_domain(z);
  switch (family_) {
    case LossFamily::kBCE:
      return bce_ladder(z, q_);
    case LossFamily::kMLSq:
      return mlsq_ladder(z, a_, n_);
    case LossFamily::kDegReg:
      return degreg_ladder(z, a_);
    case LossFamily::kQuadratic:
      return quadratic_ladder(z, a_);
  }
  return {};
}

double ScalarLoss::derivative(double z, int order) const {
  if (order < 0 || order > kMaxDerivativeOrder) {
    throw UsageError(fmt::format("derivative order {} unsupported (0..5)", order));
  }
  return ladder(z)[order];
}

double ScalarLoss::d1(double z) const {
  switch (family_) {
    case LossFamily::kBCE:
      if (!std::isfinite(z)) check_domain(z);
      return sigmoid(z) - q_;
    case LossFamily::kMLSq: {
      if (!std::isfinite(z)) check_domain(z);
      const double zn1 = int_pow(z, n_ - 1);
      return 2.0 * (zn1 * z - a_) * n_ * zn1;
    }
    case LossFamily::kQuadratic:
      if (!std::isfinite(z)) check_domain(z);
      return 2.0 * (z - a_);
    case LossFamily::kDegReg:
      break;
  }
  return derivative(z, 1);
}

StabilityValue product_stability(const ScalarLoss& loss, double z) {
  const DerivativeLadder l = loss.ladder(z);
  return make_stability(alpha_from_derivatives(l[2], l[3], l[4]));
}

double minimum(const ScalarLoss& loss) {
  const auto z = loss.z_star();
  if (!z) {
    throw NumericError(NumericError::Kind::kUndefined,
                       fmt::format("{} has no finite minimum", loss.to_string()));
  }
  return *z;
}

ValidationReport validate_derivatives(const ScalarLoss& loss, const std::vector<double>& z_grid,
                                      double step) {
  ValidationReport report;
  for (const double z : z_grid) {
    const DerivativeLadder here = loss.ladder(z);
    const DerivativeLadder up = loss.ladder(z + step);
    const DerivativeLadder down = loss.ladder(z - step);
    for (int k = 1; k <= kMaxDerivativeOrder; ++k) {
      const double fd = (up[k - 1] - down[k - 1]) / (2.0 * step);
      const double err = std::abs(here[k] - fd) / (1.0 + std::abs(here[k]));
      report.checks.push_back({k, z, here[k], fd, err});
      report.max_rel_error = std::max(report.max_rel_error, err);
    }
  }
  return report;
}

}  // namespace eos
