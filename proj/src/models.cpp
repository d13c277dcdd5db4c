#include "eos/models.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "eos/errors.hpp"

namespace eos {

void DifferentiableModel::set_params(std::span<const double> theta) {
  if (theta.size() != theta_.size()) {
    throw UsageError(fmt::format("parameter size {} != model dimension {}", theta.size(), theta_.size()));
  }
  std::copy(theta.begin(), theta.end(), theta_.begin());
}

ParamGuard::ParamGuard(DifferentiableModel& model)
    : model_(model), saved_(model.params().begin(), model.params().end()) {}

ParamGuard::~ParamGuard() {
  if (!restored_) model_.set_params(saved_);
}

void ParamGuard::restore() {
  model_.set_params(saved_);
  restored_ = true;
  const auto now = model_.params();
  if (std::memcmp(now.data(), saved_.data(), saved_.size() * sizeof(double)) != 0) {
    throw std::logic_error("model parameters were not restored after a probe evaluation");
  }
}

// ---------------------------------------------------------------------------
// AnalyticPolynomial

AnalyticPolynomial::AnalyticPolynomial(std::size_t dim, std::vector<Monomial> terms, Vector theta)
    : DifferentiableModel(theta.empty() ? Vector(dim, 0.0) : std::move(theta)), terms_(std::move(terms)) {
  if (theta_.size() != dim) throw UsageError("polynomial: theta size does not match dimension");
  for (auto& t : terms_) {
    if (t.exponents.size() > dim) throw UsageError("polynomial: monomial uses too many variables");
    t.exponents.resize(dim, 0);
    for (int e : t.exponents) {
      if (e < 0) throw UsageError("polynomial: negative exponent");
    }
  }
}

namespace {

class PolyParser {
 public:
  explicit PolyParser(std::string_view s) : s_(s) {}

  std::vector<std::pair<double, std::vector<std::pair<std::size_t, int>>>> parse() {
    std::vector<std::pair<double, std::vector<std::pair<std::size_t, int>>>> out;
    skip();
    if (pos_ >= s_.size()) fail("empty expression");
    bool first = true;
    while (pos_ < s_.size()) {
      double sign = 1.0;
      if (peek() == '+' || peek() == '-') {
        sign = peek() == '-' ? -1.0 : 1.0;
        ++pos_;
        skip();
      } else if (!first) {
        fail("expected '+' or '-'");
      }
      first = false;
      double coeff = sign;
      std::vector<std::pair<std::size_t, int>> vars;
      for (;;) {
        skip();
        if (peek() == 'w') {
          ++pos_;
          const auto idx = static_cast<std::size_t>(read_int());
          int e = 1;
          skip();
          if (peek() == '^') {
            ++pos_;
            skip();
            e = static_cast<int>(read_int());
          }
          vars.emplace_back(idx, e);
        } else {
          coeff *= read_number();
        }
        skip();
        if (peek() != '*') break;
        ++pos_;
      }
      out.emplace_back(coeff, std::move(vars));
      skip();
    }
    return out;
  }

 private:
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  [[noreturn]] void fail(const char* what) const {
    throw UsageError(fmt::format("polynomial '{}': {} at offset {}", s_, what, pos_));
  }
  long read_int() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_) fail("expected an integer");
    return std::stol(std::string(s_.substr(start, pos_ - start)));
  }
  double read_number() {
    const std::string rest(s_.substr(pos_));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(rest, &used);
    } catch (const std::exception&) {
      fail("expected a number or a variable w<i>");
    }
    pos_ += used;
    return v;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

AnalyticPolynomial AnalyticPolynomial::parse(std::string_view expr, std::size_t dim) {
  const auto parsed = PolyParser(expr).parse();
  std::size_t needed = 0;
  for (const auto& [c, vars] : parsed) {
    for (const auto& [idx, e] : vars) needed = std::max(needed, idx + 1);
  }
  if (dim == 0) dim = std::max<std::size_t>(needed, 1);
  if (needed > dim) throw UsageError("polynomial uses a variable beyond the given dimension");
  std::vector<Monomial> terms;
  for (const auto& [c, vars] : parsed) {
    Monomial m{c, std::vector<int>(dim, 0)};
    for (const auto& [idx, e] : vars) m.exponents[idx] += e;
    terms.push_back(std::move(m));
  }
  return AnalyticPolynomial(dim, std::move(terms));
}

namespace {
double ipow(double w, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= w;
  return r;
}
}  // namespace

double AnalyticPolynomial::value() const {
  double total = 0.0;
  for (const auto& t : terms_) {
    double p = t.coeff;
    for (std::size_t i = 0; i < theta_.size(); ++i) p *= ipow(theta_[i], t.exponents[i]);
    total += p;
  }
  return total;
}

void AnalyticPolynomial::gradient(std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& t : terms_) {
    for (std::size_t j = 0; j < theta_.size(); ++j) {
      if (t.exponents[j] == 0) continue;
      double p = t.coeff * t.exponents[j] * ipow(theta_[j], t.exponents[j] - 1);
      for (std::size_t i = 0; i < theta_.size(); ++i) {
        if (i != j) p *= ipow(theta_[i], t.exponents[i]);
      }
      out[j] += p;
    }
  }
}

std::unique_ptr<DifferentiableModel> AnalyticPolynomial::clone() const {
  return std::make_unique<AnalyticPolynomial>(*this);
}

// ---------------------------------------------------------------------------
// FactoredScalar

FactoredScalar::FactoredScalar(ScalarLoss loss, Embedding embedding, Vector theta)
    : DifferentiableModel(std::move(theta)), loss_(std::move(loss)), embedding_(embedding) {
  const std::size_t want = embedding_ == Embedding::kScalar ? 1 : 2;
  if (theta_.size() != want) {
    throw UsageError(fmt::format("factored scalar model needs {} parameters", want));
  }
}

double FactoredScalar::value() const {
  return embedding_ == Embedding::kScalar ? loss_.value(theta_[0]) : loss_.value(theta_[0] * theta_[1]);
}

void FactoredScalar::gradient(std::span<double> out) const {
  if (embedding_ == Embedding::kScalar) {
    out[0] = loss_.d1(theta_[0]);
    return;
  }
  const double g = loss_.d1(theta_[0] * theta_[1]);
  out[0] = g * theta_[1];
  out[1] = g * theta_[0];
}

std::unique_ptr<DifferentiableModel> FactoredScalar::clone() const {
  return std::make_unique<FactoredScalar>(*this);
}

// ---------------------------------------------------------------------------
// TinyMLP

namespace {

constexpr std::size_t kGradientChunks = 32;

Vector init_mlp(const std::vector<std::size_t>& widths, std::uint64_t seed) {
  if (widths.size() < 2 || widths.back() != 1) {
    throw UsageError("mlp: widths need an input layer and a single output unit");
  }
  std::mt19937_64 rng(seed);
  Vector theta;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l];
    const std::size_t out = widths[l + 1];
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    for (std::size_t k = 0; k < in * out; ++k) theta.push_back(normal(rng));
    for (std::size_t k = 0; k < out; ++k) theta.push_back(0.0);
  }
  return theta;
}

}  // namespace

std::size_t TinyMLP::parameter_count(const std::vector<std::size_t>& widths) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) n += widths[l] * widths[l + 1] + widths[l + 1];
  return n;
}

TinyMLP::TinyMLP(std::vector<std::size_t> widths, OutputLoss loss, std::shared_ptr<const Dataset> data,
                 std::uint64_t seed)
    : DifferentiableModel(init_mlp(widths, seed)), widths_(std::move(widths)), loss_(loss), data_(std::move(data)) {
  if (!data_ || data_->size() == 0) throw UsageError("mlp: empty dataset");
  if (data_->features != widths_.front()) {
    throw UsageError(fmt::format("mlp: input width {} != dataset features {}", widths_.front(), data_->features));
  }
}

double TinyMLP::predict(const double* features) const {
  std::vector<double> cur(features, features + widths_.front());
  std::vector<double> nxt;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const std::size_t in = widths_[l], out = widths_[l + 1];
    nxt.assign(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = theta_[off + in * out + o];
      for (std::size_t i = 0; i < in; ++i) acc += theta_[off + o * in + i] * cur[i];
      nxt[o] = (l + 2 < widths_.size()) ? std::tanh(acc) : acc;
    }
    off += in * out + out;
    cur.swap(nxt);
  }
  return cur[0];
}

// Sums per-sample loss and gradient over [begin, end) into grad (not
// normalized). scratch holds activations of every layer.
double TinyMLP::accumulate(std::size_t begin, std::size_t end, std::span<double> grad,
                           std::vector<double>& scratch) const {
  const std::size_t layers = widths_.size();
  std::vector<std::size_t> act_off(layers + 1, 0);
  for (std::size_t l = 0; l < layers; ++l) act_off[l + 1] = act_off[l] + widths_[l];
  std::size_t max_w = 0;
  for (auto w : widths_) max_w = std::max(max_w, w);
  scratch.assign(act_off[layers] + 2 * max_w, 0.0);
  double* act = scratch.data();
  double* delta = scratch.data() + act_off[layers];
  double* delta_prev = delta + max_w;

  std::vector<std::size_t> par_off(layers, 0);
  for (std::size_t l = 0; l + 1 < layers; ++l) par_off[l + 1] = par_off[l] + widths_[l] * widths_[l + 1] + widths_[l + 1];

  double total = 0.0;
  for (std::size_t s = begin; s < end; ++s) {
    const double* xs = data_->row(s);
    std::copy(xs, xs + widths_[0], act);
    for (std::size_t l = 0; l + 1 < layers; ++l) {
      const std::size_t in = widths_[l], out = widths_[l + 1];
      const double* W = theta_.data() + par_off[l];
      const double* b = W + in * out;
      const double* a_in = act + act_off[l];
      double* a_out = act + act_off[l + 1];
      for (std::size_t o = 0; o < out; ++o) {
        double acc = b[o];
        for (std::size_t i = 0; i < in; ++i) acc += W[o * in + i] * a_in[i];
        a_out[o] = (l + 2 < layers) ? std::tanh(acc) : acc;
      }
    }
    const double z = act[act_off[layers - 1]];
    const double label = data_->labels[s];
    double dz = 0.0;
    if (loss_ == OutputLoss::kBCE) {
      total += softplus(z) - label * z;
      dz = sigmoid(z) - label;
    } else {
      total += (z - label) * (z - label);
      dz = 2.0 * (z - label);
    }

    delta[0] = dz;
    for (std::size_t l = layers - 1; l-- > 0;) {
      const std::size_t in = widths_[l], out = widths_[l + 1];
      const double* W = theta_.data() + par_off[l];
      double* gW = grad.data() + par_off[l];
      double* gb = gW + in * out;
      const double* a_in = act + act_off[l];
      for (std::size_t o = 0; o < out; ++o) {
        gb[o] += delta[o];
        for (std::size_t i = 0; i < in; ++i) gW[o * in + i] += delta[o] * a_in[i];
      }
      if (l == 0) break;
      for (std::size_t i = 0; i < in; ++i) {
        double acc = 0.0;
        for (std::size_t o = 0; o < out; ++o) acc += W[o * in + i] * delta[o];
        delta_prev[i] = acc * (1.0 - a_in[i] * a_in[i]);
      }
      std::swap(delta, delta_prev);
    }
  }
  return total;
}

double TinyMLP::loss_and_gradient_serial(std::span<double> grad) const {
  std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<double> scratch;
  const double total = accumulate(0, data_->size(), grad, scratch);
  const double inv_n = 1.0 / static_cast<double>(data_->size());
  for (auto& g : grad) g *= inv_n;
  return total * inv_n;
}

double TinyMLP::loss_and_gradient(std::span<double> grad) const {
  const std::size_t n = data_->size();
  const std::size_t d = dim();
  std::vector<double> partial_grad(kGradientChunks * d, 0.0);
  std::vector<double> partial_loss(kGradientChunks, 0.0);

#pragma omp parallel
  {
    std::vector<double> scratch;
#pragma omp for schedule(static)
    for (std::int64_t c = 0; c < static_cast<std::int64_t>(kGradientChunks); ++c) {
      const auto k = static_cast<std::size_t>(c);
      const std::size_t begin = n * k / kGradientChunks;
      const std::size_t end = n * (k + 1) / kGradientChunks;
      partial_loss[k] = accumulate(begin, end, std::span<double>(partial_grad.data() + k * d, d), scratch);
    }
  }

  std::fill(grad.begin(), grad.end(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < kGradientChunks; ++k) {
    total += partial_loss[k];
    const double* pg = partial_grad.data() + k * d;
    for (std::size_t j = 0; j < d; ++j) grad[j] += pg[j];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (auto& g : grad) g *= inv_n;
  return total * inv_n;
}

double TinyMLP::value() const {
  double total = 0.0;
  for (std::size_t s = 0; s < data_->size(); ++s) {
    const double z = predict(data_->row(s));
    const double label = data_->labels[s];
    total += loss_ == OutputLoss::kBCE ? softplus(z) - label * z : (z - label) * (z - label);
  }
  return total / static_cast<double>(data_->size());
}

void TinyMLP::gradient(std::span<double> out) const { loss_and_gradient(out); }

std::unique_ptr<DifferentiableModel> TinyMLP::clone() const { return std::make_unique<TinyMLP>(*this); }

}  // namespace eos
