#ifndef METAEOL_LOGREG_HPP
#define METAEOL_LOGREG_HPP

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metaeol/error.hpp"

namespace metaeol {

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

  Matrix select_rows(std::span<const std::size_t> idx) const {
    Matrix out(idx.size(), cols);
    for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(row(idx[i]).begin(), cols, out.row(i).begin());
    return out;
  }
};

struct LogRegModel {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<double> weights;  // num_classes x dim, row-major
  std::vector<double> bias;     // num_classes
  double lambda = 0.0;

  std::span<const double> class_weights(std::size_t c) const { return {weights.data() + c * dim, dim}; }
};

// Mean softmax cross-entropy plus (lambda/2)*||W||^2; the bias is not
// regularized. Parameters are laid out as [W (C*d), b (C)].
class SoftmaxObjective {
 public:
  SoftmaxObjective(const Matrix& x, std::span<const int> y, std::size_t num_classes, double lambda)
      : x_(x), y_(y), classes_(num_classes), lambda_(lambda) {}

  std::size_t num_params() const noexcept { return classes_ * x_.cols + classes_; }

  double value(std::span<const double> params) const { return evaluate(params, nullptr); }

  double value_and_gradient(std::span<const double> params, std::vector<double>& grad) const {
    grad.assign(num_params(), 0.0);
    return evaluate(params, &grad);
  }

 private:
  double evaluate(std::span<const double> params, std::vector<double>* grad) const {
    const std::size_t d = x_.cols, n = x_.rows, c = classes_;
    const double* w = params.data();
    const double* b = params.data() + c * d;
    std::vector<double> z(c);
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto xi = x_.row(i);
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < c; ++k) {
        double s = b[k];
        const double* wk = w + k * d;
        for (std::size_t j = 0; j < d; ++j) s += wk[j] * xi[j];
        z[k] = s;
        top = std::max(top, s);
      }
      double sum = 0.0;
      for (std::size_t k = 0; k < c; ++k) sum += std::exp(z[k] - top);
      const double lse = top + std::log(sum);
      loss += lse - z[static_cast<std::size_t>(y_[i])];
      if (grad != nullptr) {
        for (std::size_t k = 0; k < c; ++k) {
          double r = std::exp(z[k] - lse);
          if (static_cast<int>(k) == y_[i]) r -= 1.0;
          r *= inv_n;
          double* gk = grad->data() + k * d;
          for (std::size_t j = 0; j < d; ++j) gk[j] += r * xi[j];
          (*grad)[c * d + k] += r;
        }
      }
    }
    double reg = 0.0;
    for (std::size_t p = 0; p < c * d; ++p) {
      reg += w[p] * w[p];
      if (grad != nullptr) (*grad)[p] += lambda_ * w[p];
    }
    return loss * inv_n + 0.5 * lambda_ * reg;
  }

  const Matrix& x_;
  std::span<const int> y_;
  std::size_t classes_;
  double lambda_;
};

struct TrainOptions {
  int max_iterations = 1000;
  double gradient_tolerance = 1e-5;  // on the infinity norm
  std::size_t history = 10;          // L-BFGS memory
  std::optional<std::vector<double>> initial_params;
};

struct TrainResult {
  LogRegModel model;
  double objective = 0.0;
  double gradient_inf_norm = 0.0;
  int iterations = 0;
  std::vector<double> objective_trace;  // one value per accepted step, starting at the initial point
};

inline std::size_t validate_training_data(const Matrix& x, std::span<const int> y, std::size_t num_classes) {
  if (x.rows == 0 || x.rows != y.size()) throw Error(ErrorKind::DimensionMismatch, "features and labels disagree");
  if (num_classes < 2) throw Error(ErrorKind::MissingClass, "need at least two classes");
  for (double v : x.data) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "non-finite feature");
  }
  std::vector<int> seen(num_classes, 0);
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw Error(ErrorKind::ParseError, "label " + std::to_string(label) + " outside [0, " +
                                             std::to_string(num_classes) + ")");
    }
    seen[static_cast<std::size_t>(label)] = 1;
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (!seen[c]) throw Error(ErrorKind::MissingClass, "class " + std::to_string(c) + " absent from training data");
  }
  return num_classes;
}

// Full-batch L-BFGS with a backtracking (halving) Armijo line search, c1 = 1e-4.
// Every accepted step strictly decreases the objective.
inline TrainResult train_logreg(const Matrix& x, std::span<const int> y, std::size_t num_classes, double lambda,
                                const TrainOptions& options = {}) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw Error(ErrorKind::Usage, "lambda must be positive");
  validate_training_data(x, y, num_classes);
  SoftmaxObjective objective(x, y, num_classes, lambda);
  const std::size_t np = objective.num_params();

  std::vector<double> params(np, 0.0);
  if (options.initial_params) {
    if (options.initial_params->size() != np) throw Error(ErrorKind::DimensionMismatch, "initial parameter size");
    params = *options.initial_params;
  }
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  auto inf_norm = [](const std::vector<double>& g) {
    double m = 0;
    for (double v : g) m = std::max(m, std::abs(v));
    return m;
  };

  std::vector<double> grad;
  double f = objective.value_and_gradient(params, grad);
  TrainResult result;
  result.objective_trace.push_back(f);

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> memory;
  std::vector<double> dir(np), trial(np), trial_grad;
  int iter = 0;
  for (; iter < options.max_iterations && inf_norm(grad) >= options.gradient_tolerance; ++iter) {
    // Two-loop recursion.
    dir = grad;
    std::vector<double> alpha(memory.size());
    for (std::size_t m = memory.size(); m-- > 0;) {
      alpha[m] = memory[m].rho * dot(memory[m].s, dir);
      for (std::size_t i = 0; i < np; ++i) dir[i] -= alpha[m] * memory[m].y[i];
    }
    double gamma = 1.0;
    if (!memory.empty()) {
      gamma = dot(memory.back().s, memory.back().y) / dot(memory.back().y, memory.back().y);
    } else {
      gamma = 1.0 / std::max(1.0, std::sqrt(dot(grad, grad)));
    }
    for (auto& v : dir) v *= gamma;
    for (std::size_t m = 0; m < memory.size(); ++m) {
      const double beta = memory[m].rho * dot(memory[m].y, dir);
      for (std::size_t i = 0; i < np; ++i) dir[i] += (alpha[m] - beta) * memory[m].s[i];
    }
    for (auto& v : dir) v = -v;
    double slope = dot(grad, dir);
    if (!(slope < 0.0)) {
      memory.clear();
      const double scale = 1.0 / std::max(1.0, std::sqrt(dot(grad, grad)));
      for (std::size_t i = 0; i < np; ++i) dir[i] = -grad[i] * scale;
      slope = dot(grad, dir);
    }

    double step = 1.0;
    double f_new = 0.0;
    bool accepted = false;
    for (int halvings = 0; halvings < 60; ++halvings, step *= 0.5) {
      for (std::size_t i = 0; i < np; ++i) trial[i] = params[i] + step * dir[i];
      f_new = objective.value_and_gradient(trial, trial_grad);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope && f_new < f) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    Pair p{std::vector<double>(np), std::vector<double>(np), 0.0};
    for (std::size_t i = 0; i < np; ++i) {
      p.s[i] = trial[i] - params[i];
      p.y[i] = trial_grad[i] - grad[i];
    }
    const double sy = dot(p.s, p.y);
    if (sy > 1e-12) {
      p.rho = 1.0 / sy;
      memory.push_back(std::move(p));
      if (memory.size() > options.history) memory.pop_front();
    }
    params.swap(trial);
    grad.swap(trial_grad);
    f = f_new;
    result.objective_trace.push_back(f);
  }

  const std::size_t d = x.cols;
  result.model.num_classes = num_classes;
  result.model.dim = d;
  result.model.lambda = lambda;
  result.model.weights.assign(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(num_classes * d));
  result.model.bias.assign(params.begin() + static_cast<std::ptrdiff_t>(num_classes * d), params.end());
  result.objective = f;
  result.gradient_inf_norm = inf_norm(grad);
  result.iterations = iter;
  return result;
}

inline std::vector<double> logits(const LogRegModel& model, std::span<const double> x) {
  if (x.size() != model.dim) {
    throw Error(ErrorKind::DimensionMismatch,
                "feature dim " + std::to_string(x.size()) + " != model dim " + std::to_string(model.dim));
  }
  std::vector<double> z(model.num_classes);
  for (std::size_t k = 0; k < model.num_classes; ++k) {
    double s = model.bias[k];
    const auto w = model.class_weights(k);
    for (std::size_t j = 0; j < model.dim; ++j) s += w[j] * x[j];
    z[k] = s;
  }
  return z;
}

inline Matrix predict_proba(const LogRegModel& model, const Matrix& x) {
  Matrix out(x.rows, model.num_classes);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto z = logits(model, x.row(i));
    const double top = *std::max_element(z.begin(), z.end());
    double sum = 0;
    for (std::size_t k = 0; k < z.size(); ++k) sum += (out(i, k) = std::exp(z[k] - top));
    for (std::size_t k = 0; k < z.size(); ++k) out(i, k) /= sum;
  }
  return out;
}

// argmax of the logits (equivalently of the softmax); ties go to the lowest class id.
inline std::vector<int> predict(const LogRegModel& model, const Matrix& x) {
  if (x.cols != model.dim) {
    throw Error(ErrorKind::DimensionMismatch,
                "feature dim " + std::to_string(x.cols) + " != model dim " + std::to_string(model.dim));
  }
  std::vector<int> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto z = logits(model, x.row(i));
    std::size_t best = 0;
    for (std::size_t k = 1; k < z.size(); ++k) {
      if (z[k] > z[best]) best = k;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

inline double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw Error(ErrorKind::DimensionMismatch, "accuracy");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace metaeol

#endif  // METAEOL_LOGREG_HPP
