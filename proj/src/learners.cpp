#include "deeper/baselines/learners.hpp"

#include <cmath>
#include <numbers>

#include "deeper/error.hpp"
#include "deeper/log.hpp"

namespace deeper::baselines {

namespace {

void check_data(const FeatureRows& x, const std::vector<int>& y) {
  if (x.empty()) throw ConfigError("no training examples");
  if (x.size() != y.size()) throw ShapeError("feature rows and labels differ in count");
  for (const auto& row : x) {
    if (row.size() != x[0].size()) throw ShapeError("ragged feature rows");
  }
  for (int label : y) {
    if (label != 0 && label != 1) throw ConfigError("labels must be 0 or 1");
  }
}

double dot(const std::vector<double>& w, std::span<const double> f) {
  if (w.size() != f.size()) {
    throw ShapeError("expected " + std::to_string(w.size()) + " features, got " +
                     std::to_string(f.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * f[i];
  return s;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

double predict(const LogRegParams& params, std::span<const double> features) {
  return sigmoid(dot(params.weights, features) + params.bias);
}

double logistic_loss(const LogRegParams& params, const FeatureRows& x, const std::vector<int>& y) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = dot(params.weights, x[i]) + params.bias;
    total += y[i] ? softplus(-z) : softplus(z);
  }
  return total / static_cast<double>(x.size());
}

LogRegParams train_logreg(const FeatureRows& x, const std::vector<int>& y,
                          const LogRegConfig& config, std::vector<double>* loss_trace) {
  check_data(x, y);
  std::size_t positives = 0;
  for (int label : y) positives += label;
  if (positives == 0 || positives == y.size()) {
    warn("logistic regression trained on a single class");
  }
  LogRegParams p;
  p.weights.assign(x[0].size(), 0.0);
  const double n = static_cast<double>(x.size());
  std::vector<double> grad(p.weights.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (loss_trace) loss_trace->push_back(logistic_loss(p, x, y));
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_bias = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double err = predict(p, x[i]) - y[i];
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += err * x[i][k];
      grad_bias += err;
    }
    for (std::size_t k = 0; k < grad.size(); ++k) p.weights[k] -= config.learning_rate * grad[k] / n;
    p.bias -= config.learning_rate * grad_bias / n;
  }
  return p;
}

GnbParams train_gnb(const FeatureRows& x, const std::vector<int>& y) {
  check_data(x, y);
  const std::size_t d = x[0].size();
  std::array<std::size_t, 2> count{};
  for (int label : y) ++count[label];
  if (count[0] == 0 || count[1] == 0) {
    throw ConfigError("naive Bayes needs examples of both classes");
  }
  GnbParams p;
  for (int c = 0; c < 2; ++c) {
    p.priors[c] = static_cast<double>(count[c]) / static_cast<double>(y.size());
    p.means[c].assign(d, 0.0);
    p.variances[c].assign(d, 0.0);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) p.means[y[i]][k] += x[i][k];
  }
  for (int c = 0; c < 2; ++c) {
    for (double& m : p.means[c]) m /= static_cast<double>(count[c]);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = x[i][k] - p.means[y[i]][k];
      p.variances[y[i]][k] += diff * diff;
    }
  }
  for (int c = 0; c < 2; ++c) {
    for (double& v : p.variances[c]) {
      v = std::max(v / static_cast<double>(count[c]), kGnbVarianceFloor);
    }
  }
  return p;
}

double predict(const GnbParams& params, std::span<const double> features) {
  std::array<double, 2> log_joint{};
  for (int c = 0; c < 2; ++c) {
    if (features.size() != params.means[c].size()) {
      throw ShapeError("expected " + std::to_string(params.means[c].size()) + " features");
    }
    double s = std::log(params.priors[c]);
    for (std::size_t k = 0; k < features.size(); ++k) {
      const double v = params.variances[c][k];
      const double diff = features[k] - params.means[c][k];
      s -= 0.5 * (std::log(2.0 * std::numbers::pi * v) + diff * diff / v);
    }
    log_joint[c] = s;
  }
  // Posterior of class 1 via the log-odds.
  return sigmoid(log_joint[1] - log_joint[0]);
}

nlohmann::json to_json(const LogRegParams& p) {
  return {{"kind", "logreg"}, {"weights", p.weights}, {"bias", p.bias}};
}

nlohmann::json to_json(const GnbParams& p) {
  return {{"kind", "gnb"},
          {"priors", p.priors},
          {"means", {p.means[0], p.means[1]}},
          {"variances", {p.variances[0], p.variances[1]}}};
}

}  // namespace deeper::baselines
