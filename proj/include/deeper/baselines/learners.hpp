#pragma once

#include <array>
#include <span>
#include <vector>

#include "json.hpp"

namespace deeper::baselines {

using FeatureRows = std::vector<std::vector<double>>;

struct LogRegParams {
  std::vector<double> weights;
  double bias = 0.0;
};

struct LogRegConfig {
  double learning_rate = 0.5;
  std::size_t epochs = 500;
};

// Full-batch gradient descent on mean logistic loss from zero weights.
// Single-class data trains anyway after a warning. `loss_trace`, when given,
// receives the loss before every epoch.
LogRegParams train_logreg(const FeatureRows& x, const std::vector<int>& y,
                          const LogRegConfig& config = {},
                          std::vector<double>* loss_trace = nullptr);
double predict(const LogRegParams& params, std::span<const double> features);
double logistic_loss(const LogRegParams& params, const FeatureRows& x, const std::vector<int>& y);

struct GnbParams {
  // Index 0 non-match, 1 match.
  std::array<double, 2> priors{};
  std::array<std::vector<double>, 2> means;
  std::array<std::vector<double>, 2> variances;
};

inline constexpr double kGnbVarianceFloor = 1e-9;

// Closed-form class moments (population variance, floored). Throws
// ConfigError unless both classes are present.
GnbParams train_gnb(const FeatureRows& x, const std::vector<int>& y);
// Posterior probability of the match class.
double predict(const GnbParams& params, std::span<const double> features);

nlohmann::json to_json(const LogRegParams& p);
nlohmann::json to_json(const GnbParams& p);

}  // namespace deeper::baselines
