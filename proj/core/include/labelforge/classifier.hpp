#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "labelforge/domain.hpp"
#include "labelforge/vectorizer.hpp"

namespace labelforge {

// Multinomial logistic regression over sparse tf-idf features.
struct LinearModel {
  std::vector<std::string> classes;
  std::size_t dimension = 0;
  std::vector<double> coefficients;  // row-major, classes.size() x dimension
  std::vector<double> intercepts;    // one per class
  double l2_lambda = 0.0;

  static LinearModel zeros(std::vector<std::string> classes, std::size_t dimension,
                           double l2_lambda = 0.0);

  std::size_t class_count() const { return classes.size(); }
  double& weight(std::size_t cls, std::size_t feature) { return coefficients[cls * dimension + feature]; }
  double weight(std::size_t cls, std::size_t feature) const {
    return coefficients[cls * dimension + feature];
  }
};

using ProbabilityVector = std::vector<double>;

struct LossGradient {
  double loss = 0.0;
  std::vector<double> coefficient_gradient;  // same layout as LinearModel::coefficients
  std::vector<double> intercept_gradient;
};

// Mean softmax cross-entropy plus (lambda/2)||W||^2 (intercepts unpenalized)
// and its exact gradient. `labels` are indices into model.classes.
LossGradient loss_and_gradient(const LinearModel& model, std::span<const SparseVector> x,
                               std::span<const std::size_t> labels);

struct TrainOptions {
  int max_epochs = 500;
  double gradient_tolerance = 1e-4;
  double armijo_c = 1e-4;
  int max_backtracks = 60;
};

struct TrainReport {
  int epochs = 0;
  double final_gradient_norm = 0.0;  // infinity norm
  bool converged = false;
  std::vector<double> loss_history;  // loss at every accepted iterate
};

// Full-batch gradient descent with Armijo backtracking from zero weights.
// Classes are the distinct labels sorted lexicographically. The result is a
// pure function of the inputs; `seed` is accepted for interface parity with
// stochastic trainers but the optimizer draws no random numbers.
// Throws Error(precondition_failed, "degenerate training set") on fewer than
// two distinct labels.
LinearModel train(std::span<const SparseVector> x, std::span<const std::string> labels,
                  double l2_lambda, std::uint64_t seed, const TrainOptions& options = {},
                  TrainReport* report = nullptr);

std::vector<double> decision_scores(const LinearModel& model, const SparseVector& x);

// softmax(Wx + b). Throws on dimension mismatch.
ProbabilityVector predict_proba(const LinearModel& model, const SparseVector& x);

std::size_t predict(const LinearModel& model, const SparseVector& x);

struct Metrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

// Metrics of predictions against truth over `classes`; a class whose
// precision or recall denominator is zero contributes 0.
Metrics evaluate_predictions(std::span<const std::string> truth,
                             std::span<const std::string> predicted,
                             std::span<const std::string> classes);

// Stratified k-fold with k = max(2, min(folds, minority class count)).
// A fold whose training part holds a single class predicts that class.
Metrics cross_validate(std::span<const SparseVector> x, std::span<const std::string> labels, int folds,
                       std::uint64_t seed, double l2_lambda = 1e-4);

// Fold id per example, as used by cross_validate.
std::vector<int> stratified_folds(std::span<const std::string> labels, int folds, std::uint64_t seed);

struct ModelSnapshot {
  int batch_index = 0;
  Metrics metrics;
  LinearModel model;
  TimePoint trained_at{};
  std::size_t training_size = 0;
};

}  // namespace labelforge
