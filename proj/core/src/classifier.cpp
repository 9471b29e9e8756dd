#include "labelforge/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "labelforge/error.hpp"
#include "labelforge/rng.hpp"

namespace labelforge {
namespace {

void check_dimension(const LinearModel& model, const SparseVector& x) {
  if (x.dimension != model.dimension)
    throw Error(ErrorCode::invalid_argument,
                "feature dimension " + std::to_string(x.dimension) + " does not match model dimension " +
                    std::to_string(model.dimension));
}

// Softmax in place; returns log-sum-exp of the input.
double softmax_inplace(std::vector<double>& z) {
  double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (auto& v : z) v /= sum;
  return zmax + std::log(sum);
}

double evaluate(const LinearModel& model, std::span<const SparseVector> x,
                std::span<const std::size_t> labels, LossGradient* grad) {
  const std::size_t k = model.class_count();
  const double inv_n = 1.0 / static_cast<double>(x.size());
  if (grad) {
    grad->coefficient_gradient.assign(model.coefficients.size(), 0.0);
    grad->intercept_gradient.assign(k, 0.0);
  }

  double loss = 0.0;
  std::vector<double> z(k);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto& xi = x[i];
    for (std::size_t c = 0; c < k; ++c) {
      double s = model.intercepts[c];
      const double* row = model.coefficients.data() + c * model.dimension;
      for (std::size_t t = 0; t < xi.nnz(); ++t) s += row[xi.indices[t]] * xi.values[t];
      z[c] = s;
    }
    const double zy = z[labels[i]];
    const double lse = softmax_inplace(z);
    loss += (lse - zy) * inv_n;
    if (grad) {
      for (std::size_t c = 0; c < k; ++c) {
        double r = (z[c] - (c == labels[i] ? 1.0 : 0.0)) * inv_n;
        grad->intercept_gradient[c] += r;
        double* g = grad->coefficient_gradient.data() + c * model.dimension;
        for (std::size_t t = 0; t < xi.nnz(); ++t) g[xi.indices[t]] += r * xi.values[t];
      }
    }
  }

  double sq = 0.0;
  for (double w : model.coefficients) sq += w * w;
  loss += 0.5 * model.l2_lambda * sq;
  if (grad && model.l2_lambda != 0.0) {
    for (std::size_t j = 0; j < model.coefficients.size(); ++j)
      grad->coefficient_gradient[j] += model.l2_lambda * model.coefficients[j];
  }
  if (grad) grad->loss = loss;
  return loss;
}

void validate_inputs(const LinearModel& model, std::span<const SparseVector> x,
                     std::span<const std::size_t> labels) {
  if (x.empty()) throw Error(ErrorCode::invalid_argument, "empty training input");
  if (x.size() != labels.size())
    throw Error(ErrorCode::invalid_argument, "feature/label count mismatch");
  for (const auto& xi : x) check_dimension(model, xi);
  for (auto y : labels)
    if (y >= model.class_count()) throw Error(ErrorCode::invalid_argument, "label index out of range");
}

double inf_norm(const LossGradient& g) {
  double m = 0.0;
  for (double v : g.coefficient_gradient) m = std::max(m, std::abs(v));
  for (double v : g.intercept_gradient) m = std::max(m, std::abs(v));
  return m;
}

double squared_norm(const LossGradient& g) {
  double s = 0.0;
  for (double v : g.coefficient_gradient) s += v * v;
  for (double v : g.intercept_gradient) s += v * v;
  return s;
}

std::vector<std::string> sorted_classes(std::span<const std::string> labels) {
  std::vector<std::string> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  return classes;
}

std::vector<std::size_t> class_indices(std::span<const std::string> labels,
                                       const std::vector<std::string>& classes) {
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    auto it = std::lower_bound(classes.begin(), classes.end(), l);
    out.push_back(static_cast<std::size_t>(it - classes.begin()));
  }
  return out;
}

}  // namespace

LinearModel LinearModel::zeros(std::vector<std::string> classes, std::size_t dimension, double l2_lambda) {
  LinearModel m;
  m.dimension = dimension;
  m.coefficients.assign(classes.size() * dimension, 0.0);
  m.intercepts.assign(classes.size(), 0.0);
  m.classes = std::move(classes);
  m.l2_lambda = l2_lambda;
  return m;
}

LossGradient loss_and_gradient(const LinearModel& model, std::span<const SparseVector> x,
                               std::span<const std::size_t> labels) {
  validate_inputs(model, x, labels);
  LossGradient out;
  evaluate(model, x, labels, &out);
  return out;
}

LinearModel train(std::span<const SparseVector> x, std::span<const std::string> labels, double l2_lambda,
                  std::uint64_t /*seed*/, const TrainOptions& options, TrainReport* report) {
  if (x.empty() || x.size() != labels.size())
    throw Error(ErrorCode::invalid_argument, "training input must be non-empty with one label per example");
  auto classes = sorted_classes(labels);
  if (classes.size() < 2) throw Error(ErrorCode::precondition_failed, "degenerate training set");

  LinearModel model = LinearModel::zeros(classes, x.front().dimension, l2_lambda);
  auto y = class_indices(labels, model.classes);
  validate_inputs(model, x, y);

  TrainReport local;
  TrainReport& rep = report ? *report : local;
  rep = TrainReport{};

  LossGradient current;
  evaluate(model, x, y, &current);
  rep.loss_history.push_back(current.loss);

  double step = 1.0;
  LinearModel candidate = model;
  LossGradient trial;
  for (rep.epochs = 0; rep.epochs < options.max_epochs; ++rep.epochs) {
    if (inf_norm(current) <= options.gradient_tolerance) {
      rep.converged = true;
      break;
    }
    const double g2 = squared_norm(current);
    bool accepted = false;
    step = std::min(step * 2.0, 1e6);
    for (int b = 0; b < options.max_backtracks; ++b) {
      for (std::size_t j = 0; j < model.coefficients.size(); ++j)
        candidate.coefficients[j] = model.coefficients[j] - step * current.coefficient_gradient[j];
      for (std::size_t c = 0; c < model.intercepts.size(); ++c)
        candidate.intercepts[c] = model.intercepts[c] - step * current.intercept_gradient[c];
      double trial_loss = evaluate(candidate, x, y, nullptr);
      if (trial_loss <= current.loss - options.armijo_c * step * g2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no descent step representable at this precision
    std::swap(model.coefficients, candidate.coefficients);
    std::swap(model.intercepts, candidate.intercepts);
    evaluate(model, x, y, &trial);
    std::swap(current, trial);
    rep.loss_history.push_back(current.loss);
  }
  rep.final_gradient_norm = inf_norm(current);
  if (rep.final_gradient_norm <= options.gradient_tolerance) rep.converged = true;
  return model;
}

std::vector<double> decision_scores(const LinearModel& model, const SparseVector& x) {
  check_dimension(model, x);
  std::vector<double> z(model.class_count());
  for (std::size_t c = 0; c < z.size(); ++c) {
    double s = model.intercepts[c];
    const double* row = model.coefficients.data() + c * model.dimension;
    for (std::size_t t = 0; t < x.nnz(); ++t) s += row[x.indices[t]] * x.values[t];
    z[c] = s;
  }
  return z;
}

ProbabilityVector predict_proba(const LinearModel& model, const SparseVector& x) {
  auto z = decision_scores(model, x);
  softmax_inplace(z);
  return z;
}

std::size_t predict(const LinearModel& model, const SparseVector& x) {
  auto p = predict_proba(model, x);
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

Metrics evaluate_predictions(std::span<const std::string> truth, std::span<const std::string> predicted,
                             std::span<const std::string> classes) {
  Metrics m;
  if (truth.empty()) return m;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == predicted[i];
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());

  if (classes.empty()) return m;
  for (const auto& c : classes) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      bool t = truth[i] == c, p = predicted[i] == c;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    m.macro_precision += precision;
    m.macro_recall += recall;
    m.macro_f1 += f1;
  }
  const double k = static_cast<double>(classes.size());
  m.macro_precision /= k;
  m.macro_recall /= k;
  m.macro_f1 /= k;
  return m;
}

std::vector<int> stratified_folds(std::span<const std::string> labels, int folds, std::uint64_t seed) {
  auto classes = sorted_classes(labels);
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);

  std::size_t minority = labels.size();
  for (const auto& [_, idx] : members) minority = std::min(minority, idx.size());
  const int k = std::max(2, std::min(folds, static_cast<int>(minority)));

  std::vector<int> fold(labels.size(), 0);
  std::size_t offset = 0;
  for (const auto& cls : classes) {
    auto& idx = members[cls];
    deterministic_shuffle(std::span<std::size_t>(idx), mix_seed(seed, offset));
    for (std::size_t j = 0; j < idx.size(); ++j)
      fold[idx[j]] = static_cast<int>((offset + j) % static_cast<std::size_t>(k));
    offset += idx.size();
  }
  return fold;
}

Metrics cross_validate(std::span<const SparseVector> x, std::span<const std::string> labels, int folds,
                       std::uint64_t seed, double l2_lambda) {
  if (x.size() != labels.size()) throw Error(ErrorCode::invalid_argument, "feature/label count mismatch");
  auto classes = sorted_classes(labels);
  if (classes.size() < 2)
    throw Error(ErrorCode::precondition_failed, "cross-validation needs at least 2 classes");

  auto fold_of = stratified_folds(labels, folds, seed);
  const int k = *std::max_element(fold_of.begin(), fold_of.end()) + 1;

  Metrics sum;
  int evaluated = 0;
  for (int f = 0; f < k; ++f) {
    std::vector<SparseVector> train_x;
    std::vector<std::string> train_y, test_y, predicted;
    std::vector<std::size_t> test_idx;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (fold_of[i] == f) {
        test_idx.push_back(i);
        test_y.push_back(labels[i]);
      } else {
        train_x.push_back(x[i]);
        train_y.push_back(labels[i]);
      }
    }
    if (test_idx.empty() || train_x.empty()) continue;

    auto train_classes = sorted_classes(train_y);
    if (train_classes.size() < 2) {
      predicted.assign(test_idx.size(), train_classes.front());
    } else {
      auto model = train(train_x, train_y, l2_lambda, seed);
      for (auto i : test_idx) predicted.push_back(model.classes[predict(model, x[i])]);
    }
    auto m = evaluate_predictions(test_y, predicted, classes);
    sum.accuracy += m.accuracy;
    sum.macro_precision += m.macro_precision;
    sum.macro_recall += m.macro_recall;
    sum.macro_f1 += m.macro_f1;
    ++evaluated;
  }
  if (evaluated == 0) throw Error(ErrorCode::precondition_failed, "too few examples for cross-validation");
  const double d = static_cast<double>(evaluated);
  return {sum.accuracy / d, sum.macro_precision / d, sum.macro_recall / d, sum.macro_f1 / d};
}

}  // namespace labelforge
