#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "hpcad/error.hpp"

namespace hpcad {

/// Training knobs for the one-class SVM. nu bounds both the fraction of
/// training points left outside the learned region and, from below, the
/// fraction of support vectors. gamma <= 0 selects 1/dim, a sensible width
/// for features confined to [0,1]. max_passes == 0 selects 10 * l pair
/// optimizations.
struct TrainConfig {
  double nu = 0.05;
  double gamma = 0.0;
  double kkt_tolerance = 1e-4;
  std::size_t max_passes = 0;
  std::uint64_t seed = 0;
};

struct OcSvmModel {
  std::size_t dim = 0;
  double nu = 0.0;
  double gamma = 0.0;
  double rho = 0.0;
  std::vector<std::vector<double>> support_vectors;
  std::vector<double> alphas;
};

inline double rbf_kernel(std::span<const double> x, std::span<const double> y,
                         double gamma) {
  if (x.size() != y.size()) {
    throw Error("rbf_kernel: dimension mismatch (" + std::to_string(x.size()) +
                " vs " + std::to_string(y.size()) + ")");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    sq += d * d;
  }
  return std::exp(-gamma * sq);
}

namespace detail {

// Lazily computed kernel rows with FIFO eviction, bounded to ~32 MB.
class KernelCache {
 public:
  KernelCache(const std::vector<std::vector<double>>& points, double gamma)
      : points_(points), gamma_(gamma) {
    const std::size_t l = points.size();
    max_rows_ = std::max<std::size_t>(16, (32u << 20) / (sizeof(double) * std::max<std::size_t>(l, 1)));
  }

  const std::vector<double>& row(std::size_t i) {
    auto it = rows_.find(i);
    if (it != rows_.end()) return it->second;
    if (rows_.size() >= max_rows_) {
      rows_.erase(order_.front());
      order_.pop_front();
    }
    std::vector<double> r(points_.size());
    for (std::size_t j = 0; j < points_.size(); ++j) {
      r[j] = rbf_kernel(points_[i], points_[j], gamma_);
    }
    order_.push_back(i);
    return rows_.emplace(i, std::move(r)).first->second;
  }

 private:
  const std::vector<std::vector<double>>& points_;
  double gamma_;
  std::size_t max_rows_;
  std::unordered_map<std::size_t, std::vector<double>> rows_;
  std::deque<std::size_t> order_;
};

}  // namespace detail

/// Trains the one-class boundary on clean vectors by minimizing
/// (1/2) sum_ij a_i a_j K(x_i, x_j) over the scaled simplex
/// 0 <= a_i <= 1/(nu*l), sum a_i = 1, with pairwise (SMO-style) steps on the
/// maximal violating pair until the KKT gap drops below kkt_tolerance. The
/// offset rho is the mean kernel expansion over free support vectors, so
/// decision() is zero on the boundary by construction.
inline OcSvmModel train(const std::vector<std::vector<double>>& points,
                        const TrainConfig& cfg = {}) {
  const std::size_t l = points.size();
  if (l < 2) throw Error("ocsvm train: need at least 2 training vectors");
  const std::size_t dim = points.front().size();
  if (dim == 0) throw Error("ocsvm train: zero-dimensional vectors");
  for (const auto& p : points) {
    if (p.size() != dim) throw Error("ocsvm train: inconsistent dimensions");
  }
  if (!(cfg.nu > 0.0 && cfg.nu <= 1.0)) throw Error("ocsvm train: nu must be in (0,1]");
  const double nl = cfg.nu * static_cast<double>(l);
  if (nl < 1.0) {
    throw Error("ocsvm train: nu*l = " + std::to_string(nl) +
                " < 1 makes the box constraint infeasible");
  }
  const double upper = 1.0 / nl;
  const double gamma = cfg.gamma > 0.0 ? cfg.gamma : 1.0 / static_cast<double>(dim);
  const std::size_t max_steps = cfg.max_passes ? cfg.max_passes : 10 * l;

  // feasible start: floor(nu*l) coordinates at the upper bound, the
  // remainder on one more; assignment order is shuffled by the seed
  std::vector<double> alpha(l, 0.0);
  std::vector<std::size_t> order(l);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto full = static_cast<std::size_t>(nl);  // floor; nl >= 1
  for (std::size_t i = 0; i < full && i < l; ++i) alpha[order[i]] = upper;
  if (full < l) {
    const double rest = 1.0 - upper * static_cast<double>(full);
    if (rest > 0.0) alpha[order[full]] = rest;
  }

  detail::KernelCache cache(points, gamma);
  std::vector<double> grad(l, 0.0);  // grad_i = sum_j alpha_j K_ij
  for (std::size_t j = 0; j < l; ++j) {
    if (alpha[j] <= 0.0) continue;
    const auto& kj = cache.row(j);
    for (std::size_t i = 0; i < l; ++i) grad[i] += alpha[j] * kj[i];
  }

  const double bound_eps = upper * 1e-12;
  std::size_t steps = 0;
  while (true) {
    std::size_t i_up = l, j_low = l;
    double g_min = std::numeric_limits<double>::infinity();
    double g_max = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < l; ++k) {
      if (alpha[k] < upper - bound_eps && grad[k] < g_min) {
        g_min = grad[k];
        i_up = k;
      }
      if (alpha[k] > bound_eps && grad[k] > g_max) {
        g_max = grad[k];
        j_low = k;
      }
    }
    if (i_up >= l || j_low >= l) break;  // everything pinned to one bound
    const double gap = g_max - g_min;
    if (gap <= cfg.kkt_tolerance) break;
    if (steps >= max_steps) {
      throw Error("ocsvm train: no convergence after " + std::to_string(steps) +
                  " pair steps (KKT gap " + std::to_string(gap) + ", tolerance " +
                  std::to_string(cfg.kkt_tolerance) + ")");
    }
    ++steps;

    const auto& ki = cache.row(i_up);
    const auto& kj = cache.row(j_low);
    const double eta = ki[i_up] + kj[j_low] - 2.0 * ki[j_low];
    const double room = std::min(upper - alpha[i_up], alpha[j_low]);
    double step = room;
    if (eta > 1e-15) step = std::min((grad[j_low] - grad[i_up]) / eta, room);
    alpha[i_up] = std::min(alpha[i_up] + step, upper);
    alpha[j_low] = std::max(alpha[j_low] - step, 0.0);
    for (std::size_t k = 0; k < l; ++k) grad[k] += step * (ki[k] - kj[k]);
  }

  // rho from free support vectors; with none, bracket it between the
  // bounded side and the zero side
  double rho;
  double free_sum = 0.0;
  std::size_t free_count = 0;
  double bounded_max = -std::numeric_limits<double>::infinity();
  double zero_min = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < l; ++k) {
    if (alpha[k] > bound_eps && alpha[k] < upper - bound_eps) {
      free_sum += grad[k];
      ++free_count;
    } else if (alpha[k] >= upper - bound_eps) {
      bounded_max = std::max(bounded_max, grad[k]);
    } else {
      zero_min = std::min(zero_min, grad[k]);
    }
  }
  if (free_count > 0) {
    rho = free_sum / static_cast<double>(free_count);
  } else if (std::isfinite(bounded_max) && std::isfinite(zero_min)) {
    rho = 0.5 * (bounded_max + zero_min);
  } else if (std::isfinite(bounded_max)) {
    rho = bounded_max;
  } else {
    rho = zero_min;
  }

  OcSvmModel model;
  model.dim = dim;
  model.nu = cfg.nu;
  model.gamma = gamma;
  model.rho = rho;
  for (std::size_t k = 0; k < l; ++k) {
    if (alpha[k] > 1e-12) {
      model.support_vectors.push_back(points[k]);
      model.alphas.push_back(alpha[k]);
    }
  }
  return model;
}

/// Kernel expansion minus offset; positive inside the learned normal region.
inline double decision(const OcSvmModel& model, std::span<const double> x) {
  if (x.size() != model.dim) {
    throw Error("ocsvm decision: expected dimension " + std::to_string(model.dim) +
                ", got " + std::to_string(x.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < model.support_vectors.size(); ++i) {
    sum += model.alphas[i] * rbf_kernel(model.support_vectors[i], x, model.gamma);
  }
  return sum - model.rho;
}

/// Negated decision value: higher means more anomalous. Threshold sweeps
/// over this score drive the ROC construction.
inline double anomaly_score(const OcSvmModel& model, std::span<const double> x) {
  return -decision(model, x);
}

inline nlohmann::json model_to_json(const OcSvmModel& model) {
  return nlohmann::json{{"nu", model.nu},
                        {"gamma", model.gamma},
                        {"rho", model.rho},
                        {"dim", model.dim},
                        {"support_vectors", model.support_vectors},
                        {"alphas", model.alphas}};
}

inline OcSvmModel model_from_json(const nlohmann::json& j) {
  OcSvmModel model;
  model.nu = j.at("nu").get<double>();
  model.gamma = j.at("gamma").get<double>();
  model.rho = j.at("rho").get<double>();
  model.dim = j.at("dim").get<std::size_t>();
  model.support_vectors = j.at("support_vectors").get<std::vector<std::vector<double>>>();
  model.alphas = j.at("alphas").get<std::vector<double>>();
  if (model.alphas.size() != model.support_vectors.size()) {
    throw Error("ocsvm model: alphas and support_vectors disagree in length");
  }
  for (const auto& sv : model.support_vectors) {
    if (sv.size() != model.dim) throw Error("ocsvm model: support vector dimension mismatch");
  }
  return model;
}

inline void save_model(const OcSvmModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_model: cannot open '" + path.string() + "'");
  out << model_to_json(model).dump(2) << '\n';
  if (!out) throw Error("save_model: write to '" + path.string() + "' failed");
}

inline OcSvmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_model: cannot open '" + path.string() + "'");
  nlohmann::json j;
  in >> j;
  return model_from_json(j);
}

}  // namespace hpcad
