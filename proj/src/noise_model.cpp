#include "ntda/noise_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "ntda/error.hpp"

namespace ntda {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(alpha * N(d | mu, sigma))
double log_weighted_density(double d, double alpha, double mu, double sigma) {
  if (alpha <= 0.0) return kNegInf;
  const double z = (d - mu) / sigma;
  return std::log(alpha) - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * z * z;
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

struct Stats {
  double mean = 0.0;
  double sd = 0.0;
};

Stats stats_of(std::span<const double> xs) {
  Stats s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  for (double x : xs) s.sd += (x - s.mean) * (x - s.mean);
  s.sd = std::max(kSigmaFloor, std::sqrt(s.sd / static_cast<double>(xs.size())));
  return s;
}

// E-step: responsibilities of the clean component; returns the mean log-likelihood.
double expectation(std::span<const double> d, const GaussianMixture2& g, std::vector<double>& resp0) {
  double ll = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double l0 = log_weighted_density(d[i], g.alpha[0], g.mu[0], g.sigma[0]);
    const double l1 = log_weighted_density(d[i], g.alpha[1], g.mu[1], g.sigma[1]);
    const double total = log_add(l0, l1);
    resp0[i] = l0 == kNegInf ? 0.0 : std::exp(l0 - total);
    ll += total;
  }
  return ll / static_cast<double>(d.size());
}

void maximization(std::span<const double> d, std::span<const double> resp0, GaussianMixture2& g) {
  const double n = static_cast<double>(d.size());
  std::array<double, 2> mass{0.0, 0.0}, first{0.0, 0.0};
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double r[2] = {resp0[i], 1.0 - resp0[i]};
    for (int k = 0; k < 2; ++k) {
      mass[k] += r[k];
      first[k] += r[k] * d[i];
    }
  }
  for (int k = 0; k < 2; ++k) {
    g.alpha[k] = mass[k] / n;
    // A component that lost all its mass keeps its last location.
    if (mass[k] <= std::numeric_limits<double>::min()) continue;
    g.mu[k] = first[k] / mass[k];
  }
  for (int k = 0; k < 2; ++k) {
    if (mass[k] <= std::numeric_limits<double>::min()) continue;
    double second = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double r = k == 0 ? resp0[i] : 1.0 - resp0[i];
      second += r * (d[i] - g.mu[k]) * (d[i] - g.mu[k]);
    }
    g.sigma[k] = std::max(kSigmaFloor, std::sqrt(second / mass[k]));
  }
}

}  // namespace

void GaussianMixture2::canonicalize() {
  const bool swap = mu[0] > mu[1] || (mu[0] == mu[1] && (sigma[0] > sigma[1] ||
                                                          (sigma[0] == sigma[1] && alpha[0] > alpha[1])));
  if (swap) {
    std::swap(alpha[0], alpha[1]);
    std::swap(mu[0], mu[1]);
    std::swap(sigma[0], sigma[1]);
  }
}

EmFit fit_em(std::span<const double> distances, EmOptions options) {
  if (distances.size() < 4) {
    throw DataError("fit_em: insufficient data (" + std::to_string(distances.size()) + " distances, need >= 4)");
  }
  for (double d : distances) {
    if (!std::isfinite(d) || d < 0.0) throw DataError("fit_em: distances must be finite and non-negative");
  }
  const auto [lo, hi] = std::minmax_element(distances.begin(), distances.end());
  if (*lo == *hi) throw DataError("fit_em: degenerate data, all distances identical");

  std::vector<double> sorted(distances.begin(), distances.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t half = sorted.size() / 2;
  const Stats lower = stats_of(std::span<const double>(sorted).subspan(0, half));
  const Stats upper = stats_of(std::span<const double>(sorted).subspan(half));

  EmFit fit;
  GaussianMixture2& g = fit.mixture;
  g.alpha = {0.5, 0.5};
  g.mu = {lower.mean, upper.mean};
  g.sigma = {lower.sd, upper.sd};

  std::vector<double> resp0(distances.size());
  double ll = expectation(distances, g, resp0);
  fit.trace.log_likelihood_history.push_back(ll);
  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    maximization(distances, resp0, g);
    const double next = expectation(distances, g, resp0);
    fit.trace.log_likelihood_history.push_back(next);
    fit.trace.iterations = it;
    const double gain = next - ll;
    ll = next;
    if (gain < options.tol) {
      fit.trace.converged = true;
      break;
    }
  }
  g.canonicalize();
  return fit;
}

double mean_log_likelihood(std::span<const double> distances, const GaussianMixture2& g) {
  if (distances.empty()) throw DataError("mean_log_likelihood: no data");
  std::vector<double> resp(distances.size());
  return expectation(distances, g, resp);
}

double posterior_clean(double d, const GaussianMixture2& g) {
  const double l0 = log_weighted_density(d, g.alpha[0], g.mu[0], g.sigma[0]);
  const double l1 = log_weighted_density(d, g.alpha[1], g.mu[1], g.sigma[1]);
  if (l0 == kNegInf) return 0.0;
  if (l1 == kNegInf) return 1.0;
  // Logistic form of alpha_0 N_0 / (alpha_0 N_0 + alpha_1 N_1).
  return 1.0 / (1.0 + std::exp(l1 - l0));
}

double sample_weight(double p_clean, double eta) {
  if (!(eta >= 0.0 && eta < 1.0)) throw ConfigError("sample_weight: eta must lie in [0, 1)");
  if (!(p_clean >= 0.0 && p_clean <= 1.0)) throw DataError("sample_weight: p_clean must lie in [0, 1]");
  if (p_clean <= eta) return 0.0;
  return (p_clean - eta) / (1.0 - eta);
}

std::vector<double> distances_to_labeled_prototype(const Matrix& features, const Labels& labels,
                                                   const PrototypeSet& protos) {
  if (labels.size() != features.rows()) throw ShapeError("distances_to_labeled_prototype: label count mismatch");
  if (features.cols() != protos.dim()) throw ShapeError("distances_to_labeled_prototype: embedding width mismatch");
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= protos.class_count()) throw DataError("distances_to_labeled_prototype: label out of range");
    auto f = features.row(i);
    auto p = protos.prototypes().row(labels[i]);
    double acc = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) acc += (f[k] - p[k]) * (f[k] - p[k]);
    out[i] = std::sqrt(acc);
  }
  return out;
}

SourceWeights weights_from_distances(std::vector<double> distances, double eta, EmOptions options) {
  if (!(eta >= 0.0 && eta < 1.0)) throw ConfigError("compute_weights: eta must lie in [0, 1)");
  SourceWeights out;
  EmFit fit = fit_em(distances, options);
  out.mixture = fit.mixture;
  out.trace = std::move(fit.trace);
  out.p_clean.resize(distances.size());
  out.weights.resize(distances.size());
  for (std::size_t i = 0; i < distances.size(); ++i) {
    out.p_clean[i] = posterior_clean(distances[i], out.mixture);
    out.weights[i] = sample_weight(out.p_clean[i], eta);
  }
  out.distances = std::move(distances);
  return out;
}

SourceWeights compute_weights(const ModelState& model, const Matrix& source_x, const Labels& source_labels,
                              double eta, EmOptions options) {
  const Matrix features = extract(model.extractor, source_x);
  return weights_from_distances(distances_to_labeled_prototype(features, source_labels, model.prototypes), eta,
                                options);
}

SourceWeights compute_weights(const ModelState& model, const DomainDataset& source, double eta, EmOptions options) {
  return compute_weights(model, source.features, source.labels, eta, options);
}

}  // namespace ntda
