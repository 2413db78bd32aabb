#include "ntda/gradient_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "ntda/losses.hpp"
#include "ntda/model.hpp"
#include "ntda/rng.hpp"

namespace ntda {

namespace {

struct State {
  Matrix source;
  Labels labels;
  std::vector<double> weights;
  Matrix target;
  PrototypeSet protos;
};

Matrix uniform(std::size_t rows, std::size_t cols, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = u(rng);
  return m;
}

// Discriminator outputs must stay clear of the clamp band so the loss is smooth
// across the probe.
bool away_from_clamp(const Matrix& target, const PrototypeSet& protos) {
  for (double d : discriminate(target, protos)) {
    if (d < 1e-3 || d > 1.0 - 1e-3) return false;
  }
  return true;
}

State draw_state(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> classes(2, 5), dim(2, 4), count(3, 6);
  std::uniform_real_distribution<double> temp(0.5, 5.0), weight(0.05, 1.0), coin(0.0, 1.0);
  for (;;) {
    const std::size_t m = classes(rng);
    const std::size_t d = dim(rng);
    const std::size_t ns = count(rng);
    const std::size_t nt = count(rng);
    State s{uniform(ns, d, -1.5, 1.5, rng), Labels(ns), std::vector<double>(ns), uniform(nt, d, -1.5, 1.5, rng),
            PrototypeSet(uniform(m, d, -1.5, 1.5, rng), temp(rng))};
    std::uniform_int_distribution<std::size_t> label(0, m - 1);
    for (std::size_t i = 0; i < ns; ++i) {
      s.labels[i] = label(rng);
      // Some exact zeros so the skip path is exercised.
      s.weights[i] = coin(rng) < 0.2 ? 0.0 : weight(rng);
    }
    if (away_from_clamp(s.target, s.protos)) return s;
  }
}

PrototypeSet with_prototypes(const PrototypeSet& p, const Matrix& values) {
  return PrototypeSet(values, p.temperature());
}

class Tally {
 public:
  Tally(const GradientSuiteOptions& options) : options_(options) {}

  void check(const std::string& name, const ScalarFn& fn, const Matrix& at, const Matrix& grad) {
    auto it = std::find_if(results_.begin(), results_.end(), [&](const auto& r) { return r.name == name; });
    if (it == results_.end()) {
      results_.push_back({name, 0, 0.0, true});
      it = results_.end() - 1;
    }
    const GradCheckReport r = finite_diff_check(fn, at, grad, options_.h, options_.tol);
    ++it->states;
    it->max_relative_error = std::max(it->max_relative_error, r.max_relative_error);
    it->passed = it->passed && r.passed;
  }

  std::vector<GradientCaseResult> take() { return std::move(results_); }

 private:
  GradientSuiteOptions options_;
  std::vector<GradientCaseResult> results_;
};

using LossFn = std::function<LossValue(const Matrix&, const PrototypeSet&)>;

void check_loss(Tally& tally, const std::string& name, const LossFn& loss, const Matrix& features,
                const PrototypeSet& protos) {
  const LossValue v = loss(features, protos);
  tally.check(name + "/features", [&](const Matrix& f) { return loss(f, protos).value; }, features, v.grad_features);
  tally.check(name + "/prototypes", [&](const Matrix& p) { return loss(features, with_prototypes(protos, p)).value; },
              protos.prototypes(), v.grad_prototypes);
}

// Small extractor whose preactivations all sit at least `margin` away from
// the rectifier kink for the given inputs.
FeatureExtractor draw_extractor(std::size_t in, std::size_t out, const Matrix& x, std::mt19937_64& rng) {
  const std::vector<std::size_t> dims{in, 5, out};
  for (;;) {
    FeatureExtractor fx = FeatureExtractor::init_uniform(dims, rng);
    std::uniform_real_distribution<double> b(-0.5, 0.5);
    for (auto& layer : fx.layers()) {
      for (double& v : layer.bias) v = b(rng);
    }
    ForwardCache cache;
    extract(fx, x, cache);
    const auto& z = cache.preactivations.front().flat();
    if (std::all_of(z.begin(), z.end(), [](double v) { return std::abs(v) > 1e-2; })) return fx;
  }
}

}  // namespace

std::vector<GradientCaseResult> run_gradient_suite(const GradientSuiteOptions& options) {
  std::mt19937_64 rng(derive_seed(options.seed, 30));
  Tally tally(options);
  const TradeOff tradeoff{0.5, 1.0};

  for (std::size_t k = 0; k < options.states; ++k) {
    const State s = draw_state(rng);
    const Labels& y = s.labels;
    const std::span<const double> w = s.weights;

    check_loss(tally, "loss_cls", [&](const Matrix& f, const PrototypeSet& p) { return loss_cls(f, y, p); }, s.source,
               s.protos);
    check_loss(tally, "loss_cls_weighted",
               [&](const Matrix& f, const PrototypeSet& p) { return loss_cls(f, y, p, w); }, s.source, s.protos);
    check_loss(tally, "loss_reg", [&](const Matrix& f, const PrototypeSet& p) { return loss_reg(f, y, p); }, s.source,
               s.protos);
    check_loss(tally, "loss_reg_weighted",
               [&](const Matrix& f, const PrototypeSet& p) { return loss_reg(f, y, p, w); }, s.source, s.protos);
    check_loss(tally, "loss_adv_d", [](const Matrix& f, const PrototypeSet& p) { return loss_adv_d(f, p); }, s.target,
               s.protos);
    check_loss(tally, "loss_adv_f", [](const Matrix& f, const PrototypeSet& p) { return loss_adv_f(f, p); }, s.target,
               s.protos);

    // Composite objectives, each against the parameter group it trains.
    const ObjectiveValue op = objective_prototypes({s.source, y, w}, s.target, s.protos, tradeoff);
    tally.check(
        "objective_prototypes/prototypes",
        [&](const Matrix& p) { return objective_prototypes({s.source, y, w}, s.target, with_prototypes(s.protos, p), tradeoff).value; },
        s.protos.prototypes(), op.grad_prototypes);

    const ObjectiveValue oe = objective_extractor({s.source, y, w}, s.target, s.protos, tradeoff);
    tally.check(
        "objective_extractor/source_features",
        [&](const Matrix& f) { return objective_extractor({f, y, w}, s.target, s.protos, tradeoff).value; }, s.source,
        oe.grad_source_features);
    tally.check(
        "objective_extractor/target_features",
        [&](const Matrix& f) { return objective_extractor({s.source, y, w}, f, s.protos, tradeoff).value; }, s.target,
        oe.grad_target_features);

    // Extractor objective chained through a two-layer extractor onto its first-layer weights.
    const std::size_t in = 3;
    Matrix xs, xt;
    FeatureExtractor fx;
    ForwardCache cs, ct;
    Matrix fs, ft;
    do {
      xs = uniform(s.source.rows(), in, -1.0, 1.0, rng);
      xt = uniform(s.target.rows(), in, -1.0, 1.0, rng);
      Matrix both(xs.rows() + xt.rows(), in);
      std::copy(xs.flat().begin(), xs.flat().end(), both.flat().begin());
      std::copy(xt.flat().begin(), xt.flat().end(), both.flat().begin() + static_cast<std::ptrdiff_t>(xs.size()));
      fx = draw_extractor(in, s.protos.dim(), both, rng);
      fs = extract(fx, xs, cs);
      ft = extract(fx, xt, ct);
    } while (!away_from_clamp(ft, s.protos));
    auto chained = [&](const FeatureExtractor& e) {
      return objective_extractor({extract(e, xs), y, w}, extract(e, xt), s.protos, tradeoff).value;
    };
    const ObjectiveValue chained_obj = objective_extractor({fs, y, w}, ft, s.protos, tradeoff);
    ExtractorGrad g = extract_backward(fx, cs, chained_obj.grad_source_features);
    g += extract_backward(fx, ct, chained_obj.grad_target_features);
    tally.check(
        "objective_extractor/layer0.weight",
        [&](const Matrix& wt) {
          FeatureExtractor probe = fx;
          probe.layers()[0].weight = wt;
          return chained(probe);
        },
        fx.layers()[0].weight, g.weight[0]);
  }
  return tally.take();
}

}  // namespace ntda
