#ifndef DENSECRAFT_EVALBENCH_HPP
#define DENSECRAFT_EVALBENCH_HPP

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "densecraft/common.hpp"
#include "densecraft/data.hpp"
#include "densecraft/dpmm.hpp"
#include "densecraft/lindsey.hpp"
#include "densecraft/pgm.hpp"
#include "densecraft/rng.hpp"
#include "densecraft/special.hpp"

namespace densecraft {

/// One of the five benchmark densities. Second arguments of the normal
/// components are variances; f5 is Gamma with shape 3, scale 1.
class ReferenceDensity {
 public:
  struct NormalComponent {
    double weight, mean, var;
  };

  static ReferenceDensity from_id(const std::string& id) {
    if (id == "f1") return ReferenceDensity(id, {{1.0, 0.0, 1.0}});
    if (id == "f2") return ReferenceDensity(id, {{0.5, -0.5, 0.25}, {0.5, 0.5, 0.25}});
    if (id == "f3") return ReferenceDensity(id, {{0.5, -1.5, 1.0}, {0.5, 1.5, 1.0}});
    if (id == "f4")
      return ReferenceDensity(id, {{13.0 / 20, -1.0, 0.5},
                                   {2.0 / 20, -0.5, 0.5},
                                   {1.0 / 20, 0.0, 1.0},
                                   {3.0 / 20, 0.5, 0.5},
                                   {1.0 / 20, 1.0, 0.5}});
    if (id == "f5") return ReferenceDensity(id);  // Gamma(3, 1)
    throw std::invalid_argument("ReferenceDensity: unknown id '" + id + "'");
  }

  const std::string& id() const { return id_; }
  bool is_gamma() const { return components_.empty(); }

  double pdf(double x) const {
    if (is_gamma()) {
      if (x < 0.0) return 0.0;
      return 0.5 * x * x * std::exp(-x);  // Gamma(3,1): x^2 e^-x / Gamma(3)
    }
    double f = 0.0;
    for (const auto& c : components_) f += c.weight * normal_pdf(x, c.mean, std::sqrt(c.var));
    return f;
  }

  double cdf(double x) const {
    if (is_gamma()) return gamma_cdf(x, 3.0, 1.0);
    double f = 0.0;
    for (const auto& c : components_) f += c.weight * normal_cdf(x, c.mean, std::sqrt(c.var));
    return f;
  }

  double sample(RngStream& rng) const {
    if (is_gamma()) return draw_gamma(rng, 3.0, 1.0);
    double u = rng.uniform();
    for (const auto& c : components_) {
      if (u < c.weight) return draw_normal(rng, c.mean, std::sqrt(c.var));
      u -= c.weight;
    }
    const auto& last = components_.back();
    return draw_normal(rng, last.mean, std::sqrt(last.var));
  }

  /// n draws wrapped in a SampleSet with the method-default working interval
  /// (nonnegative interval for the gamma density).
  SampleSet sample_set(std::size_t n, RngStream& rng) const {
    Vector xs(n);
    for (auto& x : xs) x = sample(rng);
    return is_gamma() ? SampleSet::with_nonnegative_interval(std::move(xs))
                      : SampleSet::with_default_interval(std::move(xs));
  }

  /// Quadrature + KS self-checks; throws numeric_error on failure.
  void self_test(RngStream& rng) const {
    double lo = 0.0, hi = 60.0;
    if (!is_gamma()) {
      lo = components_.front().mean, hi = components_.front().mean;
      for (const auto& c : components_) {
        lo = std::min(lo, c.mean - 12.0 * std::sqrt(c.var));
        hi = std::max(hi, c.mean + 12.0 * std::sqrt(c.var));
      }
    }
    const double integral =
        adaptive_simpson([this](double x) { return pdf(x); }, lo, hi, 1e-11, 24);
    if (std::abs(integral - 1.0) > 1e-8)
      throw numeric_error(id_ + ": pdf integral " + std::to_string(integral));

    Vector xs(100000);
    for (auto& x : xs) x = sample(rng);
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double f = cdf(xs[i]);
      d = std::max(d, std::abs(f - static_cast<double>(i) / n));
      d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
    }
    // asymptotic KS threshold at alpha = 0.01
    if (d > 1.628 / std::sqrt(n))
      throw numeric_error(id_ + ": sampler failed KS self-test, D=" + std::to_string(d));
  }

  static double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                                 double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double fa = f(a), fb = f(b), fm = f(m);
    return simpson_step(f, a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, depth);
  }

 private:
  explicit ReferenceDensity(std::string id, std::vector<NormalComponent> comps = {})
      : id_(std::move(id)), components_(std::move(comps)) {}

  static double simpson(double a, double b, double fa, double fm, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  }

  static double simpson_step(const std::function<double(double)>& f, double a, double b,
                             double fa, double fm, double fb, double whole, double tol,
                             int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = simpson(a, m, fa, flm, fm);
    const double right = simpson(m, b, fm, frm, fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
      return left + right + (left + right - whole) / 15.0;
    return simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
           simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
  }

  std::string id_;
  std::vector<NormalComponent> components_;  // empty => Gamma(3,1)
};

inline double reference_pdf(const std::string& id, double x) {
  return ReferenceDensity::from_id(id).pdf(x);
}

inline SampleSet reference_sample(const std::string& id, std::size_t n, RngStream& rng) {
  return ReferenceDensity::from_id(id).sample_set(n, rng);
}

/// MSE of an estimate against the truth at the given evaluation points
/// (the replicate's own sample by default). Points outside the estimate's
/// grid evaluate to zero and are counted in `flagged`.
inline double mse(const ReferenceDensity& truth, const DensityEstimate& estimate,
                  const Vector& eval_points, std::size_t* flagged = nullptr) {
  require(!eval_points.empty(), "mse: no evaluation points");
  std::size_t outside = 0;
  double s = 0.0;
  for (double x : eval_points) {
    const double diff = truth.pdf(x) - estimate.evaluate(x, &outside);
    s += diff * diff;
  }
  if (flagged) *flagged += outside;
  return s / static_cast<double>(eval_points.size());
}

/// A method entry for the benchmark. The fitter sees the truth only so the
/// "oracle" sanity method can return it; real methods ignore that argument.
struct BenchmarkMethod {
  std::string id;
  std::function<DensityEstimate(const ReferenceDensity&, const SampleSet&, std::uint64_t)> fit;
};

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Seed schedule: datasets depend on (base, density, n, replicate) only, so
/// every method sees the same replicate data; fit streams add the method id.
inline std::uint64_t dataset_seed(std::uint64_t base, const std::string& density,
                                  std::size_t n, std::size_t replicate) {
  std::uint64_t s = seed_combine(base, fnv1a(density));
  s = seed_combine(s, static_cast<std::uint64_t>(n));
  return s + replicate;  // consecutive replicate streams
}

inline std::uint64_t fit_seed(std::uint64_t data_seed_value, const std::string& method) {
  return seed_combine(data_seed_value, fnv1a(method));
}

struct ReplicateRecord {
  std::size_t replicate = 0;
  double mse = 0.0;
  bool failed = false;
  std::string error;
};

struct BenchmarkReport {
  std::string method;
  std::string density;
  std::size_t n = 0;
  std::size_t replicates = 0;
  std::vector<ReplicateRecord> records;
  Vector mse_values;         ///< successful replicates, in replicate order
  double imse = 0.0;         ///< mean of mse_values
  std::size_t excluded = 0;  ///< failed replicates
  double wall_seconds = 0.0; ///< console-only; never serialized into reports
};

struct BenchmarkSpec {
  std::vector<BenchmarkMethod> methods;
  std::vector<std::string> densities{"f1", "f2", "f3", "f4", "f5"};
  std::vector<std::size_t> sizes{100, 400};
  std::size_t replicates = 100;
  std::uint64_t seed = 42;
  std::size_t jobs = 1;
  bool mse_on_grid = false;  ///< evaluate MSE on the estimate's grid instead of the sample
};

/// Runs every (method, density, n) cell for `replicates` simulated datasets.
/// Failed replicates are recorded and excluded from the IMSE, never retried.
/// Deterministic under the seed schedule regardless of the job count.
inline std::vector<BenchmarkReport> run_benchmark(const BenchmarkSpec& spec) {
  require(!spec.methods.empty(), "run_benchmark: no methods configured");
  require(spec.replicates > 0, "run_benchmark: need at least one replicate");

  struct Task {
    std::size_t report_index;
    std::size_t method_index;
    std::size_t replicate;
    std::string density;
    std::size_t n;
  };

  std::vector<BenchmarkReport> reports;
  std::vector<Task> tasks;
  for (const auto& density : spec.densities)
    for (std::size_t n : spec.sizes)
      for (std::size_t m = 0; m < spec.methods.size(); ++m) {
        BenchmarkReport rep;
        rep.method = spec.methods[m].id;
        rep.density = density;
        rep.n = n;
        rep.replicates = spec.replicates;
        rep.records.resize(spec.replicates);
        const std::size_t index = reports.size();
        reports.push_back(std::move(rep));
        for (std::size_t r = 0; r < spec.replicates; ++r)
          tasks.push_back(Task{index, m, r, density, n});
      }

  const auto t0 = std::chrono::steady_clock::now();
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tasks.size()) return;
      const Task& task = tasks[t];
      BenchmarkReport& report = reports[task.report_index];
      ReplicateRecord& record = report.records[task.replicate];
      record.replicate = task.replicate;
      try {
        const ReferenceDensity truth = ReferenceDensity::from_id(task.density);
        const std::uint64_t ds = dataset_seed(spec.seed, task.density, task.n, task.replicate);
        RngStream data_rng(ds);
        const SampleSet data = truth.sample_set(task.n, data_rng);
        const auto& method = spec.methods[task.method_index];
        const DensityEstimate est = method.fit(truth, data, fit_seed(ds, method.id));
        record.mse = spec.mse_on_grid ? mse(truth, est, est.grid) : mse(truth, est, data.values);
      } catch (const std::exception& e) {
        record.failed = true;
        record.error = e.what();
      }
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, spec.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  for (auto& report : reports) {
    for (const auto& record : report.records) {
      if (record.failed) {
        ++report.excluded;
      } else {
        report.mse_values.push_back(record.mse);
      }
    }
    require(!report.mse_values.empty(),
            "run_benchmark: every replicate failed for " + report.method + "/" + report.density);
    double s = 0.0;
    for (double v : report.mse_values) s += v;
    report.imse = s / static_cast<double>(report.mse_values.size());
    report.wall_seconds = elapsed;
  }
  return reports;
}

/// Stock method table used by the compare command and the acceptance suite.
inline BenchmarkMethod lindsey_method(std::size_t k = 0) {
  const std::string id = k == 0 ? "lindsey" : "lindsey-k" + std::to_string(k);
  return {id, [k](const ReferenceDensity&, const SampleSet& data, std::uint64_t seed) {
            LindseyConfig config;
            config.k = k;
            config.seed = seed;
            config.thin = 0;
            return fit_lindsey(data, config);
          }};
}

inline BenchmarkMethod pgm_method(std::size_t K) {
  return {"pgm-K" + std::to_string(K),
          [K](const ReferenceDensity&, const SampleSet& data, std::uint64_t seed) {
            PgmConfig config;
            config.K = K;
            config.seed = seed;
            config.thin = 0;
            return fit_pgm(data, config);
          }};
}

inline BenchmarkMethod dpmm_method(std::size_t N = 35) {
  return {"dpmm", [N](const ReferenceDensity&, const SampleSet& data, std::uint64_t seed) {
            DpmmConfig config;
            config.N = N;
            config.seed = seed;
            config.thin = 0;
            return fit_dpmm(data, config);
          }};
}

inline BenchmarkMethod oracle_method() {
  return {"oracle", [](const ReferenceDensity& truth, const SampleSet& data, std::uint64_t) {
            DensityEstimate est;
            est.grid = linspace(data.a, data.b, kEvalGridSize);
            est.mean_density.resize(est.grid.size());
            for (std::size_t p = 0; p < est.grid.size(); ++p)
              est.mean_density[p] = truth.pdf(est.grid[p]);
            est.band_lower = est.mean_density;
            est.band_upper = est.mean_density;
            return est;
          }};
}

struct SensitivityResult {
  double A = 0.0;
  Vector mean_weights;  ///< posterior-mean mixture weights, length K
};

/// Half-t scale sensitivity experiment: PGM fits on one fixed two-component
/// dataset for each value of A; emits the posterior-mean weight vectors.
inline std::vector<SensitivityResult> sensitivity_experiment(
    const Vector& A_values, std::uint64_t seed, std::size_t n = 400, std::size_t K = 20,
    std::size_t iters = 5000, std::size_t burnin = 1000) {
  const ReferenceDensity f3 = ReferenceDensity::from_id("f3");
  RngStream data_rng(dataset_seed(seed, "f3", n, 0));
  const SampleSet data = f3.sample_set(n, data_rng);

  std::vector<SensitivityResult> results;
  for (std::size_t i = 0; i < A_values.size(); ++i) {
    PgmConfig config;
    config.K = K;
    config.A = A_values[i];
    config.iters = iters;
    config.burnin = burnin;
    config.seed = seed_combine(seed, i + 1);
    config.thin = 0;
    const DensityEstimate est = fit_pgm(data, config);
    results.push_back({A_values[i], est.diagnostics.traces.at("mean_weights")});
  }
  return results;
}

}  // namespace densecraft

#endif  // DENSECRAFT_EVALBENCH_HPP
