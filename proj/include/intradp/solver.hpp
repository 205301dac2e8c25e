#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "plan.hpp"

namespace intradp {

struct DEConfig {
  std::size_t population = 64;
  std::size_t generations = 300;
  double differential_weight = 0.7;  // F
  double crossover_rate = 0.9;       // CR
  std::uint64_t seed = 1;
  bool seed_with_baselines = true;

  void validate() const {
    if (population < 4) throw Error(Errc::InvalidArgument, "DE population must be >= 4");
    if (!(differential_weight > 0.0 && differential_weight <= 2.0)) {
      throw Error(Errc::InvalidArgument, "differential weight must lie in (0, 2]");
    }
    if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0)) {
      throw Error(Errc::InvalidArgument, "crossover rate must lie in [0, 1]");
    }
  }

  json to_json() const {
    return {{"population", population}, {"generations", generations}, {"F", differential_weight},
            {"CR", crossover_rate}, {"seed", seed}, {"seed_with_baselines", seed_with_baselines}};
  }
};

struct SolveResult {
  SchedulePlan plan;
  double makespan = 0.0;
  std::size_t evaluations = 0;
};

namespace detail {

// Genome layout: [a_0, b_0, a_1, b_1, ...] over operators in topological
// order, with x_M = [0, a) and x_R = [b, n).
class LossProblem {
 public:
  LossProblem(const ModelGraph& g, const ProfileTable& prof, const LinkModel& link)
      : g_(g), prof_(prof), link_(link), ops_(g.operator_order()) {
    for (auto o : ops_) limits_.push_back(g.node(o).out_units);
    device_only_T_ = evaluate_schedule(g, prof, link, plan_device_only(g), false).T;
  }

  std::size_t genes() const { return 2 * ops_.size(); }
  double upper(std::size_t gene) const { return static_cast<double>(limits_[gene / 2]); }
  double device_only_makespan() const { return device_only_T_; }

  // Round to integers, clip to [0, n], then order each pair so b <= a.
  void repair(std::vector<double>& x) const {
    for (std::size_t k = 0; k < ops_.size(); ++k) {
      double& a = x[2 * k];
      double& b = x[2 * k + 1];
      const double n = static_cast<double>(limits_[k]);
      a = std::clamp(std::nearbyint(a), 0.0, n);
      b = std::clamp(std::nearbyint(b), 0.0, n);
      if (b > a) std::swap(a, b);
    }
  }

  SchedulePlan decode(const std::vector<double>& x) const {
    std::vector<Units> a(ops_.size()), b(ops_.size());
    for (std::size_t k = 0; k < ops_.size(); ++k) {
      a[k] = static_cast<Units>(x[2 * k]);
      b[k] = static_cast<Units>(x[2 * k + 1]);
    }
    return SchedulePlan::from_splits(g_, a, b);
  }

  std::vector<double> encode(const SchedulePlan& p) const {
    std::vector<double> x(genes());
    for (std::size_t k = 0; k < ops_.size(); ++k) {
      const Units n = limits_[k];
      x[2 * k] = static_cast<double>(p.m[ops_[k]].empty() ? 0 : p.m[ops_[k]].hi);
      x[2 * k + 1] = static_cast<double>(p.r[ops_[k]].empty() ? n : p.r[ops_[k]].lo);
    }
    return x;
  }

  struct Score {
    double fitness;
    double makespan;
    std::size_t violations;
  };

  Score score(const std::vector<double>& x) const {
    const SchedulePlan p = decode(x);
    const Feasibility f = is_feasible(g_, p);
    const std::size_t viol = f.count(ViolationKind::Oversize) + f.count(ViolationKind::Location);
    const double T = evaluate_schedule(g_, prof_, link_, p, false).T;
    const double fit = T + 10.0 * device_only_T_ * static_cast<double>(viol);
    return {fit, T, viol};
  }

 private:
  const ModelGraph& g_;
  const ProfileTable& prof_;
  const LinkModel& link_;
  std::vector<std::size_t> ops_;
  std::vector<Units> limits_;
  double device_only_T_ = 0.0;
};

}  // namespace detail

/// Baseline plans used to seed the population: device-only, server-only and
/// every single-split layer partition.
inline std::vector<SchedulePlan> baseline_plans(const ModelGraph& g) {
  std::vector<SchedulePlan> out{plan_device_only(g), plan_server_only(g)};
  const std::size_t k = g.operator_order().size();
  for (std::size_t s = 0; s <= k; ++s) out.push_back(plan_layer_split(g, s));
  return out;
}

/// Minimizes the makespan with rand/1/bin differential evolution. Oversize
/// transfers are penalized, the pair ordering is repaired, and the best
/// feasible plan ever evaluated is returned.
inline SolveResult solve_loss(const ModelGraph& g, const ProfileTable& prof, const LinkModel& link,
                              const DEConfig& cfg) {
  cfg.validate();
  detail::LossProblem prob(g, prof, link);
  const std::size_t dim = prob.genes();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::vector<double>> pop;
  if (cfg.seed_with_baselines) {
    for (const auto& p : baseline_plans(g)) pop.push_back(prob.encode(p));
  }
  const std::size_t np = std::max(cfg.population, pop.size());
  while (pop.size() < np) {
    std::vector<double> x(dim);
    for (std::size_t j = 0; j < dim; ++j) x[j] = unit(rng) * prob.upper(j);
    prob.repair(x);
    pop.push_back(std::move(x));
  }

  SolveResult best;
  bool have_best = false;
  std::size_t evals = 0;
  auto consider = [&](const std::vector<double>& x, const detail::LossProblem::Score& s) {
    if (s.violations != 0) return;
    if (!have_best || s.makespan < best.makespan) {
      best.plan = prob.decode(x);
      best.makespan = s.makespan;
      have_best = true;
    }
  };

  std::vector<detail::LossProblem::Score> score(np);
  for (std::size_t i = 0; i < np; ++i) {
    score[i] = prob.score(pop[i]);
    ++evals;
    consider(pop[i], score[i]);
  }

  std::uniform_int_distribution<std::size_t> pick(0, np - 1);
  std::uniform_int_distribution<std::size_t> pick_gene(0, dim == 0 ? 0 : dim - 1);
  std::vector<double> trial(dim);
  for (std::size_t gen = 0; gen < cfg.generations && dim > 0; ++gen) {
    for (std::size_t i = 0; i < np; ++i) {
      std::size_t r1, r2, r3;
      do r1 = pick(rng); while (r1 == i);
      do r2 = pick(rng); while (r2 == i || r2 == r1);
      do r3 = pick(rng); while (r3 == i || r3 == r1 || r3 == r2);
      const std::size_t jrand = pick_gene(rng);
      for (std::size_t j = 0; j < dim; ++j) {
        if (j == jrand || unit(rng) < cfg.crossover_rate) {
          double v = pop[r1][j] + cfg.differential_weight * (pop[r2][j] - pop[r3][j]);
          // Reflect back into [0, n].
          const double hi = prob.upper(j);
          if (v < 0.0) v = std::min(-v, hi);
          if (v > hi) v = std::max(2.0 * hi - v, 0.0);
          trial[j] = v;
        } else {
          trial[j] = pop[i][j];
        }
      }
      prob.repair(trial);
      const auto s = prob.score(trial);
      ++evals;
      consider(trial, s);
      if (s.fitness <= score[i].fitness) {
        pop[i] = trial;
        score[i] = s;
      }
    }
  }
  if (!have_best) throw Error(Errc::NoFeasibleIndividual, "no evaluated plan satisfied every constraint");
  best.evaluations = evals;
  return best;
}

}  // namespace intradp
