#include "linfreq/lre/sweep.hpp"

#include <algorithm>
#include <numeric>

#include "linfreq/error.hpp"
#include "linfreq/parallel.hpp"

namespace linfreq::lre {

std::vector<double> default_beta_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(5.0 * i / 20.0);
  return grid;
}

std::vector<std::size_t> default_rank_schedule(std::size_t max_rank) {
  struct Band {
    std::size_t end;
    std::size_t step;
  };
  static constexpr Band kBands[] = {{100, 2}, {200, 5}, {500, 25}, {1000, 50}};
  std::vector<std::size_t> ranks;
  std::size_t r = 0;
  for (const auto& band : kBands) {
    for (; r < band.end; r += band.step) {
      if (r > 0 && r <= max_rank) ranks.push_back(r);
    }
  }
  for (; r <= max_rank; r += 250) {
    if (r > 0) ranks.push_back(r);
  }
  if (max_rank > 0 && (ranks.empty() || ranks.back() != max_rank)) ranks.push_back(max_rank);
  return ranks;
}

SweepResult sweep_hyperparams(const RelationModel& model, std::span<const RelationExample> examples,
                              std::span<const std::size_t> fit_ids, const SweepOptions& opts) {
  const std::size_t max_rank = std::min(model.subject_dim(), model.object_dim());
  const auto betas = opts.beta_grid.empty() ? default_beta_grid() : opts.beta_grid;
  const auto ranks = opts.rank_schedule.empty() ? default_rank_schedule(max_rank) : opts.rank_schedule;
  std::vector<std::size_t> probes = opts.probes;
  if (probes.empty()) {
    probes.resize(model.probe_count());
    std::iota(probes.begin(), probes.end(), std::size_t{0});
  }
  for (double b : betas) {
    if (!(b >= 0)) throw InvalidArgument("beta grid values must be nonnegative");
  }
  for (std::size_t r : ranks) {
    if (r < 1 || r > max_rank) {
      throw InvalidArgument("rank schedule value " + std::to_string(r) + " outside [1, " +
                            std::to_string(max_rank) + "]");
    }
  }
  for (std::size_t p : probes) {
    if (p >= model.probe_count()) {
      throw InvalidArgument("probe point " + std::to_string(p) + " out of range");
    }
  }
  const auto pairs = edit_pairs(examples);
  if (pairs.empty()) throw InvalidArgument("sweep needs examples with at least two objects");

  std::vector<Lre> fitted;
  for (std::size_t p : probes) fitted.push_back(fit_lre(model, examples, fit_ids, 1.0, p, opts.jacobian));

  SweepResult out;
  out.beta_surface.resize(probes.size() * betas.size());
  out.rank_surface.resize(probes.size() * ranks.size());
  const std::size_t n_beta = out.beta_surface.size();
  const std::size_t n_items = n_beta + out.rank_surface.size();
  parallel_ranges(n_items, opts.workers, [&](std::size_t begin, std::size_t end, unsigned) {
    for (std::size_t i = begin; i < end; ++i) {
      if (i < n_beta) {
        const std::size_t pi = i / betas.size();
        Lre lre = fitted[pi];
        lre.beta = betas[i % betas.size()];
        out.beta_surface[i] = {probes[pi], lre.beta, faithfulness(lre, model, examples),
                               faith_prob(lre, model, examples)};
      } else {
        const std::size_t j = i - n_beta;
        const std::size_t pi = j / ranks.size();
        const std::size_t rank = ranks[j % ranks.size()];
        const auto c = causality(fitted[pi], model, examples, pairs, rank);
        out.rank_surface[j] = {probes[pi], rank, c.soft, c.hard};
      }
    }
  });

  // Deterministic reduction in grid order; strict comparisons keep the
  // earlier (smaller) candidate on ties.
  std::size_t best_pi = 0;
  std::size_t best_rank = 0;
  double best_hard = -1.0;
  for (std::size_t pi = 0; pi < probes.size(); ++pi) {
    const RankPoint* probe_best = nullptr;
    for (std::size_t ri = 0; ri < ranks.size(); ++ri) {
      const auto& pt = out.rank_surface[pi * ranks.size() + ri];
      if (!probe_best || pt.hard_causality > probe_best->hard_causality ||
          (pt.hard_causality == probe_best->hard_causality && pt.rank < probe_best->rank)) {
        probe_best = &pt;
      }
    }
    if (probe_best->hard_causality > best_hard ||
        (probe_best->hard_causality == best_hard && probes[pi] < probes[best_pi])) {
      best_hard = probe_best->hard_causality;
      best_pi = pi;
      best_rank = probe_best->rank;
    }
  }
  const BetaPoint* beta_best = nullptr;
  for (std::size_t bi = 0; bi < betas.size(); ++bi) {
    const auto& pt = out.beta_surface[best_pi * betas.size() + bi];
    if (!beta_best || pt.faithfulness > beta_best->faithfulness ||
        (pt.faithfulness == beta_best->faithfulness && pt.beta < beta_best->beta)) {
      beta_best = &pt;
    }
  }
  out.probe = probes[best_pi];
  out.rank = best_rank;
  out.beta = beta_best->beta;
  out.lre = fitted[best_pi];
  out.lre.beta = out.beta;
  out.lre.rank = out.rank;
  return out;
}

}  // namespace linfreq::lre
