#pragma once

#include <span>
#include <vector>

#include "linfreq/lre/lre.hpp"

namespace linfreq::lre {

// 21 evenly spaced values over [0, 5].
std::vector<double> default_beta_grid();

// Every 2 up to 100, every 5 up to 200, every 25 up to 500, every 50 up to
// 1000, then every 250, capped at max_rank. Rank 0 is dropped and max_rank is
// always included.
std::vector<std::size_t> default_rank_schedule(std::size_t max_rank);

struct SweepOptions {
  std::vector<double> beta_grid;            // empty: default_beta_grid()
  std::vector<std::size_t> rank_schedule;   // empty: default_rank_schedule()
  std::vector<std::size_t> probes;          // empty: every probe point
  unsigned workers = 1;
  JacobianOptions jacobian;
};

struct BetaPoint {
  std::size_t probe = 0;
  double beta = 0.0;
  double faithfulness = 0.0;
  double faith_prob = 0.0;
};

struct RankPoint {
  std::size_t probe = 0;
  std::size_t rank = 0;
  double soft_causality = 0.0;
  double hard_causality = 0.0;
};

struct SweepResult {
  std::size_t probe = 0;
  double beta = 1.0;
  std::size_t rank = 0;
  Lre lre;  // fitted at the chosen probe with the chosen beta and rank
  std::vector<BetaPoint> beta_surface;
  std::vector<RankPoint> rank_surface;
};

// Fits one LRE per probe point on fit_ids, then scores faithfulness over the
// beta grid and causality over the rank schedule on all examples. Within a
// probe the best rank maximises hard causality (ties to the smaller rank); the
// probe with the best such causality wins (ties to the smaller probe). Beta
// maximises faithfulness at the chosen probe (ties to the smaller beta).
SweepResult sweep_hyperparams(const RelationModel& model, std::span<const RelationExample> examples,
                              std::span<const std::size_t> fit_ids, const SweepOptions& opts = {});

}  // namespace linfreq::lre
