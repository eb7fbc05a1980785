#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "linfreq/random.hpp"
#include "linfreq/regress/features.hpp"
#include "linfreq/regress/forest.hpp"

namespace oracle {

// Recursive CART written from the definition: every feature, every midpoint
// between distinct sorted values, children's summed squared error computed
// directly. The first strictly better split in (feature, threshold) order wins.
struct CartNode {
  int feature = -1;
  double threshold = 0;
  double value = 0;
  std::unique_ptr<CartNode> left, right;

  double predict(const std::vector<double>& x) const {
    if (feature < 0) return value;
    return x[std::size_t(feature)] <= threshold ? left->predict(x) : right->predict(x);
  }
};

inline double sse(const std::vector<double>& y) {
  if (y.empty()) return 0;
  double m = 0;
  for (double v : y) m += v;
  m /= double(y.size());
  double s = 0;
  for (double v : y) s += (v - m) * (v - m);
  return s;
}

inline std::unique_ptr<CartNode> brute_cart(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  auto node = std::make_unique<CartNode>();
  double mean = 0;
  for (double v : y) mean += v;
  node->value = mean / double(y.size());
  double sumsq = 0;
  for (double v : y) sumsq += v * v;
  const double tol = 1e-12 * sumsq;
  double best = sse(y);
  int bf = -1;
  double bt = 0;
  for (std::size_t f = 0; f < x[0].size(); ++f) {
    std::vector<double> vals;
    for (const auto& r : x) vals.push_back(r[f]);
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
      const double t = vals[k] + (vals[k + 1] - vals[k]) / 2;
      std::vector<double> yl, yr;
      for (std::size_t i = 0; i < x.size(); ++i) (x[i][f] <= t ? yl : yr).push_back(y[i]);
      const double s = sse(yl) + sse(yr);
      if (s < best - tol) {
        best = s;
        bf = int(f);
        bt = t;
      }
    }
  }
  if (bf < 0) return node;
  node->feature = bf;
  node->threshold = bt;
  std::vector<std::vector<double>> xl, xr;
  std::vector<double> yl, yr;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i][std::size_t(bf)] <= bt) {
      xl.push_back(x[i]);
      yl.push_back(y[i]);
    } else {
      xr.push_back(x[i]);
      yr.push_back(y[i]);
    }
  }
  node->left = brute_cart(xl, yl);
  node->right = brute_cart(xr, yr);
  return node;
}

// Walks the stored node arrays independently of Tree::predict.
inline double walk(const linfreq::regress::Tree& t, const std::vector<double>& x) {
  std::size_t i = 0;
  for (;;) {
    const auto& n = t.nodes.at(i);
    if (n.feature < 0) return n.value;
    i = x.at(std::size_t(n.feature)) <= n.threshold ? n.left : n.right;
  }
}

inline linfreq::regress::FeatureTable random_table(linfreq::Rng& rng, std::size_t n_rel, std::size_t per_rel,
                                                   std::size_t n_features, std::size_t n_objects) {
  linfreq::regress::FeatureTable t;
  for (std::size_t f = 0; f < n_features; ++f) t.feature_names.push_back("f" + std::to_string(f));
  std::uint64_t id = 0;
  for (std::uint32_t r = 0; r < n_rel; ++r) {
    for (std::size_t i = 0; i < per_rel; ++i) {
      linfreq::regress::FeatureRow row;
      row.relation_id = r;
      row.example_id = id++;
      row.object_id = std::uint32_t(linfreq::uniform_index(rng, n_objects));
      for (std::size_t f = 0; f < n_features; ++f) row.features.push_back(linfreq::uniform_unit(rng));
      row.target_ln_count = std::log1p(2.0 + 1e4 * linfreq::uniform_unit(rng));
      t.rows.push_back(row);
    }
  }
  return t;
}

}  // namespace oracle
