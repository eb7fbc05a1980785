#include "linfreq/regress/forest.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "linfreq/error.hpp"
#include "linfreq/parallel.hpp"
#include "linfreq/random.hpp"

namespace linfreq::regress {

namespace {

struct Split {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
};

// Maximises S_L^2 / n_L + S_R^2 / n_R, which is the same as minimising the
// children's summed squared error.
Split best_split(const TrainingSet& data, std::span<const std::size_t> idx, std::size_t min_leaf,
                 std::vector<std::size_t>& order) {
  const std::size_t n = idx.size();
  double total = 0;
  for (auto i : idx) total += data.y[i];
  double sumsq = 0;
  for (auto i : idx) sumsq += data.y[i] * data.y[i];
  // Gains below this are rounding noise, not a real reduction in error.
  const double tol = 1e-12 * sumsq;
  double best = total * total / double(n);
  Split split;
  order.assign(idx.begin(), idx.end());
  for (std::size_t f = 0; f < data.n_features; ++f) {
    auto key = [&](std::size_t i) { return data.x[i * data.n_features + f]; };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return key(a) < key(b) || (key(a) == key(b) && a < b);
    });
    double left = 0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      left += data.y[order[k]];
      const double lo = key(order[k]);
      const double hi = key(order[k + 1]);
      if (!(lo < hi)) continue;
      const std::size_t nl = k + 1;
      const std::size_t nr = n - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      const double right = total - left;
      const double score = left * left / double(nl) + right * right / double(nr);
      if (score > best + tol) {
        best = score;
        split = {true, f, lo + (hi - lo) / 2};
      }
    }
  }
  return split;
}

}  // namespace

double Tree::predict(std::span<const double> x) const {
  std::uint32_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& nd = nodes[i];
    i = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
  }
  return nodes[i].value;
}

TrainingSet TrainingSet::from_table(const FeatureTable& t) {
  TrainingSet d;
  d.n_features = t.feature_names.size();
  for (const auto& r : t.rows) {
    if (r.features.size() != d.n_features) {
      throw InvalidArgument("feature row has " + std::to_string(r.features.size()) +
                            " values, table has " + std::to_string(d.n_features) + " columns");
    }
    d.x.insert(d.x.end(), r.features.begin(), r.features.end());
    d.y.push_back(r.target_ln_count);
  }
  return d;
}

Tree train_tree(const TrainingSet& data, std::span<const std::size_t> sample, const TreeOptions& opts) {
  if (sample.empty()) throw InvalidArgument("cannot train a tree on an empty sample");
  if (data.n_features == 0) throw InvalidArgument("cannot train a tree without features");
  const std::size_t min_leaf = std::max<std::size_t>(1, opts.min_samples_leaf);
  Tree tree;
  std::vector<std::size_t> idx(sample.begin(), sample.end());
  std::vector<std::size_t> order;
  struct Pending {
    std::uint32_t node;
    std::size_t begin;
    std::size_t end;
    std::size_t depth;
  };
  std::vector<Pending> stack;
  tree.nodes.push_back({});
  stack.push_back({0, 0, idx.size(), 0});
  while (!stack.empty()) {
    const Pending p = stack.back();
    stack.pop_back();
    const std::span<const std::size_t> here(idx.data() + p.begin, p.end - p.begin);
    double sum = 0;
    for (auto i : here) sum += data.y[i];
    tree.nodes[p.node].value = sum / double(here.size());
    if (opts.max_depth != 0 && p.depth >= opts.max_depth) continue;
    if (here.size() < 2 * min_leaf) continue;
    const Split s = best_split(data, here, min_leaf, order);
    if (!s.found) continue;
    const auto mid = std::stable_partition(
        idx.begin() + static_cast<std::ptrdiff_t>(p.begin), idx.begin() + static_cast<std::ptrdiff_t>(p.end),
        [&](std::size_t i) { return data.x[i * data.n_features + s.feature] <= s.threshold; });
    const std::size_t cut = static_cast<std::size_t>(mid - idx.begin());
    const auto left = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes.push_back({});
    auto& nd = tree.nodes[p.node];
    nd.feature = static_cast<std::int32_t>(s.feature);
    nd.threshold = s.threshold;
    nd.left = left;
    nd.right = left + 1;
    // Right first so the left subtree is expanded next; node numbering is
    // then fixed by the data alone.
    stack.push_back({left + 1, cut, p.end, p.depth + 1});
    stack.push_back({left, p.begin, cut, p.depth + 1});
  }
  return tree;
}

double Forest::predict(std::span<const double> x) const {
  if (x.size() != feature_names.size()) {
    throw InvalidArgument("feature vector has " + std::to_string(x.size()) + " values, forest expects " +
                          std::to_string(feature_names.size()));
  }
  double sum = 0;
  for (const auto& t : trees) sum += t.predict(x);
  return sum / double(trees.size());
}

std::vector<double> Forest::predict(const FeatureTable& t) const {
  if (t.feature_names != feature_names) {
    throw InvalidArgument("feature table columns do not match the forest's features");
  }
  std::vector<double> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) out.push_back(predict(r.features));
  return out;
}

std::vector<bool> Forest::used_features() const {
  std::vector<bool> used(feature_names.size(), false);
  for (const auto& t : trees) {
    for (const auto& n : t.nodes) {
      if (n.feature >= 0) used[static_cast<std::size_t>(n.feature)] = true;
    }
  }
  return used;
}

Forest train_forest(const FeatureTable& table, const ForestOptions& opts) {
  if (table.feature_names.empty()) throw InvalidArgument("forest needs at least one feature");
  if (table.rows.empty()) throw InvalidArgument("forest needs at least one training row");
  if (opts.n_trees == 0) throw InvalidArgument("forest needs at least one tree");
  FeatureTable sorted = table;
  sorted.sort_rows();
  const TrainingSet data = TrainingSet::from_table(sorted);
  Forest f;
  f.feature_names = table.feature_names;
  f.options = opts;
  f.trees.resize(opts.n_trees);
  const std::size_t n = data.size();
  parallel_ranges(opts.n_trees, opts.workers, [&](std::size_t begin, std::size_t end, unsigned) {
    std::vector<std::size_t> sample(n);
    for (std::size_t t = begin; t < end; ++t) {
      if (opts.bootstrap) {
        Rng rng(derive_seed(opts.seed, t));
        for (auto& s : sample) s = uniform_index(rng, n);
      } else {
        std::iota(sample.begin(), sample.end(), std::size_t{0});
      }
      f.trees[t] = train_tree(data, sample, opts.tree);
    }
  });
  return f;
}

static_assert(std::endian::native == std::endian::little, "artifact I/O assumes a little-endian host");

void save_forest(const Forest& f, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << "linfreq-forest 1\n"
      << "seed " << f.options.seed << "\n"
      << "n_trees " << f.trees.size() << "\n"
      << "bootstrap " << (f.options.bootstrap ? 1 : 0) << "\n"
      << "max_depth " << f.options.tree.max_depth << "\n"
      << "min_samples_leaf " << f.options.tree.min_samples_leaf << "\n"
      << "features";
  for (const auto& n : f.feature_names) out << ' ' << n;
  out << "\ndata\n";
  for (const auto& t : f.trees) {
    const std::uint64_t count = t.nodes.size();
    out.write(reinterpret_cast<const char*>(&count), 8);
    for (const auto& nd : t.nodes) {
      char buf[28];
      std::memcpy(buf, &nd.feature, 4);
      std::memcpy(buf + 4, &nd.threshold, 8);
      std::memcpy(buf + 12, &nd.left, 4);
      std::memcpy(buf + 16, &nd.right, 4);
      std::memcpy(buf + 20, &nd.value, 8);
      out.write(buf, sizeof buf);
    }
  }
  if (!out) throw IoError("write failed for " + file.string());
}

Forest load_forest(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::string line;
  std::getline(in, line);
  if (line != "linfreq-forest 1") throw IoError(file.string() + ": not a forest artifact");
  Forest f;
  std::size_t n_trees = 0;
  while (std::getline(in, line) && line != "data") {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "seed") ls >> f.options.seed;
    else if (key == "n_trees") ls >> n_trees;
    else if (key == "bootstrap") ls >> f.options.bootstrap;
    else if (key == "max_depth") ls >> f.options.tree.max_depth;
    else if (key == "min_samples_leaf") ls >> f.options.tree.min_samples_leaf;
    else if (key == "features") {
      std::string name;
      while (ls >> name) f.feature_names.push_back(name);
      continue;
    } else {
      throw IoError(file.string() + ": unknown header key '" + key + "'");
    }
    if (!ls) throw IoError(file.string() + ": bad header line '" + line + "'");
  }
  if (line != "data") throw IoError(file.string() + ": incomplete header");
  f.options.n_trees = n_trees;
  f.trees.resize(n_trees);
  for (auto& t : f.trees) {
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), 8);
    if (!in || count == 0 || count > (1u << 30)) throw IntegrityError(file.string() + ": bad tree record");
    t.nodes.resize(count);
    for (auto& nd : t.nodes) {
      char buf[28];
      in.read(buf, sizeof buf);
      std::memcpy(&nd.feature, buf, 4);
      std::memcpy(&nd.threshold, buf + 4, 8);
      std::memcpy(&nd.left, buf + 12, 4);
      std::memcpy(&nd.right, buf + 16, 4);
      std::memcpy(&nd.value, buf + 20, 8);
    }
    if (!in) throw IntegrityError(file.string() + ": tree data truncated");
    for (const auto& nd : t.nodes) {
      if (nd.feature >= static_cast<std::int32_t>(f.feature_names.size()) ||
          (nd.feature >= 0 && (nd.left >= count || nd.right >= count))) {
        throw IntegrityError(file.string() + ": tree node out of range");
      }
    }
  }
  return f;
}

}  // namespace linfreq::regress
