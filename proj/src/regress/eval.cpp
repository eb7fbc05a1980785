#include "linfreq/regress/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "linfreq/error.hpp"
#include "linfreq/random.hpp"

namespace linfreq::regress {

namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / double(v.size() - 1));
  }
  return m;
}

std::vector<double> targets(const FeatureTable& t) {
  std::vector<double> y;
  y.reserve(t.rows.size());
  for (const auto& r : t.rows) y.push_back(r.target_ln_count);
  return y;
}

FeatureTable subset(const FeatureTable& t, const std::vector<std::size_t>& idx) {
  FeatureTable out;
  out.feature_names = t.feature_names;
  out.rows.reserve(idx.size());
  for (auto i : idx) out.rows.push_back(t.rows[i]);
  return out;
}

double accuracy_ln(std::span<const double> pred_ln, std::span<const double> true_ln) {
  return score_ln(pred_ln, true_ln).accuracy;
}

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw InvalidArgument(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                          std::to_string(b) + ")");
  }
}

}  // namespace

double to_count(double ln_count) { return std::max(0.0, std::expm1(ln_count)); }

bool within_magnitude(double pred_count, double true_count) {
  const double p = std::max(1.0, pred_count);
  const double t = std::max(1.0, true_count);
  return p <= 10.0 * t && t <= 10.0 * p;
}

double magnitude_ratio(double pred_count, double true_count) {
  const double p = std::max(1.0, pred_count);
  const double t = std::max(1.0, true_count);
  return std::max(p, t) / std::min(p, t);
}

std::string ratio_label(double ratio) {
  char buf[64];
  if (ratio < 10.0) {
    std::snprintf(buf, sizeof buf, "%.1fx", ratio);
  } else {
    std::snprintf(buf, sizeof buf, "%.0fx", ratio);
  }
  return buf;
}

double within_magnitude_accuracy(std::span<const double> pred_counts, std::span<const double> true_counts) {
  check_lengths(pred_counts.size(), true_counts.size(), "within_magnitude_accuracy");
  if (pred_counts.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred_counts.size(); ++i) hits += within_magnitude(pred_counts[i], true_counts[i]);
  return double(hits) / double(pred_counts.size());
}

double mae_ln(std::span<const double> pred_ln, std::span<const double> true_ln) {
  check_lengths(pred_ln.size(), true_ln.size(), "mae_ln");
  if (pred_ln.empty()) return 0.0;
  double s = 0;
  for (std::size_t i = 0; i < pred_ln.size(); ++i) s += std::abs(pred_ln[i] - true_ln[i]);
  return s / double(pred_ln.size());
}

double pearson(std::span<const double> x, std::span<const double> y) {
  check_lengths(x.size(), y.size(), "pearson");
  if (x.size() < 2) throw InvalidArgument("pearson needs at least two points");
  const double n = double(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw InvalidArgument("pearson is undefined for a zero-variance input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Scores score_ln(std::span<const double> pred_ln, std::span<const double> true_ln) {
  check_lengths(pred_ln.size(), true_ln.size(), "score_ln");
  Scores s;
  s.n = pred_ln.size();
  std::vector<double> pc, tc;
  pc.reserve(s.n);
  tc.reserve(s.n);
  for (std::size_t i = 0; i < s.n; ++i) {
    pc.push_back(to_count(pred_ln[i]));
    tc.push_back(to_count(true_ln[i]));
  }
  s.accuracy = within_magnitude_accuracy(pc, tc);
  s.mae_ln = mae_ln(pred_ln, true_ln);
  return s;
}

Baselines baselines(std::span<const double> train_ln, std::span<const double> eval_ln, std::uint64_t seed) {
  if (train_ln.empty()) throw InvalidArgument("baselines need a nonempty training set");
  Baselines b;
  const double mean = std::accumulate(train_ln.begin(), train_ln.end(), 0.0) / double(train_ln.size());
  const std::vector<double> mean_pred(eval_ln.size(), mean);
  b.mean_accuracy = accuracy_ln(mean_pred, eval_ln);
  Rng rng(seed);
  std::vector<double> random_pred;
  random_pred.reserve(eval_ln.size());
  for (std::size_t i = 0; i < eval_ln.size(); ++i) random_pred.push_back(train_ln[uniform_index(rng, train_ln.size())]);
  b.random_accuracy = accuracy_ln(random_pred, eval_ln);
  return b;
}

EvalReport evaluate(const Forest& forest, const FeatureTable& train, const FeatureTable& eval, std::uint64_t seed) {
  if (eval.rows.empty()) throw InvalidArgument("evaluation set is empty");
  EvalReport r;
  r.predicted_ln = forest.predict(eval);
  r.true_ln = targets(eval);
  r.overall = score_ln(r.predicted_ln, r.true_ln);
  std::map<std::uint32_t, std::pair<std::vector<double>, std::vector<double>>> by_rel;
  for (std::size_t i = 0; i < eval.rows.size(); ++i) {
    auto& [p, t] = by_rel[eval.rows[i].relation_id];
    p.push_back(r.predicted_ln[i]);
    t.push_back(r.true_ln[i]);
  }
  for (const auto& [rel, pt] : by_rel) r.per_relation.push_back({rel, score_ln(pt.first, pt.second)});
  r.baseline = baselines(targets(train), r.true_ln, seed);
  return r;
}

std::vector<Fold> loro_folds(const FeatureTable& sorted, std::span<const std::uint64_t> seeds) {
  std::set<std::uint32_t> relations;
  for (const auto& r : sorted.rows) relations.insert(r.relation_id);
  if (relations.size() < 2) throw InvalidArgument("leave-one-relation-out needs at least two relations");
  if (seeds.empty()) throw InvalidArgument("leave-one-relation-out needs at least one seed");
  std::vector<Fold> base;
  for (auto rel : relations) {
    Fold f;
    f.relation_id = rel;
    std::set<std::uint32_t> held_objects;
    for (const auto& r : sorted.rows) {
      if (r.relation_id == rel) held_objects.insert(r.object_id);
    }
    for (std::size_t i = 0; i < sorted.rows.size(); ++i) {
      const auto& r = sorted.rows[i];
      if (r.relation_id == rel) {
        f.eval.push_back(i);
      } else if (!held_objects.count(r.object_id)) {
        f.train.push_back(i);
      }
    }
    if (f.train.empty()) {
      throw InvalidArgument("holding out relation " + std::to_string(rel) +
                            " leaves no training rows after removing shared objects");
    }
    base.push_back(std::move(f));
  }
  std::vector<Fold> folds;
  for (auto seed : seeds) {
    for (const auto& f : base) {
      folds.push_back(f);
      folds.back().seed = seed;
    }
  }
  return folds;
}

CvReport loro_cv(const FeatureTable& table, const CvOptions& opts) {
  FeatureTable sorted = table;
  sorted.sort_rows();
  const auto folds = loro_folds(sorted, opts.seeds);
  CvReport cv;
  cv.feature_names = table.feature_names;
  std::vector<double> acc, mae, mean_b, rand_b, pooled_pred, pooled_true;
  for (const auto& f : folds) {
    const FeatureTable train = subset(sorted, f.train);
    const FeatureTable eval = subset(sorted, f.eval);
    ForestOptions fo = opts.forest;
    fo.seed = derive_seed(f.seed, f.relation_id);
    const Forest forest = train_forest(train, fo);
    FoldResult fr;
    fr.seed = f.seed;
    fr.relation_id = f.relation_id;
    fr.n_train = train.rows.size();
    fr.report = evaluate(forest, train, eval, fo.seed);
    acc.push_back(fr.report.overall.accuracy);
    mae.push_back(fr.report.overall.mae_ln);
    mean_b.push_back(fr.report.baseline.mean_accuracy);
    rand_b.push_back(fr.report.baseline.random_accuracy);
    pooled_pred.insert(pooled_pred.end(), fr.report.predicted_ln.begin(), fr.report.predicted_ln.end());
    pooled_true.insert(pooled_true.end(), fr.report.true_ln.begin(), fr.report.true_ln.end());
    cv.folds.push_back(std::move(fr));
  }
  cv.accuracy = mean_std(acc);
  cv.mae_ln = mean_std(mae);
  cv.mean_baseline = mean_std(mean_b);
  cv.random_baseline = mean_std(rand_b);
  cv.pooled_accuracy = accuracy_ln(pooled_pred, pooled_true);
  return cv;
}

std::vector<double> permutation_importance(const Forest& forest, const FeatureTable& eval, std::size_t n_repeats,
                                           std::uint64_t seed) {
  if (eval.rows.empty()) throw InvalidArgument("permutation importance needs evaluation rows");
  if (n_repeats == 0) throw InvalidArgument("permutation importance needs at least one repeat");
  const std::vector<double> truth = targets(eval);
  const double base = accuracy_ln(forest.predict(eval), truth);
  const std::size_t k = eval.feature_names.size();
  std::vector<double> drops(k, 0.0);
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<double> column;
    for (const auto& r : eval.rows) column.push_back(r.features[f]);
    double total = 0;
    for (std::size_t rep = 0; rep < n_repeats; ++rep) {
      std::vector<double> shuffled = column;
      Rng rng(derive_seed(derive_seed(seed, f), rep));
      shuffle(std::span<double>(shuffled), rng);
      FeatureTable perm = eval;
      for (std::size_t i = 0; i < perm.rows.size(); ++i) perm.rows[i].features[f] = shuffled[i];
      total += base - accuracy_ln(forest.predict(perm), truth);
    }
    drops[f] = total / double(n_repeats);
  }
  return drops;
}

ImportanceReport cv_permutation_importance(const FeatureTable& table, const CvOptions& opts, std::size_t n_repeats) {
  if (n_repeats == 0) throw InvalidArgument("permutation importance needs at least one repeat");
  FeatureTable sorted = table;
  sorted.sort_rows();
  const auto folds = loro_folds(sorted, opts.seeds);
  const std::size_t k = sorted.feature_names.size();
  const std::size_t n = sorted.rows.size();
  const std::vector<double> truth = targets(sorted);

  ImportanceReport rep;
  rep.feature_names = sorted.feature_names;
  rep.mean_drop.assign(k, 0.0);
  for (const auto seed : opts.seeds) {
    // Forests for this seed; together their held-out rows cover the table once.
    std::vector<const Fold*> fs;
    std::vector<Forest> forests;
    for (const auto& f : folds) {
      if (f.seed != seed) continue;
      ForestOptions fo = opts.forest;
      fo.seed = derive_seed(f.seed, f.relation_id);
      fs.push_back(&f);
      forests.push_back(train_forest(subset(sorted, f.train), fo));
    }
    auto pooled_accuracy = [&](const FeatureTable& t) {
      std::vector<double> pred, obs;
      for (std::size_t i = 0; i < fs.size(); ++i) {
        for (auto r : fs[i]->eval) {
          pred.push_back(forests[i].predict(t.rows[r].features));
          obs.push_back(truth[r]);
        }
      }
      return accuracy_ln(pred, obs);
    };
    const double base = pooled_accuracy(sorted);
    for (std::size_t f = 0; f < k; ++f) {
      for (std::size_t r = 0; r < n_repeats; ++r) {
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        Rng rng(derive_seed(derive_seed(derive_seed(seed, 0x9e37), f), r));
        shuffle(std::span<std::size_t>(perm), rng);
        FeatureTable t = sorted;
        for (std::size_t i = 0; i < n; ++i) t.rows[i].features[f] = sorted.rows[perm[i]].features[f];
        rep.mean_drop[f] += (base - pooled_accuracy(t)) / double(n_repeats * opts.seeds.size());
      }
    }
  }
  rep.ranking.resize(k);
  std::iota(rep.ranking.begin(), rep.ranking.end(), std::size_t{0});
  std::stable_sort(rep.ranking.begin(), rep.ranking.end(),
                   [&](std::size_t a, std::size_t b) { return rep.mean_drop[a] > rep.mean_drop[b]; });
  return rep;
}

PcaMerge pca_merge(const FeatureTable& table, std::span<const std::string> subset_names) {
  if (subset_names.size() < 2) throw InvalidArgument("pca merge needs at least two features");
  if (table.rows.size() < 2) throw InvalidArgument("pca merge needs at least two rows");
  std::vector<std::size_t> cols;
  for (const auto& n : subset_names) {
    const auto c = table.column(n);
    if (std::find(cols.begin(), cols.end(), c) != cols.end()) throw InvalidArgument("pca merge lists '" + n + "' twice");
    cols.push_back(c);
  }
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  const auto k = static_cast<Eigen::Index>(cols.size());
  Eigen::MatrixXd z(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) z(i, j) = table.rows[std::size_t(i)].features[cols[std::size_t(j)]];
  }
  for (Eigen::Index j = 0; j < k; ++j) {
    const double mean = z.col(j).mean();
    z.col(j).array() -= mean;
    const double sd = std::sqrt(z.col(j).squaredNorm() / double(n));
    if (!(sd > 0.0)) throw InvalidArgument("pca merge: column '" + subset_names[std::size_t(j)] + "' has zero variance");
    z.col(j) /= sd;
  }
  const Eigen::MatrixXd corr = z.transpose() * z / double(n);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
  Eigen::VectorXd v = es.eigenvectors().col(k - 1);
  if (v(0) < 0.0) v = -v;
  const Eigen::VectorXd score = z * v;

  PcaMerge out;
  out.explained_variance_ratio = es.eigenvalues()(k - 1) / corr.trace();
  out.loadings.assign(v.data(), v.data() + k);
  out.column_name = "pc1(";
  for (std::size_t j = 0; j < subset_names.size(); ++j) out.column_name += (j ? "," : "") + subset_names[j];
  out.column_name += ")";

  const std::size_t first = *std::min_element(cols.begin(), cols.end());
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < table.feature_names.size(); ++c) {
    if (c == first || std::find(cols.begin(), cols.end(), c) == cols.end()) keep.push_back(c);
  }
  out.table.feature_names.clear();
  for (auto c : keep) out.table.feature_names.push_back(c == first ? out.column_name : table.feature_names[c]);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    FeatureRow r = table.rows[i];
    r.features.clear();
    for (auto c : keep) r.features.push_back(c == first ? score(Eigen::Index(i)) : table.rows[i].features[c]);
    out.table.rows.push_back(std::move(r));
  }
  return out;
}

EvalReport cross_model_transfer(const Forest& forest, const FeatureTable& train, const FeatureTable& eval,
                                const TransferOptions& opts) {
  if (!(opts.token_ratio > 0.0) || !std::isfinite(opts.token_ratio)) {
    throw InvalidArgument("token_ratio must be positive and finite");
  }
  if (eval.rows.empty()) throw InvalidArgument("transfer evaluation set is empty");
  FeatureTable scaled = eval;
  for (auto& r : scaled.rows) r.target_ln_count = std::log1p(std::expm1(r.target_ln_count) / opts.token_ratio);
  EvalReport rep = evaluate(forest, train, scaled, opts.seed);
  rep.source_model = opts.source_model;
  rep.target_model = opts.target_model;
  rep.token_ratio = opts.token_ratio;
  return rep;
}

void write_eval_report(const EvalReport& r, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << "# target_space\tln(1+count)\n";
  if (!r.source_model.empty() || !r.target_model.empty() || r.token_ratio != 1.0) {
    out << "# source_model\t" << r.source_model << "\n"
        << "# target_model\t" << r.target_model << "\n"
        << "# token_ratio\t" << fixed(r.token_ratio) << "\n"
        << "# scaling\tground-truth counts divided by token_ratio\n";
  }
  out << "scope\trelation_id\tn\taccuracy\tmae_ln\n";
  out << "overall\t-\t" << r.overall.n << '\t' << fixed(r.overall.accuracy) << '\t' << fixed(r.overall.mae_ln) << '\n';
  for (const auto& pr : r.per_relation) {
    out << "relation\t" << pr.relation_id << '\t' << pr.scores.n << '\t' << fixed(pr.scores.accuracy) << '\t'
        << fixed(pr.scores.mae_ln) << '\n';
  }
  out << "baseline_mean\t-\t" << r.overall.n << '\t' << fixed(r.baseline.mean_accuracy) << "\t-\n";
  out << "baseline_random\t-\t" << r.overall.n << '\t' << fixed(r.baseline.random_accuracy) << "\t-\n";
}

void write_cv_report(const CvReport& cv, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << "# features\t";
  for (std::size_t i = 0; i < cv.feature_names.size(); ++i) out << (i ? "," : "") << cv.feature_names[i];
  out << "\n# target_space\tln(1+count)\n";
  out << "row\tseed\trelation_id\tn_train\tn_eval\taccuracy\tmae_ln\tmean_baseline\trandom_baseline\n";
  for (const auto& f : cv.folds) {
    out << "fold\t" << f.seed << '\t' << f.relation_id << '\t' << f.n_train << '\t' << f.report.overall.n << '\t'
        << fixed(f.report.overall.accuracy) << '\t' << fixed(f.report.overall.mae_ln) << '\t'
        << fixed(f.report.baseline.mean_accuracy) << '\t' << fixed(f.report.baseline.random_accuracy) << '\n';
  }
  out << "mean\t-\t-\t-\t-\t" << fixed(cv.accuracy.mean) << '\t' << fixed(cv.mae_ln.mean) << '\t'
      << fixed(cv.mean_baseline.mean) << '\t' << fixed(cv.random_baseline.mean) << '\n';
  out << "std\t-\t-\t-\t-\t" << fixed(cv.accuracy.std) << '\t' << fixed(cv.mae_ln.std) << '\t'
      << fixed(cv.mean_baseline.std) << '\t' << fixed(cv.random_baseline.std) << '\n';
  out << "pooled\t-\t-\t-\t-\t" << fixed(cv.pooled_accuracy) << "\t-\t-\t-\n";
}

void write_importance(const ImportanceReport& rep, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << "rank\tfeature\taccuracy_drop\n";
  for (std::size_t i = 0; i < rep.ranking.size(); ++i) {
    const auto f = rep.ranking[i];
    out << i + 1 << '\t' << rep.feature_names[f] << '\t' << fixed(rep.mean_drop[f]) << '\n';
  }
}

}  // namespace linfreq::regress
