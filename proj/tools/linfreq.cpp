#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "linfreq/corpus/dictionary.hpp"
#include "linfreq/corpus/scan.hpp"
#include "linfreq/corpus/synth.hpp"
#include "linfreq/lre/relation.hpp"
#include "linfreq/lre/sweep.hpp"
#include "linfreq/pipeline/plant.hpp"
#include "linfreq/pipeline/run.hpp"
#include "linfreq/random.hpp"
#include "linfreq/regress/eval.hpp"
#include "linfreq/regress/forest.hpp"

namespace fs = std::filesystem;
using namespace linfreq;

namespace {

// Exit codes.
constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

struct Globals {
  std::uint64_t seed = 0;
  unsigned shards = 1;
  std::string out;
};

std::string need_out(const Globals& g) {
  if (g.out.empty()) throw InvalidArgument("--out is required");
  return g.out;
}

corpus::PairMode pair_mode(const std::string& s) {
  if (s == "presence") return corpus::PairMode::kPresence;
  if (s == "product") return corpus::PairMode::kProduct;
  throw InvalidArgument("pair mode must be presence or product");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& t : split_list(s)) out.push_back(std::stoull(t));
  if (out.empty()) throw InvalidArgument("--seeds needs at least one seed");
  return out;
}

void print_scores(const char* label, const regress::CvReport& r) {
  std::printf("%s\taccuracy %.4f +- %.4f\tmae_ln %.4f\tmean_baseline %.4f\trandom_baseline %.4f\n", label,
              r.accuracy.mean, r.accuracy.std, r.mae_ln.mean, r.mean_baseline.mean, r.random_baseline.mean);
}

struct ScanArgs {
  std::string corpus, dict, mode = "presence";
};

void add_scan_args(CLI::App* c, ScanArgs& a) {
  c->add_option("--corpus", a.corpus, "corpus directory")->required()->check(CLI::ExistingDirectory);
  c->add_option("--dict", a.dict, "term dictionary (JSON lines)")->required()->check(CLI::ExistingFile);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Term frequency counting, linear relational embeddings and frequency regression"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--shards", g.shards, "worker threads for scans and sweeps")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output file or directory");

  std::function<int()> action;

  // Corpus counting.
  ScanArgs count_args;
  std::string positions_file;
  auto* count = app.add_subcommand("count", "term occurrence counts");
  add_scan_args(count, count_args);
  count->add_option("--positions", positions_file, "also write match positions here");
  count->callback([&] {
    action = [&] {
      const corpus::Matcher m(corpus::TermDictionary::load(count_args.dict));
      const auto c = corpus::TokenCorpus::open(count_args.corpus);
      corpus::ScanOptions so;
      so.shards = g.shards;
      so.emit_positions = !positions_file.empty();
      const auto res = corpus::scan_corpus(m, c, so);
      corpus::write_occurrences_tsv(res.counts, need_out(g));
      if (so.emit_positions) corpus::write_positions_tsv(res.positions, positions_file);
      return kOk;
    };
  });

  ScanArgs cooc_args;
  auto* cooc = app.add_subcommand("cooc", "sequence-window pair counts");
  add_scan_args(cooc, cooc_args);
  cooc->add_option("--pair-mode", cooc_args.mode, "presence or product");
  cooc->callback([&] {
    action = [&] {
      const corpus::Matcher m(corpus::TermDictionary::load(cooc_args.dict));
      const auto c = corpus::TokenCorpus::open(cooc_args.corpus);
      corpus::ScanOptions so;
      so.shards = g.shards;
      so.pair_mode = pair_mode(cooc_args.mode);
      corpus::write_pairs_tsv(corpus::scan_corpus(m, c, so).counts, need_out(g));
      return kOk;
    };
  });

  ScanArgs doc_args;
  auto* doc = app.add_subcommand("doc-cooc", "document-window pair counts");
  add_scan_args(doc, doc_args);
  doc->callback([&] {
    action = [&] {
      const corpus::Matcher m(corpus::TermDictionary::load(doc_args.dict));
      const auto c = corpus::TokenCorpus::open(doc_args.corpus);
      corpus::write_pairs_tsv(corpus::document_counts(m, c, g.shards), need_out(g));
      return kOk;
    };
  });

  ScanArgs cp_args;
  std::string schedule;
  auto* cps = app.add_subcommand("checkpoints", "cumulative counts at token budgets; --out is a directory");
  add_scan_args(cps, cp_args);
  cps->add_option("--pair-mode", cp_args.mode, "presence or product");
  cps->add_option("--schedule", schedule, "comma-separated budgets, e.g. 1M,2M,4M")->required();
  cps->callback([&] {
    action = [&] {
      const corpus::Matcher m(corpus::TermDictionary::load(cp_args.dict));
      const auto c = corpus::TokenCorpus::open(cp_args.corpus);
      corpus::ScanOptions so;
      so.shards = g.shards;
      so.pair_mode = pair_mode(cp_args.mode);
      const auto res = corpus::cumulative_counts(m, c, corpus::CheckpointSchedule::parse(schedule), so);
      const fs::path dir = need_out(g);
      fs::create_directories(dir);
      corpus::write_checkpoints_tsv(res, dir / "occurrences.tsv", dir / "pairs.tsv");
      return kOk;
    };
  });

  std::string synth_spec, synth_truth, synth_mode = "presence";
  auto* synth = app.add_subcommand("synth", "generate a corpus with planted counts; --out is a directory");
  synth->add_option("--spec", synth_spec, "synthetic corpus spec (JSON)")->required()->check(CLI::ExistingFile);
  synth->add_option("--ground-truth", synth_truth, "write the expected pair counts here");
  synth->add_option("--pair-mode", synth_mode, "pair mode of the ground truth");
  synth->callback([&] {
    action = [&] {
      auto spec = corpus::load_synth_spec(synth_spec);
      if (app.count("--seed")) spec.seed = g.seed;
      const auto res = corpus::generate_synthetic_corpus(spec, pair_mode(synth_mode));
      res.corpus.write(need_out(g));
      if (!synth_truth.empty()) corpus::write_pairs_tsv(res.ground_truth, synth_truth);
      return kOk;
    };
  });

  std::vector<std::string> merge_inputs;
  auto* merge = app.add_subcommand("merge", "sum count tables of one layout");
  merge->add_option("inputs", merge_inputs, "count TSV files")->required()->check(CLI::ExistingFile);
  merge->callback([&] {
    action = [&] {
      corpus::CountTable total;
      bool pairs = false;
      for (const auto& f : merge_inputs) {
        const auto t = corpus::read_counts_tsv(f);
        pairs = pairs || !t.pair_counts.empty();
        corpus::merge_into(total, t);
      }
      if (pairs) {
        corpus::write_pairs_tsv(total, need_out(g));
      } else {
        corpus::write_occurrences_tsv(total, need_out(g));
      }
      return kOk;
    };
  });

  // LRE fitting and evaluation.
  std::string fit_relation;
  double fit_beta = 1.0;
  std::size_t fit_probe = 0, fit_n = 5;
  auto* fit = app.add_subcommand("fit-lre", "fit one LRE at a fixed probe point and beta");
  fit->add_option("--relation", fit_relation, "relation data (JSON)")->required()->check(CLI::ExistingFile);
  fit->add_option("--beta", fit_beta, "Jacobian scale");
  fit->add_option("--probe", fit_probe, "probe point");
  fit->add_option("--n-fit", fit_n, "examples drawn to fit");
  fit->callback([&] {
    action = [&] {
      const auto data = lre::load_relation_data(fit_relation);
      const auto model = lre::make_reference_model(data.model);
      std::vector<std::size_t> ids(data.examples.size());
      std::iota(ids.begin(), ids.end(), std::size_t{0});
      Rng rng(derive_seed(g.seed, data.relation_id));
      shuffle(std::span<std::size_t>(ids), rng);
      ids.resize(std::min(ids.size(), fit_n));
      std::sort(ids.begin(), ids.end());
      lre::save_lre(lre::fit_lre(*model, data.examples, ids, fit_beta, fit_probe), need_out(g));
      return kOk;
    };
  });

  std::string met_relation, met_lre;
  auto* metrics = app.add_subcommand("metrics", "per-example and relation metrics of a fitted LRE");
  metrics->add_option("--relation", met_relation, "relation data (JSON)")->required()->check(CLI::ExistingFile);
  metrics->add_option("--lre", met_lre, "fitted LRE")->required()->check(CLI::ExistingFile);
  metrics->callback([&] {
    action = [&] {
      const auto data = lre::load_relation_data(met_relation);
      const auto l = lre::load_lre(met_lre);
      const auto model = lre::make_reference_model(data.model);
      const auto ev = lre::evaluate(l, *model, data.examples);
      std::printf("faithfulness\t%.6f\nfaith_prob\t%.6f\nsoft_causality\t%.6f\nhard_causality\t%.6f\n",
                  ev.relation.faithfulness, ev.relation.faith_prob, ev.relation.soft_causality,
                  ev.relation.hard_causality);
      if (!g.out.empty()) {
        std::ofstream out(g.out);
        if (!out) throw IoError("cannot write " + g.out);
        pipeline::write_example_metrics_header(out);
        pipeline::write_example_metrics(out, data, pipeline::example_features(data, l));
      }
      return kOk;
    };
  });

  std::string sw_relation, sw_probes;
  std::size_t sw_n = 5;
  auto* sweep = app.add_subcommand("sweep", "probe, beta and rank sweep; --out is a directory");
  sweep->add_option("--relation", sw_relation, "relation data (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--probes", sw_probes, "comma-separated probe points (default all)");
  sweep->add_option("--n-fit", sw_n, "examples drawn to fit");
  sweep->callback([&] {
    action = [&] {
      const auto data = lre::load_relation_data(sw_relation);
      const auto model = lre::make_reference_model(data.model);
      std::vector<std::size_t> ids(data.examples.size());
      std::iota(ids.begin(), ids.end(), std::size_t{0});
      Rng rng(derive_seed(g.seed, data.relation_id));
      shuffle(std::span<std::size_t>(ids), rng);
      ids.resize(std::min(ids.size(), sw_n));
      std::sort(ids.begin(), ids.end());
      lre::SweepOptions so;
      so.workers = g.shards;
      for (const auto& p : split_list(sw_probes)) so.probes.push_back(std::stoul(p));
      const auto res = lre::sweep_hyperparams(*model, data.examples, ids, so);
      const fs::path dir = need_out(g);
      fs::create_directories(dir);
      lre::save_lre(res.lre, dir / "lre.bin");
      std::ofstream b(dir / "beta.tsv");
      b << "probe\tbeta\tfaithfulness\tfaith_prob\n";
      for (const auto& p : res.beta_surface) {
        b << p.probe << '\t' << p.beta << '\t' << p.faithfulness << '\t' << p.faith_prob << '\n';
      }
      std::ofstream r(dir / "rank.tsv");
      r << "probe\trank\tsoft_causality\thard_causality\n";
      for (const auto& p : res.rank_surface) {
        r << p.probe << '\t' << p.rank << '\t' << p.soft_causality << '\t' << p.hard_causality << '\n';
      }
      std::printf("probe\t%zu\nbeta\t%g\nrank\t%zu\n", res.probe, res.beta, res.rank);
      return kOk;
    };
  });

  // Regression.
  std::string feat_examples, feat_counts, feat_dict, feat_kind = "subject_object";
  auto* features = app.add_subcommand("features", "join example metrics with corpus counts");
  features->add_option("--examples", feat_examples, "example metrics TSV")->required()->check(CLI::ExistingFile);
  features->add_option("--counts", feat_counts, "occurrence or pair count TSV")->required()->check(CLI::ExistingFile);
  features->add_option("--dict", feat_dict, "term dictionary")->required()->check(CLI::ExistingFile);
  features->add_option("--target-kind", feat_kind, "object or subject_object");
  features->callback([&] {
    action = [&] {
      const auto ex = pipeline::read_example_metrics(feat_examples);
      const auto table = regress::build_feature_table(ex, corpus::read_counts_tsv(feat_counts),
                                                      corpus::TermDictionary::load(feat_dict).size(),
                                                      regress::parse_target_kind(feat_kind));
      regress::write_feature_table(table, need_out(g));
      return kOk;
    };
  });

  std::string reg_features, reg_seeds = "0,1,2,3", reg_select;
  std::size_t reg_trees = 100;
  auto* reg = app.add_subcommand("regress", "leave-one-relation-out forest regression");
  reg->add_option("--features", reg_features, "feature table")->required()->check(CLI::ExistingFile);
  reg->add_option("--seeds", reg_seeds, "comma-separated CV seeds");
  reg->add_option("--select", reg_select, "comma-separated feature subset");
  reg->add_option("--trees", reg_trees, "trees per forest");
  reg->callback([&] {
    action = [&] {
      auto table = regress::read_feature_table(reg_features);
      if (!reg_select.empty()) table = table.select(split_list(reg_select));
      regress::CvOptions cv;
      cv.seeds = parse_seeds(reg_seeds);
      cv.forest.n_trees = reg_trees;
      cv.forest.workers = g.shards;
      const auto rep = regress::loro_cv(table, cv);
      print_scores("forest", rep);
      if (!g.out.empty()) regress::write_cv_report(rep, g.out);
      return kOk;
    };
  });

  std::string imp_features, imp_seeds = "0,1,2,3", imp_merge;
  std::size_t imp_repeats = 5;
  auto* imp = app.add_subcommand("importance", "permutation importance over LORO folds");
  imp->add_option("--features", imp_features, "feature table")->required()->check(CLI::ExistingFile);
  imp->add_option("--seeds", imp_seeds, "comma-separated CV seeds");
  imp->add_option("--pca-merge", imp_merge, "comma-separated features merged into their first component");
  imp->add_option("--repeats", imp_repeats, "shuffles per feature");
  imp->callback([&] {
    action = [&] {
      auto table = regress::read_feature_table(imp_features);
      if (!imp_merge.empty()) {
        const auto m = regress::pca_merge(table, split_list(imp_merge));
        std::printf("%s\texplained_variance_ratio %.4f\n", m.column_name.c_str(), m.explained_variance_ratio);
        table = m.table;
      }
      regress::CvOptions cv;
      cv.seeds = parse_seeds(imp_seeds);
      cv.forest.workers = g.shards;
      const auto rep = regress::cv_permutation_importance(table, cv, imp_repeats);
      for (auto f : rep.ranking) std::printf("%s\t%.6f\n", rep.feature_names[f].c_str(), rep.mean_drop[f]);
      if (!g.out.empty()) regress::write_importance(rep, g.out);
      return kOk;
    };
  });

  std::string tr_train, tr_eval, tr_source = "source", tr_target = "target";
  double tr_ratio = 1.0;
  auto* transfer = app.add_subcommand("transfer", "train on one model's features, score on another's");
  transfer->add_option("--train", tr_train, "source feature table")->required()->check(CLI::ExistingFile);
  transfer->add_option("--eval", tr_eval, "target feature table")->required()->check(CLI::ExistingFile);
  transfer->add_option("--token-ratio", tr_ratio, "target corpus tokens / source corpus tokens")
      ->check(CLI::PositiveNumber);
  transfer->add_option("--source-name", tr_source);
  transfer->add_option("--target-name", tr_target);
  transfer->callback([&] {
    action = [&] {
      const auto train = regress::read_feature_table(tr_train);
      const auto eval = regress::read_feature_table(tr_eval);
      regress::ForestOptions fo;
      fo.seed = g.seed;
      fo.workers = g.shards;
      const auto forest = regress::train_forest(train, fo);
      const auto rep = regress::cross_model_transfer(forest, train, eval, {tr_source, tr_target, tr_ratio, g.seed});
      std::printf("accuracy\t%.4f\nmae_ln\t%.4f\nmean_baseline\t%.4f\nrandom_baseline\t%.4f\n",
                  rep.overall.accuracy, rep.overall.mae_ln, rep.baseline.mean_accuracy,
                  rep.baseline.random_accuracy);
      if (!g.out.empty()) regress::write_eval_report(rep, g.out);
      return kOk;
    };
  });

  std::string cor_table, cor_x, cor_y;
  bool cor_log = false;
  auto* correlate = app.add_subcommand("correlate", "Pearson r between two columns of a TSV table");
  correlate->add_option("--table", cor_table, "TSV with a header row")->required()->check(CLI::ExistingFile);
  correlate->add_option("--x", cor_x, "x column")->required();
  correlate->add_option("--y", cor_y, "y column")->required();
  correlate->add_flag("--log-x", cor_log, "use log10(1 + x)");
  correlate->callback([&] {
    action = [&] {
      std::ifstream in(cor_table);
      std::string line;
      std::vector<std::string> header;
      std::vector<double> x, y;
      std::size_t cx = 0, cy = 0;
      while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, '\t')) cells.push_back(cell);
        if (header.empty()) {
          header = cells;
          auto find = [&](const std::string& n) {
            const auto it = std::find(header.begin(), header.end(), n);
            if (it == header.end()) throw InvalidArgument("no column '" + n + "' in " + cor_table);
            return static_cast<std::size_t>(it - header.begin());
          };
          cx = find(cor_x);
          cy = find(cor_y);
          continue;
        }
        const double xv = std::stod(cells.at(cx));
        x.push_back(cor_log ? std::log10(1.0 + xv) : xv);
        y.push_back(std::stod(cells.at(cy)));
      }
      std::printf("n\t%zu\npearson_r\t%.6f\n", x.size(), regress::pearson(x, y));
      return kOk;
    };
  });

  // Experiments.
  std::string config_file;
  auto* validate = app.add_subcommand("validate", "check an experiment config");
  validate->add_option("config", config_file, "config file")->required();
  validate->callback([&] {
    action = [&] {
      const auto cfg = pipeline::load_config(config_file);
      const auto problems = pipeline::validate(cfg);
      for (const auto& p : problems) std::cerr << p << '\n';
      if (!problems.empty()) return kInvalid;
      std::cout << "ok\n";
      return kOk;
    };
  });

  std::string run_config;
  auto* runc = app.add_subcommand("run", "run every stage of an experiment");
  runc->add_option("config", run_config, "config file")->required();
  runc->callback([&] {
    action = [&] {
      auto cfg = pipeline::load_config(run_config);
      if (app.count("--seed")) cfg.seed = g.seed;
      if (app.count("--shards")) {
        cfg.corpus.shards = g.shards;
        cfg.sweep.workers = g.shards;
        cfg.regression.workers = g.shards;
      }
      if (!g.out.empty()) cfg.output_dir = fs::absolute(g.out);
      const auto problems = pipeline::validate(cfg);
      for (const auto& p : problems) std::cerr << p << '\n';
      if (!problems.empty()) return kInvalid;
      pipeline::RunOptions ro;
      ro.log = &std::cerr;
      pipeline::run(cfg, ro);
      return kOk;
    };
  });

  std::string report_dir;
  auto* rep = app.add_subcommand("report", "rewrite the report tables of a completed run");
  rep->add_option("run_dir", report_dir, "run directory")->required();
  rep->callback([&] {
    action = [&] {
      pipeline::report(report_dir);
      return kOk;
    };
  });

  std::string plant_spec;
  auto* plant = app.add_subcommand("plant", "write a planted-frequency experiment; --out is a directory");
  plant->add_option("--spec", plant_spec, "plant spec (JSON); defaults when omitted")->check(CLI::ExistingFile);
  plant->callback([&] {
    action = [&] {
      auto spec = plant_spec.empty() ? pipeline::PlantSpec{} : pipeline::load_plant_spec(plant_spec);
      if (app.count("--seed")) spec.seed = g.seed;
      pipeline::plant_experiment(spec, need_out(g));
      std::cout << (fs::path(need_out(g)) / "config.json").string() << '\n';
      return kOk;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }
  try {
    return action();
  } catch (const pipeline::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
}
