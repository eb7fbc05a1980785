#include "linfreq/pipeline/run.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "linfreq/corpus/dictionary.hpp"
#include "linfreq/corpus/scan.hpp"
#include "linfreq/lre/sweep.hpp"
#include "linfreq/pipeline/digest.hpp"
#include "linfreq/random.hpp"
#include "linfreq/regress/eval.hpp"
#include "linfreq/regress/forest.hpp"

namespace linfreq::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string f6(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

struct Tsv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw IoError("table has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) return out;
    start = tab + 1;
  }
}

Tsv read_tsv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  Tsv t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (t.header.empty()) {
      t.header = split(line);
      continue;
    }
    auto cells = split(line);
    if (cells.size() != t.header.size()) throw IoError(file.string() + ": ragged row");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

std::ofstream open_out(const fs::path& file) {
  fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  return out;
}

// Exclusive advisory lock on <dir>/.lock, released when the process exits.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) {
    const auto file = dir / ".lock";
    fd_ = ::open(file.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) throw IoError("cannot create lock file " + file.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw Error("run directory " + dir.string() + " is locked by another process");
    }
  }
  ~RunLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  int fd_ = -1;
};

std::string digest_json(const json& j) { return sha256_hex(j.dump()); }

json file_digests(const std::vector<fs::path>& files) {
  json j = json::array();
  for (const auto& f : files) {
    if (fs::exists(f)) j.push_back({f.filename().string(), sha256_file(f)});
  }
  return j;
}

json output_digests(const StageRecord* r) {
  json j = json::array();
  if (r) {
    for (const auto& [p, d] : r->outputs) j.push_back({p, d});
  }
  return j;
}

std::string rel_path(std::uint32_t id, const char* dir, const char* suffix) {
  return std::string(dir) + "/relation_" + std::to_string(id) + suffix;
}

struct LoadedRelation {
  lre::RelationData data;
  std::unique_ptr<lre::ReferenceModel> model;
};

std::vector<LoadedRelation> load_relations(const ExperimentConfig& cfg) {
  std::vector<LoadedRelation> out;
  std::set<std::uint32_t> ids;
  for (const auto& p : cfg.relations) {
    LoadedRelation r;
    r.data = lre::load_relation_data(cfg.resolve(p));
    if (!ids.insert(r.data.relation_id).second) {
      throw InvalidArgument("relation_id " + std::to_string(r.data.relation_id) + " appears in more than one file");
    }
    r.model = lre::make_reference_model(r.data.model);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::size_t> choose_fit_ids(std::size_t n, std::size_t n_fit, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(std::span<std::size_t>(idx), rng);
  idx.resize(std::min(n, n_fit));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::vector<regress::ExampleFeatures> read_example_metrics(const fs::path& file) {
  const Tsv t = read_tsv(file);
  const auto c_rel = t.col("relation_id"), c_ex = t.col("example_id"), c_s = t.col("subject_id"),
             c_o = t.col("object_id"), c_lp = t.col("logprob_correct"), c_fs = t.col("fewshot_accuracy"),
             c_f = t.col("faithfulness"), c_fp = t.col("faith_prob"), c_sc = t.col("soft_causality"),
             c_hc = t.col("hard_causality");
  std::vector<regress::ExampleFeatures> out;
  for (const auto& r : t.rows) {
    regress::ExampleFeatures e;
    e.relation_id = static_cast<std::uint32_t>(std::stoul(r[c_rel]));
    e.example_id = std::stoull(r[c_ex]);
    e.subject_id = static_cast<std::uint32_t>(std::stoul(r[c_s]));
    e.object_id = static_cast<std::uint32_t>(std::stoul(r[c_o]));
    e.logprob_correct = std::stod(r[c_lp]);
    e.fewshot_accuracy = std::stod(r[c_fs]);
    e.faithfulness = std::stod(r[c_f]);
    e.faith_prob = std::stod(r[c_fp]);
    e.soft_causality = std::stod(r[c_sc]);
    e.hard_causality = std::stod(r[c_hc]);
    out.push_back(e);
  }
  return out;
}

void write_example_metrics_header(std::ostream& out) {
  out << "relation_id\texample_id\tsubject_id\tobject_id\tsubject\tobject\tlogprob_correct\tfewshot_accuracy\t"
         "faithfulness\tfaith_prob\tsoft_causality\thard_causality\n";
}

void write_example_metrics(std::ostream& out, const lre::RelationData& data,
                           const std::vector<regress::ExampleFeatures>& feats) {
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const auto& f = feats[i];
    const auto& ex = data.examples[f.example_id];
    out << f.relation_id << '\t' << f.example_id << '\t' << f.subject_id << '\t' << f.object_id << '\t'
        << ex.subject_surface << '\t' << ex.object_surface << '\t' << g17(f.logprob_correct) << '\t'
        << g17(f.fewshot_accuracy) << '\t' << g17(f.faithfulness) << '\t' << g17(f.faith_prob) << '\t'
        << g17(f.soft_causality) << '\t' << g17(f.hard_causality) << '\n';
  }
}

namespace {

class Runner {
 public:
  Runner(const ExperimentConfig& cfg, const RunOptions& opts)
      : cfg_(cfg), opts_(opts), out_(cfg.resolve(cfg.output_dir)) {}

  RunManifest run() {
    fs::create_directories(out_);
    RunLock lock(out_);
    try {
      prev_ = read_run_manifest(out_);
      have_prev_ = true;
    } catch (const Error&) {
      have_prev_ = false;
    }
    const std::string cfg_text = serialize_config(cfg_);
    {
      std::ofstream f(out_ / "config.json");
      if (!f) throw IoError("cannot write " + (out_ / "config.json").string());
      f << cfg_text;
    }
    man_.config_hash = sha256_hex(cfg_text);

    stage_count();
    stage_cooc();
    stage_checkpoints();
    stage_fit();
    stage_metrics();
    stage_features();
    stage_regress();
    stage_report();
    man_.complete = true;
    write_run_manifest(man_, out_);
    return man_;
  }

 private:
  using Body = std::function<std::vector<std::string>()>;

  fs::path corpus_dir() const { return cfg_.resolve(cfg_.corpus.path); }
  fs::path dict_file() const { return cfg_.resolve(cfg_.corpus.dictionary); }

  json corpus_inputs() const {
    return {{"corpus", file_digests({corpus_dir() / "manifest.json", corpus_dir() / "tokens.bin",
                                      corpus_dir() / "docs.idx"})},
            {"dictionary", sha256_file(dict_file())}};
  }

  const StageRecord* current(const std::string& name) const { return man_.find(name); }

  bool cached(const std::string& name, const std::string& key, StageRecord& rec) const {
    if (!have_prev_) return false;
    const StageRecord* p = prev_.find(name);
    if (!p || p->key != key || (p->status != "ran" && p->status != "cached" && p->status != "skipped")) return false;
    for (const auto& [path, digest] : p->outputs) {
      const auto f = out_ / path;
      if (!fs::exists(f) || sha256_file(f) != digest) return false;
    }
    rec = *p;
    return true;
  }

  void log(const StageRecord& r) {
    if (!opts_.log) return;
    *opts_.log << r.name << ": " << r.status;
    if (r.status == "ran") *opts_.log << " (" << f6(r.seconds) << " s)";
    *opts_.log << '\n';
  }

  void stage(const std::string& name, const json& inputs, const Body& body) {
    const std::string key = digest_json({{"stage", name}, {"tool", kToolVersion}, {"inputs", inputs}});
    StageRecord rec;
    if (cached(name, key, rec)) {
      if (rec.status != "skipped") rec.status = "cached";
      rec.seconds = 0;
      man_.stages.push_back(rec);
      log(rec);
      return;
    }
    rec.name = name;
    rec.key = key;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto outputs = body();
      rec.status = outputs.empty() ? "skipped" : "ran";
      for (const auto& p : outputs) rec.outputs.emplace_back(p, sha256_file(out_ / p));
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      man_.stages.push_back(rec);
      write_run_manifest(man_, out_);
      log(rec);
      throw;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    man_.stages.push_back(rec);
    write_run_manifest(man_, out_);
    log(rec);
  }

  corpus::ScanOptions scan_options() const {
    corpus::ScanOptions so;
    so.pair_mode = cfg_.corpus.pair_mode;
    so.shards = cfg_.corpus.shards;
    return so;
  }

  void stage_count() {
    stage("count", corpus_inputs(), [&] {
      const auto dict = corpus::TermDictionary::load(dict_file());
      const corpus::Matcher m(dict);
      const auto corpus = corpus::TokenCorpus::open(corpus_dir());
      const auto res = corpus::scan_corpus(m, corpus, scan_options());
      fs::create_directories(out_ / "counts");
      corpus::write_occurrences_tsv(res.counts, out_ / "counts/occurrences.tsv");
      return std::vector<std::string>{"counts/occurrences.tsv"};
    });
  }

  void stage_cooc() {
    json in = corpus_inputs();
    in["pair_mode"] = cfg_.corpus.pair_mode == corpus::PairMode::kPresence ? "presence" : "product";
    in["document_window"] = cfg_.corpus.document_window;
    stage("cooc", in, [&] {
      const auto dict = corpus::TermDictionary::load(dict_file());
      const corpus::Matcher m(dict);
      const auto corpus = corpus::TokenCorpus::open(corpus_dir());
      const auto res = corpus::scan_corpus(m, corpus, scan_options());
      fs::create_directories(out_ / "counts");
      corpus::write_pairs_tsv(res.counts, out_ / "counts/pairs.tsv");
      std::vector<std::string> outputs = {"counts/pairs.tsv"};
      if (cfg_.corpus.document_window) {
        const auto doc = corpus::document_counts(m, corpus, cfg_.corpus.shards);
        corpus::write_pairs_tsv(doc, out_ / "counts/doc_pairs.tsv");
        outputs.push_back("counts/doc_pairs.tsv");
      } else {
        fs::remove(out_ / "counts/doc_pairs.tsv");
      }
      return outputs;
    });
  }

  void stage_checkpoints() {
    json in = corpus_inputs();
    in["pair_mode"] = cfg_.corpus.pair_mode == corpus::PairMode::kPresence ? "presence" : "product";
    in["checkpoints"] = cfg_.checkpoints;
    stage("checkpoints", in, [&] {
      if (cfg_.checkpoints.empty()) {
        fs::remove_all(out_ / "checkpoints");
        return std::vector<std::string>{};
      }
      const auto dict = corpus::TermDictionary::load(dict_file());
      const corpus::Matcher m(dict);
      const auto corpus = corpus::TokenCorpus::open(corpus_dir());
      const auto cps =
          corpus::cumulative_counts(m, corpus, corpus::CheckpointSchedule(cfg_.checkpoints), scan_options());
      fs::create_directories(out_ / "checkpoints");
      corpus::write_checkpoints_tsv(cps, out_ / "checkpoints/occurrences.tsv", out_ / "checkpoints/pairs.tsv");
      return std::vector<std::string>{"checkpoints/occurrences.tsv", "checkpoints/pairs.tsv"};
    });
  }

  json relation_inputs() const {
    json j = json::array();
    for (const auto& p : cfg_.relations) j.push_back(sha256_file(cfg_.resolve(p)));
    return j;
  }

  void stage_fit() {
    json sweep = to_json(cfg_)["sweep"];
    sweep.erase("workers");
    const json in = {{"relations", relation_inputs()}, {"sweep", sweep}, {"seed", cfg_.seed}};
    stage("fit", in, [&] {
      const auto rels = load_relations(cfg_);
      fs::remove_all(out_ / "lre");
      fs::remove_all(out_ / "sweep");
      fs::create_directories(out_ / "lre");
      fs::create_directories(out_ / "sweep");
      std::vector<std::string> outputs;
      auto sel = open_out(out_ / "sweep/selection.tsv");
      sel << "relation_id\tname\tprobe\tbeta\trank\tn_fit\n";
      for (const auto& r : rels) {
        const auto id = r.data.relation_id;
        const auto fit_ids = choose_fit_ids(r.data.examples.size(), cfg_.sweep.n_fit, derive_seed(cfg_.seed, id));
        lre::SweepOptions so;
        so.beta_grid = cfg_.sweep.beta_grid;
        so.rank_schedule = cfg_.sweep.rank_schedule;
        so.probes = cfg_.sweep.probes;
        so.workers = cfg_.sweep.workers;
        const auto res = lre::sweep_hyperparams(*r.model, r.data.examples, fit_ids, so);
        const auto lre_file = rel_path(id, "lre", ".lre");
        lre::save_lre(res.lre, out_ / lre_file);
        outputs.push_back(lre_file);
        const auto beta_file = rel_path(id, "sweep", "_beta.tsv");
        auto bo = open_out(out_ / beta_file);
        bo << "probe\tbeta\tfaithfulness\tfaith_prob\n";
        for (const auto& p : res.beta_surface) {
          bo << p.probe << '\t' << g17(p.beta) << '\t' << g17(p.faithfulness) << '\t' << g17(p.faith_prob) << '\n';
        }
        outputs.push_back(beta_file);
        const auto rank_file = rel_path(id, "sweep", "_rank.tsv");
        auto ro = open_out(out_ / rank_file);
        ro << "probe\trank\tsoft_causality\thard_causality\n";
        for (const auto& p : res.rank_surface) {
          ro << p.probe << '\t' << p.rank << '\t' << g17(p.soft_causality) << '\t' << g17(p.hard_causality) << '\n';
        }
        outputs.push_back(rank_file);
        sel << id << '\t' << r.data.name << '\t' << res.probe << '\t' << g17(res.beta) << '\t' << res.rank << '\t'
            << fit_ids.size() << '\n';
      }
      outputs.push_back("sweep/selection.tsv");
      return outputs;
    });
  }

  void stage_metrics() {
    const json in = {{"relations", relation_inputs()}, {"fit", output_digests(current("fit"))}};
    stage("metrics", in, [&] {
      const auto rels = load_relations(cfg_);
      auto ro = open_out(out_ / "metrics/relations.tsv");
      ro << "relation_id\tname\tn_examples\tprobe\tbeta\trank\tfaithfulness\tfaith_prob\tsoft_causality\t"
            "hard_causality\n";
      auto eo = open_out(out_ / "metrics/examples.tsv");
      write_example_metrics_header(eo);
      for (const auto& r : rels) {
        const auto id = r.data.relation_id;
        const auto l = lre::load_lre(out_ / rel_path(id, "lre", ".lre"));
        const auto ev = lre::evaluate(l, *r.model, r.data.examples);
        ro << id << '\t' << r.data.name << '\t' << r.data.examples.size() << '\t' << l.probe << '\t' << g17(l.beta)
           << '\t' << l.rank << '\t' << g17(ev.relation.faithfulness) << '\t' << g17(ev.relation.faith_prob) << '\t'
           << g17(ev.relation.soft_causality) << '\t' << g17(ev.relation.hard_causality) << '\n';
        write_example_metrics(eo, r.data, example_features(r.data, l));
      }
      return std::vector<std::string>{"metrics/relations.tsv", "metrics/examples.tsv"};
    });
  }

  std::string count_file() const {
    return cfg_.regression.target_kind == regress::TargetKind::kObject ? "counts/occurrences.tsv"
                                                                        : "counts/pairs.tsv";
  }

  void stage_features() {
    const json in = {{"metrics", output_digests(current("metrics"))},
                     {"count", output_digests(current("count"))},
                     {"cooc", output_digests(current("cooc"))},
                     {"dictionary", sha256_file(dict_file())},
                     {"target_kind", regress::to_string(cfg_.regression.target_kind)}};
    stage("features", in, [&] {
      const auto examples = read_example_metrics(out_ / "metrics/examples.tsv");
      const auto counts = corpus::read_counts_tsv(out_ / count_file());
      const auto dict = corpus::TermDictionary::load(dict_file());
      const auto table = regress::build_feature_table(examples, counts, dict.size(), cfg_.regression.target_kind);
      fs::create_directories(out_ / "features");
      regress::write_feature_table(table, out_ / "features/features.tsv");
      return std::vector<std::string>{"features/features.tsv"};
    });
  }

  void stage_regress() {
    json reg = to_json(cfg_)["regression"];
    reg.erase("workers");
    const json in = {{"features", output_digests(current("features"))}, {"regression", reg}, {"seed", cfg_.seed}};
    stage("regress", in, [&] {
      fs::remove_all(out_ / "regress");
      if (!cfg_.regression.enabled) return std::vector<std::string>{};
      const auto& rc = cfg_.regression;
      const auto table = regress::read_feature_table(out_ / "features/features.tsv");
      regress::CvOptions cv;
      cv.seeds = rc.seeds;
      cv.forest.n_trees = rc.n_trees;
      cv.forest.tree.max_depth = rc.max_depth;
      cv.forest.tree.min_samples_leaf = rc.min_samples_leaf;
      cv.forest.workers = rc.workers;

      const auto lm_names = regress::lm_feature_names();
      std::vector<std::string> lre_names;
      for (const auto& n : table.feature_names) {
        if (std::find(lm_names.begin(), lm_names.end(), n) == lm_names.end()) lre_names.push_back(n);
      }
      struct Variant {
        const char* name;
        regress::FeatureTable table;
      };
      const std::vector<Variant> variants = {
          {"lre_and_lm", table}, {"lre_only", table.select(lre_names)}, {"lm_only", table.select(lm_names)}};

      fs::create_directories(out_ / "regress");
      std::vector<std::string> outputs;
      auto so = open_out(out_ / "regress/summary.tsv");
      so << "# target_kind\t" << regress::to_string(rc.target_kind) << "\n"
         << "# target_space\tln(1+count)\n"
         << "# evaluation\tleave-one-relation-out, " << rc.seeds.size() << " seeds\n"
         << "# trees\t" << rc.n_trees << "\tmax_depth\t" << rc.max_depth << "\tmin_samples_leaf\t"
         << rc.min_samples_leaf << "\n";
      so << "model\tn_rows\taccuracy_mean\taccuracy_std\tmae_ln_mean\tmae_ln_std\tpooled_accuracy\t"
            "mean_baseline\trandom_baseline\n";
      for (const auto& v : variants) {
        const auto rep = regress::loro_cv(v.table, cv);
        const std::string file = std::string("regress/cv_") + v.name + ".tsv";
        regress::write_cv_report(rep, out_ / file);
        outputs.push_back(file);
        so << v.name << '\t' << v.table.rows.size() << '\t' << f6(rep.accuracy.mean) << '\t' << f6(rep.accuracy.std)
           << '\t' << f6(rep.mae_ln.mean) << '\t' << f6(rep.mae_ln.std) << '\t' << f6(rep.pooled_accuracy) << '\t'
           << f6(rep.mean_baseline.mean) << '\t' << f6(rep.random_baseline.mean) << '\n';
      }
      so.close();
      outputs.push_back("regress/summary.tsv");

      regress::FeatureTable imp_table = table;
      auto po = open_out(out_ / "regress/pca.tsv");
      po << "column\texplained_variance_ratio\tloadings\n";
      if (!rc.pca_merge.empty()) {
        const auto merged = regress::pca_merge(table, rc.pca_merge);
        po << merged.column_name << '\t' << f6(merged.explained_variance_ratio) << '\t';
        for (std::size_t i = 0; i < merged.loadings.size(); ++i) po << (i ? "," : "") << f6(merged.loadings[i]);
        po << '\n';
        imp_table = merged.table;
      }
      po.close();
      outputs.push_back("regress/pca.tsv");
      const auto imp = regress::cv_permutation_importance(imp_table, cv, rc.importance_repeats);
      regress::write_importance(imp, out_ / "regress/importance.tsv");
      outputs.push_back("regress/importance.tsv");

      regress::ForestOptions fo = cv.forest;
      fo.seed = cfg_.seed;
      regress::save_forest(regress::train_forest(table, fo), out_ / "regress/forest.bin");
      outputs.push_back("regress/forest.bin");
      return outputs;
    });
  }

  void stage_report() {
    json in = json::object();
    for (const char* s : {"cooc", "checkpoints", "metrics", "regress"}) in[s] = output_digests(current(s));
    in["checkpoints_list"] = cfg_.checkpoints;
    stage("report", in, [&] {
      std::vector<std::string> outputs;
      write_report(out_, cfg_.checkpoints, cfg_.regression.enabled, outputs);
      return outputs;
    });
  }

 public:
  static void write_report(const fs::path& dir, const std::vector<std::uint64_t>& checkpoints, bool regression,
                           std::vector<std::string>& outputs);

 private:
  const ExperimentConfig& cfg_;
  RunOptions opts_;
  fs::path out_;
  RunManifest prev_;
  bool have_prev_ = false;
  RunManifest man_;
};

std::map<std::pair<std::uint64_t, std::pair<std::uint32_t, std::uint32_t>>, std::uint64_t> read_checkpoint_pairs(
    const fs::path& file) {
  const Tsv t = read_tsv(file);
  const auto c_cut = t.col("cutoff_tokens"), c_a = t.col("term_a"), c_b = t.col("term_b"), c_n = t.col("count");
  std::map<std::pair<std::uint64_t, std::pair<std::uint32_t, std::uint32_t>>, std::uint64_t> out;
  for (const auto& r : t.rows) {
    out[{std::stoull(r[c_cut]),
         {static_cast<std::uint32_t>(std::stoul(r[c_a])), static_cast<std::uint32_t>(std::stoul(r[c_b]))}}] =
        std::stoull(r[c_n]);
  }
  return out;
}

void Runner::write_report(const fs::path& dir, const std::vector<std::uint64_t>& checkpoints, bool regression,
                          std::vector<std::string>& outputs) {
  fs::remove_all(dir / "report");
  fs::create_directories(dir / "report");
  const Tsv rel = read_tsv(dir / "metrics/relations.tsv");
  const auto examples = read_example_metrics(dir / "metrics/examples.tsv");
  const auto full = corpus::read_counts_tsv(dir / "counts/pairs.tsv");

  struct RelInfo {
    std::string name;
    double soft = 0, hard = 0, faith = 0, faith_prob = 0;
    std::string probe, beta, rank, n;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  };
  std::map<std::uint32_t, RelInfo> info;
  for (const auto& r : rel.rows) {
    auto& i = info[static_cast<std::uint32_t>(std::stoul(r[rel.col("relation_id")]))];
    i.name = r[rel.col("name")];
    i.soft = std::stod(r[rel.col("soft_causality")]);
    i.hard = std::stod(r[rel.col("hard_causality")]);
    i.faith = std::stod(r[rel.col("faithfulness")]);
    i.faith_prob = std::stod(r[rel.col("faith_prob")]);
    i.probe = r[rel.col("probe")];
    i.beta = r[rel.col("beta")];
    i.rank = r[rel.col("rank")];
    i.n = r[rel.col("n_examples")];
  }
  for (const auto& e : examples) info[e.relation_id].pairs.emplace_back(e.subject_id, e.object_id);

  // One scatter block per cutoff, full corpus last.
  struct Cut {
    std::string label;
    std::function<std::uint64_t(std::uint32_t, std::uint32_t)> count;
  };
  std::vector<Cut> cuts;
  std::map<std::pair<std::uint64_t, std::pair<std::uint32_t, std::uint32_t>>, std::uint64_t> cp;
  if (!checkpoints.empty()) cp = read_checkpoint_pairs(dir / "checkpoints/pairs.tsv");
  for (auto c : checkpoints) {
    cuts.push_back({std::to_string(c), [&cp, c](std::uint32_t a, std::uint32_t b) -> std::uint64_t {
                      const auto key = std::make_pair(c, std::minmax(a, b));
                      const auto it = cp.find({key.first, {key.second.first, key.second.second}});
                      return it == cp.end() ? 0 : it->second;
                    }});
  }
  cuts.push_back({"full", [&full](std::uint32_t a, std::uint32_t b) { return full.pair(a, b); }});

  auto scatter = open_out(dir / "report/frequency_causality.tsv");
  scatter << "checkpoint_tokens\trelation_id\tname\tmean_pair_count\tlog10_mean_pair_count\thard_causality\t"
             "soft_causality\n";
  auto corr = open_out(dir / "report/correlation.tsv");
  corr << "# x\tlog10(1 + mean subject-object co-occurrence count per relation)\n"
       << "# y\trelation causality at the selected rank\n"
       << "checkpoint_tokens\tn_relations\tpearson_hard\tpearson_soft\n";
  std::map<std::uint32_t, double> full_mean;
  for (const auto& cut : cuts) {
    std::vector<double> x, hard, soft;
    for (const auto& [id, i] : info) {
      double sum = 0;
      for (const auto& [s, o] : i.pairs) sum += double(cut.count(s, o));
      const double mean = i.pairs.empty() ? 0.0 : sum / double(i.pairs.size());
      if (cut.label == "full") full_mean[id] = mean;
      x.push_back(std::log10(1.0 + mean));
      hard.push_back(i.hard);
      soft.push_back(i.soft);
      scatter << cut.label << '\t' << id << '\t' << i.name << '\t' << f6(mean) << '\t' << f6(x.back()) << '\t'
              << f6(i.hard) << '\t' << f6(i.soft) << '\n';
    }
    auto r_or_na = [&](const std::vector<double>& y) {
      try {
        return f6(regress::pearson(x, y));
      } catch (const InvalidArgument&) {
        return std::string("NA");
      }
    };
    corr << cut.label << '\t' << x.size() << '\t' << r_or_na(hard) << '\t' << r_or_na(soft) << '\n';
  }
  scatter.close();
  corr.close();
  outputs.push_back("report/frequency_causality.tsv");
  outputs.push_back("report/correlation.tsv");

  auto rel_out = open_out(dir / "report/relations.tsv");
  rel_out << "relation_id\tname\tn_examples\tprobe\tbeta\trank\tfaithfulness\tfaith_prob\tsoft_causality\t"
             "hard_causality\tmean_pair_count\n";
  for (const auto& [id, i] : info) {
    rel_out << id << '\t' << i.name << '\t' << i.n << '\t' << i.probe << '\t' << f6(std::stod(i.beta)) << '\t'
            << i.rank << '\t' << f6(i.faith) << '\t' << f6(i.faith_prob) << '\t' << f6(i.soft) << '\t' << f6(i.hard)
            << '\t' << f6(full_mean[id]) << '\n';
  }
  rel_out.close();
  outputs.push_back("report/relations.tsv");

  if (regression) {
    fs::copy_file(dir / "regress/summary.tsv", dir / "report/regression.tsv");
    outputs.push_back("report/regression.tsv");
    fs::copy_file(dir / "regress/importance.tsv", dir / "report/importance.tsv");
    outputs.push_back("report/importance.tsv");
  }
}

}  // namespace

IncompleteRun::IncompleteRun(std::vector<std::string> missing)
    : Error([&] {
        std::string s = "run is incomplete; missing stages:";
        for (const auto& m : missing) s += " " + m;
        return s;
      }()),
      missing_(std::move(missing)) {}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"count",   "cooc",     "checkpoints", "fit",
                                                 "metrics", "features", "regress",     "report"};
  return names;
}

const StageRecord* RunManifest::find(const std::string& name) const {
  for (const auto& s : stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

RunManifest read_run_manifest(const fs::path& run_dir) {
  const auto file = run_dir / "run_manifest.json";
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  json j;
  try {
    j = json::parse(in);
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.complete = j.at("complete").get<bool>();
    for (const auto& s : j.at("stages")) {
      StageRecord r;
      r.name = s.at("name").get<std::string>();
      r.status = s.at("status").get<std::string>();
      r.key = s.at("key").get<std::string>();
      r.seconds = s.at("seconds").get<double>();
      r.error = s.value("error", "");
      for (const auto& o : s.at("outputs")) r.outputs.emplace_back(o.at("path"), o.at("sha256"));
      m.stages.push_back(std::move(r));
    }
    return m;
  } catch (const json::exception& e) {
    throw IoError(file.string() + ": " + e.what());
  }
}

void write_run_manifest(const RunManifest& m, const fs::path& run_dir) {
  json j;
  j["tool_version"] = m.tool_version;
  j["config_hash"] = m.config_hash;
  j["complete"] = m.complete;
  j["stages"] = json::array();
  for (const auto& s : m.stages) {
    json o = json::array();
    for (const auto& [p, d] : s.outputs) o.push_back({{"path", p}, {"sha256", d}});
    json r = {{"name", s.name}, {"status", s.status}, {"key", s.key}, {"seconds", s.seconds}, {"outputs", o}};
    if (!s.error.empty()) r["error"] = s.error;
    j["stages"].push_back(r);
  }
  const auto tmp = run_dir / "run_manifest.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, run_dir / "run_manifest.json");
}

RunManifest run(const ExperimentConfig& cfg, const RunOptions& opts) {
  const auto problems = validate(cfg);
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  Runner r(cfg, opts);
  return r.run();
}

void report(const fs::path& run_dir) {
  RunManifest m;
  try {
    m = read_run_manifest(run_dir);
  } catch (const IoError&) {
    throw IncompleteRun(stage_names());
  }
  std::vector<std::string> missing;
  for (const auto& name : stage_names()) {
    if (name == "report") continue;
    const auto* s = m.find(name);
    if (!s || (s->status != "ran" && s->status != "cached" && s->status != "skipped")) missing.push_back(name);
  }
  if (!missing.empty()) throw IncompleteRun(missing);
  const auto cfg = load_config(run_dir / "config.json");
  const auto* reg = m.find("regress");
  std::vector<std::string> outputs;
  Runner::write_report(run_dir, cfg.checkpoints, reg->status != "skipped", outputs);
}

std::vector<regress::ExampleFeatures> example_features(const lre::RelationData& data, const lre::Lre& l) {
  const auto model = lre::make_reference_model(data.model);
  const auto ev = lre::evaluate(l, *model, data.examples);
  std::vector<regress::ExampleFeatures> out;
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    const auto& ex = data.examples[i];
    const auto& em = ev.examples[i];
    const auto lm = lre::lm_features(*model, ex);
    regress::ExampleFeatures f;
    f.relation_id = data.relation_id;
    f.example_id = i;
    f.subject_id = ex.subject_id;
    f.object_id = ex.object_id;
    f.logprob_correct = lm.logprob_correct;
    f.fewshot_accuracy = lm.fewshot_accuracy;
    f.faithfulness = em.faithful;
    f.faith_prob = em.faith_prob;
    f.soft_causality = em.soft_causality;
    f.hard_causality = em.hard_causality;
    out.push_back(f);
  }
  return out;
}

}  // namespace linfreq::pipeline
