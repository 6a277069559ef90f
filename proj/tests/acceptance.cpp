// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "oracles.hpp"
#include "softcl/errors.hpp"
#include "softcl/eval.hpp"
#include "softcl/loss.hpp"
#include "softcl/trainer.hpp"
#include "temp_dir.hpp"

namespace fs = std::filesystem;
using namespace softcl;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

// Kept after the run so the reports can be inspected.
struct Workspace {
  fs::path root;
  fs::path operator/(const std::string& name) const { return root / name; }
  void write(const std::string& name, const std::string& text) const { std::ofstream(root / name) << text; }
};

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  if (!ok) ++failures;
  std::printf("%s  C%-2d %-28s %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Runs the CLI quietly; returns the exit code and stdout.
std::pair<int, std::string> cli(std::vector<std::string> args) {
  args.insert(args.begin(), "-q");
  std::ostringstream out;
  auto* old = std::cout.rdbuf(out.rdbuf());
  const int code = cli::run(args);
  std::cout.rdbuf(old);
  return {code, out.str()};
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

LabelMatrix random_labels(LabelMode mode, std::size_t n, std::mt19937_64& gen, double tau) {
  switch (mode) {
    case LabelMode::Hard:
      return hard_labels(n);
    case LabelMode::Priority:
      return priority_labels(oracle::random_matrix(n, 6, gen), tau);
    case LabelMode::Average:
      return average_labels(oracle::random_matrix(n, 6, gen), oracle::random_matrix(n, 6, gen), tau);
  }
  return hard_labels(n);
}

// ------------------------------------------------------------------ 1
void gradient_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(2024);
  std::uniform_int_distribution<std::size_t> pick_n(2, 8);
  std::uniform_int_distribution<std::size_t> pick_d(2, 16);
  int instances = 0;
  int bad = 0;
  double worst = 0.0;
  for (int rep = 0; rep < 6; ++rep) {
    for (LabelMode mode : {LabelMode::Hard, LabelMode::Priority, LabelMode::Average}) {
      for (bool tcm : {false, true}) {
        for (double lambda : {0.0, 0.1, 1.0}) {
          const std::size_t n = pick_n(gen);
          const std::size_t d = pick_d(gen);
          LossConfig cfg;
          cfg.mode = mode;
          cfg.tcm = tcm;
          cfg.lambda = lambda;
          Matrix src = oracle::random_matrix(n, d, gen);
          Matrix tgt = oracle::random_matrix(n, d, gen);
          const LabelMatrix w = random_labels(mode, n, gen, cfg.temperature);
          const EmbeddingGradients g = loss_gradients(src, tgt, w, cfg);
          const auto f = [&] { return loss_components(src, tgt, w, cfg).total; };
          const Matrix fd_src = oracle::finite_difference(f, src, 1e-5);
          const Matrix fd_tgt = oracle::finite_difference(f, tgt, 1e-5);
          const Matrix parts_a[] = {g.grad_src, g.grad_tgt};
          const Matrix parts_b[] = {fd_src, fd_tgt};
          const double err = oracle::relative_error(vstack(parts_a), vstack(parts_b));
          worst = std::max(worst, err);
          if (!(err <= 1e-4)) ++bad;
          ++instances;
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  report(1, "gradient correctness", bad == 0 && instances >= 100 && secs < 30.0,
         std::to_string(instances) + " instances, worst relative error " + fmt("%.2e", worst) + ", " +
             fmt("%.2f", secs) + " s");
}

// ------------------------------------------------------------------ 2
void hard_label_reduction() {
  std::mt19937_64 gen(77);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + trial % 9;
    const std::size_t d = 2 + trial % 15;
    const Matrix src = oracle::random_matrix(n, d, gen);
    const Matrix tgt = oracle::random_matrix(n, d, gen);
    LossConfig cfg;
    cfg.mode = LabelMode::Hard;
    const double soft = loss_components(src, tgt, hard_labels(n), cfg).total;
    worst = std::max(worst, std::abs(soft - oracle::infonce(src, tgt, cfg.temperature)));
  }
  report(2, "hard-label reduction", worst <= 1e-10, "50 instances, max |diff| " + fmt("%.2e", worst));
}

// ------------------------------------------------------------------ 3
void label_invariants() {
  std::mt19937_64 gen(5);
  double row_sum = 0.0;
  double avg_vs_pri = 0.0;
  double sharp = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 12;
    const Matrix e = oracle::random_matrix(n, 8, gen);
    const Matrix f = oracle::random_matrix(n, 8, gen);
    for (double tau : {0.05, 0.1, 1.0}) {
      const LabelMatrix p = priority_labels(e, tau);
      for (const LabelMatrix& w : {hard_labels(n), p, average_labels(e, f, tau)})
        row_sum = std::max(row_sum, max_row_sum_error(w.values));
      avg_vs_pri = std::max(avg_vs_pri, max_abs_diff(average_labels(e, e, tau).values, p.values));
    }
    sharp = std::max(sharp, max_abs_diff(priority_labels(e, 1e-3).values, Matrix::identity(n)));
  }
  report(3, "label invariants", row_sum <= 1e-12 && avg_vs_pri <= 1e-12 && sharp < 1e-6,
         "row sum " + fmt("%.1e", row_sum) + ", avg(E,E)-pri(E) " + fmt("%.1e", avg_vs_pri) + ", tau=1e-3 vs I " +
             fmt("%.1e", sharp));
}

// ------------------------------------------------------------------ 4
void metric_oracles() {
  std::mt19937_64 gen(404);
  int mismatches = 0;
  double spearman_worst = 0.0;
  int instances = 0;
  for (int trial = 0; trial < 120; ++trial, ++instances) {
    const std::size_t n = 2 + trial % 9;
    const std::size_t d = 2 + trial % 7;
    const Matrix src = oracle::random_matrix(n, d, gen);
    Matrix tgt = oracle::random_matrix(n, d, gen);
    std::vector<std::size_t> gold(n);
    for (std::size_t i = 0; i < n; ++i) gold[i] = i;
    std::shuffle(gold.begin(), gold.end(), gen);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) tgt(gold[i], k) += src(i, k);

    const auto acc = retrieval_accuracy(src, tgt, gold);
    const auto ref = oracle::retrieval(src, tgt, gold);
    const auto nn = static_cast<double>(n);
    if (acc.src2tgt * nn != static_cast<double>(ref.src2tgt_hits)) ++mismatches;
    if (acc.tgt2src * nn != static_cast<double>(ref.tgt2src_hits)) ++mismatches;
    for (std::size_t k : {1, 4}) {
      for (bool ratio : {true, false}) {
        const double rate =
            xsim_error_rate(src, tgt, gold, k, ratio ? MarginScoring::Ratio : MarginScoring::Cosine);
        if (std::llround(rate * nn) != static_cast<long long>(oracle::xsim_errors(src, tgt, gold, k, ratio)))
          ++mismatches;
      }
    }
    std::vector<double> a(n + 2);
    std::vector<double> b(n + 2);
    std::uniform_int_distribution<int> ties(0, 3);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = ties(gen);
      b[i] = std::normal_distribution<double>()(gen);
    }
    if (std::all_of(a.begin(), a.end(), [&](double x) { return x == a[0]; })) a[0] += 1.0;
    spearman_worst = std::max(spearman_worst, std::abs(spearman(a, b) - oracle::spearman(a, b)));
  }
  const double hand = spearman(std::vector<double>{1, 2, 2, 3}, std::vector<double>{1, 2, 3, 4});
  report(4, "metric oracles",
         mismatches == 0 && spearman_worst <= 1e-10 && std::abs(hand - 0.94868) <= 1e-5,
         std::to_string(instances) + " instances, " + std::to_string(mismatches) + " count mismatches, spearman " +
             fmt("%.1e", spearman_worst) + ", tied example " + fmt("%.5f", hand));
}

// --------------------------------------------------------- 5, 6, 7, 9
struct TrainRun {
  int code = -1;
  fs::path dir;
  json history;
  json report;
  double seconds = 0.0;
};

TrainRun train(const fs::path& config, const std::vector<std::string>& sets) {
  std::vector<std::string> args{"train", "--config", config.string()};
  for (const auto& s : sets) {
    args.push_back("--set");
    args.push_back(s);
  }
  const auto t0 = Clock::now();
  const auto [code, out] = cli(args);
  TrainRun r;
  r.seconds = seconds_since(t0);
  r.code = code;
  if (code != 0) return r;
  r.dir = first_line(out);
  r.history = json::parse(read_file(r.dir / "history.json"));
  r.report = json::parse(read_file(r.dir / "report.json"));
  return r;
}

void end_to_end(const Workspace& dir) {
  const auto [code, out] = cli({"sample-data", "--out", (dir / "data").string()});
  if (code != 0) {
    report(5, "end-to-end synthetic training", false, "sample-data exited " + std::to_string(code));
    return;
  }
  dir.write("run.cfg",
            "corpus.en-ko = data/corpus.tsv\n"
            "teacher = data/teacher.tsv\n"
            "sample_total = 600\n"
            "sample_train = 500\n"
            "out = runs\n");

  const TrainRun pri = train(dir / "run.cfg", {"label_mode=priority"});
  if (pri.code != 0) {
    report(5, "end-to-end synthetic training", false, "train exited " + std::to_string(pri.code));
    return;
  }
  double best = 0.0;
  for (const auto& e : pri.history["epochs"]) best = std::max(best, e["valid_acc_avg"].get<double>());
  const double loss0 = pri.history["initial_loss"].get<double>();
  const double loss1 = pri.history["epochs"][0]["loss"].get<double>();
  const std::size_t epochs = pri.history["epochs"].size();
  report(5, "end-to-end synthetic training", best >= 0.90 && epochs <= 30 && pri.seconds < 120.0 && loss1 < loss0,
         "acc_avg " + fmt("%.4f", best) + " after " + std::to_string(epochs) + " epochs, " +
             fmt("%.2f", pri.seconds) + " s, loss step 0 " + fmt("%.4f", loss0) + " > epoch 1 " +
             fmt("%.4f", loss1));

  const TrainRun hard = train(dir / "run.cfg", {"label_mode=hard"});
  if (hard.code != 0 || !pri.report["final"].contains("teacher_agreement")) {
    report(6, "soft vs hard agreement", false, "hard run exited " + std::to_string(hard.code));
  } else {
    const double soft_agree = pri.report["final"]["teacher_agreement"]["cross"].get<double>();
    const double hard_agree = hard.report["final"]["teacher_agreement"]["cross"].get<double>();
    report(6, "soft vs hard agreement", soft_agree - hard_agree >= 0.05,
           "priority " + fmt("%.4f", soft_agree) + ", hard " + fmt("%.4f", hard_agree) + ", gap " +
               fmt("%.4f", soft_agree - hard_agree));
  }

  const TrainRun tcm = train(dir / "run.cfg", {"label_mode=priority", "tcm=true", "lambda=0.1"});
  if (tcm.code != 0 || !tcm.report["final"].contains("teacher_agreement")) {
    report(7, "tcm mono agreement", false, "tcm run exited " + std::to_string(tcm.code));
  } else {
    bool ok = true;
    std::string detail;
    for (const char* lang : {"en", "ko"}) {
      const std::string key = std::string("mono_") + lang;
      const double before = tcm.report["initial"]["teacher_agreement"][key].get<double>();
      const double after = tcm.report["final"]["teacher_agreement"][key].get<double>();
      ok = ok && after >= before;
      detail += key + " " + fmt("%.4f", before) + " -> " + fmt("%.4f", after) + ", ";
    }
    report(7, "tcm mono agreement", ok, detail + "report " + (tcm.dir / "report.json").string());
  }

  const TrainRun again = train(dir / "run.cfg", {"label_mode=priority"});
  const bool same = again.code == 0 && again.history == pri.history &&
                    read_file(again.dir / "history.json") == read_file(pri.dir / "history.json");
  report(9, "determinism", same, same ? "history.json identical across two runs" : "histories differ");
}

// ------------------------------------------------------------------ 8
void scale_invariance() {
  std::mt19937_64 gen(8);
  double worst = 0.0;
  auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 3 + trial % 8;
    const std::size_t d = 2 + trial % 10;
    const Matrix src = oracle::random_matrix(n, d, gen);
    Matrix tgt = oracle::random_matrix(n, d, gen, 0.7);
    tgt += src;
    Matrix src_s = src;
    Matrix tgt_s = tgt;
    src_s *= 3.7;
    tgt_s *= 3.7;
    const auto gold = identity_alignment(n);

    for (auto scoring : {MarginScoring::Ratio, MarginScoring::Cosine}) {
      const auto a = evaluate_bitext(src, tgt, gold, 4, scoring);
      const auto b = evaluate_bitext(src_s, tgt_s, gold, 4, scoring);
      track(a.accuracy.src2tgt, b.accuracy.src2tgt);
      track(a.accuracy.tgt2src, b.accuracy.tgt2src);
      track(*a.xsim_error, *b.xsim_error);
    }
    for (LabelMode mode : {LabelMode::Hard, LabelMode::Priority, LabelMode::Average}) {
      const LabelMatrix w = random_labels(mode, n, gen, 0.1);
      for (bool tcm : {false, true}) {
        LossConfig cfg;
        cfg.mode = mode;
        cfg.tcm = tcm;
        const auto a = loss_components(src, tgt, w, cfg);
        const auto b = loss_components(src_s, tgt_s, w, cfg);
        track(a.l_row, b.l_row);
        track(a.l_col, b.l_col);
        track(a.l_mono, b.l_mono);
        track(a.total, b.total);
      }
      if (mode != LabelMode::Hard) {
        track(teacher_agreement(scaled_similarity_matrix(src, tgt, 0.1), w),
              teacher_agreement(scaled_similarity_matrix(src_s, tgt_s, 0.1), w));
      }
    }
  }

  // Through an encoder: scaling the projection scales every embedding.
  Vocab vocab;
  for (int w = 0; w < 12; ++w) vocab.add("w" + std::to_string(w));
  Rng rng(3);
  const StudentEncoder enc = StudentEncoder::initialize(vocab, 8, rng, 1.0);
  StudentEncoder scaled = enc;
  scaled.projection *= 3.7;
  std::vector<StsRecord> sts;
  for (int i = 0; i < 10; ++i)
    sts.push_back({"w" + std::to_string(i) + " w" + std::to_string(11 - i), "w" + std::to_string((i * 5) % 12),
                   static_cast<double>(i % 6)});
  track(sts_eval(enc, sts), sts_eval(scaled, sts));

  report(8, "scale invariance", worst < 1e-9, "max change " + fmt("%.2e", worst));
}

// ----------------------------------------------------------------- 10
void data_pipeline() {
  ParallelCorpus corpus{"en", "ko", {}};
  for (int i = 0; i < 30000; ++i)
    corpus.pairs.emplace_back("source sentence " + std::to_string(i), "target sentence " + std::to_string(i));
  const CorpusSplit split = sample_split(corpus, 25000, 20000, 7);
  const bool sizes = split.train.size() == 20000 && split.valid.size() == 5000;

  // Plant test sentences matching 40 training pairs, half by source and half by target,
  // written with extra whitespace.
  std::mt19937_64 gen(10);
  std::set<std::size_t> planted_rows;
  while (planted_rows.size() < 40) planted_rows.insert(gen() % split.train.size());
  std::set<std::string> tests{"an unrelated test sentence"};
  std::set<SentencePair> planted;
  std::size_t k = 0;
  for (std::size_t r : planted_rows) {
    const auto& p = split.train.pairs[r];
    tests.insert("  " + (k++ % 2 ? p.first : p.second) + " ");
    planted.insert(p);
  }
  const OverlapFilterResult once = filter_overlap(split.train, tests);
  const OverlapFilterResult twice = filter_overlap(once.corpus, tests);

  bool exact = once.removed == planted.size() && once.corpus.size() + planted.size() == split.train.size();
  for (const auto& p : once.corpus.pairs) exact = exact && !planted.count(p);
  const bool idempotent = twice.removed == 0 && twice.corpus.pairs == once.corpus.pairs;
  report(10, "data pipeline", sizes && exact && idempotent,
         "split " + std::to_string(split.train.size()) + "/" + std::to_string(split.valid.size()) + ", removed " +
             std::to_string(once.removed) + " of " + std::to_string(planted.size()) +
             " planted, second pass removed " + std::to_string(twice.removed));
}

}  // namespace

int main() {
  const Workspace dir{fs::absolute("acceptance_runs")};
  fs::remove_all(dir.root);
  fs::create_directories(dir.root);
  const std::vector<std::pair<int, std::function<void()>>> steps{
      {1, gradient_correctness},
      {2, hard_label_reduction},
      {3, label_invariants},
      {4, metric_oracles},
      {5, [&] { end_to_end(dir); }},
      {8, scale_invariance},
      {10, data_pipeline},
  };
  for (const auto& [id, step] : steps) {
    try {
      step();
    } catch (const std::exception& e) {
      report(id, "exception", false, e.what());
    }
  }
  std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
