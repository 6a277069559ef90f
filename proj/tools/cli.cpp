#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "config.hpp"
#include "softcl/errors.hpp"
#include "softcl/eval.hpp"
#include "softcl/rng.hpp"
#include "softcl/text.hpp"
#include "softcl/trainer.hpp"

namespace softcl::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

fs::path make_run_dir(const fs::path& out, const std::string& hash) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &utc);
  const std::string base = hash + "-" + stamp;
  fs::path dir = out / base;
  for (int n = 2; fs::exists(dir); ++n) dir = out / (base + "-" + std::to_string(n));
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

template <class Fn>
void write_with(const fs::path& path, Fn&& fn) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  fn(out);
  if (!out) throw DataError("failed writing " + path.string());
}

std::set<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::set<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) lines.insert(line);
  }
  return lines;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  std::vector<std::string> sets;
};

RunConfig resolve_config(const std::optional<fs::path>& config, const std::optional<std::uint64_t>& seed,
                         const std::vector<std::string>& sets) {
  std::map<std::string, std::string> entries;
  fs::path base_dir = fs::current_path();
  if (config) {
    entries = read_config_file(*config);
    base_dir = fs::absolute(*config).parent_path();
  }
  for (const auto& s : sets) {
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
    entries[std::string(trim(std::string_view(s).substr(0, eq)))] = std::string(trim(std::string_view(s).substr(eq + 1)));
  }
  if (seed) entries["seed"] = std::to_string(*seed);
  return build_run_config(entries, base_dir);
}

struct TrainingData {
  std::vector<ParallelCorpus> train;
  ParallelCorpus valid;
  std::size_t overlap_removed = 0;
};

TrainingData load_training_data(const RunConfig& cfg) {
  TrainingData data;
  std::optional<ParallelCorpus> valid;
  for (const auto& entry : cfg.corpora) {
    ParallelCorpus corpus = load_tsv(entry.path, entry.src_lang, entry.tgt_lang).corpus;
    if (cfg.sample_total) {
      auto split = sample_split(corpus, *cfg.sample_total, *cfg.sample_train, cfg.trainer.seed);
      if (!cfg.valid && !valid) valid = std::move(split.valid);
      corpus = std::move(split.train);
    }
    data.train.push_back(std::move(corpus));
  }
  if (cfg.valid) {
    valid = load_tsv(cfg.valid->path, cfg.valid->src_lang, cfg.valid->tgt_lang).corpus;
  }
  data.valid = std::move(*valid);
  if (cfg.test_sentences) {
    const auto test = read_lines(*cfg.test_sentences);
    for (auto& corpus : data.train) {
      auto filtered = filter_overlap(corpus, test);
      if (filtered.removed > 0) {
        spdlog::info("{}: removed {} pair(s) overlapping the test sentences", corpus.pair_name(), filtered.removed);
      }
      data.overlap_removed += filtered.removed;
      corpus = std::move(filtered.corpus);
    }
  }
  return data;
}

// The teacher must embed whatever each label mode reads.
void check_teacher_coverage(const RunConfig& cfg, const TeacherOracle& teacher,
                            std::span<const ParallelCorpus> corpora) {
  const auto& t = cfg.trainer;
  for (const auto& c : corpora) {
    if (t.objective == Objective::Mse) {
      teacher.require_language(c.src_lang);
      if (teacher.dim() != cfg.student_dim) {
        throw ConfigError("objective mse needs teacher dim (" + std::to_string(teacher.dim()) +
                          ") equal to student_dim (" + std::to_string(cfg.student_dim) + ")");
      }
    } else if (t.loss.mode == LabelMode::Average) {
      teacher.require_language(c.src_lang);
      teacher.require_language(c.tgt_lang);
    } else if (t.loss.mode == LabelMode::Priority) {
      teacher.require_language(select_anchor(c.src_lang, c.tgt_lang, t.priority));
    }
  }
}

bool can_measure_agreement(const RunConfig& cfg, const TeacherOracle& teacher, const ParallelCorpus& valid) {
  if (std::min(cfg.trainer.global_batch, valid.size()) < 3) return false;
  if (!cfg.trainer.priority.rank(valid.src_lang) || !cfg.trainer.priority.rank(valid.tgt_lang)) return false;
  return teacher.covers(select_anchor(valid.src_lang, valid.tgt_lang, cfg.trainer.priority));
}

ordered_json evaluation_block(const StudentEncoder& enc, const ParallelCorpus& valid, const TeacherOracle& teacher,
                              const RunConfig& cfg, bool agreement, const std::vector<StsRecord>* sts) {
  const auto src = encode_texts(enc, valid.sources());
  const auto tgt = encode_texts(enc, valid.targets());
  const auto gold = identity_alignment(valid.size());
  ordered_json j = evaluate_bitext(src, tgt, gold, cfg.eval_k, cfg.eval_margin).to_json();
  if (sts) j["spearman"] = sts_eval(enc, *sts);
  if (agreement) {
    const std::size_t b = std::min(cfg.trainer.global_batch, valid.size());
    ordered_json a;
    a["batch_size"] = b;
    a["cross"] = mean_teacher_agreement(enc, valid, teacher, cfg.trainer, b, AgreementView::Cross);
    a["mono_" + valid.src_lang] = mean_teacher_agreement(enc, valid, teacher, cfg.trainer, b, AgreementView::MonoSource);
    a["mono_" + valid.tgt_lang] = mean_teacher_agreement(enc, valid, teacher, cfg.trainer, b, AgreementView::MonoTarget);
    j["teacher_agreement"] = std::move(a);
  }
  return j;
}

std::string summary_text(const RunConfig& cfg, const TrainingData& data, const StudentEncoder& enc,
                         const TrainHistory& h, const ordered_json& report) {
  std::ostringstream s;
  s << "config hash      " << cfg.hash_hex() << '\n';
  for (const auto& c : data.train) s << "train corpus     " << c.pair_name() << ", " << c.size() << " pairs\n";
  s << "valid corpus     " << data.valid.pair_name() << ", " << data.valid.size() << " pairs\n";
  if (cfg.test_sentences) s << "overlap removed  " << data.overlap_removed << " pairs\n";
  s << "vocabulary       " << enc.vocab.size() << " tokens, student dim " << enc.dim() << '\n';
  s << "objective        " << to_string(cfg.trainer.objective) << ", labels " << to_string(cfg.trainer.loss.mode)
    << ", tcm " << (cfg.trainer.loss.tcm ? "on" : "off") << ", lambda " << format_double(cfg.trainer.loss.lambda)
    << ", temperature " << format_double(cfg.trainer.loss.temperature) << '\n';
  s << "epochs run       " << h.epochs.size() << " of " << cfg.trainer.max_epochs
    << (h.stopped_early ? " (early stop)" : "") << ", best epoch " << h.best_epoch << '\n';
  s << "loss             step 0 " << format_double(h.initial_loss);
  if (!h.epochs.empty()) s << ", epoch 1 " << format_double(h.epochs.front().loss) << ", last " << format_double(h.epochs.back().loss);
  s << '\n';
  const auto& fin = report["final"];
  s << "valid acc_avg    initial " << format_double(h.initial_valid_acc_avg) << ", best "
    << format_double(fin["acc_avg"].get<double>()) << '\n';
  if (!fin["xsim_error"].is_null()) {
    s << "xsim error       " << format_double(fin["xsim_error"].get<double>()) << " (" << to_string(cfg.eval_margin)
      << ", k=" << cfg.eval_k << ")\n";
  }
  if (fin.contains("teacher_agreement")) {
    const auto& a0 = report["initial"]["teacher_agreement"];
    for (const auto& [k, v] : fin["teacher_agreement"].items()) {
      if (k == "batch_size") continue;
      s << "agreement " << k << "  " << format_double(a0[k].get<double>()) << " -> " << format_double(v.get<double>())
        << '\n';
    }
  }
  if (!fin["spearman"].is_null()) s << "sts spearman     " << format_double(fin["spearman"].get<double>()) << '\n';
  return s.str();
}

int cmd_train(const TrainArgs& args) {
  RunConfig cfg = resolve_config(args.config, args.seed, args.sets);
  if (args.out) cfg.out = *args.out;

  const TeacherOracle teacher = load_teacher(*cfg.teacher);
  TrainingData data = load_training_data(cfg);
  check_teacher_coverage(cfg, teacher, data.train);
  std::optional<std::vector<StsRecord>> sts;
  if (cfg.sts) sts = load_sts(*cfg.sts);

  Rng init_rng(fnv1a64("student-init", cfg.trainer.seed));
  StudentEncoder student =
      StudentEncoder::initialize(build_vocab(data.train, cfg.min_count), cfg.student_dim, init_rng);
  const bool agreement = can_measure_agreement(cfg, teacher, data.valid);
  if (!agreement) spdlog::warn("teacher agreement not reported: teacher lacks the anchor language of the valid pair");

  ordered_json report;
  report["config_hash"] = cfg.hash_hex();
  report["valid_pair"] = data.valid.pair_name();
  report["initial"] = evaluation_block(student, data.valid, teacher, cfg, agreement, sts ? &*sts : nullptr);

  FitResult result = fit(std::move(student), data.train, teacher, data.valid, cfg.trainer);
  report["best_epoch"] = result.history.best_epoch;
  report["final"] = evaluation_block(result.encoder, data.valid, teacher, cfg, agreement, sts ? &*sts : nullptr);

  const fs::path dir = make_run_dir(cfg.out, cfg.hash_hex());
  Checkpoint ckpt{result.encoder, {cfg.entries.begin(), cfg.entries.end()}, result.rng_state};
  save_checkpoint(dir / "checkpoint.txt", ckpt);
  write_text(dir / "history.json", result.history.to_json().dump(2) + "\n");
  write_text(dir / "report.json", report.dump(2) + "\n");
  write_text(dir / "summary.txt", summary_text(cfg, data, result.encoder, result.history, report));
  write_with(dir / "config.txt", [&](std::ostream& o) {
    for (const auto& [k, v] : cfg.entries) o << k << " = " << v << '\n';
  });
  write_with(dir / "valid.tsv", [&](std::ostream& o) { write_tsv(o, data.valid); });
  write_with(dir / "valid.gold.tsv", [&](std::ostream& o) {
    const auto gold = identity_alignment(data.valid.size());
    write_gold(o, gold);
  });
  std::cout << dir.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- eval

void emit_report(const ordered_json& report, const std::optional<fs::path>& out, const std::string& key) {
  std::cout << report.dump(2) << '\n';
  if (out) {
    const fs::path dir = make_run_dir(*out, hex64(fnv1a64(key)));
    write_text(dir / "report.json", report.dump(2) + "\n");
    spdlog::info("report written to {}", (dir / "report.json").string());
  }
}

struct EvalBitextArgs {
  fs::path checkpoint;
  fs::path corpus;
  std::optional<fs::path> gold;
  std::size_t k = 4;
  std::string margin = "ratio";
  std::string src_lang = "src";
  std::string tgt_lang = "tgt";
  std::optional<fs::path> out;
};

int cmd_eval_bitext(const EvalBitextArgs& a) {
  const MarginScoring scoring = parse_margin_scoring(a.margin);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const ParallelCorpus corpus = load_tsv(a.corpus, a.src_lang, a.tgt_lang).corpus;
  const auto gold = a.gold ? load_gold(*a.gold, corpus.size()) : identity_alignment(corpus.size());
  const auto src = encode_texts(ckpt.encoder, corpus.sources());
  const auto tgt = encode_texts(ckpt.encoder, corpus.targets());
  ordered_json report = evaluate_bitext(src, tgt, gold, a.k, scoring).to_json();
  std::string key = "eval-bitext\n" + fs::absolute(a.checkpoint).string() + "\n" + fs::absolute(a.corpus).string() +
                    "\n" + (a.gold ? fs::absolute(*a.gold).string() : "") + "\n" + std::to_string(a.k) + "\n" + a.margin;
  emit_report(report, a.out, key);
  return kExitOk;
}

struct EvalStsArgs {
  fs::path checkpoint;
  fs::path sts;
  std::optional<fs::path> out;
};

int cmd_eval_sts(const EvalStsArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const auto records = load_sts(a.sts);
  ordered_json report;
  report["spearman"] = sts_eval(ckpt.encoder, records);
  report["count"] = records.size();
  emit_report(report, a.out,
              "eval-sts\n" + fs::absolute(a.checkpoint).string() + "\n" + fs::absolute(a.sts).string());
  return kExitOk;
}

// ------------------------------------------------------ inspect-labels

struct InspectArgs {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::optional<std::string> pair;
  std::size_t start = 0;
  std::size_t size = 4;
};

int cmd_inspect_labels(const InspectArgs& a) {
  const RunConfig cfg = resolve_config(a.config, a.seed, a.sets);
  const CorpusEntry* entry = &cfg.corpora.front();
  if (a.pair) {
    entry = nullptr;
    for (const auto& c : cfg.corpora) {
      if (c.src_lang + "-" + c.tgt_lang == *a.pair) entry = &c;
    }
    if (!entry) throw ConfigError("no corpus configured for pair '" + *a.pair + "'");
  }
  const ParallelCorpus corpus = load_tsv(entry->path, entry->src_lang, entry->tgt_lang).corpus;
  if (a.size == 0 || a.start + a.size > corpus.size()) {
    throw ConfigError("batch [" + std::to_string(a.start) + ", " + std::to_string(a.start + a.size) +
                      ") is outside the corpus of " + std::to_string(corpus.size()) + " pairs");
  }
  const TeacherOracle teacher = load_teacher(*cfg.teacher);
  std::vector<std::string> src;
  std::vector<std::string> tgt;
  for (std::size_t i = a.start; i < a.start + a.size; ++i) {
    src.push_back(corpus.pairs[i].first);
    tgt.push_back(corpus.pairs[i].second);
  }
  const double tau = cfg.trainer.loss.temperature;
  const Language anchor = select_anchor(corpus.src_lang, corpus.tgt_lang, cfg.trainer.priority);
  teacher.require_language(anchor);
  teacher.require_language(corpus.src_lang);
  teacher.require_language(corpus.tgt_lang);
  const auto e_src = teacher.embed_batch(src, corpus.src_lang);
  const auto e_tgt = teacher.embed_batch(tgt, corpus.tgt_lang);

  const LabelMatrix modes[] = {hard_labels(a.size), priority_labels(anchor == corpus.src_lang ? e_src : e_tgt, tau),
                               average_labels(e_src, e_tgt, tau)};
  const std::string titles[] = {"hard", "priority (anchor " + anchor + ")", "average"};

  std::cout << corpus.pair_name() << " rows " << a.start << ".." << a.start + a.size - 1 << ", temperature "
            << format_double(tau) << '\n';
  const std::size_t cell = 9;
  const std::size_t width = a.size * cell + 11;
  for (const auto& t : titles) {
    std::cout << "| " << t << std::string(width > t.size() ? width - t.size() : 1, ' ');
  }
  std::cout << '\n';
  char buf[32];
  for (std::size_t i = 0; i < a.size; ++i) {
    for (const auto& m : modes) {
      std::cout << "| ";
      double sum = 0.0;
      for (std::size_t j = 0; j < a.size; ++j) {
        std::snprintf(buf, sizeof buf, "%8.6f ", m.values(i, j));
        std::cout << buf;
        sum += m.values(i, j);
      }
      std::snprintf(buf, sizeof buf, "sum %8.6f ", sum);
      std::cout << buf;
    }
    std::cout << '\n';
  }
  return kExitOk;
}

// --------------------------------------------------------- sample-data

struct SampleArgs {
  SyntheticSpec spec;
  fs::path out = ".";
};

int cmd_sample_data(const SampleArgs& a) {
  a.spec.validate();
  const SyntheticData data = generate_synthetic(a.spec);
  fs::create_directories(a.out);
  const fs::path corpus = a.out / "corpus.tsv";
  const fs::path teacher = a.out / "teacher.tsv";
  const fs::path gold = a.out / "gold.tsv";
  write_with(corpus, [&](std::ostream& o) { write_tsv(o, data.corpus); });
  write_with(teacher, [&](std::ostream& o) { write_teacher_table(o, data.teacher); });
  write_with(gold, [&](std::ostream& o) { write_gold(o, data.gold); });
  std::cout << corpus.string() << '\n' << teacher.string() << '\n' << gold.string() << '\n';
  return kExitOk;
}

void install_logger(bool quiet) {
  auto logger = std::make_shared<spdlog::logger>("softcl", std::make_shared<spdlog::sinks::stderr_color_sink_mt>());
  logger->set_pattern("[%l] %v");
  logger->set_level(quiet ? spdlog::level::warn : spdlog::level::info);
  spdlog::set_default_logger(std::move(logger));
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Soft-contrastive distillation for cross-lingual sentence embeddings", "softcl"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a student encoder from a run config");
  train_cmd->add_option("--config", train.config, "key=value run config")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", train.seed, "Override the config seed");
  train_cmd->add_option("--out", train.out, "Parent of the run directory");
  train_cmd->add_option("--set", train.sets, "Override a config key (KEY=VALUE, repeatable)");

  EvalBitextArgs bitext;
  auto* bitext_cmd = app.add_subcommand("eval-bitext", "Retrieval accuracy and xSIM error on aligned text");
  bitext_cmd->add_option("--checkpoint", bitext.checkpoint)->required()->check(CLI::ExistingFile);
  bitext_cmd->add_option("--corpus", bitext.corpus, "src<TAB>tgt lines")->required()->check(CLI::ExistingFile);
  bitext_cmd->add_option("--gold", bitext.gold, "i<TAB>j alignment (default: identity)")->check(CLI::ExistingFile);
  bitext_cmd->add_option("--k", bitext.k, "Neighbourhood size of the ratio margin")->capture_default_str();
  bitext_cmd->add_option("--margin", bitext.margin, "ratio or cosine")->capture_default_str();
  bitext_cmd->add_option("--src-lang", bitext.src_lang)->capture_default_str();
  bitext_cmd->add_option("--tgt-lang", bitext.tgt_lang)->capture_default_str();
  bitext_cmd->add_option("--out", bitext.out, "Also write the report under a run directory here");

  EvalStsArgs sts;
  auto* sts_cmd = app.add_subcommand("eval-sts", "Spearman correlation with STS gold scores");
  sts_cmd->add_option("--checkpoint", sts.checkpoint)->required()->check(CLI::ExistingFile);
  sts_cmd->add_option("--sts", sts.sts, "a<TAB>b<TAB>score lines")->required()->check(CLI::ExistingFile);
  sts_cmd->add_option("--out", sts.out, "Also write the report under a run directory here");

  InspectArgs inspect;
  auto* inspect_cmd = app.add_subcommand("inspect-labels", "Print hard, priority and average labels for one batch");
  inspect_cmd->add_option("--config", inspect.config)->required()->check(CLI::ExistingFile);
  inspect_cmd->add_option("--seed", inspect.seed);
  inspect_cmd->add_option("--set", inspect.sets, "Override a config key (KEY=VALUE, repeatable)");
  inspect_cmd->add_option("--pair", inspect.pair, "Language pair such as en-ko (default: first corpus)");
  inspect_cmd->add_option("--start", inspect.start, "First corpus row of the batch")->capture_default_str();
  inspect_cmd->add_option("--size", inspect.size, "Batch size")->capture_default_str();

  SampleArgs sample;
  auto* sample_cmd = app.add_subcommand("sample-data", "Write a synthetic corpus, teacher table and gold index");
  sample_cmd->add_option("--concepts", sample.spec.concepts)->capture_default_str();
  sample_cmd->add_option("--pairs", sample.spec.pairs)->capture_default_str();
  sample_cmd->add_option("--vocab", sample.spec.vocab_per_language, "Words per concept and language")
      ->capture_default_str();
  sample_cmd->add_option("--noise", sample.spec.noise)->capture_default_str();
  sample_cmd->add_option("--teacher-dim", sample.spec.teacher_dim)->capture_default_str();
  sample_cmd->add_option("--seed", sample.spec.seed)->capture_default_str();
  sample_cmd->add_option("--src-lang", sample.spec.src_lang)->capture_default_str();
  sample_cmd->add_option("--tgt-lang", sample.spec.tgt_lang)->capture_default_str();
  sample_cmd->add_option("--out", sample.out, "Output directory")->capture_default_str();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  install_logger(quiet);

  try {
    if (*train_cmd) return cmd_train(train);
    if (*bitext_cmd) return cmd_eval_bitext(bitext);
    if (*sts_cmd) return cmd_eval_sts(sts);
    if (*inspect_cmd) return cmd_inspect_labels(inspect);
    if (*sample_cmd) return cmd_sample_data(sample);
  } catch (const NumericalError& e) {
    spdlog::error("numerical failure: {}", e.what());
    return kExitNumerical;
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return kExitConfig;
  } catch (const ShapeError& e) {
    spdlog::error("shape error: {}", e.what());
    return kExitConfig;
  } catch (const DomainError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace softcl::cli
