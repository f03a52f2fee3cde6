// Copyright 2026 The cpg Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration over a run directory:
//
//   reference.jsonl            ingested HUMAN passages
//   topics.jsonl               one row per curriculum item
//   passages.jsonl             one row per generation attempt
//   readability.jsonl          one row per passage (generated and HUMAN)
//   verdicts_<task>.jsonl      one row per judge attempt
//   report/                    tables, series, audits
//   manifest.json              config snapshot plus output digests
//
// Every stage rewrites its own file from scratch, in a deterministic order
// that does not depend on thread scheduling.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cpg/config.hpp"
#include "cpg/curriculum.hpp"
#include "cpg/error.hpp"
#include "cpg/evaluator.hpp"
#include "cpg/gateway.hpp"
#include "cpg/io.hpp"
#include "cpg/promptkit.hpp"
#include "cpg/records.hpp"
#include "cpg/stats.hpp"
#include "cpg/textmetrics.hpp"

namespace cpg {

namespace fs = std::filesystem;

using BackendFactory = std::function<std::shared_ptr<Backend>(const BackendConfig&)>;
using Logger = std::function<void(const std::string&)>;

inline constexpr const char* kReferenceFile = "reference.jsonl";
inline constexpr const char* kReferenceSummaryFile = "reference_summary.tsv";
inline constexpr const char* kTopicsFile = "topics.jsonl";
inline constexpr const char* kPassagesFile = "passages.jsonl";
inline constexpr const char* kReadabilityFile = "readability.jsonl";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kReportDir = "report";

inline std::string verdict_file(JudgeTask t) { return "verdicts_" + std::string(to_string(t)) + ".jsonl"; }

// Runs fn(0..n-1) on up to `workers` threads. The first exception thrown is
// rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
          next.store(n);
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first) std::rethrow_exception(first);
}

// Chooses `n` of `pool` with a seeded partial Fisher-Yates over indices and
// returns them in pool order. Uses raw engine output so the choice is the same
// on every standard library.
inline std::vector<std::string> select_topics(const std::vector<std::string>& pool, std::size_t n,
                                              std::uint64_t seed) {
  if (n > pool.size()) {
    throw InvalidArgumentError("cannot select " + std::to_string(n) + " of " + std::to_string(pool.size()) + " topics");
  }
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<std::string> out;
  for (std::size_t i : idx) out.push_back(pool[i]);
  return out;
}

inline std::uint64_t item_seed(std::uint64_t run_seed, const std::string& outcome_id) {
  return sha256_u64(std::to_string(run_seed) + ":" + outcome_id);
}

// ---------------------------------------------------------------------------
// Run context
// ---------------------------------------------------------------------------

// Loaded inputs plus one gateway per backend. Gateways are built on first
// use, so stages that never call a backend need no cassette or credentials.
class RunContext {
 public:
  RunContext(RunConfig config, BackendFactory factory,
             std::shared_ptr<CassetteRecorder> recorder = nullptr, Logger log = {})
      : config_(std::move(config)),
        catalog_(load_catalog(config_.catalog)),
        templates_(TemplateSet::load(config_.templates)),
        factory_(std::move(factory)),
        recorder_(std::move(recorder)),
        log_(log ? std::move(log) : Logger([](const std::string&) {})) {
    config_.validate();
    for (const auto& w : ngss_shape_warnings(catalog_)) log_(w);
  }

  const RunConfig& config() const noexcept { return config_; }
  const CurriculumCatalog& catalog() const noexcept { return catalog_; }
  const TemplateSet& templates() const noexcept { return templates_; }
  fs::path dir() const { return config_.run_dir(); }
  fs::path path(const std::string& name) const { return dir() / name; }
  void warn(const std::string& msg) const { log_(msg); }

  Gateway& gateway(const std::string& backend_id) {
    std::lock_guard lock(mu_);
    if (auto it = gateways_.find(backend_id); it != gateways_.end()) return *it->second;
    for (const auto& b : config_.backends) {
      if (b.backend_id == backend_id) {
        return *gateways_.emplace(backend_id, std::make_unique<Gateway>(b, factory_(b), recorder_)).first->second;
      }
    }
    throw UnknownIdError(backend_id);
  }

  Gateway& judge() {
    std::lock_guard lock(mu_);
    if (!config_.judge) throw InvalidArgumentError("no judge backend configured");
    if (!judge_) judge_ = std::make_unique<Gateway>(*config_.judge, factory_(*config_.judge), recorder_);
    return *judge_;
  }

 private:
  RunConfig config_;
  CurriculumCatalog catalog_;
  TemplateSet templates_;
  BackendFactory factory_;
  std::shared_ptr<CassetteRecorder> recorder_;
  Logger log_;
  std::mutex mu_;
  std::map<std::string, std::unique_ptr<Gateway>> gateways_;
  std::unique_ptr<Gateway> judge_;
};

namespace pipeline_detail {

inline std::vector<json> read_rows(const fs::path& path) {
  if (!fs::exists(path)) throw MissingInputError("required input '" + path.string() + "' not found");
  std::vector<json> out;
  for (auto& line : read_jsonl(path)) out.push_back(std::move(line.value));
  return out;
}

inline bool ok(const json& row) { return row.value("status", "") == "ok"; }

inline std::vector<PassageRecord> ok_passages(const fs::path& path) {
  std::vector<PassageRecord> out;
  for (const auto& row : read_rows(path)) {
    if (ok(row)) out.push_back(passage_from_json(row));
  }
  return out;
}

// Failures that mean the run itself is misconfigured rather than a single
// call failing; these abort instead of becoming failure rows.
inline bool fatal(const Error& e) {
  return dynamic_cast<const ReplayMissError*>(&e) || dynamic_cast<const AuthError*>(&e);
}

}  // namespace pipeline_detail

// ---------------------------------------------------------------------------
// Reference corpus
// ---------------------------------------------------------------------------

struct ReferenceCorpusEntry {
  std::string corpus_id;
  PassageRecord record;  // mode HUMAN
  json published;        // readability metrics as published with the corpus
};

inline json to_json(const ReferenceCorpusEntry& e) {
  json j = to_json(e.record);
  j["corpus_id"] = e.corpus_id;
  j["annotations"] = {{"item_ref", to_json(e.record.item_ref)}, {"readability", e.published}};
  return j;
}

// Reads a corpus file (one JSON object per line: id, grade, item_ref, topic,
// text, readability) into HUMAN records. Duplicate texts keep the first entry.
inline std::vector<ReferenceCorpusEntry> load_reference_corpus(const fs::path& path,
                                                               const CurriculumCatalog& catalog,
                                                               const Logger& warn) {
  std::vector<ReferenceCorpusEntry> out;
  std::map<std::string, std::string> seen;  // passage id -> corpus id
  for (const auto& [line_no, j] : read_jsonl(path)) {
    const std::string id = j.contains("id") && j["id"].is_string()
                               ? j["id"].get<std::string>()
                               : "line " + std::to_string(line_no);
    const std::string where = "corpus entry '" + id + "'";
    for (const char* key : {"grade", "item_ref", "topic", "text", "readability"}) {
      if (!j.contains(key) || j[key].is_null()) throw SchemaError(where + "." + key, "missing annotation");
    }
    if (!j["readability"].is_object() || j["readability"].empty()) {
      throw SchemaError(where + ".readability", "expected a nonempty object of published metrics");
    }
    PassageRecord r;
    r.mode = PassageMode::kHuman;
    r.backend_id = std::string(kHumanBackend);
    r.source = "corpus";
    if (!j["grade"].is_number_integer()) throw SchemaError(where + ".grade", "expected an integer");
    r.grade = j["grade"].get<int>();
    if (!valid_grade(r.grade)) throw GradeRangeError(id, r.grade);
    r.item_ref = parse_item_ref(j["item_ref"], where + ".item_ref");
    resolve_item(catalog, r.item_ref);
    r.topic = detail::require_string(j, "topic", where, true);
    r.text = detail::require_string(j, "text", where, true);
    r.word_target = word_target(r.grade);
    r.created = std::string(kEpochTimestamp);
    r = finalize(std::move(r));
    if (auto it = seen.find(r.passage_id); it != seen.end()) {
      warn(where + " duplicates the text of '" + it->second + "'; keeping the first");
      continue;
    }
    seen.emplace(r.passage_id, id);
    out.push_back({id, std::move(r), j["readability"]});
  }
  return out;
}

inline std::string reference_summary_tsv(const std::vector<ReferenceCorpusEntry>& entries) {
  struct Acc {
    std::size_t n = 0;
    double words = 0, unique = 0, sentences = 0, fkgl = 0, fre = 0;
  };
  std::map<int, Acc> by_grade;
  for (const auto& e : entries) {
    const auto rep = readability_report(e.record.text);
    auto& a = by_grade[e.record.grade];
    ++a.n;
    a.words += static_cast<double>(rep.stats.word_count);
    a.unique += static_cast<double>(rep.stats.unique_word_count);
    a.sentences += static_cast<double>(rep.stats.sentence_count);
    a.fkgl += rep.flesch_kincaid_grade;
    a.fre += rep.flesch_reading_ease;
  }
  std::string out = "grade\tn\tavg_words\tavg_unique_words\tavg_sentences\tmean_fkgl\tmean_fre\n";
  for (const auto& [g, a] : by_grade) {
    const double n = static_cast<double>(a.n);
    out += std::to_string(g) + "\t" + std::to_string(a.n) + "\t" + format_fixed(a.words / n, 1) + "\t" +
           format_fixed(a.unique / n, 1) + "\t" + format_fixed(a.sentences / n, 1) + "\t" +
           format_fixed(a.fkgl / n, 2) + "\t" + format_fixed(a.fre / n, 2) + "\n";
  }
  return out;
}

inline std::vector<ReferenceCorpusEntry> ingest_reference_corpus(RunContext& ctx, const fs::path& path) {
  auto entries = load_reference_corpus(path, ctx.catalog(), [&](const std::string& m) { ctx.warn(m); });
  std::vector<json> rows;
  for (const auto& e : entries) rows.push_back(to_json(e));
  write_jsonl(ctx.path(kReferenceFile), rows);
  write_file(ctx.path(kReferenceSummaryFile), reference_summary_tsv(entries));
  return entries;
}

// ---------------------------------------------------------------------------
// Topic generation
// ---------------------------------------------------------------------------

struct TopicSet {
  CurriculumItem item;
  std::vector<std::string> generated;
  std::vector<std::string> selected;
  std::string error;  // nonempty for failure rows
  std::string raw_response;
  unsigned asks = 0;
  bool ok() const noexcept { return error.empty(); }
};

inline json to_json(const TopicSet& t, const std::string& backend_id, std::uint64_t seed) {
  json j{{"status", t.ok() ? "ok" : "failed"},
         {"item_ref", to_json(ref_of(t.item))},
         {"grade", t.item.grade},
         {"backend_id", backend_id},
         {"asks", t.asks}};
  if (t.ok()) {
    j["seed"] = seed;
    j["generated"] = t.generated;
    j["selected"] = t.selected;
  } else {
    j["error"] = t.error;
    j["raw_response"] = t.raw_response;
  }
  return j;
}

// One wonder-prompt call per item (re-asked on an unparsable list), then a
// seeded choice of topics_per_item among the first topics_generated parsed.
inline std::vector<TopicSet> run_topic_generation(RunContext& ctx) {
  const auto& cfg = ctx.config();
  Gateway& gw = ctx.gateway(cfg.topic_backend);
  const auto items = enumerate_items(ctx.catalog());
  std::vector<TopicSet> sets(items.size());
  parallel_for(items.size(), gw.config().max_concurrent, [&](std::size_t i) {
    TopicSet& t = sets[i];
    t.item = items[i];
    const auto prompt = render_wonder_topics_prompt(ctx.templates(), t.item, cfg.topics_generated);
    for (unsigned k = 0; k <= cfg.topic_max_reasks; ++k) {
      ++t.asks;
      try {
        auto res = gw.complete(gw.request(prompt.text, k));
        t.raw_response = res.text;
        auto parsed = parse_topics(res.text, cfg.topics_generated);
        parsed.resize(cfg.topics_generated);
        t.generated = std::move(parsed);
        t.selected = select_topics(t.generated, cfg.topics_per_item, item_seed(cfg.seed, t.item.outcome.id));
        t.error.clear();
        t.raw_response.clear();
        return;
      } catch (const MalformedResponseError& e) {
        t.error = e.what();
      } catch (const BackendError& e) {
        if (pipeline_detail::fatal(e)) throw;
        t.error = e.what();
        return;
      }
    }
  });
  std::vector<json> rows;
  for (const auto& t : sets) rows.push_back(to_json(t, cfg.topic_backend, item_seed(cfg.seed, t.item.outcome.id)));
  write_jsonl(ctx.path(kTopicsFile), rows);
  return sets;
}

inline std::vector<TopicSet> load_topics(const RunContext& ctx) {
  std::vector<TopicSet> out;
  for (const auto& row : pipeline_detail::read_rows(ctx.path(kTopicsFile))) {
    TopicSet t;
    t.item = resolve_item(ctx.catalog(), parse_item_ref(row.at("item_ref"), "topics.item_ref"));
    t.asks = row.value("asks", 0u);
    if (pipeline_detail::ok(row)) {
      t.generated = row.at("generated").get<std::vector<std::string>>();
      t.selected = row.at("selected").get<std::vector<std::string>>();
    } else {
      t.error = row.value("error", std::string("failed"));
    }
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Passage generation
// ---------------------------------------------------------------------------

struct PassageJob {
  std::string backend_id;
  GenerationMode mode = GenerationMode::kCogent;
  CurriculumItem item;
  std::string topic;
  std::uint32_t sample_index = 0;
  std::string source = "topics";
};

struct PassageOutcome {
  PassageJob job;
  std::optional<PassageRecord> record;
  std::string error;
  unsigned attempts = 0;
};

inline json to_json(const PassageOutcome& o) {
  if (o.record) {
    json j = to_json(*o.record);
    j["attempts"] = o.attempts;
    return j;
  }
  return json{{"status", "failed"},
              {"mode", to_string(o.job.mode)},
              {"backend_id", o.job.backend_id},
              {"grade", o.job.item.grade},
              {"item_ref", to_json(ref_of(o.job.item))},
              {"topic", o.job.topic},
              {"sample_index", o.job.sample_index},
              {"source", o.job.source},
              {"error", o.error},
              {"attempts", o.attempts}};
}

// Jobs in persisted order: backend, mode, item, topic, repetition; then the
// reference-topic jobs in the same nesting.
inline std::vector<PassageJob> plan_passage_jobs(const RunConfig& cfg, const std::vector<TopicSet>& topics,
                                                 const std::vector<PassageRecord>& reference,
                                                 const CurriculumCatalog& catalog) {
  std::vector<PassageJob> jobs;
  for (const auto& b : cfg.backends) {
    for (GenerationMode mode : cfg.modes) {
      for (const auto& t : topics) {
        if (!t.ok()) continue;
        for (const auto& topic : t.selected) {
          for (std::size_t rep = 0; rep < cfg.passages_per_topic; ++rep) {
            jobs.push_back({b.backend_id, mode, t.item, topic, static_cast<std::uint32_t>(rep), "topics"});
          }
        }
      }
    }
  }
  if (cfg.parallel_reference) {
    for (const auto& b : cfg.backends) {
      for (GenerationMode mode : cfg.modes) {
        for (const auto& r : reference) {
          const CurriculumItem item = resolve_item(catalog, r.item_ref);
          for (std::size_t rep = 0; rep < cfg.passages_per_topic; ++rep) {
            jobs.push_back({b.backend_id, mode, item, r.topic, static_cast<std::uint32_t>(rep), "reference"});
          }
        }
      }
    }
  }
  return jobs;
}

inline std::vector<PassageRecord> load_reference(const RunContext& ctx) {
  if (!fs::exists(ctx.path(kReferenceFile))) return {};
  return pipeline_detail::ok_passages(ctx.path(kReferenceFile));
}

inline std::vector<PassageOutcome> run_passage_generation(RunContext& ctx, const std::vector<TopicSet>& topics) {
  const auto& cfg = ctx.config();
  const auto jobs = plan_passage_jobs(cfg, topics, load_reference(ctx), ctx.catalog());
  std::vector<PassageOutcome> out(jobs.size());
  for (const auto& b : cfg.backends) {
    std::vector<std::size_t> mine;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].backend_id == b.backend_id) mine.push_back(i);
    }
    Gateway& gw = ctx.gateway(b.backend_id);
    parallel_for(mine.size(), b.max_concurrent, [&](std::size_t k) {
      const std::size_t i = mine[k];
      PassageOutcome& o = out[i];
      o.job = jobs[i];
      const auto spec = make_generation_spec(o.job.item, o.job.mode, o.job.topic);
      const auto prompt = render_passage_prompt(ctx.templates(), spec);
      try {
        auto res = gw.complete(gw.request(prompt.text, o.job.sample_index));
        o.attempts = res.attempts;
        PassageRecord r;
        r.mode = to_passage_mode(o.job.mode);
        r.backend_id = o.job.backend_id;
        r.grade = o.job.item.grade;
        r.item_ref = ref_of(o.job.item);
        r.topic = o.job.topic;
        r.text = std::move(res.text);
        r.word_target = spec.word_target;
        r.sample_index = o.job.sample_index;
        r.source = o.job.source;
        r.created = std::move(res.timestamp);
        o.record = finalize(std::move(r));
      } catch (const BackendError& e) {
        if (pipeline_detail::fatal(e)) throw;
        o.error = e.what();
        if (auto* t = dynamic_cast<const TransportError*>(&e)) o.attempts = t->attempts();
      }
    });
  }
  std::vector<json> rows;
  rows.reserve(out.size());
  for (const auto& o : out) rows.push_back(to_json(o));
  write_jsonl(ctx.path(kPassagesFile), rows);
  return out;
}

// ---------------------------------------------------------------------------
// Readability
// ---------------------------------------------------------------------------

inline json readability_row(const PassageRecord& r, double margin) {
  json j{{"passage_id", r.passage_id}, {"mode", to_string(r.mode)}, {"backend_id", r.backend_id},
         {"grade", r.grade},           {"source", r.source}};
  try {
    const auto rep = readability_report(r.text);
    const double excess = rep.flesch_kincaid_grade - r.grade;
    j["status"] = "ok";
    j["flesch_reading_ease"] = rep.flesch_reading_ease;
    j["flesch_kincaid_grade"] = rep.flesch_kincaid_grade;
    j["gunning_fog"] = rep.gunning_fog;
    j["automated_readability_index"] = rep.automated_readability_index;
    j["coleman_liau"] = rep.coleman_liau;
    j["word_count"] = rep.stats.word_count;
    j["sentence_count"] = rep.stats.sentence_count;
    j["syllable_count"] = rep.stats.syllable_count;
    j["complex_word_count"] = rep.stats.complex_word_count;
    j["unique_word_count"] = rep.stats.unique_word_count;
    j["grade_excess"] = excess;
    j["adherence_flag"] = excess > margin;
  } catch (const UndefinedInputError& e) {
    j["status"] = "failed";
    j["error"] = e.what();
  }
  return j;
}

// Generated passages first (store order), then HUMAN references.
inline std::vector<json> run_readability(RunContext& ctx) {
  std::vector<PassageRecord> records;
  if (fs::exists(ctx.path(kPassagesFile))) records = pipeline_detail::ok_passages(ctx.path(kPassagesFile));
  for (auto& r : load_reference(ctx)) records.push_back(std::move(r));
  std::vector<json> rows(records.size());
  parallel_for(records.size(), std::thread::hardware_concurrency(),
               [&](std::size_t i) { rows[i] = readability_row(records[i], ctx.config().grade_margin); });
  write_jsonl(ctx.path(kReadabilityFile), rows);
  return rows;
}

// ---------------------------------------------------------------------------
// Judging
// ---------------------------------------------------------------------------

namespace pipeline_detail {

inline json verdict_base(const PassageRecord& p, const std::string& judge_id, unsigned repetition) {
  return json{{"passage_id", p.passage_id}, {"mode", to_string(p.mode)},  {"backend_id", p.backend_id},
              {"grade", p.grade},           {"source", p.source},         {"judge_backend", judge_id},
              {"repetition", repetition},   {"self_judged", p.backend_id == judge_id}};
}

template <class V>
json failure(json row, const JudgeOutcome<V>& o) {
  row["status"] = "failed";
  row["error"] = o.error;
  row["raw_response"] = o.raw_response;
  row["asks"] = o.asks;
  return row;
}

}  // namespace pipeline_detail

// Judges every generated passage and every HUMAN reference. Rows are
// written per task in (passage, repetition) order.
inline std::map<JudgeTask, std::vector<json>> run_judging(RunContext& ctx) {
  using namespace pipeline_detail;
  const auto& cfg = ctx.config();
  std::vector<PassageRecord> passages;
  if (fs::exists(ctx.path(kPassagesFile))) passages = ok_passages(ctx.path(kPassagesFile));
  for (auto& r : load_reference(ctx)) passages.push_back(std::move(r));

  std::map<JudgeTask, std::vector<json>> out;
  if (cfg.judge_tasks.empty()) return out;
  Gateway& gw = ctx.judge();
  Judge judge(gw, ctx.templates(), cfg.judge_max_reasks);
  const std::string judge_id = gw.config().backend_id;
  const std::size_t reps = cfg.judge_repetitions;

  std::map<std::string, std::vector<LabeledItem>> candidates;
  for (const auto& c : ctx.catalog().concepts) candidates[c.id] = items_for_concept(ctx.catalog(), c.id);

  for (JudgeTask task : cfg.judge_tasks) {
    std::vector<json> rows(passages.size() * reps);
    parallel_for(rows.size(), gw.config().max_concurrent, [&](std::size_t i) {
      const PassageRecord& p = passages[i / reps];
      const auto rep = static_cast<unsigned>(i % reps);
      json row = verdict_base(p, judge_id, rep);
      switch (task) {
        case JudgeTask::kAlignment: {
          auto o = judge.alignment(p, resolve_item(ctx.catalog(), p.item_ref), rep);
          if (!o.verdict) {
            row = failure(std::move(row), o);
          } else {
            row["status"] = "ok";
            row["score"] = o.verdict->score;
            row["asks"] = o.asks;
          }
          break;
        }
        case JudgeTask::kCategorize: {
          const auto& cands = candidates.at(p.item_ref.concept_id);
          row["concept_id"] = p.item_ref.concept_id;
          row["n_candidates"] = cands.size();
          std::string gold;
          for (const auto& c : cands) {
            if (c.item.outcome.id == p.item_ref.outcome_id) gold = c.label;
          }
          row["gold_label"] = gold;
          if (cands.size() < 2) {
            row["status"] = "skipped";
            row["asks"] = 0;
            break;
          }
          auto o = judge.categorize(p, cands, gold, rep);
          if (!o.verdict) {
            row = failure(std::move(row), o);
          } else {
            row["status"] = "ok";
            row["predicted_label"] = o.verdict->predicted_label;
            row["correct"] = o.verdict->predicted_label == gold;
            row["asks"] = o.asks;
          }
          break;
        }
        case JudgeTask::kComprehensibility: {
          auto o = judge.comprehensibility(p, rep);
          if (!o.verdict) {
            row = failure(std::move(row), o);
          } else {
            const auto& s = o.verdict->scores;
            row["status"] = "ok";
            row["readability"] = s.readability;
            row["correctness"] = s.correctness;
            row["coherence"] = s.coherence;
            row["engagement"] = s.engagement;
            row["mean"] = s.mean();
            row["asks"] = o.asks;
          }
          break;
        }
      }
      rows[i] = std::move(row);
    });
    write_jsonl(ctx.path(verdict_file(task)), rows);
    out[task] = std::move(rows);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

inline constexpr const char* kMetricAlignment = "Curriculum Alignment";
inline constexpr const char* kMetricComprehensibility = "Comprehensibility";

namespace report_detail {

struct PassageInfo {
  std::string mode;
  std::string backend_id;
  std::string source;
  int grade = 0;
};

// Per-passage mean of `field` over ok verdict rows (averaging repetitions).
inline std::map<std::string, double> per_passage_mean(const std::vector<json>& rows, const char* field) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& r : rows) {
    if (r.value("status", "") != "ok") continue;
    auto& a = acc[r.at("passage_id").get<std::string>()];
    a.first += r.at(field).get<double>();
    ++a.second;
  }
  std::map<std::string, double> out;
  for (const auto& [id, a] : acc) out[id] = a.first / static_cast<double>(a.second);
  return out;
}

inline std::string lines_tsv(const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += '\t';
      out += row[i];
    }
    out += '\n';
  }
  return out;
}

}  // namespace report_detail

struct ReportBundle {
  std::optional<ComparisonTable> table2;
  std::optional<ComparisonTable> table3;
  std::optional<DeltaTable> table5;
  std::string table4_tsv;
  json index;
};

// Reads the persisted stores and writes report/*. Observations come from
// per-passage verdicts, so the tables can be recomputed from the store alone.
inline ReportBundle run_report(RunContext& ctx) {
  using namespace pipeline_detail;
  using namespace report_detail;
  const auto& cfg = ctx.config();
  const fs::path out_dir = ctx.path(kReportDir);
  fs::create_directories(out_dir);

  const auto passage_rows = read_rows(ctx.path(kPassagesFile));
  const auto readability_rows = read_rows(ctx.path(kReadabilityFile));
  std::map<JudgeTask, std::vector<json>> verdicts;
  for (JudgeTask t : cfg.judge_tasks) verdicts[t] = read_rows(ctx.path(verdict_file(t)));
  const auto reference = load_reference(ctx);

  std::map<std::string, PassageInfo> info;
  std::vector<PassageRecord> generated;
  for (const auto& row : passage_rows) {
    if (!ok(row)) continue;
    auto r = passage_from_json(row);
    info[r.passage_id] = {std::string(to_string(r.mode)), r.backend_id, r.source, r.grade};
    generated.push_back(std::move(r));
  }
  for (const auto& r : reference) info[r.passage_id] = {"HUMAN", r.backend_id, r.source, r.grade};

  bool have_reference_source = false;
  for (const auto& r : generated) have_reference_source |= r.source == "reference";
  const std::string parallel_source = have_reference_source ? "reference" : "topics";

  ReportBundle bundle;
  json index{{"run_id", cfg.run_id}, {"tables", json::object()}};

  // Judge metrics as observations.
  std::vector<std::pair<std::string, Observation>> judged_src;
  auto add_metric = [&](const std::map<std::string, double>& per_passage, const std::string& metric) {
    for (const auto& [id, v] : per_passage) {
      auto it = info.find(id);
      if (it == info.end()) continue;
      judged_src.push_back({it->second.source, {metric, it->second.grade, it->second.mode, v}});
    }
  };
  if (verdicts.count(JudgeTask::kAlignment)) {
    add_metric(per_passage_mean(verdicts[JudgeTask::kAlignment], "score"), kMetricAlignment);
  }
  if (verdicts.count(JudgeTask::kComprehensibility)) {
    const auto& rows = verdicts[JudgeTask::kComprehensibility];
    add_metric(per_passage_mean(rows, "mean"), kMetricComprehensibility);
    for (const char* aspect : {"readability", "correctness", "coherence", "engagement"}) {
      std::string name = aspect;
      name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
      add_metric(per_passage_mean(rows, aspect), name);
    }
  }
  auto is_headline = [](const std::string& m) { return m == kMetricAlignment || m == kMetricComprehensibility; };

  // Table 2: BASE vs COGENT on the selected-topic passages.
  {
    std::vector<Observation> obs;
    for (const auto& [src, o] : judged_src) {
      if (src == "topics" && o.condition != "HUMAN" && is_headline(o.metric)) obs.push_back(o);
    }
    const std::size_t m = cfg.table2_m.value_or(1);
    if (!obs.empty()) {
      auto agg = aggregate(obs, {"BASE", "COGENT"}, m);
      write_file(out_dir / "table2.tsv", to_tsv(agg.table));
      write_file(out_dir / "table2.json", to_json(agg.table).dump(2) + "\n");
      index["tables"]["table2"] = {{"bonferroni_m", m}, {"rows", agg.table.rows.size()}};
      bundle.table2 = std::move(agg.table);
    } else {
      index["tables"]["table2"] = {{"skipped", "no alignment or comprehensibility verdicts"}};
    }
  }

  // Table 3: BASE vs COGENT vs Human on the parallel set.
  {
    std::vector<Observation> obs;
    std::set<std::string> conditions;
    for (const auto& [src, o] : judged_src) {
      if (!is_headline(o.metric)) continue;
      if ((o.condition == "HUMAN" && src == "corpus") || (o.condition != "HUMAN" && src == parallel_source)) {
        obs.push_back(o);
        conditions.insert(o.condition);
      }
    }
    for (auto& o : obs) {
      if (o.condition == "HUMAN") o.condition = "Human";
    }
    const std::size_t m = cfg.table3_m.value_or(3);
    if (conditions.count("HUMAN")) {
      auto agg = aggregate(obs, {"BASE", "COGENT", "Human"}, m);
      write_file(out_dir / "table3.tsv", to_tsv(agg.table));
      write_file(out_dir / "table3.json", to_json(agg.table).dump(2) + "\n");
      index["tables"]["table3"] = {{"bonferroni_m", m}, {"passage_source", parallel_source}};
      bundle.table3 = std::move(agg.table);
    } else {
      index["tables"]["table3"] = {{"skipped", "no judged HUMAN reference passages"}};
    }
  }

  // Readability and length observations.
  std::vector<Observation> text_obs;        // condition = mode
  std::vector<Observation> text_obs_by_be;  // condition = mode:backend
  std::vector<Observation> unique_obs;      // parallel set + corpus, for Table 5
  json adherence = json::object();
  for (const auto& row : readability_rows) {
    if (!ok(row)) continue;
    const std::string mode = row.at("mode");
    const std::string be = row.at("backend_id");
    const std::string src = row.value("source", "topics");
    const int g = row.at("grade");
    for (const char* metric : {"flesch_reading_ease", "flesch_kincaid_grade", "gunning_fog",
                               "automated_readability_index", "coleman_liau", "word_count", "unique_word_count"}) {
      const double v = row.at(metric).get<double>();
      if (src != "reference") text_obs.push_back({metric, g, mode, v});
      text_obs_by_be.push_back({metric, g, mode + ":" + be + ":" + src, v});
    }
    if ((mode == "HUMAN" && src == "corpus") || (mode != "HUMAN" && src == parallel_source)) {
      unique_obs.push_back({"unique_word_count", g, mode == "HUMAN" ? "Human" : mode,
                            row.at("unique_word_count").get<double>()});
    }
  }

  // Per-grade series for plotting.
  {
    std::vector<SeriesPoint> series;
    auto add_series = [&](const std::vector<Observation>& obs) {
      std::map<std::tuple<std::string, int, std::string>, std::pair<double, std::size_t>> acc;
      std::vector<std::string> metric_order;
      for (const auto& o : obs) {
        if (std::find(metric_order.begin(), metric_order.end(), o.metric) == metric_order.end()) {
          metric_order.push_back(o.metric);
        }
        auto& a = acc[{o.metric, o.grade, o.condition}];
        a.first += o.value;
        ++a.second;
      }
      for (const auto& metric : metric_order) {
        for (const auto& [key, a] : acc) {
          if (std::get<0>(key) != metric) continue;
          series.push_back({metric, std::get<1>(key), std::get<2>(key), a.first / static_cast<double>(a.second),
                            a.second});
        }
      }
    };
    std::vector<Observation> judged_all;
    for (const auto& [src, o] : judged_src) {
      Observation x = o;
      x.condition = o.condition + ":" + src;
      judged_all.push_back(std::move(x));
    }
    add_series(judged_all);
    add_series(text_obs);
    write_file(out_dir / "series.tsv", series_tsv(series));
    series.clear();
    add_series(text_obs_by_be);
    write_file(out_dir / "series_by_backend.tsv", series_tsv(series));
  }

  // Table 4: mean generated length, rows (grade, mode) x backend columns.
  {
    std::map<std::pair<int, std::string>, std::map<std::string, std::pair<double, std::size_t>>> cells;
    std::vector<std::vector<std::string>> audit = {
        {"passage_id", "backend_id", "mode", "grade", "word_count", "word_target", "deviation"}};
    std::map<std::tuple<int, std::string, std::string>, std::pair<double, std::size_t>> dev;
    for (const auto& r : generated) {
      if (r.source != "topics") continue;
      const std::string mode(to_string(r.mode));
      auto& c = cells[{r.grade, mode}][r.backend_id];
      c.first += static_cast<double>(r.word_count);
      ++c.second;
      const double target = static_cast<double>(word_target(r.grade));
      const double d = (static_cast<double>(r.word_count) - target) / target;
      audit.push_back({r.passage_id, r.backend_id, mode, std::to_string(r.grade), std::to_string(r.word_count),
                       std::to_string(static_cast<long long>(target)), format_fixed(d, 6)});
      auto& a = dev[{r.grade, mode, r.backend_id}];
      a.first += d;
      ++a.second;
    }
    std::vector<std::vector<std::string>> t4 = {{"grade", "type"}};
    for (const auto& b : cfg.backends) t4[0].push_back(b.backend_id);
    for (int g = kMinGrade; g <= kMaxGrade; ++g) {
      for (GenerationMode mode : cfg.modes) {
        auto it = cells.find({g, std::string(to_string(mode))});
        if (it == cells.end()) continue;
        std::vector<std::string> row = {std::to_string(g), std::string(to_string(mode))};
        for (const auto& b : cfg.backends) {
          auto c = it->second.find(b.backend_id);
          row.push_back(c == it->second.end() ? "n/a"
                                              : format_fixed(c->second.first / static_cast<double>(c->second.second)));
        }
        t4.push_back(std::move(row));
      }
    }
    bundle.table4_tsv = lines_tsv(t4);
    write_file(out_dir / "table4.tsv", bundle.table4_tsv);
    write_file(out_dir / "word_target_audit.tsv", lines_tsv(audit));
    std::vector<std::vector<std::string>> summary = {{"grade", "mode", "backend_id", "n", "mean_deviation"}};
    for (const auto& [key, a] : dev) {
      summary.push_back({std::to_string(std::get<0>(key)), std::get<1>(key), std::get<2>(key),
                         std::to_string(a.second), format_fixed(a.first / static_cast<double>(a.second), 6)});
    }
    write_file(out_dir / "word_target_summary.tsv", lines_tsv(summary));
    index["tables"]["table4"] = {{"rows", t4.size() - 1}};
  }

  // Table 5: unique words per grade against the HUMAN corpus.
  {
    bool human = false;
    for (const auto& o : unique_obs) human |= o.condition == "Human";
    if (human) {
      std::vector<std::string> conds;
      for (GenerationMode m : cfg.modes) conds.emplace_back(to_string(m));
      auto t5 = delta_table(unique_obs, "unique_word_count", "Human", conds);
      write_file(out_dir / "table5.tsv", to_tsv(t5));
      json j5{{"metric", t5.metric}, {"reference", t5.reference}, {"conditions", t5.conditions}, {"rows", json::array()}};
      for (const auto& r : t5.rows) {
        j5["rows"].push_back({{"grade", r.grade}, {"reference_mean", r.reference_mean}, {"deltas", r.deltas},
                              {"means", r.means}});
      }
      write_file(out_dir / "table5.json", j5.dump(2) + "\n");
      index["tables"]["table5"] = {{"passage_source", parallel_source}};
      bundle.table5 = std::move(t5);
    } else {
      index["tables"]["table5"] = {{"skipped", "no HUMAN reference passages"}};
    }
  }

  // Grade adherence.
  {
    std::map<std::tuple<int, std::string, std::string>, std::tuple<std::size_t, double, std::size_t>> acc;
    for (const auto& row : readability_rows) {
      if (!ok(row)) continue;
      auto& [n, fk, flagged] = acc[{row.at("grade").get<int>(), row.at("mode").get<std::string>(),
                                    row.at("backend_id").get<std::string>()}];
      ++n;
      fk += row.at("flesch_kincaid_grade").get<double>();
      flagged += row.at("adherence_flag").get<bool>() ? 1 : 0;
    }
    std::vector<std::vector<std::string>> rows = {{"grade", "mode", "backend_id", "n", "mean_fkgl", "mean_excess", "flagged"}};
    for (const auto& [key, v] : acc) {
      const auto& [n, fk, flagged] = v;
      const double mean = fk / static_cast<double>(n);
      rows.push_back({std::to_string(std::get<0>(key)), std::get<1>(key), std::get<2>(key), std::to_string(n),
                      format_fixed(mean), format_fixed(mean - std::get<0>(key)), std::to_string(flagged)});
    }
    write_file(out_dir / "adherence.tsv", lines_tsv(rows));
    index["grade_margin"] = cfg.grade_margin;
  }

  // Categorization accuracy per (mode, backend, source).
  if (verdicts.count(JudgeTask::kCategorize)) {
    std::map<std::tuple<std::string, std::string, std::string>, std::vector<CategoryVerdict>> groups;
    std::size_t skipped = 0;
    for (const auto& row : verdicts[JudgeTask::kCategorize]) {
      const std::string status = row.value("status", "");
      if (status == "skipped") ++skipped;
      if (status != "ok") continue;
      groups[{row.at("mode"), row.at("backend_id"), row.at("source")}].push_back(
          {row.at("predicted_label"), row.at("passage_id"), row.at("concept_id"), row.at("gold_label")});
    }
    std::vector<std::vector<std::string>> rows = {{"mode", "backend_id", "source", "correct", "total", "accuracy"}};
    for (const auto& [key, v] : groups) {
      const auto acc = categorization_accuracy(v);
      rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), std::to_string(acc.correct),
                      std::to_string(acc.total), format_fixed(acc.value(), 4)});
    }
    write_file(out_dir / "accuracy.tsv", lines_tsv(rows));
    index["categorization_skipped"] = skipped;
  }

  // Completeness: every attempt appears once as ok, failed, or skipped.
  {
    std::map<std::tuple<std::string, std::string, std::string>, std::map<std::string, std::size_t>> counts;
    for (const auto& row : passage_rows) {
      ++counts[{"passages", row.value("backend_id", ""), row.value("mode", "")}][row.value("status", "")];
    }
    for (const auto& [task, rows] : verdicts) {
      for (const auto& row : rows) {
        ++counts[{verdict_file(task), row.value("backend_id", ""), row.value("mode", "")}][row.value("status", "")];
      }
    }
    std::vector<std::vector<std::string>> rows = {{"store", "backend_id", "mode", "rows", "ok", "failed", "skipped"}};
    for (const auto& [key, c] : counts) {
      std::size_t total = 0;
      for (const auto& [_, n] : c) total += n;
      auto get = [&](const char* s) { auto it = c.find(s); return std::to_string(it == c.end() ? 0 : it->second); };
      rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), std::to_string(total), get("ok"),
                      get("failed"), get("skipped")});
    }
    write_file(out_dir / "completeness.tsv", lines_tsv(rows));
  }

  // Self-judging flag.
  {
    std::set<std::string> self;
    if (cfg.judge) {
      for (const auto& b : cfg.backends) {
        if (b.backend_id == cfg.judge->backend_id) self.insert(b.backend_id);
      }
    }
    index["judge_backend"] = cfg.judge ? json(cfg.judge->backend_id) : json(nullptr);
    index["self_judged_backends"] = self;
    index["judge_repetitions"] = cfg.judge_repetitions;
  }

  write_file(out_dir / "index.json", index.dump(2) + "\n");
  bundle.index = std::move(index);
  return bundle;
}

// ---------------------------------------------------------------------------
// Manifest and full runs
// ---------------------------------------------------------------------------

// Output files under the run directory (excluding the manifest and scratch
// directories), relative, sorted, with digests.
inline std::map<std::string, std::string> output_digests(const fs::path& run_dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(run_dir)) return out;
  for (auto it = fs::recursive_directory_iterator(run_dir); it != fs::recursive_directory_iterator(); ++it) {
    const auto rel = fs::relative(it->path(), run_dir).generic_string();
    if (it->is_directory()) {
      if (rel.starts_with(".")) it.disable_recursion_pending();
      continue;
    }
    if (rel == kManifestFile || rel.starts_with(".")) continue;
    out[rel] = file_digest(it->path());
  }
  return out;
}

inline json build_manifest(const RunContext& ctx) {
  const auto& cfg = ctx.config();
  json outputs = json::object();
  for (const auto& [rel, digest] : output_digests(ctx.dir())) outputs[rel] = digest;
  json inputs{{"catalog_sha256", file_digest(cfg.catalog)}, {"templates_sha256", ctx.templates().digests()}};
  if (!cfg.corpus.empty()) inputs["corpus_sha256"] = file_digest(cfg.corpus);
  return json{{"run_id", cfg.run_id}, {"seed", cfg.seed}, {"config", to_json(cfg)}, {"inputs", inputs},
              {"outputs", outputs}};
}

inline json write_manifest(const RunContext& ctx) {
  json m = build_manifest(ctx);
  write_file(ctx.path(kManifestFile), m.dump(2) + "\n");
  return m;
}

inline json run_full(RunContext& ctx) {
  const auto& cfg = ctx.config();
  fs::create_directories(ctx.dir());
  if (!cfg.corpus.empty()) ingest_reference_corpus(ctx, cfg.corpus);
  auto topics = run_topic_generation(ctx);
  run_passage_generation(ctx, topics);
  run_readability(ctx);
  run_judging(ctx);
  run_report(ctx);
  return write_manifest(ctx);
}

struct VerifyResult {
  bool identical = false;
  std::vector<std::string> mismatches;  // "path: reason"
};

// Compares a fresh manifest against a recorded one, output by output.
inline VerifyResult compare_manifests(const json& recorded, const json& fresh) {
  VerifyResult r;
  const auto& a = recorded.at("outputs");
  const auto& b = fresh.at("outputs");
  for (auto it = a.begin(); it != a.end(); ++it) {
    if (!b.contains(it.key())) {
      r.mismatches.push_back(it.key() + ": missing from re-execution");
    } else if (b[it.key()] != it.value()) {
      r.mismatches.push_back(it.key() + ": digest differs");
    }
  }
  for (auto it = b.begin(); it != b.end(); ++it) {
    if (!a.contains(it.key())) r.mismatches.push_back(it.key() + ": not in recorded manifest");
  }
  if (recorded.contains("inputs") && recorded["inputs"] != fresh["inputs"]) {
    r.mismatches.push_back("inputs: catalog, template, or corpus digests differ");
  }
  r.identical = r.mismatches.empty();
  return r;
}

// Re-executes the run under `<run>/.verify/` with `factory` (normally
// replay-only) and compares digests against the recorded manifest.
inline VerifyResult replay_verify(RunConfig config, const BackendFactory& factory, Logger log = {}) {
  const fs::path recorded_path = config.run_dir() / kManifestFile;
  if (!fs::exists(recorded_path)) throw MissingInputError("no manifest at '" + recorded_path.string() + "'");
  const json recorded = json::parse(read_file(recorded_path));
  const fs::path scratch_root = config.run_dir() / ".verify";
  fs::remove_all(scratch_root);
  config.run_root = scratch_root;
  RunContext ctx(config, factory, nullptr, std::move(log));
  const json fresh = run_full(ctx);
  auto result = compare_manifests(recorded, fresh);
  if (result.identical) fs::remove_all(scratch_root);
  return result;
}

}  // namespace cpg
