// Copyright 2026 The cpg Authors
// SPDX-License-Identifier: Apache-2.0
//
// cpg: command-line front end for the passage generation and evaluation
// pipeline. Exit codes: 0 ok, 1 usage, 2 data, 3 backend.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cpg/backends.hpp"
#include "cpg/config.hpp"
#include "cpg/curriculum.hpp"
#include "cpg/error.hpp"
#include "cpg/pipeline.hpp"
#include "cpg/stats.hpp"
#include "cpg/textmetrics.hpp"

namespace fs = std::filesystem;

namespace {

struct GlobalFlags {
  std::string config;
  std::string run_id;
  std::string run_dir;
  std::optional<std::uint64_t> seed;
  std::string cassette;
  bool offline = false;
  bool synthetic = false;
};

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

cpg::RunConfig load_config(const GlobalFlags& g) {
  if (g.config.empty()) throw cpg::UsageError("--config is required for this subcommand");
  cpg::RunConfig c = cpg::load_run_config(g.config);
  if (!g.run_id.empty()) c.run_id = g.run_id;
  if (!g.run_dir.empty()) c.run_root = g.run_dir;
  if (g.seed) c.seed = *g.seed;
  if (!g.cassette.empty()) c.cassette = g.cassette;
  c.validate();
  return c;
}

cpg::BackendOptions backend_options(const GlobalFlags& g, const cpg::RunConfig& c) {
  if (g.offline && g.synthetic) throw cpg::UsageError("--offline and --synthetic are mutually exclusive");
  return {g.offline, g.synthetic, c.cassette};
}

struct Session {
  cpg::RunConfig config;
  cpg::BackendOptions options;
  std::unique_ptr<cpg::RunContext> ctx;
};

Session open_session(const GlobalFlags& g) {
  Session s{load_config(g), {}, nullptr};
  s.options = backend_options(g, s.config);
  s.ctx = std::make_unique<cpg::RunContext>(s.config, cpg::make_backend_factory(s.options),
                                            cpg::make_recorder(s.options), warn);
  fs::create_directories(s.ctx->dir());
  return s;
}

std::size_t count_status(const std::vector<cpg::json>& rows, const char* status) {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.value("status", "") == status ? 1 : 0;
  return n;
}

cpg::json analyze_file(const fs::path& path) {
  const std::string text = cpg::read_file(path);
  const auto rep = cpg::readability_report(text);
  const auto& s = rep.stats;
  return cpg::json{{"file", path.string()},
                   {"flesch_reading_ease", rep.flesch_reading_ease},
                   {"flesch_kincaid_grade", rep.flesch_kincaid_grade},
                   {"gunning_fog", rep.gunning_fog},
                   {"automated_readability_index", rep.automated_readability_index},
                   {"coleman_liau", rep.coleman_liau},
                   {"sentences", s.sentence_count},
                   {"words", s.word_count},
                   {"letters", s.letter_count},
                   {"characters", s.character_count},
                   {"syllables", s.syllable_count},
                   {"complex_words", s.complex_word_count},
                   {"unique_words", s.unique_word_count}};
}

// Observations file: one {metric, grade, condition, value} object per line.
std::vector<cpg::Observation> read_observations(const fs::path& path) {
  std::vector<cpg::Observation> out;
  for (const auto& [line, j] : cpg::read_jsonl(path)) {
    try {
      out.push_back({j.at("metric").get<std::string>(), j.value("grade", 0), j.at("condition").get<std::string>(),
                     j.at("value").get<double>()});
    } catch (const cpg::json::exception& e) {
      throw cpg::SchemaError(path.string() + ":" + std::to_string(line), e.what());
    }
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, ',');) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cpg: curriculum-grounded reading passage generation and evaluation"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--config", g.config, "Run configuration file");
  app.add_option("--run-id", g.run_id, "Override the run id");
  app.add_option("--run-dir", g.run_dir, "Override the directory that holds run directories");
  app.add_option("--seed", g.seed, "Override the run seed");
  app.add_option("--cassette", g.cassette, "Cassette file to record to or replay from");
  app.add_flag("--offline", g.offline, "Serve every live backend from the cassette");
  app.add_flag("--synthetic", g.synthetic, "Answer live backends with the offline synthetic model");

  auto* ingest_curriculum = app.add_subcommand("ingest-curriculum", "Validate a catalog and write it to the run");
  std::string catalog_path;
  ingest_curriculum->add_option("catalog", catalog_path, "Catalog file (defaults to the config's catalog)");

  auto* ingest_corpus = app.add_subcommand("ingest-corpus", "Load the HUMAN reference corpus");
  std::string corpus_path;
  ingest_corpus->add_option("corpus", corpus_path, "Corpus file (defaults to the config's corpus)");

  auto* gen_topics = app.add_subcommand("gen-topics", "Generate and select wonder topics");
  auto* gen_passages = app.add_subcommand("gen-passages", "Generate passages for the selected topics");

  auto* analyze = app.add_subcommand("analyze", "Readability report per text file, or for the run");
  std::vector<std::string> analyze_files;
  analyze->add_option("files", analyze_files, "Text files; omit to analyze the run's passages");

  auto* judge = app.add_subcommand("judge", "Run the configured judge tasks");

  auto* stats = app.add_subcommand("stats", "Compare conditions in an observations file");
  std::string obs_path, conditions_csv, stats_format = "tsv";
  std::optional<std::size_t> stats_m;
  stats->add_option("observations", obs_path, "JSONL of {metric, grade, condition, value}")->required();
  stats->add_option("--conditions", conditions_csv, "Comma-separated condition order");
  stats->add_option("--m", stats_m, "Bonferroni family size (default: pairwise tests per metric)");
  stats->add_option("--format", stats_format, "tsv or json")->check(CLI::IsMember({"tsv", "json"}));

  auto* report = app.add_subcommand("report", "Build the report bundle from the run's stores");
  auto* run = app.add_subcommand("run", "Run every stage and write the manifest");
  auto* replay_verify = app.add_subcommand("replay-verify", "Re-run offline and compare output digests");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(cpg::ExitCode::kUsage);
  }

  try {
    if (*ingest_curriculum) {
      fs::path path = catalog_path;
      std::optional<cpg::RunConfig> cfg;
      if (path.empty()) {
        cfg = load_config(g);
        path = cfg->catalog;
      }
      const auto cat = cpg::load_catalog(path);
      for (const auto& w : cpg::ngss_shape_warnings(cat)) warn(w);
      std::cout << cat.standard_name << ": " << cat.domains.size() << " domains, " << cat.concept_count()
                << " concepts, " << cat.core_idea_count() << " core ideas, " << cat.outcome_count()
                << " learning outcomes\n";
      if (!g.config.empty()) {
        if (!cfg) cfg = load_config(g);
        cpg::write_file(cfg->run_dir() / "catalog.json", cpg::to_json(cat).dump(2) + "\n");
      }
    } else if (*ingest_corpus) {
      auto s = open_session(g);
      const fs::path path = corpus_path.empty() ? s.config.corpus : fs::path(corpus_path);
      if (path.empty()) throw cpg::UsageError("no corpus given and none configured");
      const auto entries = cpg::ingest_reference_corpus(*s.ctx, path);
      std::cout << entries.size() << " reference passages\n";
    } else if (*gen_topics) {
      auto s = open_session(g);
      const auto sets = cpg::run_topic_generation(*s.ctx);
      std::size_t ok = 0, selected = 0;
      for (const auto& t : sets) {
        ok += t.ok() ? 1 : 0;
        selected += t.selected.size();
      }
      std::cout << sets.size() << " items, " << ok << " ok, " << selected << " selected topics\n";
    } else if (*gen_passages) {
      auto s = open_session(g);
      const auto out = cpg::run_passage_generation(*s.ctx, cpg::load_topics(*s.ctx));
      std::size_t ok = 0;
      for (const auto& o : out) ok += o.record ? 1 : 0;
      std::cout << out.size() << " generation attempts, " << ok << " ok, " << out.size() - ok << " failed\n";
    } else if (*analyze) {
      if (analyze_files.empty()) {
        auto s = open_session(g);
        const auto rows = cpg::run_readability(*s.ctx);
        std::cout << rows.size() << " readability rows\n";
      } else {
        for (const auto& f : analyze_files) std::cout << analyze_file(f).dump() << "\n";
      }
    } else if (*judge) {
      auto s = open_session(g);
      for (const auto& [task, rows] : cpg::run_judging(*s.ctx)) {
        std::cout << cpg::to_string(task) << ": " << rows.size() << " rows, " << count_status(rows, "ok")
                  << " ok, " << count_status(rows, "failed") << " failed, " << count_status(rows, "skipped")
                  << " skipped\n";
      }
    } else if (*stats) {
      const auto obs = read_observations(obs_path);
      std::vector<std::string> conditions = split_csv(conditions_csv);
      if (conditions.empty()) {
        std::set<std::string> seen;
        for (const auto& o : obs) {
          if (seen.insert(o.condition).second) conditions.push_back(o.condition);
        }
      }
      const std::size_t pairs = conditions.size() * (conditions.size() - 1) / 2;
      const auto agg = cpg::aggregate(obs, conditions, stats_m.value_or(pairs));
      if (stats_format == "json") {
        std::cout << cpg::to_json(agg.table).dump(2) << "\n";
      } else {
        std::cout << cpg::to_tsv(agg.table);
      }
    } else if (*report) {
      auto s = open_session(g);
      cpg::run_report(*s.ctx);
      cpg::write_manifest(*s.ctx);
      std::cout << "report written to " << (s.ctx->dir() / cpg::kReportDir).string() << "\n";
    } else if (*run) {
      auto s = open_session(g);
      const auto manifest = cpg::run_full(*s.ctx);
      std::cout << "run " << s.config.run_id << ": " << manifest["outputs"].size() << " outputs in "
                << s.ctx->dir().string() << "\n";
    } else if (*replay_verify) {
      auto cfg = load_config(g);
      if (g.synthetic) throw cpg::UsageError("replay-verify always replays; drop --synthetic");
      cpg::BackendOptions opts{true, false, cfg.cassette};
      const auto result = cpg::replay_verify(cfg, cpg::make_backend_factory(opts), warn);
      if (result.identical) {
        std::cout << "replay-verify: all output digests match\n";
        return 0;
      }
      for (const auto& m : result.mismatches) std::cout << "mismatch: " << m << "\n";
      return static_cast<int>(cpg::ExitCode::kData);
    }
  } catch (const cpg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(cpg::ExitCode::kData);
  }
  return 0;
}
