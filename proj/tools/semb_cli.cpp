// tools/semb_cli.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Command-line surface: corpus generation, training, evaluation, and the
// PNL-vs-TL comparison experiment. Exit codes: 0 success, 2 usage error,
// 1 runtime error.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "semb/semb.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Logging (SEMB_LOG = error | info | debug)
// ---------------------------------------------------------------------------

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("SEMB_LOG");
    if (!env) return LogLevel::Info;
    const std::string s = env;
    if (s == "error") return LogLevel::Error;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Info;
  }();
  return level;
}

void log_line(LogLevel lvl, const std::string& msg) {
  if (lvl <= log_level()) std::cerr << msg << "\n";
}

#define LOG_INFO(msg)                          \
  do {                                         \
    std::ostringstream os_;                    \
    os_ << msg;                                \
    log_line(LogLevel::Info, os_.str());       \
  } while (0)
#define LOG_DEBUG(msg)                         \
  do {                                         \
    std::ostringstream os_;                    \
    os_ << msg;                                \
    log_line(LogLevel::Debug, os_.str());      \
  } while (0)

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

struct CommonArgs {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string out;
  std::string config;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--seed", args.seed, "Master RNG seed");
  cmd->add_option("--threads", args.threads, "Worker thread cap")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", args.out, "Output path or prefix")->required();
  cmd->add_option("--config", args.config,
                  "JSON file with defaults, overridden by explicit flags");
}

// Config files supply defaults: synthesize "--key value" pairs inserted
// before the explicit flags, with take-last policy on every option.
void enable_take_last(CLI::App* app) {
  for (auto* opt : app->get_options())
    opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  for (auto* sub : app->get_subcommands({})) enable_take_last(sub);
}

std::vector<std::string> merge_config_args(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;

  std::ifstream is(config_path);
  if (!is) throw std::runtime_error("cannot open config: " + config_path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("config: invalid JSON: " + std::string(e.what()));
  }
  std::vector<std::string> merged;
  if (!args.empty()) merged.push_back(args[0]);  // subcommand first
  for (const auto& [key, value] : j.items()) {
    merged.push_back("--" + key);
    merged.push_back(value.is_string() ? value.get<std::string>()
                                       : value.dump());
  }
  merged.insert(merged.end(), args.begin() + (args.empty() ? 0 : 1),
                args.end());
  return merged;
}

struct Corpus {
  semb::Dataset dataset;
  semb::DatasetManifest manifest;
};

Corpus load_corpus(const std::string& dir) {
  Corpus c;
  c.dataset = semb::load_features((fs::path(dir) / "features.bin").string());
  c.manifest = semb::load_manifest((fs::path(dir) / "manifest.json").string());
  if (c.manifest.feature_dim != c.dataset.feature_dim)
    throw std::runtime_error("corpus: manifest/feature dim disagreement");
  return c;
}

std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Hash of the evaluation task draws; depends only on (dataset, seed, task
// shape), so two models evaluated with a shared seed must log the same hash.
std::uint64_t eval_task_hash(const semb::Dataset& ds,
                             const semb::SpeakerPools& pools,
                             const semb::EpisodeSpec& spec,
                             std::size_t repeats, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t r = 0; r < repeats; ++r) {
    semb::Episode ep = semb::sample_episode(ds, pools, spec, rng);
    for (const auto& s : ep.support) {
      h = fnv1a(h, static_cast<std::uint64_t>(s.speaker_id));
      h = fnv1a(h, static_cast<std::uint64_t>(s.source_id));
    }
    for (const auto& q : ep.query)
      h = fnv1a(h, static_cast<std::uint64_t>(q.source_id));
  }
  return h;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << text;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateArgs {
  CommonArgs common;
  std::size_t speakers = 25;
  std::size_t utterances = 40;
  std::size_t frames = 400;
  std::size_t dim = 20;
  double difficulty = 0.5;
  std::size_t unseen = 0;
};

int cmd_generate(const GenerateArgs& a) {
  auto [ds, manifest] = semb::generate_corpus(
      a.speakers, a.utterances, a.frames, a.dim, a.difficulty, a.common.seed);
  auto split = semb::split_speakers(manifest, a.unseen, a.common.seed + 1);

  fs::create_directories(a.common.out);
  semb::write_features((fs::path(a.common.out) / "features.bin").string(), ds);
  semb::write_manifest((fs::path(a.common.out) / "manifest.json").string(),
                       split);

  std::size_t per_split[4] = {0, 0, 0, 0};
  for (const auto& e : split.entries)
    per_split[static_cast<int>(e.split)] += e.utterances.size();
  std::cout << "corpus: " << a.speakers << " speakers, "
            << ds.utterances.size() << " utterances, dim " << a.dim
            << ", difficulty " << a.difficulty << "\n"
            << "splits: train " << per_split[0] << ", validation "
            << per_split[1] << ", test " << per_split[2] << ", unseen "
            << per_split[3] << " utterances\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  CommonArgs common;
  std::string data;
  std::string loss = "pnl";
  std::string mining = "semi";
  std::string dist = "euc";
  std::size_t kway = 5;
  std::size_t shot = 3;
  std::size_t query = 5;
  std::size_t crop = 200;
  double margin = 0.2;
  double lr = 1e-3;
  std::size_t epochs = 100;
  long long episodes_per_epoch = -1;  // -1 = auto
  std::size_t hidden = 16;
  std::size_t embed = 16;
  std::size_t val_kway = 5;
  std::size_t val_enroll = 3;
  std::size_t val_query = 5;
  std::size_t val_repeats = 5;
};

semb::TrainConfig to_train_config(const TrainArgs& a) {
  semb::TrainConfig cfg;
  if (a.loss == "pnl")
    cfg.loss_kind = semb::LossKind::PNL;
  else if (a.loss == "tl")
    cfg.loss_kind = a.mining == "naive" ? semb::LossKind::TLNaive
                                        : semb::LossKind::TLSemihard;
  else
    throw CLI::ValidationError("--loss", "must be pnl or tl");
  cfg.dist = semb::distance_kind_from_name(a.dist);
  cfg.episode = semb::EpisodeSpec{a.kway, a.shot, a.query, a.crop};
  cfg.margin = semb::Margin{a.margin};
  cfg.learning_rate = a.lr;
  cfg.epochs = a.epochs;
  if (a.episodes_per_epoch >= 0)
    cfg.episodes_per_epoch = static_cast<std::size_t>(a.episodes_per_epoch);
  cfg.seed = a.common.seed;
  cfg.validation =
      semb::ValidationSpec{a.val_kway, a.val_enroll, a.val_query, a.val_repeats};
  return cfg;
}

json train_extra_json(const TrainArgs& a, const semb::TrainConfig& cfg,
                      std::size_t best_epoch) {
  return {{"loss", semb::loss_kind_name(cfg.loss_kind)},
          {"dist", semb::distance_kind_name(cfg.dist)},
          {"kway", a.kway},
          {"shot", a.shot},
          {"query", a.query},
          {"crop", a.crop},
          {"margin", a.margin},
          {"lr", a.lr},
          {"epochs", a.epochs},
          {"seed", a.common.seed},
          {"best_epoch", best_epoch}};
}

int cmd_train(const TrainArgs& a) {
  Corpus corpus = load_corpus(a.data);
  semb::EncoderConfig ec{corpus.dataset.feature_dim, a.hidden, a.embed,
                         a.common.seed};
  semb::TrainConfig cfg = to_train_config(a);

  LOG_INFO("training " << semb::loss_kind_name(cfg.loss_kind) << " ("
                       << a.shot << "_" << a.query << ", " << a.dist
                       << "), batch " << cfg.episode.batch_size());
  semb::TrainResult result =
      semb::train(corpus.dataset, corpus.manifest, ec, cfg);
  LOG_INFO("best validation epoch " << result.best_epoch << " metric "
                                    << result.history[result.best_epoch]
                                           .val_metric);

  semb::checkpoint_save(a.common.out + ".ckpt", result.params,
                        train_extra_json(a, cfg, result.best_epoch));
  std::ostringstream csv;
  semb::history_to_csv(csv, result.history);
  write_text(a.common.out + "_history.csv", csv.str());
  std::cout << "checkpoint: " << a.common.out << ".ckpt\n"
            << "history: " << a.common.out << "_history.csv\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  CommonArgs common;
  std::string protocol;  // samediff | si | sv
  std::string data;
  std::string ckpt;
  std::string split = "test";
  std::string dist = "euc";
  std::size_t kway = 5;
  std::size_t enroll = 3;
  std::size_t query = 5;
  std::size_t crop = 200;
  std::size_t npairs = 200;
  std::size_t enroll_frames = 600;
  std::size_t npos = 20;
  std::size_t nneg = 20;
  std::size_t repeats = 10;
};

int cmd_eval(const EvalArgs& a) {
  Corpus corpus = load_corpus(a.data);
  auto [params, extra] = semb::checkpoint_load(a.ckpt);
  auto pools =
      semb::split_view(corpus.manifest, semb::split_from_name(a.split));
  if (pools.empty())
    throw std::runtime_error("eval: split '" + a.split + "' is empty");
  const auto kind = semb::distance_kind_from_name(a.dist);

  semb::Embedder embedder = [&params](const semb::FeatureSequence& s) {
    return semb::encode_values(params, s);
  };
  std::mt19937_64 rng(a.common.seed);

  json out;
  std::string roc_csv;
  if (a.protocol == "si") {
    auto report =
        semb::si_task(corpus.dataset, pools, a.kway, a.enroll, a.query,
                      embedder, kind, a.crop, a.repeats, rng);
    out = semb::report_to_json(report);
  } else if (a.protocol == "samediff") {
    auto trials = semb::same_different_trials(corpus.dataset, pools, a.npairs,
                                              embedder, kind, a.crop, rng);
    auto curve = semb::roc(trials);
    auto report = semb::make_report("same/different", "auc", {curve.auc});
    out = semb::report_to_json(report);
    out["eer"] = semb::eer(trials);
    out["n_trials"] = trials.trials.size();
    std::ostringstream os;
    semb::roc_to_csv(os, curve);
    roc_csv = os.str();
  } else if (a.protocol == "sv") {
    auto report =
        semb::sv_task(corpus.dataset, pools, a.enroll_frames, a.crop, a.npos,
                      a.nneg, embedder, kind, a.repeats, rng);
    out = semb::report_to_json(report);
    // ROC of the last repeat's trial population, re-drawn deterministically
    std::mt19937_64 roc_rng(a.common.seed);
    auto trials = semb::same_different_trials(corpus.dataset, pools,
                                              a.npos * pools.size(), embedder,
                                              kind, a.crop, roc_rng);
    std::ostringstream os;
    semb::roc_to_csv(os, semb::roc(trials));
    roc_csv = os.str();
  } else {
    throw CLI::ValidationError("protocol", "must be samediff, si or sv");
  }

  out["split"] = a.split;
  out["dist"] = a.dist;
  out["seed"] = a.common.seed;
  write_text(a.common.out + ".json", out.dump(2) + "\n");
  if (!roc_csv.empty()) write_text(a.common.out + "_roc.csv", roc_csv);
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

struct CompareArgs {
  CommonArgs common;
  std::string data;
  std::size_t seeds = 5;
  std::size_t kway = 5;
  std::size_t shot = 3;
  std::size_t query = 5;
  std::size_t crop = 40;
  std::size_t epochs = 50;
  long long episodes_per_epoch = -1;
  std::size_t hidden = 12;
  std::size_t embed = 16;
  std::size_t eval_kway = 5;
  std::size_t eval_enroll = 3;
  std::size_t eval_query = 5;
  std::size_t eval_repeats = 10;
  std::size_t enroll_frames = 120;
  std::size_t npos = 10;
  std::size_t nneg = 10;
  std::size_t val_kway = 5;
  std::size_t val_enroll = 2;
  std::size_t val_query = 1;
  std::size_t val_repeats = 5;
};

struct CompareCell {
  std::string config;
  std::string metric;
  std::string split;
  std::vector<double> values;  // one per seed
};

int cmd_compare(const CompareArgs& a) {
  Corpus corpus = load_corpus(a.data);
  const auto kind = semb::DistanceKind::SquaredEuclidean;

  struct ModelSpec {
    std::string name;
    semb::LossKind loss;
  };
  const std::vector<ModelSpec> models = {
      {"PNL(" + std::to_string(a.shot) + "_" + std::to_string(a.query) +
           ",Euc)",
       semb::LossKind::PNL},
      {"TL(Semi,Euc)", semb::LossKind::TLSemihard}};

  // Train every (model, seed) pair; independent, so parallel up to --threads.
  std::vector<semb::EncoderParams> trained(models.size() * a.seeds);
  {
    std::vector<std::pair<std::size_t, std::size_t>> jobs;  // (model, seed)
    for (std::size_t m = 0; m < models.size(); ++m)
      for (std::size_t s = 0; s < a.seeds; ++s) jobs.emplace_back(m, s);
    std::mutex log_mutex;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (;;) {
        const std::size_t j = next.fetch_add(1);
        if (j >= jobs.size()) return;
        const auto [m, s] = jobs[j];
        semb::TrainConfig cfg;
        cfg.loss_kind = models[m].loss;
        cfg.dist = kind;
        cfg.episode = semb::EpisodeSpec{a.kway, a.shot, a.query, a.crop};
        cfg.epochs = a.epochs;
        if (a.episodes_per_epoch >= 0)
          cfg.episodes_per_epoch =
              static_cast<std::size_t>(a.episodes_per_epoch);
        cfg.seed = a.common.seed + s;
        cfg.validation = semb::ValidationSpec{a.val_kway, a.val_enroll,
                                              a.val_query, a.val_repeats};
        semb::EncoderConfig ec{corpus.dataset.feature_dim, a.hidden, a.embed,
                               a.common.seed + s};
        auto result = semb::train(corpus.dataset, corpus.manifest, ec, cfg);
        trained[m * a.seeds + s] = result.params;
        std::lock_guard<std::mutex> lock(log_mutex);
        LOG_INFO("trained " << models[m].name << " seed " << cfg.seed
                            << " best epoch " << result.best_epoch);
      }
    };
    std::vector<std::thread> threads;
    const std::size_t nt = std::max<std::size_t>(1, a.common.threads);
    for (std::size_t t = 0; t < std::min(nt, jobs.size()); ++t)
      threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  // Shared evaluation draws across models: identical seed, identical tasks.
  const std::uint64_t eval_seed = a.common.seed ^ 0xe5a1c0deull;
  for (const char* split : {"test", "unseen"}) {
    auto pools = semb::split_view(corpus.manifest,
                                  semb::split_from_name(split));
    if (pools.empty()) continue;
    const auto h = eval_task_hash(
        corpus.dataset, pools,
        semb::EpisodeSpec{a.eval_kway, a.eval_enroll, a.eval_query, a.crop},
        a.eval_repeats, eval_seed);
    LOG_INFO("eval task hash (" << split << "): 0x" << std::hex << h
                                << std::dec);
  }

  std::vector<CompareCell> cells;
  for (std::size_t m = 0; m < models.size(); ++m) {
    CompareCell si_test{models[m].name, "si_accuracy", "test", {}};
    CompareCell si_unseen{models[m].name, "si_accuracy", "unseen", {}};
    CompareCell eer_unseen{models[m].name, "eer", "unseen", {}};
    for (std::size_t s = 0; s < a.seeds; ++s) {
      const auto& params = trained[m * a.seeds + s];
      semb::Embedder embedder = [&params](const semb::FeatureSequence& seq) {
        return semb::encode_values(params, seq);
      };
      for (auto* cell : {&si_test, &si_unseen}) {
        auto pools = semb::split_view(corpus.manifest,
                                      semb::split_from_name(cell->split));
        if (pools.empty()) continue;
        std::mt19937_64 rng(eval_seed);
        cell->values.push_back(
            semb::si_task(corpus.dataset, pools, a.eval_kway, a.eval_enroll,
                          a.eval_query, embedder, kind, a.crop,
                          a.eval_repeats, rng)
                .mean);
      }
      {
        auto pools = semb::split_view(corpus.manifest, semb::Split::Unseen);
        if (!pools.empty()) {
          std::mt19937_64 rng(eval_seed);
          eer_unseen.values.push_back(
              semb::sv_task(corpus.dataset, pools, a.enroll_frames, a.crop,
                            a.npos, a.nneg, embedder, kind, a.eval_repeats,
                            rng)
                  .mean);
        }
      }
    }
    cells.push_back(std::move(si_test));
    cells.push_back(std::move(si_unseen));
    cells.push_back(std::move(eer_unseen));
  }

  std::ostringstream csv;
  csv << "config,metric,split";
  for (std::size_t s = 0; s < a.seeds; ++s) csv << ",seed" << s;
  csv << ",mean,std\n";
  for (const auto& c : cells) {
    if (c.values.empty()) continue;
    auto report = semb::make_report(c.config, c.metric, c.values);
    csv << c.config << "," << c.metric << "," << c.split;
    for (double v : c.values) csv << "," << v;
    csv << "," << report.mean << "," << report.stddev << "\n";
  }
  write_text(a.common.out + "_compare.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speaker embedding training and few-shot evaluation"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "generate a synthetic corpus");
  add_common(generate, gen.common);
  generate->add_option("--speakers", gen.speakers)->check(CLI::PositiveNumber);
  generate->add_option("--utterances", gen.utterances)
      ->check(CLI::PositiveNumber);
  generate->add_option("--frames", gen.frames)->check(CLI::PositiveNumber);
  generate->add_option("--dim", gen.dim)->check(CLI::PositiveNumber);
  generate->add_option("--difficulty", gen.difficulty)
      ->check(CLI::Range(1e-9, 1.0));
  generate->add_option("--unseen", gen.unseen);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train an embedding model");
  add_common(train_cmd, tr.common);
  train_cmd->add_option("--data", tr.data, "corpus directory")->required();
  train_cmd->add_option("--loss", tr.loss)
      ->check(CLI::IsMember({"pnl", "tl"}));
  train_cmd->add_option("--mining", tr.mining)
      ->check(CLI::IsMember({"naive", "semi"}));
  train_cmd->add_option("--dist", tr.dist)->check(CLI::IsMember({"euc", "cos"}));
  train_cmd->add_option("--kway", tr.kway);
  train_cmd->add_option("--shot", tr.shot);
  train_cmd->add_option("--query", tr.query);
  train_cmd->add_option("--crop", tr.crop);
  train_cmd->add_option("--margin", tr.margin)->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--lr", tr.lr)->check(CLI::PositiveNumber);
  train_cmd->add_option("--epochs", tr.epochs)->check(CLI::PositiveNumber);
  train_cmd->add_option("--episodes-per-epoch", tr.episodes_per_epoch);
  train_cmd->add_option("--hidden", tr.hidden)->check(CLI::PositiveNumber);
  train_cmd->add_option("--embed", tr.embed)->check(CLI::PositiveNumber);
  train_cmd->add_option("--val-kway", tr.val_kway);
  train_cmd->add_option("--val-enroll", tr.val_enroll);
  train_cmd->add_option("--val-query", tr.val_query);
  train_cmd->add_option("--val-repeats", tr.val_repeats);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "run an evaluation protocol");
  add_common(eval_cmd, ev.common);
  eval_cmd->add_option("protocol", ev.protocol, "samediff | si | sv")
      ->required()
      ->check(CLI::IsMember({"samediff", "si", "sv"}));
  eval_cmd->add_option("--data", ev.data)->required();
  eval_cmd->add_option("--ckpt", ev.ckpt)->required();
  eval_cmd->add_option("--split", ev.split)
      ->check(CLI::IsMember({"train", "validation", "test", "unseen"}));
  eval_cmd->add_option("--dist", ev.dist)->check(CLI::IsMember({"euc", "cos"}));
  eval_cmd->add_option("--kway", ev.kway);
  eval_cmd->add_option("--enroll", ev.enroll);
  eval_cmd->add_option("--query", ev.query);
  eval_cmd->add_option("--crop", ev.crop);
  eval_cmd->add_option("--npairs", ev.npairs);
  eval_cmd->add_option("--enroll-frames", ev.enroll_frames);
  eval_cmd->add_option("--npos", ev.npos);
  eval_cmd->add_option("--nneg", ev.nneg);
  eval_cmd->add_option("--repeats", ev.repeats)->check(CLI::PositiveNumber);

  CompareArgs cp;
  auto* compare = app.add_subcommand("compare", "PNL vs TL experiment grid");
  add_common(compare, cp.common);
  compare->add_option("--data", cp.data)->required();
  compare->add_option("--seeds", cp.seeds)->check(CLI::PositiveNumber);
  compare->add_option("--kway", cp.kway);
  compare->add_option("--shot", cp.shot);
  compare->add_option("--query", cp.query);
  compare->add_option("--crop", cp.crop);
  compare->add_option("--epochs", cp.epochs)->check(CLI::PositiveNumber);
  compare->add_option("--episodes-per-epoch", cp.episodes_per_epoch);
  compare->add_option("--hidden", cp.hidden);
  compare->add_option("--embed", cp.embed);
  compare->add_option("--eval-kway", cp.eval_kway);
  compare->add_option("--eval-enroll", cp.eval_enroll);
  compare->add_option("--eval-query", cp.eval_query);
  compare->add_option("--eval-repeats", cp.eval_repeats);
  compare->add_option("--enroll-frames", cp.enroll_frames);
  compare->add_option("--npos", cp.npos);
  compare->add_option("--nneg", cp.nneg);
  compare->add_option("--val-kway", cp.val_kway);
  compare->add_option("--val-enroll", cp.val_enroll);
  compare->add_option("--val-query", cp.val_query);
  compare->add_option("--val-repeats", cp.val_repeats);

  enable_take_last(&app);

  try {
    auto args = merge_config_args(argc, argv);
    std::reverse(args.begin(), args.end());  // CLI11 parses reversed vectors
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (compare->parsed()) return cmd_compare(cp);
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
