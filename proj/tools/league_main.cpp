// league: command-line front end for training, resuming, ablations,
// evaluation and imitation-data weighting.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dlt/eval.hpp"
#include "dlt/il_sampler.hpp"
#include "dlt/runtime.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Overrides {
  std::string config_file;
  std::optional<std::int64_t> days;
  std::optional<std::uint64_t> seed;
  std::optional<int> game_m, game_h, workers, batch;
  std::optional<double> game_sigma;
  std::optional<std::uint64_t> game_seed, policy_seed;
  std::optional<double> zero_prob;
  std::optional<std::string> league_template;
  std::map<std::string, double> loss_values;
  std::optional<int> dapo_window;
};

void add_config_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_file, "Experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--days", o.days, "Per-agent budget in environment steps");
  cmd->add_option("--seed", o.seed, "Master seed (overrides the config)");
  cmd->add_option("--template", o.league_template, "League template");
  cmd->add_option("--workers", o.workers, "Rollout workers");
  cmd->add_option("--batch-size", o.batch, "Matches per agent per update");
  cmd->add_option("--game.m", o.game_m, "Number of moves");
  cmd->add_option("--game.horizon", o.game_h, "Steps per episode");
  cmd->add_option("--game.sigma", o.game_sigma, "Per-step score noise");
  cmd->add_option("--game.seed", o.game_seed, "Game generator seed");
  cmd->add_option("--policy.seed", o.policy_seed, "Initial policy seed");
  cmd->add_option("--tags.zero-prob", o.zero_prob, "Probability of tag 0");
  for (const char* key : {"discount", "rho-bar", "c-bar", "lambda-vtrace", "lambda-upgo",
                          "lambda-entropy", "lambda-distill", "lambda-rgps", "lambda-dapo",
                          "value-coef", "lr"}) {
    auto* opt = cmd->add_option_function<double>(
        std::string("--loss.") + key, [&o, key](double v) { o.loss_values[key] = v; },
        "Loss setting");
    (void)opt;
  }
  cmd->add_option("--loss.dapo-window", o.dapo_window, "DAPO window in steps (0: ceil(0.4 H))");
}

dlt::ExperimentConfig build_config(const Overrides& o) {
  dlt::ExperimentConfig cfg;
  if (!o.config_file.empty()) {
    std::ifstream in(o.config_file);
    cfg = dlt::ExperimentConfig::from_json(json::parse(in));
  }
  if (o.days) cfg.total_steps = *o.days;
  if (o.seed) cfg.seed = *o.seed;
  if (o.league_template) cfg.league_template = *o.league_template;
  if (o.workers) cfg.workers = *o.workers;
  if (o.batch) cfg.batch_size = *o.batch;
  if (o.game_m) cfg.num_moves = *o.game_m;
  if (o.game_h) cfg.horizon = *o.game_h;
  if (o.game_sigma) cfg.noise = *o.game_sigma;
  if (o.game_seed) cfg.game_seed = *o.game_seed;
  if (o.policy_seed) cfg.policy_seed = *o.policy_seed;
  if (o.zero_prob) cfg.zero_tag_prob = *o.zero_prob;
  static const std::map<std::string, std::string> kLossKeys = {
      {"discount", "discount"},           {"rho-bar", "rho_bar"},
      {"c-bar", "c_bar"},                 {"lambda-vtrace", "lambda_vtrace"},
      {"lambda-upgo", "lambda_upgo"},     {"lambda-entropy", "lambda_entropy"},
      {"lambda-distill", "lambda_distill"}, {"lambda-rgps", "lambda_rgps"},
      {"lambda-dapo", "lambda_dapo"},     {"value-coef", "value_coef"},
      {"lr", "learning_rate"}};
  json loss = json::object();
  for (const auto& [k, v] : o.loss_values) loss[kLossKeys.at(k)] = v;
  if (o.dapo_window) loss["dapo_window"] = *o.dapo_window;
  if (!loss.empty()) cfg.loss = dlt::LossConfig::from_json(loss, cfg.loss);
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void print_manifest(const dlt::RunManifest& m) { std::cout << m.to_json().dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale diversified league training"};
  app.require_subcommand(1);
  std::string out_dir;
  app.add_option("--out", out_dir, "Artifact directory (default: $DLT_ARTIFACT_DIR or ./artifacts)");

  // train
  Overrides train_o;
  std::optional<std::int64_t> train_rounds;
  auto* train = app.add_subcommand("train", "Run league training");
  add_config_options(train, train_o);
  train->add_option("--max-rounds", train_rounds, "Stop after this many rounds (resumable)");

  // resume
  std::string state_file, resume_config;
  std::optional<std::int64_t> resume_rounds;
  auto* resume = app.add_subcommand("resume", "Continue a run from a league state file");
  resume->add_option("--state", state_file, "League state file")->required()->check(CLI::ExistingFile);
  resume->add_option("--config", resume_config, "Config that must match the state's hash")
      ->check(CLI::ExistingFile);
  resume->add_option("--max-rounds", resume_rounds, "Stop after this many more rounds");

  // ablation
  Overrides abl_o;
  std::vector<std::string> abl_templates{"alphastar-surrogate", "dlt-only", "dlt-rgps", "dlt-rgps-dapo"};
  dlt::AblationOptions abl_opts;
  auto* abl = app.add_subcommand("ablation", "Train several templates and compare them by RPP");
  add_config_options(abl, abl_o);
  abl->add_option("--templates", abl_templates, "Templates to compare");
  abl->add_option("--eval-n", abl_opts.eval_matches, "Matches per cross pair");
  abl->add_option("--bootstrap", abl_opts.bootstrap, "Bootstrap resamples for RPP errors");
  abl->add_option("--reference", abl_opts.reference, "Reference template");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate leagues");
  ev->require_subcommand(1);

  std::string rr_models, rr_out;
  int rr_n = 100, rr_workers = 1;
  std::uint64_t rr_seed = 0;
  bool rr_elite = false, rr_initial = false;
  auto* rr = ev->add_subcommand("round-robin", "Payoff matrix over a league state file");
  rr->add_option("--models", rr_models, "League state file")->required()->check(CLI::ExistingFile);
  rr->add_option("--n", rr_n, "Matches per pair");
  rr->add_option("--seed", rr_seed, "Evaluation seed");
  rr->add_option("--workers", rr_workers, "Worker threads");
  rr->add_flag("--with-elite", rr_elite, "Add the scripted elite bot as model 'elite'");
  rr->add_flag("--with-initial", rr_initial, "Include initial models");
  rr->add_option("--csv", rr_out, "Write the win-rate matrix here");

  std::string elo_payoff, elo_base = "elite";
  auto* elo = ev->add_subcommand("elo", "Fit anchored ELO ratings to a payoff CSV");
  elo->add_option("--payoff", elo_payoff, "Payoff CSV")->required()->check(CLI::ExistingFile);
  elo->add_option("--baseline", elo_base, "Model pinned at rating 0");

  std::string rpp_a, rpp_b;
  int rpp_n = 100, rpp_boot = 0, rpp_workers = 1;
  std::uint64_t rpp_seed = 0;
  bool rpp_ma = false;
  auto* rp = ev->add_subcommand("rpp", "Relative population performance of league A vs B");
  rp->add_option("--league-a", rpp_a, "League state file A")->required()->check(CLI::ExistingFile);
  rp->add_option("--league-b", rpp_b, "League state file B")->required()->check(CLI::ExistingFile);
  rp->add_option("--n", rpp_n, "Matches per cross pair");
  rp->add_option("--seed", rpp_seed, "Evaluation seed");
  rp->add_option("--bootstrap", rpp_boot, "Bootstrap resamples");
  rp->add_option("--workers", rpp_workers, "Worker threads");
  rp->add_flag("--ma-only", rpp_ma, "Compare main-agent lineages only");

  std::string rep_log, rep_state;
  int rep_m = 5, rep_tags = 7;
  bool rep_exploiters = false;
  auto* rep = ev->add_subcommand("report", "Diversity report over a match log");
  rep->add_option("--log", rep_log, "Match log (JSON lines)")->required()->check(CLI::ExistingFile);
  rep->add_option("--moves", rep_m, "Number of moves");
  rep->add_option("--tags", rep_tags, "Tag count including tag 0");
  rep->add_flag("--exploiters-only", rep_exploiters, "Skip the main agent's matches");
  rep->add_option("--state", rep_state, "League state: also write the MA league bar");

  // il
  auto* il = app.add_subcommand("il", "Imitation-data weighting");
  il->require_subcommand(1);
  std::string il_corpus, il_down = "NOOP=0.2,SMART=0.25";
  double il_cap = 10.0;
  int il_samples = 0;
  std::uint64_t il_seed = 0;
  auto* ilw = il->add_subcommand("weights", "Per-label weights and trajectory probabilities");
  ilw->add_option("--corpus", il_corpus, "Corpus (JSON lines)")->required()->check(CLI::ExistingFile);
  ilw->add_option("--il.downsample", il_down, "LABEL=rate,...");
  ilw->add_option("--il.cap", il_cap, "Rare-label upsampling cap");
  ilw->add_option("--samples", il_samples, "Also draw this many trajectories");
  ilw->add_option("--seed", il_seed, "Sampling seed");
  std::string syn_out;
  int syn_n = 20, syn_m = 5, syn_h = 8;
  auto* syn = il->add_subcommand("synth", "Write a synthetic demonstration corpus");
  syn->add_option("--out-file", syn_out, "Output corpus")->required();
  syn->add_option("--n", syn_n, "Number of demonstrations");
  syn->add_option("--game.m", syn_m, "Number of moves");
  syn->add_option("--game.horizon", syn_h, "Steps per episode");
  syn->add_option("--seed", il_seed, "Seed");

  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path dir = out_dir.empty() ? dlt::artifact_dir_from_env("artifacts") : fs::path(out_dir);

    if (*train) {
      dlt::Experiment e(build_config(train_o), dir);
      print_manifest(e.run(train_rounds));
    } else if (*resume) {
      std::optional<dlt::ExperimentConfig> expected;
      if (!resume_config.empty()) {
        std::ifstream in(resume_config);
        expected = dlt::ExperimentConfig::from_json(json::parse(in));
      }
      auto e = dlt::Experiment::resume(state_file, dir, expected);
      print_manifest(e->run(resume_rounds));
    } else if (*abl) {
      const auto rep = dlt::ablation(build_config(abl_o), abl_templates, dir, abl_opts);
      rep.write_csv(std::cout);
      for (const auto& r : rep.rows)
        if (!r.error.empty()) return 2;
    } else if (*rr) {
      auto league = dlt::load_league_state(rr_models, rr_initial);
      if (rr_elite)
        league.members.insert(league.members.begin(),
                              dlt::make_snapshot(dlt::scripted_bot(dlt::BotKind::kElite,
                                                                   league.spec.num_moves),
                                                 "elite"));
      const auto payoff = dlt::round_robin(league.members, league.spec, rr_n, rr_seed, rr_workers);
      payoff.write_csv(std::cout);
      if (!rr_out.empty()) {
        std::ofstream out(rr_out);
        payoff.write_csv(out);
        write_text(rr_out + ".json", payoff.to_json().dump(2) + "\n");
      }
    } else if (*elo) {
      std::ifstream in(elo_payoff);
      const auto payoff = dlt::PayoffMatrix::read_csv(in);
      std::cout << dlt::elo_fit(payoff, elo_base).to_json().dump(2) << "\n";
    } else if (*rp) {
      const auto a = dlt::load_league_state(rpp_a, false);
      const auto b = dlt::load_league_state(rpp_b, false);
      if (a.spec.payoff != b.spec.payoff || a.spec.horizon != b.spec.horizon)
        throw dlt::DomainError("rpp: the two leagues were trained on different games");
      const auto res = dlt::rpp(rpp_ma ? a.main_lineage : a.members, rpp_ma ? b.main_lineage : b.members,
                                a.spec, rpp_n, rpp_seed, rpp_workers, rpp_boot);
      std::cout << res.to_json().dump(2) << "\n";
    } else if (*rep) {
      std::ifstream in(rep_log);
      auto log = dlt::read_match_log(in);
      if (rep_exploiters)
        std::erase_if(log, [](const dlt::MatchLogRecord& r) { return r.agent == "MA"; });
      const auto report = dlt::diversity_report(log, dlt::tag_move_classifier(rep_m, rep_tags));
      fs::create_directories(dir);
      {
        std::ofstream csv(dir / "diversity.csv");
        report.write_csv(csv);
      }
      write_text(dir / "diversity.json", report.to_json().dump(2) + "\n");
      std::cout << "pooled_entropy " << report.pooled_entropy << "\n";
      if (!rep_state.empty()) {
        const auto league = dlt::load_league_state(rep_state);
        const auto rows = dlt::league_bar(*league.main_lineage.back(), league.members, league.roles,
                                          league.spec, 100, 0);
        std::ofstream bar(dir / "league_bar.csv");
        dlt::write_league_bar_csv(bar, rows);
      }
    } else if (*ilw) {
      std::ifstream in(il_corpus);
      const auto corpus = dlt::DemoCorpus::read_jsonl(in);
      dlt::WeightSpec spec;
      spec.downsample = dlt::WeightSpec::parse_downsample(il_down);
      spec.rare_upsample_cap = il_cap;
      json labels = json::object();
      for (const auto& [label, count] : corpus.label_counts())
        labels[label] = {{"count", count},
                         {"weight", dlt::label_weight(label, count, corpus.demo_count(), spec)}};
      const dlt::TrajectorySampler sampler(dlt::compute_pointwise_weights(corpus, spec));
      json out = {{"labels", labels}, {"trajectory_probabilities", sampler.probabilities()}};
      if (il_samples > 0) {
        dlt::Rng rng(il_seed);
        std::vector<std::size_t> draws;
        for (int i = 0; i < il_samples; ++i) draws.push_back(sampler.sample(rng).index);
        out["samples"] = draws;
      }
      std::cout << out.dump(2) << "\n";
    } else if (*syn) {
      const auto corpus = dlt::make_synthetic_corpus(dlt::generate_cyclic_game(syn_m, syn_h, 0.0, il_seed),
                                                     static_cast<std::size_t>(syn_n), il_seed);
      std::ofstream out(syn_out);
      corpus.write_jsonl(out);
    }
  } catch (const std::exception& e) {
    std::cerr << "league: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
