#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dlt/runtime.hpp"
#include "run_fixtures.hpp"

using namespace dlt;
namespace fs = std::filesystem;

TEST_CASE("config: JSON round trip, stable hash, validation") {
  ExperimentConfig c;
  c.seed = 9;
  c.loss_overrides["AEE"] = {{"lambda_upgo", 0.5}};
  const ExperimentConfig d = ExperimentConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
  CHECK(d.to_json() == c.to_json());
  CHECK(d.hash() == c.hash());
  CHECK(c.hash().size() == 16);
  ExperimentConfig e = c;
  e.seed = 10;
  CHECK(e.hash() != c.hash());
  ExperimentConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS(bad.validate());
  bad = ExperimentConfig{};
  bad.league_template = "nope";
  CHECK_THROWS(bad.validate());
}

TEST_CASE("loss overrides replace the defaults") {
  auto doc = ExperimentConfig{}.to_json();
  doc["loss_overrides"] = nlohmann::json::object();
  CHECK(ExperimentConfig::from_json(doc).loss_overrides.empty());
}

TEST_CASE("templates and per-agent losses") {
  for (const char* name : {"alphastar-surrogate", "dlt-only", "dlt-rgps", "dlt-rgps-dapo", "dlt-formal"})
    CHECK(find_template(name).name == name);
  CHECK_THROWS(find_template("missing"));

  ExperimentConfig cfg;
  cfg.league_template = "alphastar-surrogate";
  const LeagueManager sur = build_league(cfg);
  bool any_aee = false;
  for (const auto& n : sur.agent_names()) any_aee = any_aee || sur.agent(n).spec.role == Role::kAEE;
  CHECK_FALSE(any_aee);
  for (const auto& n : sur.agent_names()) {
    const LossConfig l = agent_loss_config(cfg, sur.agent(n).spec);
    CHECK(l.lambda_rgps == 0.0);
    CHECK(l.lambda_dapo == 0.0);
  }

  cfg.league_template = "dlt-formal";
  const LeagueManager dlt = build_league(cfg);
  bool has_aee = false;
  for (const auto& n : dlt.agent_names()) has_aee = has_aee || dlt.agent(n).spec.role == Role::kAEE;
  CHECK(has_aee);
  const LossConfig ma = agent_loss_config(cfg, dlt.agent("MA").spec);
  CHECK(ma.learning_rate == 0.2);
  CHECK(ma.lambda_rgps == 0.03);
}

TEST_CASE("single-worker training is bit-identical across runs") {
  const ExperimentConfig cfg = fixture::tiny_config(3);
  const fs::path a = fixture::scratch_dir("det-a"), b = fixture::scratch_dir("det-b");
  Experiment ea(cfg, a), eb(cfg, b);
  ea.run();
  eb.run();
  CHECK(ea.finished());
  CHECK(ea.checkpoint_json() == eb.checkpoint_json());
  CHECK(fixture::read_file(ea.match_log_path()) == fixture::read_file(eb.match_log_path()));
}

TEST_CASE("checkpoint and resume continue exactly") {
  const ExperimentConfig cfg = fixture::tiny_config(4);
  const fs::path full = fixture::scratch_dir("full"), part = fixture::scratch_dir("part");
  Experiment whole(cfg, full);
  whole.run();

  {
    Experiment first(cfg, part);
    first.run(7);
    CHECK_FALSE(first.finished());
  }
  auto resumed = Experiment::resume(part / "league_state.json", part, cfg);
  CHECK(resumed->round() == 7);
  resumed->run();
  CHECK(resumed->checkpoint_json() == whole.checkpoint_json());

  ExperimentConfig other = cfg;
  other.seed = 99;
  CHECK_THROWS_AS(Experiment::resume(part / "league_state.json", part, other), StateFileError);
  std::ofstream(part / "broken.json") << "{ not json";
  CHECK_THROWS_AS(Experiment::resume(part / "broken.json", part), StateFileError);
}

TEST_CASE("artifacts and league loading") {
  const ExperimentConfig cfg = fixture::tiny_config(5);
  const fs::path dir = fixture::scratch_dir("artifacts");
  const RunManifest m = train(cfg, dir);
  CHECK(m.completed);
  CHECK(m.config_hash == cfg.hash());
  for (const char* f : {"config.json", "manifest.json", "league_state.json", "match_log.jsonl", "train_log.jsonl"})
    CHECK(fs::exists(dir / f));
  const LoadedLeague l = load_league_state(dir / "league_state.json");
  CHECK(l.members.size() == l.roles.size());
  CHECK_FALSE(l.main_lineage.empty());
  CHECK(l.config.hash() == cfg.hash());
}
