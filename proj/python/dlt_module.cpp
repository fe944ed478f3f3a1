#include <fstream>
#include <sstream>

#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dlt/eval.hpp"
#include "dlt/game.hpp"
#include "dlt/il_sampler.hpp"
#include "dlt/league.hpp"
#include "dlt/losses.hpp"
#include "dlt/policy.hpp"
#include "dlt/runtime.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

// Python objects cross the boundary as JSON text. The function objects are
// leaked so no decref runs after interpreter shutdown.
json to_cpp(const py::object& obj) {
  static const auto* dumps = new py::object(py::module_::import("json").attr("dumps"));
  return json::parse((*dumps)(obj).cast<std::string>());
}

py::object to_py(const json& doc) {
  static const auto* loads = new py::object(py::module_::import("json").attr("loads"));
  return (*loads)(doc.dump());
}

dlt::BotKind bot_kind(const std::string& name) {
  if (name == "pure") return dlt::BotKind::kPure;
  if (name == "counter_last") return dlt::BotKind::kCounterLast;
  if (name == "elite") return dlt::BotKind::kElite;
  if (name == "uniform") return dlt::BotKind::kUniform;
  if (name == "cycle") return dlt::BotKind::kCycle;
  throw dlt::DomainError("unknown bot kind: " + name);
}

dlt::StrategyTagConfig tags_from(const py::object& obj) {
  if (obj.is_none()) return dlt::StrategyTagConfig::only(0);
  if (py::isinstance<py::int_>(obj)) return dlt::StrategyTagConfig::only(obj.cast<int>());
  return dlt::StrategyTagConfig::from_json(to_cpp(obj));
}

dlt::LossConfig loss_from(const py::object& obj) {
  return obj.is_none() ? dlt::LossConfig{} : dlt::LossConfig::from_json(to_cpp(obj), dlt::LossConfig{});
}

py::dict step_dict(const dlt::TrajectoryStep& s) {
  py::dict d;
  d["state"] = s.encoded_state;
  d["tag"] = s.tag;
  d["action"] = s.action;
  d["behavior_prob"] = s.behavior_prob;
  d["reward"] = s.reward;
  d["critical"] = s.critical;
  d["expert"] = s.expert;
  d["step_index"] = s.step_index;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Diversified league training on a cyclic toy game";

  py::register_exception<dlt::DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<dlt::DataIntegrityError>(m, "DataIntegrityError", PyExc_RuntimeError);
  py::register_exception<dlt::NonFiniteLoss>(m, "NonFiniteLoss", PyExc_ArithmeticError);
  py::register_exception<dlt::NashNotConverged>(m, "NashNotConverged", PyExc_RuntimeError);
  py::register_exception<dlt::StateFileError>(m, "StateFileError", PyExc_RuntimeError);

  // game
  py::class_<dlt::GameSpec>(m, "GameSpec")
      .def_readonly("num_moves", &dlt::GameSpec::num_moves)
      .def_readonly("horizon", &dlt::GameSpec::horizon)
      .def_readonly("noise_level", &dlt::GameSpec::noise_level)
      .def_readonly("seed", &dlt::GameSpec::seed)
      .def_readonly("payoff", &dlt::GameSpec::payoff)
      .def("at", &dlt::GameSpec::at)
      .def("counter_of", &dlt::GameSpec::counter_of)
      .def("to_json", [](const dlt::GameSpec& s) { return to_py(dlt::to_json(s)); })
      .def_static("from_json", [](const py::object& o) { return dlt::game_spec_from_json(to_cpp(o)); })
      .def(py::self == py::self);

  m.def("generate_cyclic_game", &dlt::generate_cyclic_game, py::arg("m"), py::arg("horizon"),
        py::arg("sigma") = 0.0, py::arg("seed") = 0);

  // policies
  py::class_<dlt::Snapshot, std::shared_ptr<dlt::Snapshot>>(m, "Snapshot")
      .def_readonly("model_id", &dlt::Snapshot::model_id)
      .def("distribution",
           [](const dlt::Snapshot& s, int step, double score, std::optional<int> own_last,
              std::optional<int> opp_last, int tag) {
             return s.policy->distribution({step, score, own_last, opp_last}, tag);
           },
           py::arg("step_index"), py::arg("score"), py::arg("own_last"), py::arg("opponent_last"),
           py::arg("tag") = 0)
      .def("to_json", [](const dlt::Snapshot& s) { return to_py(s.to_json()); });

  py::class_<dlt::PolicyParams>(m, "PolicyParams")
      .def(py::init<int, int>(), py::arg("num_moves"), py::arg("tag_count"))
      .def_property_readonly("num_moves", &dlt::PolicyParams::num_moves)
      .def_property_readonly("tag_count", &dlt::PolicyParams::tag_count)
      .def_property_readonly("num_states", &dlt::PolicyParams::num_states)
      .def("probs", &dlt::PolicyParams::probs)
      .def("value", py::overload_cast<int, int>(&dlt::PolicyParams::value, py::const_))
      .def_property(
          "logits", [](const dlt::PolicyParams& p) { return p.logits(); },
          [](dlt::PolicyParams& p, const std::vector<double>& v) {
            if (v.size() != p.logits().size()) throw dlt::DomainError("logits: size mismatch");
            p.logits() = v;
          })
      .def_property(
          "values", [](const dlt::PolicyParams& p) { return p.values(); },
          [](dlt::PolicyParams& p, const std::vector<double>& v) {
            if (v.size() != p.values().size()) throw dlt::DomainError("values: size mismatch");
            p.values() = v;
          })
      .def("to_json", [](const dlt::PolicyParams& p) { return to_py(p.to_json()); })
      .def_static("from_json", [](const py::object& o) { return dlt::PolicyParams::from_json(to_cpp(o)); })
      .def("snapshot",
           [](const dlt::PolicyParams& p, const std::string& id, const py::object& tags) {
             return std::const_pointer_cast<dlt::Snapshot>(dlt::make_snapshot(p, id, tags_from(tags)));
           },
           py::arg("model_id"), py::arg("tags") = py::none());

  m.def("scripted_bot",
        [](const std::string& kind, int num_moves, int move, const std::string& id) {
          return std::const_pointer_cast<dlt::Snapshot>(
              dlt::make_snapshot(dlt::scripted_bot(bot_kind(kind), num_moves, move), id));
        },
        py::arg("kind"), py::arg("num_moves"), py::arg("move") = 0, py::arg("model_id") = "bot");

  m.def("make_initial_params", &dlt::make_initial_params, py::arg("num_moves"), py::arg("num_tags"),
        py::arg("smoothing") = 0.4, py::arg("specific_style") = -1, py::arg("noise") = 0.0,
        py::arg("seed") = 0);

  m.def("rollout",
        [](const dlt::GameSpec& spec, const dlt::Snapshot& p1, const dlt::Snapshot& p2,
           std::pair<int, int> tags, std::uint64_t seed, bool with_rules) {
          const auto r = dlt::rollout(spec, p1, p2, tags, seed,
                                      with_rules ? dlt::default_rule_set() : dlt::RuleSet{});
          py::dict out;
          py::list s1, s2;
          for (const auto& s : r.p1.steps) s1.append(step_dict(s));
          for (const auto& s : r.p2.steps) s2.append(step_dict(s));
          out["p1"] = s1;
          out["p2"] = s2;
          out["outcome"] = r.outcome;
          return out;
        },
        py::arg("spec"), py::arg("p1"), py::arg("p2"), py::arg("tags") = std::pair<int, int>{0, 0},
        py::arg("seed") = 0, py::arg("with_rules") = true);

  // losses
  m.def("train_updates",
        [](dlt::PolicyParams& params, const dlt::GameSpec& spec, const dlt::Snapshot& opponent,
           const py::object& loss, int updates, int batch, std::uint64_t seed) {
          const dlt::LossConfig cfg = loss_from(loss);
          py::list reports;
          for (int u = 0; u < updates; ++u) {
            const auto actor = dlt::make_snapshot(params, "live");
            std::vector<dlt::Trajectory> trajs;
            for (int k = 0; k < batch; ++k) {
              const auto s = dlt::derive_seed({seed, static_cast<std::uint64_t>(u),
                                               static_cast<std::uint64_t>(k)});
              auto r = k % 2 == 0 ? dlt::rollout(spec, *actor, opponent, {0, 0}, s)
                                  : dlt::rollout(spec, opponent, *actor, {0, 0}, s);
              trajs.push_back(k % 2 == 0 ? std::move(r.p1) : std::move(r.p2));
            }
            dlt::UpdateContext ctx;
            ctx.dapo_active = false;
            ctx.horizon = spec.horizon;
            reports.append(to_py(dlt::total_update(trajs, params, cfg, ctx).to_json()));
          }
          return reports;
        },
        py::arg("params"), py::arg("spec"), py::arg("opponent"), py::arg("loss") = py::none(),
        py::arg("updates") = 1, py::arg("batch") = 16, py::arg("seed") = 0,
        "Self-contained training loop against a fixed opponent (tag 0, default rules).");

  // imitation data
  m.def("label_weight",
        [](const std::string& label, std::size_t count, std::size_t n, double cap) {
          dlt::WeightSpec spec;
          spec.rare_upsample_cap = cap;
          return dlt::label_weight(label, count, n, spec);
        },
        py::arg("label"), py::arg("count"), py::arg("demo_count"), py::arg("cap") = 10.0);
  m.def("compute_pointwise_weights",
        [](const std::vector<std::vector<std::string>>& labels, const std::string& downsample, double cap) {
          std::vector<dlt::Demonstration> demos;
          for (const auto& d : labels) {
            dlt::Demonstration demo;
            for (const auto& l : d) demo.steps.push_back({l, {}});
            demos.push_back(std::move(demo));
          }
          dlt::WeightSpec spec;
          spec.downsample = dlt::WeightSpec::parse_downsample(downsample);
          spec.rare_upsample_cap = cap;
          return dlt::compute_pointwise_weights(dlt::DemoCorpus(std::move(demos)), spec);
        },
        py::arg("labels"), py::arg("downsample") = "NOOP=0.2,SMART=0.25", py::arg("cap") = 10.0,
        "Per-step weights for demonstrations given as lists of labels.");
  m.def("trajectory_probabilities",
        [](const dlt::StepWeights& w) { return dlt::TrajectorySampler(w).probabilities(); });

  // league decisions
  m.def("aee_period_decision",
        [](const std::vector<std::tuple<std::string, int, double>>& leaves, double low, double high) {
          std::vector<dlt::CandidateRate> c;
          for (const auto& [id, period, wr] : leaves) c.push_back({id, period, wr});
          dlt::RoleConfig cfg;
          cfg.aee_low = low;
          cfg.aee_high = high;
          const auto d = dlt::aee_period_decision(c, cfg);
          py::dict out;
          out["action"] = d.action == dlt::PeriodDecision::Action::kInherit ? "inherit"
                          : d.action == dlt::PeriodDecision::Action::kReset ? "reset"
                                                                            : "continue";
          out["inherit_from"] = d.inherit_from;
          return out;
        },
        py::arg("leaves"), py::arg("low") = 0.2, py::arg("high") = 0.5);
  m.def("pfsp_weights", &dlt::pfsp_weights, py::arg("win_rates"), py::arg("exponent") = 2.0);

  // evaluation
  m.def("nash_solve",
        [](const dlt::Matrix& a, double eps) { return to_py(dlt::nash_solve(a, eps).to_json()); },
        py::arg("matrix"), py::arg("eps") = 1e-4);
  m.def("elo_fit",
        [](const std::vector<std::string>& ids, const dlt::Matrix& p, std::int64_t n,
           const std::string& baseline) {
          dlt::PayoffMatrix pm(ids);
          for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = i + 1; j < ids.size(); ++j) pm.set(i, j, p[i][j], n);
          return dlt::elo_fit(pm, baseline).ratings;
        },
        py::arg("ids"), py::arg("win_rates"), py::arg("n") = 100, py::arg("baseline"));
  m.def("play_pair",
        [](const dlt::GameSpec& spec, const dlt::Snapshot& a, const dlt::Snapshot& b, int n,
           std::uint64_t seed) {
          const auto c = dlt::play_pair(spec, a, b, n, seed);
          return py::make_tuple(c.wins, c.draws, c.losses);
        },
        py::arg("spec"), py::arg("a"), py::arg("b"), py::arg("n") = 100, py::arg("seed") = 0);

  // runtime
  m.def("default_config", [] { return to_py(dlt::ExperimentConfig{}.to_json()); });
  m.def("train",
        [](const py::object& config, const std::filesystem::path& dir, std::optional<std::int64_t> rounds) {
          const auto cfg = dlt::ExperimentConfig::from_json(to_cpp(config));
          dlt::RunManifest manifest;
          {
            py::gil_scoped_release release;
            dlt::Experiment e(cfg, dir);
            manifest = e.run(rounds);
          }
          return to_py(manifest.to_json());
        },
        py::arg("config"), py::arg("out_dir"), py::arg("max_rounds") = py::none());
  m.def("league_bar",
        [](const std::filesystem::path& state, int n, std::uint64_t seed) {
          const auto league = dlt::load_league_state(state);
          py::list rows;
          for (const auto& r : dlt::league_bar(*league.main_lineage.back(), league.members, league.roles,
                                               league.spec, n, seed)) {
            py::dict d;
            d["model_id"] = r.model_id;
            d["role"] = r.role;
            d["win_rate"] = r.win_rate;
            rows.append(d);
          }
          return rows;
        },
        py::arg("state_file"), py::arg("n") = 100, py::arg("seed") = 0);
  m.def("load_league",
        [](const std::filesystem::path& state, bool include_initial) {
          const auto league = dlt::load_league_state(state, include_initial);
          py::dict out;
          py::list members, lineage;
          for (std::size_t i = 0; i < league.members.size(); ++i)
            members.append(py::make_tuple(league.members[i]->model_id, league.roles[i],
                                          std::const_pointer_cast<dlt::Snapshot>(league.members[i])));
          for (const auto& s : league.main_lineage) lineage.append(std::const_pointer_cast<dlt::Snapshot>(s));
          out["spec"] = league.spec;
          out["config"] = to_py(league.config.to_json());
          out["members"] = members;
          out["main_lineage"] = lineage;
          return out;
        },
        py::arg("state_file"), py::arg("include_initial") = true);
  m.def("snapshot_from_json", [](const py::object& o) {
    return std::make_shared<dlt::Snapshot>(dlt::Snapshot::from_json(to_cpp(o)));
  });
  m.def("diversity_entropy", &dlt::exploiter_diversity, py::arg("match_log"), py::arg("num_moves"),
        py::arg("tag_count"));
}
