#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dlt/il_sampler.hpp"

using namespace dlt;

namespace {

DemoCorpus labelled(const std::vector<std::vector<std::string>>& labels) {
  std::vector<Demonstration> demos;
  for (const auto& d : labels) {
    Demonstration demo;
    for (const auto& l : d) demo.steps.push_back({l, {}});
    demos.push_back(demo);
  }
  return DemoCorpus(demos);
}

// Per-step loss used by the estimator tests.
double step_loss(const DemoStep& s) { return 1.0 + s.payload[0] * 0.1 + s.payload[1]; }

}  // namespace

TEST_CASE("label weights: down-sampled, rare, common") {
  const WeightSpec spec;
  CHECK(label_weight("NOOP", 500, 20, spec) == 0.2);
  CHECK(label_weight("SMART", 100, 20, spec) == 0.25);
  CHECK(label_weight("RARE", 4, 20, spec) == 5.0);    // N / count
  CHECK(label_weight("RARER", 1, 20, spec) == 10.0);  // capped
  CHECK(label_weight("MOVE_1", 40, 20, spec) == 1.0);
  CHECK_THROWS_AS(label_weight("X", 0, 20, spec), DomainError);
}

TEST_CASE("pointwise weights follow the labels") {
  const DemoCorpus c = labelled({{"NOOP", "A", "SMART"}, {"A", "A", "B"}, {"NOOP", "A", "A"}});
  const StepWeights w = compute_pointwise_weights(c, WeightSpec{});
  // B appears once in 3 demos: min(10, 3 / 1).
  CHECK(w[0] == std::vector<double>{0.2, 1.0, 0.25});
  CHECK(w[1] == std::vector<double>{1.0, 1.0, 3.0});
  CHECK(WeightSpec::parse_downsample("NOOP=0.5,X=2") == std::map<std::string, double>{{"NOOP", 0.5}, {"X", 2.0}});
}

TEST_CASE("corpus consistency and JSON lines round trip") {
  const DemoCorpus c = make_synthetic_corpus(generate_cyclic_game(5, 8, 0.0, 1), 10, 3);
  CHECK_NOTHROW(c.check_consistency());
  std::stringstream buf;
  c.write_jsonl(buf);
  const DemoCorpus d = DemoCorpus::read_jsonl(buf);
  CHECK(d.demos() == c.demos());
  CHECK(d.label_counts() == c.label_counts());

  auto counts = c.label_counts();
  counts.begin()->second += 1;
  const DemoCorpus stale(c.demos(), counts);
  CHECK_THROWS(stale.check_consistency());
}

TEST_CASE("sampling probabilities are proportional to trajectory weight") {
  const StepWeights w{{1.0, 1.0}, {2.0}, {0.0, 0.0}, {4.0}};
  const TrajectorySampler s(w);
  CHECK(s.probabilities() == std::vector<double>{2.0 / 8, 2.0 / 8, 0.0, 4.0 / 8});
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) CHECK(s.sample(rng).index != 2);
  CHECK_THROWS_AS(TrajectorySampler(StepWeights{{0.0}}), DomainError);
}

TEST_CASE("unbiased estimator matches enumeration; raw reassignment does not") {
  const DemoCorpus c = make_synthetic_corpus(generate_cyclic_game(5, 8, 0.0, 2), 20, 11);
  const StepWeights w = compute_pointwise_weights(c, WeightSpec{});
  double exact = 0.0;
  for (std::size_t j = 0; j < c.demo_count(); ++j)
    for (std::size_t s = 0; s < w[j].size(); ++s) exact += w[j][s] * step_loss(c.demos()[j].steps[s]);
  exact /= static_cast<double>(c.demo_count());

  for (auto est : {WeightEstimator::kUnbiased, WeightEstimator::kRawReassign}) {
    const TrajectorySampler sampler(w, est);
    Rng rng(5);
    const int draws = 20000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < draws; ++i) {
      const auto st = sampler.sample(rng);
      double v = 0.0;
      for (std::size_t s = 0; s < st.training_weights.size(); ++s)
        v += st.training_weights[s] * step_loss(c.demos()[st.index].steps[s]);
      sum += v;
      sq += v * v;
    }
    const double mean = sum / draws;
    const double se = std::sqrt((sq / draws - mean * mean) / draws);
    if (est == WeightEstimator::kUnbiased)
      CHECK(std::abs(mean - exact) < 3.0 * se);
    else
      CHECK(std::abs(mean - exact) > 3.0 * se);
  }
}

TEST_CASE("streaming feeder: bounded buffer, reproducible batches") {
  auto corpus = std::make_shared<const DemoCorpus>(make_synthetic_corpus(generate_cyclic_game(3, 6, 0.0, 1), 8, 1));
  StreamingFeeder a(corpus, WeightSpec{}, 4, 99, 2);
  StreamingFeeder b(corpus, WeightSpec{}, 4, 99, 2);
  for (int i = 0; i < 5; ++i) {
    const DemoBatch x = a.next();
    const DemoBatch y = b.next();
    CHECK(x.items == y.items);
    CHECK(x.items.size() == 4);
    CHECK(a.buffered() <= a.capacity());
  }
}
