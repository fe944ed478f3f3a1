#include "dlt/il_sampler.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "dlt/policy.hpp"

namespace dlt {

DemoCorpus::DemoCorpus(std::vector<Demonstration> demos) : demos_(std::move(demos)) {
  for (const auto& d : demos_)
    for (const auto& s : d.steps) ++label_counts_[s.label];
}

DemoCorpus::DemoCorpus(std::vector<Demonstration> demos,
                       std::map<std::string, std::size_t> label_counts)
    : demos_(std::move(demos)), label_counts_(std::move(label_counts)) {}

std::size_t DemoCorpus::step_count() const {
  std::size_t n = 0;
  for (const auto& d : demos_) n += d.steps.size();
  return n;
}

void DemoCorpus::check_consistency() const {
  std::map<std::string, std::size_t> fresh;
  for (const auto& d : demos_)
    for (const auto& s : d.steps) ++fresh[s.label];
  if (fresh != label_counts_) throw DomainError("corpus: label_counts inconsistent with demonstrations");
}

DemoCorpus DemoCorpus::read_jsonl(std::istream& in) {
  std::vector<Demonstration> demos;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto doc = nlohmann::json::parse(line);
    Demonstration d;
    for (const auto& s : doc.at("steps"))
      d.steps.push_back({s.at("label").get<std::string>(),
                         s.value("payload", std::vector<double>{})});
    demos.push_back(std::move(d));
  }
  return DemoCorpus(std::move(demos));
}

void DemoCorpus::write_jsonl(std::ostream& out) const {
  for (const auto& d : demos_) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : d.steps) steps.push_back({{"label", s.label}, {"payload", s.payload}});
    out << nlohmann::json{{"steps", steps}}.dump() << '\n';
  }
}

void WeightSpec::validate() const {
  for (const auto& [label, rate] : downsample)
    if (!(rate > 0.0)) throw DomainError("weights: downsample rate for " + label + " must be > 0");
  if (!(rare_upsample_cap >= 1.0)) throw DomainError("weights: cap must be >= 1");
  if (!(rare_threshold > 0.0)) throw DomainError("weights: rare_threshold must be > 0");
}

std::map<std::string, double> WeightSpec::parse_downsample(const std::string& text) {
  std::map<std::string, double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw DomainError("weights: expected LABEL=rate, got " + item);
    out[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
  }
  return out;
}

double label_weight(const std::string& label, std::size_t count, std::size_t demo_count,
                    const WeightSpec& spec) {
  if (auto it = spec.downsample.find(label); it != spec.downsample.end()) return it->second;
  if (count == 0) throw DomainError("weights: label " + label + " has zero count");
  const double n = static_cast<double>(demo_count);
  const double c = static_cast<double>(count);
  if (c / n < spec.rare_threshold) return std::min(spec.rare_upsample_cap, n / c);
  return 1.0;
}

StepWeights compute_pointwise_weights(const DemoCorpus& corpus, const WeightSpec& spec) {
  if (corpus.demo_count() == 0) throw DomainError("weights: empty corpus");
  spec.validate();
  std::map<std::string, double> per_label;
  for (const auto& [label, count] : corpus.label_counts())
    per_label[label] = label_weight(label, count, corpus.demo_count(), spec);

  StepWeights out;
  out.reserve(corpus.demo_count());
  for (const auto& d : corpus.demos()) {
    std::vector<double> w;
    w.reserve(d.steps.size());
    for (const auto& s : d.steps) {
      auto it = per_label.find(s.label);
      if (it == per_label.end())
        throw DomainError("weights: step label " + s.label + " missing from label_counts");
      w.push_back(it->second);
    }
    out.push_back(std::move(w));
  }
  return out;
}

TrajectorySampler::TrajectorySampler(StepWeights weights, WeightEstimator estimator)
    : weights_(std::move(weights)), estimator_(estimator) {
  if (weights_.empty()) throw DomainError("sampler: no trajectories");
  totals_.reserve(weights_.size());
  for (const auto& w : weights_) {
    const double t = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(t >= 0.0)) throw DomainError("sampler: negative weight");
    totals_.push_back(t);
    total_ += t;
  }
  if (!(total_ > 0.0)) throw DomainError("sampler: all weights are zero");
  probs_.reserve(totals_.size());
  double acc = 0.0;
  for (double t : totals_) {
    probs_.push_back(t / total_);
    acc += t / total_;
    cumulative_.push_back(acc);
  }
}

std::vector<double> TrajectorySampler::training_weights(std::size_t index) const {
  std::vector<double> w = weights_.at(index);
  if (estimator_ == WeightEstimator::kUnbiased) {
    const double scale = total_ / (totals_[index] * static_cast<double>(weights_.size()));
    for (auto& x : w) x *= scale;
  }
  return w;
}

SampledTrajectory TrajectorySampler::sample(Rng& rng) const {
  const double u = uniform01(rng) * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  auto index = static_cast<std::size_t>(it - cumulative_.begin());
  // Zero-mass trajectories are skipped by upper_bound; rounding at the top
  // end falls back to the last trajectory with mass.
  if (index >= cumulative_.size()) {
    index = cumulative_.size() - 1;
    while (totals_[index] == 0.0) --index;
  }
  return {index, training_weights(index)};
}

SampledTrajectory sample_trajectory(const DemoCorpus& corpus, const StepWeights& weights,
                                    Rng& rng, WeightEstimator estimator) {
  if (weights.size() != corpus.demo_count()) throw DomainError("sampler: weights/corpus mismatch");
  return TrajectorySampler(weights, estimator).sample(rng);
}

StreamingFeeder::StreamingFeeder(std::shared_ptr<const DemoCorpus> corpus, const WeightSpec& spec,
                                 std::size_t batch_size, std::uint64_t seed, std::size_t capacity,
                                 WeightEstimator estimator)
    : corpus_(std::move(corpus)),
      sampler_(compute_pointwise_weights(*corpus_, spec), estimator),
      batch_size_(batch_size),
      rng_(seed),
      queue_(capacity) {
  if (batch_size_ == 0) throw DomainError("feeder: batch_size must be >= 1");
  worker_ = std::thread([this] { produce(); });
}

StreamingFeeder::~StreamingFeeder() {
  queue_.close();
  if (worker_.joinable()) worker_.join();
}

void StreamingFeeder::produce() {
  for (;;) {
    DemoBatch batch;
    batch.items.reserve(batch_size_);
    for (std::size_t i = 0; i < batch_size_; ++i) batch.items.push_back(sampler_.sample(rng_));
    if (!queue_.push(std::move(batch))) return;
  }
}

DemoBatch StreamingFeeder::next() {
  auto b = queue_.pop();
  if (!b) throw std::logic_error("feeder: closed");
  return std::move(*b);
}

DemoCorpus make_synthetic_corpus(const GameSpec& spec, std::size_t num_demos, std::uint64_t seed) {
  auto elite = make_snapshot(scripted_bot(BotKind::kElite, spec.num_moves), "elite");
  auto random = make_snapshot(scripted_bot(BotKind::kUniform, spec.num_moves), "uniform");
  std::vector<Demonstration> demos;
  demos.reserve(num_demos);
  for (std::size_t i = 0; i < num_demos; ++i) {
    Rng rng(derive_seed({seed, i}));
    const RolloutResult r = rollout(spec, *elite, *random, derive_seed({seed, i, 1}));
    Demonstration d;
    for (const auto& st : r.p1.steps) {
      const double u = uniform01(rng);
      std::string label;
      if (u < 0.45) label = "NOOP";
      else if (u < 0.60) label = "SMART";
      else if (u < 0.62) label = "RARE_" + std::to_string(rng() % 3);
      else label = "MOVE_" + std::to_string(st.action);
      d.steps.push_back({std::move(label), {static_cast<double>(st.encoded_state),
                                            static_cast<double>(st.action)}});
    }
    demos.push_back(std::move(d));
  }
  return DemoCorpus(std::move(demos));
}

}  // namespace dlt
