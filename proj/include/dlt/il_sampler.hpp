#pragma once

// Importance-sampled imitation data: per-label point weights, trajectory
// sampling proportional to summed weights, and per-step training weights
// that keep the weighted loss estimate unbiased.

#include <atomic>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "dlt/bounded_queue.hpp"
#include "dlt/game.hpp"
#include "dlt/rng.hpp"

namespace dlt {

struct DemoStep {
  std::string label;
  std::vector<double> payload;

  bool operator==(const DemoStep&) const = default;
};

struct Demonstration {
  std::vector<DemoStep> steps;

  bool operator==(const Demonstration&) const = default;
};

class DemoCorpus {
 public:
  DemoCorpus() = default;
  explicit DemoCorpus(std::vector<Demonstration> demos);
  // Counts supplied alongside the data (e.g. from an index file); see
  // check_consistency().
  DemoCorpus(std::vector<Demonstration> demos, std::map<std::string, std::size_t> label_counts);

  const std::vector<Demonstration>& demos() const { return demos_; }
  const std::map<std::string, std::size_t>& label_counts() const { return label_counts_; }
  std::size_t demo_count() const { return demos_.size(); }
  std::size_t step_count() const;

  // Throws if label_counts no longer matches the demonstrations.
  void check_consistency() const;

  // One demonstration per line: {"steps":[{"label":..,"payload":[..]},..]}.
  static DemoCorpus read_jsonl(std::istream& in);
  void write_jsonl(std::ostream& out) const;

 private:
  std::vector<Demonstration> demos_;
  std::map<std::string, std::size_t> label_counts_;
};

struct WeightSpec {
  std::map<std::string, double> downsample{{"NOOP", 0.2}, {"SMART", 0.25}};
  double rare_upsample_cap = 10.0;
  // A label is rare when count / N is below this.
  double rare_threshold = 1.0;

  void validate() const;
  // "NOOP=0.2,SMART=0.25"
  static std::map<std::string, double> parse_downsample(const std::string& text);
};

using StepWeights = std::vector<std::vector<double>>;  // [demo][step]

double label_weight(const std::string& label, std::size_t count, std::size_t demo_count,
                    const WeightSpec& spec);

StepWeights compute_pointwise_weights(const DemoCorpus& corpus, const WeightSpec& spec);

enum class WeightEstimator {
  kUnbiased,     // w_step / W_j * W_total / N
  kRawReassign,  // w_step as-is (biased toward heavy trajectories)
};

struct SampledTrajectory {
  std::size_t index = 0;
  std::vector<double> training_weights;

  bool operator==(const SampledTrajectory&) const = default;
};

class TrajectorySampler {
 public:
  TrajectorySampler(StepWeights weights, WeightEstimator estimator = WeightEstimator::kUnbiased);

  const std::vector<double>& probabilities() const { return probs_; }
  const std::vector<double>& trajectory_totals() const { return totals_; }
  double total_weight() const { return total_; }

  SampledTrajectory sample(Rng& rng) const;
  std::vector<double> training_weights(std::size_t index) const;

 private:
  StepWeights weights_;
  WeightEstimator estimator_;
  std::vector<double> totals_;
  std::vector<double> probs_;
  std::vector<double> cumulative_;
  double total_ = 0.0;
};

SampledTrajectory sample_trajectory(const DemoCorpus& corpus, const StepWeights& weights,
                                    Rng& rng,
                                    WeightEstimator estimator = WeightEstimator::kUnbiased);

struct DemoBatch {
  std::vector<SampledTrajectory> items;
};

// Background producer of sampled batches over an immutable corpus. The
// producer blocks once `capacity` batches are buffered.
class StreamingFeeder {
 public:
  StreamingFeeder(std::shared_ptr<const DemoCorpus> corpus, const WeightSpec& spec,
                  std::size_t batch_size, std::uint64_t seed, std::size_t capacity = 8,
                  WeightEstimator estimator = WeightEstimator::kUnbiased);
  ~StreamingFeeder();

  StreamingFeeder(const StreamingFeeder&) = delete;
  StreamingFeeder& operator=(const StreamingFeeder&) = delete;

  DemoBatch next();
  std::size_t buffered() const { return queue_.size(); }
  std::size_t capacity() const { return queue_.capacity(); }

 private:
  void produce();

  std::shared_ptr<const DemoCorpus> corpus_;
  TrajectorySampler sampler_;
  std::size_t batch_size_;
  Rng rng_;
  BoundedQueue<DemoBatch> queue_;
  std::thread worker_;
};

// Demonstrations from scripted-bot self-play with injected label imbalance.
// Labels: "NOOP" (frequent), "SMART", "MOVE_k", and a few "RARE_k".
DemoCorpus make_synthetic_corpus(const GameSpec& spec, std::size_t num_demos, std::uint64_t seed);

}  // namespace dlt
