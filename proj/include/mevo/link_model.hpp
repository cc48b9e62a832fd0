#pragma once

// One direction of a simulated network path: base one-way delay, a jitter
// distribution, Bernoulli loss, optional reordering and optional congestion
// episodes (bursts of extra queueing delay). Times are integer nanoseconds of
// true (simulator) time.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mevo/rng.hpp"

namespace mevo {

enum class JitterKind : std::uint8_t { None, Uniform, ShiftedExponential };

struct JitterModel {
  JitterKind kind = JitterKind::None;
  double a_ms = 0;  // uniform: low bound;  shifted_exponential: minimum
  double b_ms = 0;  // uniform: high bound; shifted_exponential: mean excess over the minimum

  static JitterModel none() { return {}; }
  static JitterModel uniform(double lo, double hi) { return {JitterKind::Uniform, lo, hi}; }
  static JitterModel shifted_exponential(double min, double mean_excess) {
    return {JitterKind::ShiftedExponential, min, mean_excess};
  }
  bool operator==(const JitterModel&) const = default;
};

/// "none", "uniform <a> <b>", "shifted_exponential <min> <mean_excess>".
JitterModel parse_jitter(const std::string& text);
std::string to_string(const JitterModel& j);

/// Congestion episodes arrive as a Poisson process. Each adds a trapezoid of
/// extra delay: linear rise over ramp_ms to a peak drawn uniformly from
/// [peak_min_ms, peak_max_ms], flat for hold_ms, linear fall over ramp_ms.
struct CongestionModel {
  double episodes_per_hour = 0;
  double peak_min_ms = 0;
  double peak_max_ms = 0;
  double ramp_ms = 0;
  double hold_ms = 0;

  bool enabled() const { return episodes_per_hour > 0 && peak_max_ms > 0; }
  bool operator==(const CongestionModel&) const = default;
};

struct LinkModel {
  double base_owd_ms = 0;
  JitterModel jitter;
  double loss_prob = 0;
  bool reorder = false;  // false: deliveries are forced into send order
  std::uint64_t seed = 0;
  CongestionModel congestion;

  /// Throws ConfigError when a parameter is out of range.
  void validate() const;
  bool operator==(const LinkModel&) const = default;
};

/// Stateful delivery process of one link; datagrams must be offered in
/// non-decreasing send time. Loss, jitter and congestion draw from separate
/// substreams of the link seed, and every datagram consumes exactly one draw
/// from each, so changing one model never shifts another's draws.
class LinkChannel {
 public:
  explicit LinkChannel(const LinkModel& model);

  /// Delivery time, or nothing when the datagram is dropped.
  std::optional<std::int64_t> deliver(std::int64_t sent_ns);

  /// Extra congestion delay at a send instant (for inspection and tests).
  double congestion_extra_ms(std::int64_t sent_ns);

  const LinkModel& model() const { return model_; }

 private:
  struct Episode {
    std::int64_t start_ns = 0;
    double peak_ms = 0;
  };
  void advance_episodes(std::int64_t t_ns);

  LinkModel model_;
  Rng loss_rng_;
  Rng jitter_rng_;
  Rng congestion_rng_;
  std::int64_t last_delivery_ns_ = INT64_MIN;
  std::int64_t last_sent_ns_ = INT64_MIN;
  std::vector<Episode> episodes_;  // active or upcoming, in start order
  std::int64_t next_episode_ns_ = 0;
};

/// Convenience form: schedule for a sorted list of send times.
std::vector<std::optional<std::int64_t>> deliveries(const LinkModel& link, const std::vector<std::int64_t>& sends_ns);

}  // namespace mevo
