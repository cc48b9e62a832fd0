#include "mevo/link_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mevo/errors.hpp"

namespace mevo {
namespace {

std::int64_t ms_to_ns(double ms) { return std::llround(ms * 1e6); }

}  // namespace

JitterModel parse_jitter(const std::string& text) {
  std::istringstream in(text);
  std::string kind;
  in >> kind;
  JitterModel j;
  if (kind == "none") {
    j = JitterModel::none();
  } else if (kind == "uniform") {
    if (!(in >> j.a_ms >> j.b_ms)) throw ConfigError("uniform jitter needs two numbers: " + text);
    j.kind = JitterKind::Uniform;
  } else if (kind == "shifted_exponential") {
    if (!(in >> j.a_ms >> j.b_ms)) throw ConfigError("shifted_exponential jitter needs two numbers: " + text);
    j.kind = JitterKind::ShiftedExponential;
  } else {
    throw ConfigError("unknown jitter model '" + text + "'");
  }
  std::string rest;
  if (in >> rest) throw ConfigError("trailing text in jitter model '" + text + "'");
  return j;
}

std::string to_string(const JitterModel& j) {
  std::ostringstream out;
  switch (j.kind) {
    case JitterKind::None: out << "none"; break;
    case JitterKind::Uniform: out << "uniform " << j.a_ms << ' ' << j.b_ms; break;
    case JitterKind::ShiftedExponential: out << "shifted_exponential " << j.a_ms << ' ' << j.b_ms; break;
  }
  return out.str();
}

void LinkModel::validate() const {
  if (!(base_owd_ms >= 0)) throw ConfigError("base_owd_ms must be >= 0");
  if (!(loss_prob >= 0 && loss_prob <= 1)) throw ConfigError("loss_prob must be in [0, 1]");
  if (jitter.kind == JitterKind::Uniform && !(jitter.a_ms >= 0 && jitter.a_ms <= jitter.b_ms)) {
    throw ConfigError("uniform jitter needs 0 <= a <= b");
  }
  if (jitter.kind == JitterKind::ShiftedExponential && !(jitter.a_ms >= 0 && jitter.b_ms >= 0)) {
    throw ConfigError("shifted_exponential jitter needs min >= 0 and mean_excess >= 0");
  }
  const auto& c = congestion;
  if (!(c.episodes_per_hour >= 0 && c.peak_min_ms >= 0 && c.peak_min_ms <= c.peak_max_ms && c.ramp_ms >= 0 &&
        c.hold_ms >= 0)) {
    throw ConfigError("congestion parameters must be >= 0 with peak_min_ms <= peak_max_ms");
  }
}

LinkChannel::LinkChannel(const LinkModel& model)
    : model_(model),
      loss_rng_(derive_seed(model.seed, "loss")),
      jitter_rng_(derive_seed(model.seed, "jitter")),
      congestion_rng_(derive_seed(model.seed, "congestion")) {
  model_.validate();
  if (model_.congestion.enabled()) {
    next_episode_ns_ = ms_to_ns(congestion_rng_.exponential(3.6e6 / model_.congestion.episodes_per_hour));
  }
}

void LinkChannel::advance_episodes(std::int64_t t_ns) {
  const auto& c = model_.congestion;
  if (!c.enabled()) return;
  const std::int64_t length = ms_to_ns(2 * c.ramp_ms + c.hold_ms);
  while (!episodes_.empty() && episodes_.front().start_ns + length <= t_ns) episodes_.erase(episodes_.begin());
  while (next_episode_ns_ <= t_ns) {
    episodes_.push_back({next_episode_ns_, congestion_rng_.uniform(c.peak_min_ms, c.peak_max_ms)});
    next_episode_ns_ += std::max<std::int64_t>(1, ms_to_ns(congestion_rng_.exponential(3.6e6 / c.episodes_per_hour)));
    while (!episodes_.empty() && episodes_.front().start_ns + length <= t_ns) episodes_.erase(episodes_.begin());
  }
}

double LinkChannel::congestion_extra_ms(std::int64_t sent_ns) {
  const auto& c = model_.congestion;
  if (!c.enabled()) return 0;
  advance_episodes(sent_ns);
  double extra = 0;
  for (const auto& e : episodes_) {
    const double t = static_cast<double>(sent_ns - e.start_ns) / 1e6;
    if (t < 0) continue;
    double level = 0;
    if (t < c.ramp_ms) {
      level = t / c.ramp_ms;
    } else if (t < c.ramp_ms + c.hold_ms) {
      level = 1;
    } else {
      level = c.ramp_ms > 0 ? std::max(0.0, 1 - (t - c.ramp_ms - c.hold_ms) / c.ramp_ms) : 0;
    }
    extra = std::max(extra, level * e.peak_ms);  // overlapping episodes do not stack
  }
  return extra;
}

std::optional<std::int64_t> LinkChannel::deliver(std::int64_t sent_ns) {
  if (sent_ns < last_sent_ns_) throw ConfigError("link: datagrams offered out of send order");
  last_sent_ns_ = sent_ns;

  const bool dropped = loss_rng_.bernoulli(model_.loss_prob);
  double jitter_ms = 0;
  switch (model_.jitter.kind) {
    case JitterKind::None: jitter_rng_.uniform(); break;
    case JitterKind::Uniform: jitter_ms = jitter_rng_.uniform(model_.jitter.a_ms, model_.jitter.b_ms); break;
    case JitterKind::ShiftedExponential:
      jitter_ms = model_.jitter.a_ms + jitter_rng_.exponential(model_.jitter.b_ms);
      break;
  }
  const double extra_ms = congestion_extra_ms(sent_ns);
  if (dropped) return std::nullopt;

  std::int64_t at = sent_ns + ms_to_ns(model_.base_owd_ms + jitter_ms + extra_ms);
  if (!model_.reorder) at = std::max(at, last_delivery_ns_);
  last_delivery_ns_ = std::max(last_delivery_ns_, at);
  return at;
}

std::vector<std::optional<std::int64_t>> deliveries(const LinkModel& link, const std::vector<std::int64_t>& sends_ns) {
  LinkChannel channel(link);
  std::vector<std::optional<std::int64_t>> out;
  out.reserve(sends_ns.size());
  for (const auto t : sends_ns) out.push_back(channel.deliver(t));
  return out;
}

}  // namespace mevo
