#include "mevo/jitter_buffer.hpp"

#include <algorithm>
#include <cmath>
#include <ext/pb_ds/assoc_container.hpp>
#include <ext/pb_ds/tree_policy.hpp>

#include "mevo/errors.hpp"

namespace mevo {
namespace {

constexpr std::size_t kStoreSlots = 2048;  // ~5.9 s of 128-frame packets
constexpr std::size_t kHistorySlots = 4096;
constexpr std::uint32_t kResyncAfterOverflows = 8;

}  // namespace

void JitterBufferConfig::validate() const {
  if (!(window_seconds > 0)) throw ConfigError("window_seconds must be positive");
  if (!(percentile >= 50.0 && percentile <= 100.0)) {
    throw ConfigError("percentile must be in [50, 100]");
  }
  if (min_target_frames > max_target_frames) {
    throw ConfigError("min_target_frames must not exceed max_target_frames");
  }
  if (adapt_interval_ms == 0) throw ConfigError("adapt_interval_ms must be positive");
  if (regulation_window_ms == 0) throw ConfigError("regulation_window_ms must be positive");
}

void normalize_transits(std::span<TransitRecord> window) {
  if (window.empty()) return;
  // relative_transit_us holds the raw (offset-laden) transit on input
  const auto lowest = std::min_element(window.begin(), window.end(),
                                       [](const TransitRecord& a, const TransitRecord& b) {
                                         return a.relative_transit_us < b.relative_transit_us;
                                       })
                          ->relative_transit_us;
  for (auto& r : window) r.relative_transit_us -= lowest;
}

namespace {

// Zero-based index of the nearest-rank percentile among n sorted values.
std::size_t nearest_rank_index(std::size_t n, double percentile) {
  // p * n / 100 in binary floating point can land a hair off an integer
  // (99.9 * 1000 / 100), which would move the nearest rank by one
  double pos = percentile * static_cast<double>(n) / 100.0;
  if (const double r = std::round(pos); std::abs(pos - r) <= 1e-9 * std::max(1.0, pos)) pos = r;
  const double rank = std::ceil(pos);
  return static_cast<std::size_t>(std::clamp(rank - 1.0, 0.0, static_cast<double>(n - 1)));
}

std::uint32_t target_from_jitter(std::int64_t jitter_us, const JitterBufferConfig& config,
                                 std::uint32_t sample_rate) {
  jitter_us = std::max<std::int64_t>(0, jitter_us);
  const std::int64_t jitter_frames =
      (jitter_us * static_cast<std::int64_t>(sample_rate) + 999'999) / 1'000'000;
  const std::int64_t target = jitter_frames + config.safety_margin_frames;
  return static_cast<std::uint32_t>(std::clamp<std::int64_t>(
      target, config.min_target_frames, config.max_target_frames));
}

}  // namespace

std::uint32_t estimate_target_delay(std::span<const TransitRecord> window,
                                    const JitterBufferConfig& config, std::uint32_t sample_rate,
                                    std::uint32_t current) {
  if (window.empty()) return current;
  std::vector<std::int64_t> values;
  values.reserve(window.size());
  for (const auto& r : window) values.push_back(r.relative_transit_us);
  const auto idx = nearest_rank_index(values.size(), config.percentile);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(idx),
                   values.end());
  return target_from_jitter(values[idx], config, sample_rate);
}

std::uint32_t quantize_to_packets(std::uint32_t frames, std::uint32_t frames_per_packet) {
  return (frames + frames_per_packet - 1) / frames_per_packet * frames_per_packet;
}

const char* to_string(Arrival a) {
  switch (a) {
    case Arrival::OnTime: return "on_time";
    case Arrival::Late: return "late";
    case Arrival::Duplicate: return "duplicate";
    case Arrival::Overflow: return "overflow";
  }
  return "unknown";
}

const char* to_string(SlotOutcome o) {
  switch (o) {
    case SlotOutcome::Pending: return "in_flight";
    case SlotOutcome::Played: return "played";
    case SlotOutcome::Lost: return "lost";
    case SlotOutcome::Late: return "late";
    case SlotOutcome::Skipped: return "skipped";
  }
  return "unknown";
}

void SilenceConcealer::conceal(std::span<const std::int16_t>, std::span<std::int16_t> out) {
  std::fill(out.begin(), out.end(), std::int16_t{0});
}

struct JitterBuffer::TransitIndex {
  // (raw transit, arrival serial): the serial keeps equal transits distinct
  using Key = std::pair<std::int64_t, std::uint64_t>;
  __gnu_pbds::tree<Key, __gnu_pbds::null_type, std::less<Key>, __gnu_pbds::rb_tree_tag,
                   __gnu_pbds::tree_order_statistics_node_update>
      tree;
};

JitterBuffer::~JitterBuffer() = default;
JitterBuffer::JitterBuffer(JitterBuffer&&) noexcept = default;
JitterBuffer& JitterBuffer::operator=(JitterBuffer&&) noexcept = default;

JitterBuffer::JitterBuffer(StreamConfig stream, JitterBufferConfig config)
    : stream_(stream),
      config_(config),
      slot_samples_(stream.samples_per_packet()),
      target_(config.min_target_frames),
      store_(kStoreSlots),
      history_(kHistorySlots),
      index_(std::make_unique<TransitIndex>()),
      concealer_(std::make_unique<SilenceConcealer>()) {
  stream_.validate();
  config_.validate();
  for (auto& s : store_) s.payload.assign(slot_samples_, 0);
  current_.reserve(slot_samples_);
  previous_.assign(slot_samples_, 0);
}

void JitterBuffer::set_config(const JitterBufferConfig& config) {
  config.validate();
  config_ = config;
  target_ = std::clamp(target_, config_.min_target_frames, config_.max_target_frames);
}

void JitterBuffer::set_concealer(std::unique_ptr<Concealer> concealer) {
  concealer_ = concealer ? std::move(concealer) : std::make_unique<SilenceConcealer>();
}

SeqNo JitterBuffer::seq_of(std::int64_t slot) const {
  return static_cast<SeqNo>(cursor_seq_ + static_cast<SeqNo>(slot - cursor_slot_));
}

void JitterBuffer::emit(std::int64_t slot, SlotOutcome outcome, std::int64_t time_us) {
  if (observer_) observer_(SlotEvent{slot, seq_of(slot), outcome, time_us});
}

void JitterBuffer::start(const AudioPacket& packet) {
  const std::uint32_t fpp = stream_.frames_per_packet;
  const std::uint64_t horizon_packets =
      (std::uint64_t{config_.late_timeout_ms} * stream_.sample_rate / 1000 + fpp - 1) / fpp;
  // A packet from the first moments of its stream anchors playout at the
  // stream origin, so slots lost or reordered ahead of it are still decided.
  std::uint32_t lead = 0;
  const std::uint32_t ts = packet.header.timestamp_frames;
  if (ts % fpp == 0 && ts / fpp <= horizon_packets) lead = ts / fpp;

  started_ = true;
  cursor_slot_ = 0;
  cursor_seq_ = static_cast<SeqNo>(packet.header.seq - lead);
  newest_end_slot_ = 0;
  pending_silence_ = 0;
  current_.clear();
  current_pos_ = 0;
  target_ = std::clamp(target_, config_.min_target_frames, config_.max_target_frames);
  for (auto& s : store_) {
    s.slot = -1;
    s.present = false;
  }
  for (auto& h : history_) h = HistoryEntry{};
  consecutive_overflow_ = 0;
  regulation_max_ = -1;
}

void JitterBuffer::record_transit(const AudioPacket& packet, std::int64_t recv_time_us) {
  const std::uint32_t send32 = packet.header.send_time_us;
  std::int64_t send = 0;
  if (!have_send_ref_) {
    have_send_ref_ = true;
    last_send32_ = send32;
    last_send_unwrapped_ = send32;
    send = send32;
  } else {
    const std::int64_t delta = time32_distance(last_send32_, send32);
    send = last_send_unwrapped_ + delta;
    if (delta > 0) {
      last_send32_ = send32;
      last_send_unwrapped_ = send;
    }
  }
  // relative_transit_us carries the raw transit until normalize_transits()
  window_.push_back(TransitRecord{packet.header.seq, send, recv_time_us, recv_time_us - send});
  index_->tree.insert({recv_time_us - send, transits_pushed_++});
  prune_window(recv_time_us);
}

void JitterBuffer::prune_window(std::int64_t now_us) {
  const auto span_us = static_cast<std::int64_t>(config_.window_seconds * 1e6);
  while (!window_.empty() && window_.front().recv_time_us < now_us - span_us) {
    const std::uint64_t serial = transits_pushed_ - window_.size();
    index_->tree.erase({window_.front().relative_transit_us, serial});
    window_.pop_front();
  }
}

std::vector<TransitRecord> JitterBuffer::window() const {
  std::vector<TransitRecord> out(window_.begin(), window_.end());
  normalize_transits(out);
  return out;
}

// Same value as estimate_target_delay(window(), ...): the percentile of
// transit minus the window minimum is the raw percentile minus the minimum.
std::uint32_t JitterBuffer::estimate() const {
  const auto& tree = index_->tree;
  if (tree.empty()) return target_;
  const auto idx = nearest_rank_index(tree.size(), config_.percentile);
  const std::int64_t jitter = tree.find_by_order(idx)->first - tree.begin()->first;
  return target_from_jitter(jitter, config_, stream_.sample_rate);
}

Arrival JitterBuffer::push(const AudioPacket& packet, std::int64_t recv_time_us) {
  clock_us_ = std::max(clock_us_, recv_time_us);
  if (!started_) start(packet);

  std::int32_t d = seq_distance(cursor_seq_, packet.header.seq);
  if (d >= static_cast<std::int32_t>(kStoreSlots)) {
    ++counters_.packets_overflow;
    if (++consecutive_overflow_ < kResyncAfterOverflows) return Arrival::Overflow;
    // The sender restarted or jumped: re-anchor on this packet.
    ++counters_.resyncs;
    start(packet);
    d = seq_distance(cursor_seq_, packet.header.seq);
  }
  consecutive_overflow_ = 0;

  const std::int64_t slot = cursor_slot_ + d;
  if (d < 0) {
    const Arrival a = classify_old(slot, recv_time_us);
    if (a == Arrival::Late) record_transit(packet, recv_time_us);
    return a;
  }

  auto& stored = store_[static_cast<std::size_t>(slot) % kStoreSlots];
  if (stored.slot == slot && stored.present) {
    ++counters_.packets_duplicate;
    return Arrival::Duplicate;
  }
  stored.slot = slot;
  stored.present = true;
  std::copy(packet.payload.begin(), packet.payload.end(), stored.payload.begin());
  newest_end_slot_ = std::max(newest_end_slot_, slot + 1);
  ++counters_.packets_on_time;
  record_transit(packet, recv_time_us);
  return Arrival::OnTime;
}

Arrival JitterBuffer::classify_old(std::int64_t slot, std::int64_t recv_time_us) {
  auto& h = history_[static_cast<std::size_t>(slot) % kHistorySlots];
  if (h.slot != slot) {
    // Older than the history horizon: its frames are already final.
    ++counters_.packets_late;
    return Arrival::Late;
  }
  if (h.arrived) {
    ++counters_.packets_duplicate;
    return Arrival::Duplicate;
  }
  h.arrived = true;
  ++counters_.packets_late;
  const std::int64_t timeout_us = std::int64_t{config_.late_timeout_ms} * 1000;
  if (h.outcome == SlotOutcome::Lost && recv_time_us - h.decided_us <= timeout_us) {
    const std::uint32_t fpp = stream_.frames_per_packet;
    counters_.frames_lost -= fpp;
    counters_.frames_late += fpp;
    h.outcome = SlotOutcome::Late;
    emit(slot, SlotOutcome::Late, recv_time_us);
  }
  return Arrival::Late;
}

void JitterBuffer::decide_slot(std::int64_t now_us) {
  const std::uint32_t fpp = stream_.frames_per_packet;
  previous_.swap(current_);
  current_.resize(slot_samples_);
  current_pos_ = 0;

  auto& stored = store_[static_cast<std::size_t>(cursor_slot_) % kStoreSlots];
  auto& h = history_[static_cast<std::size_t>(cursor_slot_) % kHistorySlots];
  h = HistoryEntry{cursor_slot_, SlotOutcome::Pending, now_us, false};
  if (stored.slot == cursor_slot_ && stored.present) {
    current_.swap(stored.payload);
    stored.payload.resize(slot_samples_);
    stored.present = false;
    h.outcome = SlotOutcome::Played;
    h.arrived = true;
    counters_.frames_played += fpp;
  } else {
    concealer_->conceal(previous_, current_);
    h.outcome = SlotOutcome::Lost;
    counters_.frames_lost += fpp;
    counters_.frames_concealed += fpp;
  }
  emit(cursor_slot_, h.outcome, now_us);
  ++cursor_slot_;
  ++cursor_seq_;
}

void JitterBuffer::skip_slot(std::int64_t now_us) {
  const std::uint32_t fpp = stream_.frames_per_packet;
  if (pending_silence_ >= fpp) {
    pending_silence_ -= fpp;
    return;
  }
  auto& stored = store_[static_cast<std::size_t>(cursor_slot_) % kStoreSlots];
  const bool present = stored.slot == cursor_slot_ && stored.present;
  if (present) stored.present = false;
  history_[static_cast<std::size_t>(cursor_slot_) % kHistorySlots] =
      HistoryEntry{cursor_slot_, SlotOutcome::Skipped, now_us, present};
  counters_.frames_skipped += fpp;
  ++counters_.skip_events;
  emit(cursor_slot_, SlotOutcome::Skipped, now_us);
  ++cursor_slot_;
  ++cursor_seq_;
}

void JitterBuffer::insert_silence() {
  pending_silence_ += stream_.frames_per_packet;
  ++counters_.insert_events;
}

void JitterBuffer::pull(std::int64_t now_us, std::span<std::int16_t> out) {
  const std::uint32_t channels = stream_.channels;
  clock_us_ = std::max(clock_us_, now_us);
  if (!started_) {
    std::fill(out.begin(), out.end(), std::int16_t{0});
    return;
  }
  std::size_t pos = 0;
  while (pos < out.size()) {
    if (pending_silence_ > 0) {
      const std::size_t frames =
          std::min<std::size_t>(pending_silence_, (out.size() - pos) / channels);
      std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(pos), frames * channels,
                  std::int16_t{0});
      pos += frames * channels;
      pending_silence_ -= static_cast<std::uint32_t>(frames);
      counters_.frames_inserted += frames;
      continue;
    }
    if (current_pos_ >= current_.size()) decide_slot(now_us);
    const std::size_t n = std::min(current_.size() - current_pos_, out.size() - pos);
    std::copy_n(current_.begin() + static_cast<std::ptrdiff_t>(current_pos_), n,
                out.begin() + static_cast<std::ptrdiff_t>(pos));
    current_pos_ += n;
    pos += n;
  }
  last_pull_us_ = now_us;
  last_pull_frames_ = static_cast<std::uint32_t>(out.size() / channels);
  pulled_ = true;
}

std::vector<std::int16_t> JitterBuffer::pull(std::uint32_t n_frames, std::int64_t now_us) {
  std::vector<std::int16_t> out(std::size_t{n_frames} * stream_.channels);
  pull(now_us, out);
  return out;
}

std::int64_t JitterBuffer::occupancy_frames() const {
  if (!started_) return 0;
  const std::int64_t slots = std::max<std::int64_t>(0, newest_end_slot_ - cursor_slot_);
  const auto partial = static_cast<std::int64_t>((current_.size() - current_pos_) / stream_.channels);
  return slots * stream_.frames_per_packet + partial + pending_silence_;
}

BufferLevel JitterBuffer::level() const {
  return {occupancy_frames(), last_pull_us_, last_pull_frames_, pulled_};
}

std::int64_t JitterBuffer::measured_buffer_delay(std::int64_t now_us) const {
  return buffer_delay_us(level(), now_us, stream_.sample_rate);
}

std::int64_t buffer_delay_us(const BufferLevel& level, std::int64_t now_us, std::uint32_t sample_rate) {
  double frames = static_cast<double>(level.occupancy_frames);
  if (level.pulled) {
    const double elapsed = static_cast<double>(now_us - level.last_pull_us) * sample_rate / 1e6;
    frames += std::clamp(static_cast<double>(level.last_pull_frames) - elapsed, 0.0,
                         static_cast<double>(level.last_pull_frames));
  }
  return std::llround(frames * 1e6 / sample_rate);
}

int JitterBuffer::adapt(std::uint32_t new_target) {
  const std::uint32_t fpp = stream_.frames_per_packet;
  const std::uint32_t goal = std::clamp(quantize_to_packets(new_target, fpp),
                                        config_.min_target_frames, config_.max_target_frames);
  if (goal >= target_ + fpp && target_ + fpp <= config_.max_target_frames) {
    target_ += fpp;
    insert_silence();
    return +1;
  }
  if (goal + fpp <= target_ && target_ >= config_.min_target_frames + fpp) {
    target_ -= fpp;
    skip_slot(clock_us_);
    return -1;
  }
  return 0;
}

void JitterBuffer::tick(std::int64_t now_us) {
  clock_us_ = std::max(clock_us_, now_us);
  if (!started_) return;
  prune_window(now_us);
  const std::uint32_t fpp = stream_.frames_per_packet;
  const std::int64_t interval_us = std::int64_t{config_.adapt_interval_ms} * 1000;

  if (regulation_max_ < 0) regulation_start_us_ = now_us;
  regulation_max_ = std::max(regulation_max_, occupancy_frames());

  bool acted = false;
  if (!estimate_scheduled_) {
    estimate_scheduled_ = true;
    next_estimate_us_ = now_us + interval_us;
  } else if (now_us >= next_estimate_us_) {
    while (next_estimate_us_ <= now_us) next_estimate_us_ += interval_us;
    const std::uint32_t est = estimate();
    // Shrink only once the estimate sits 1.5 packets below the target, so a
    // percentile hovering at a packet boundary does not toggle skip/insert.
    std::uint32_t request = target_;
    if (est > target_ || std::uint64_t{est} + fpp + fpp / 2 <= target_) request = est;
    acted = adapt(request) != 0;
  }
  if (acted) {
    regulation_max_ = -1;
    return;
  }

  const std::int64_t window_us = std::int64_t{config_.regulation_window_ms} * 1000;
  if (now_us - regulation_start_us_ >= window_us) {
    const std::int64_t error = regulation_max_ - static_cast<std::int64_t>(target_);
    if (error >= fpp) {
      skip_slot(now_us);
    } else if (error <= -static_cast<std::int64_t>(fpp)) {
      insert_silence();
    }
    regulation_max_ = -1;
  }
}

}  // namespace mevo
