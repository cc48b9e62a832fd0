#include "mevo/peer_engine.hpp"

#include <algorithm>

#include "mevo/metronome.hpp"

namespace mevo {

struct PeerEngine::PeerLink {
  PeerInfo info;
  std::atomic<std::uint64_t> audio_sent{0};
  std::atomic<std::uint64_t> metronome_sent{0};
  std::atomic<std::uint64_t> probes_sent{0};
  std::atomic<std::uint64_t> pongs_sent{0};
  std::atomic<std::uint64_t> dgrams_sent{0};
  std::atomic<std::uint64_t> dgrams_recv{0};

  // probe state: written by the telemetry context (pings) and the ingest
  // context (pongs), never touched by the audio context
  std::mutex probe_mu;
  struct Outstanding {
    SeqNo seq;
    std::int64_t send_us;
  };
  std::deque<Outstanding> outstanding;
  std::int64_t rtt_us = -1;
  std::int64_t rtt_at_us = INT64_MIN;
};

struct PeerEngine::Stream {
  Stream(PeerId peer_, std::uint8_t stream_id_, bool metronome_, Eigen::Index row_,
         const StreamConfig& stream, const JitterBufferConfig& jitter)
      : peer(peer_), stream_id(stream_id_), metronome(metronome_), row(row_), channel(stream, jitter) {}

  PeerId peer;
  std::uint8_t stream_id;
  bool metronome;
  Eigen::Index row;
  StreamChannel channel;
};

PeerEngine::PeerEngine(SessionConfig config, AudioDevice& device, Transport& transport)
    : config_(std::move(config)),
      device_(device),
      transport_(transport),
      local_((config_.validate(), config_.local())) {
  routing_ = build_routing(config_);
  metronome_ = config_.metronome;
  jitter_ = config_.jitter;
  metronome_stream_ = config_.metronome.enabled;
  metronome_owner_ = metronome_stream_ && config_.metronome.owner_peer_id == local_.id;

  for (const auto& p : config_.remote_peers()) {
    auto link = std::make_unique<PeerLink>();
    link->info = p;
    links_.push_back(std::move(link));
    streams_.push_back(std::make_unique<Stream>(p.id, p.stream_id, false, *routing_.index_of(SourceId::remote(p.id)),
                                                config_.stream, jitter_));
  }
  if (metronome_stream_ && !metronome_owner_) {
    streams_.push_back(std::make_unique<Stream>(config_.metronome.owner_peer_id, config_.metronome.stream_id, true,
                                                *routing_.index_of(SourceId::metronome()), config_.stream,
                                                jitter_));
  }

  const auto samples = config_.stream.samples_per_packet();
  capture_.assign(samples, 0);
  pulled_.assign(samples, 0);
  click_.assign(samples, 0.0F);
  click_samples_.assign(samples, 0);
  wire_.assign(config_.stream.datagram_bytes(), 0);
  inputs_ = SourceBlock<float>::Zero(static_cast<Eigen::Index>(samples), routing_.rows());
  outgoing_.payload.assign(samples, 0);
  for (auto& s : streams_) s->channel.publish();

  control_.config = config_;
  control_.routing = routing_;
  control_.metronome_stream = metronome_stream_;
}

PeerEngine::~PeerEngine() = default;

PeerEngine::PeerLink* PeerEngine::link_for(PeerId id) const {
  for (const auto& l : links_) {
    if (l->info.id == id) return l.get();
  }
  return nullptr;
}

PeerEngine::PeerLink* PeerEngine::link_by_stream(std::uint8_t stream_id) const {
  for (const auto& l : links_) {
    if (l->info.stream_id == stream_id) return l.get();
  }
  return nullptr;
}

std::optional<std::size_t> PeerEngine::stream_index(std::uint8_t stream_id) const {
  for (std::size_t i = 0; i < streams_.size(); ++i) {
    if (streams_[i]->stream_id == stream_id) return i;
  }
  return std::nullopt;
}

StreamKey PeerEngine::stream_key(std::size_t i) const {
  return {streams_.at(i)->peer, streams_.at(i)->stream_id};
}

StreamChannel& PeerEngine::stream(std::size_t i) { return streams_.at(i)->channel; }

PeerCounters PeerEngine::peer_counters(PeerId peer) const {
  for (const auto& l : links_) {
    if (l->info.id == peer) {
      return {l->audio_sent.load(), l->metronome_sent.load(), l->probes_sent.load(), l->pongs_sent.load(),
              l->dgrams_recv.load()};
    }
  }
  return {};
}

void PeerEngine::send_to(PeerLink& link, std::span<const std::uint8_t> bytes) {
  transport_.send(link.info.id, bytes);
  link.dgrams_sent.fetch_add(1, std::memory_order_relaxed);
}

void PeerEngine::on_datagram(std::span<const std::uint8_t> bytes, std::int64_t now_us) {
  auto decoded = decode_datagram(bytes, config_.stream);
  if (!decoded) {
    malformed_.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  if (auto* probe = std::get_if<ProbePacket>(&*decoded.value)) {
    handle_probe(*probe, now_us);
    return;
  }
  auto& audio = std::get<AudioPacket>(*decoded.value);
  const auto idx = stream_index(audio.header.stream_id);
  if (!idx) {
    malformed_.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  auto& s = *streams_[*idx];
  if (auto* link = link_for(s.peer)) link->dgrams_recv.fetch_add(1, std::memory_order_relaxed);
  s.channel.enqueue(std::move(audio), now_us);
}

void PeerEngine::handle_probe(const ProbePacket& probe, std::int64_t now_us) {
  PeerLink* link = link_by_stream(probe.header.stream_id);
  if (!link) {
    malformed_.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  link->dgrams_recv.fetch_add(1, std::memory_order_relaxed);
  if (probe.kind == ProbeKind::Ping) {
    ProbePacket pong = probe;
    pong.kind = ProbeKind::Pong;
    pong.header.stream_id = local_.stream_id;
    pong.responder_recv_us = static_cast<std::uint32_t>(now_us);
    send_to(*link, encode(pong));
    link->pongs_sent.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  std::lock_guard lock(link->probe_mu);
  auto& q = link->outstanding;
  const auto it = std::find_if(q.begin(), q.end(), [&](const PeerLink::Outstanding& o) {
    return o.seq == probe.header.seq && static_cast<std::uint32_t>(o.send_us) == probe.header.send_time_us;
  });
  if (it == q.end()) return;  // unknown or already timed out
  const std::int64_t rtt = now_us - it->send_us;
  q.erase(it);
  if (rtt < 0 || rtt > kProbeTimeoutUs) return;
  link->rtt_us = rtt;
  link->rtt_at_us = now_us;
}

void PeerEngine::send_probes(std::int64_t now_us) {
  for (auto& link : links_) {
    ProbePacket ping;
    ping.header.stream_id = local_.stream_id;
    ping.header.flags = flags::kControl;
    ping.header.seq = probe_seq_;
    ping.header.send_time_us = static_cast<std::uint32_t>(now_us);
    ping.kind = ProbeKind::Ping;
    {
      std::lock_guard lock(link->probe_mu);
      auto& q = link->outstanding;
      while (!q.empty() && now_us - q.front().send_us > kProbeTimeoutUs) q.pop_front();
      q.push_back({probe_seq_, now_us});
    }
    send_to(*link, encode(ping));
    link->probes_sent.fetch_add(1, std::memory_order_relaxed);
  }
  ++probe_seq_;
}

TelemetrySample PeerEngine::sample(std::int64_t now_us, double t_s) {
  TelemetrySample out;
  out.index = ++sample_index_;
  out.t_s = t_s;
  const double rate = config_.stream.sample_rate;
  const auto malformed = malformed_.load(std::memory_order_relaxed);
  for (const auto& s : streams_) {
    const auto snap = s->channel.snapshot();
    TelemetryRow row;
    row.t_s = t_s;
    row.peer_id = s->peer;
    row.stream_id = s->stream_id;
    if (auto* link = link_for(s->peer)) {
      {
        std::lock_guard lock(link->probe_mu);
        const auto at = link->rtt_at_us;
        if (at > last_sample_us_ && at <= now_us) row.rtt_ms = static_cast<double>(link->rtt_us) / 1000.0;
      }
      row.dgrams_sent = link->dgrams_sent.load(std::memory_order_relaxed);
      row.dgrams_recv = link->dgrams_recv.load(std::memory_order_relaxed);
    }
    row.buffer_target_ms = snap.target_frames * 1000.0 / rate;
    row.buffer_occupancy_ms =
        snap.started ? static_cast<double>(buffer_delay_us(snap.level, now_us, config_.stream.sample_rate)) / 1000.0
                     : 0.0;
    row.frames_played = snap.counters.frames_played;
    row.frames_lost = snap.counters.frames_lost;
    row.frames_late = snap.counters.frames_late;
    row.frames_concealed = snap.counters.frames_concealed;
    row.frames_skipped = snap.counters.frames_skipped;
    row.dgrams_malformed = malformed;
    out.rows.push_back(row);
  }
  last_sample_us_ = now_us;
  return out;
}

void PeerEngine::run_cycle(std::int64_t now_us) {
  if (mailbox_pending_.load(std::memory_order_acquire)) {
    std::unique_lock lock(mailbox_mu_, std::try_to_lock);
    if (lock.owns_lock()) {
      std::vector<Mutation> pending;
      pending.swap(mailbox_);
      mailbox_pending_.store(false, std::memory_order_release);
      lock.unlock();
      for (const auto& m : pending) apply(m);
    }
  }

  const auto& sc = config_.stream;
  const Eigen::Index metronome_row = *routing_.index_of(SourceId::metronome());
  inputs_.col(metronome_row).setZero();

  for (auto& s : streams_) {
    auto& buf = s->channel.buffer();
    s->channel.drain();
    buf.tick(now_us);
    buf.pull(now_us, pulled_);
    if (s->metronome && !metronome_.enabled) {
      inputs_.col(s->row).setZero();
    } else {
      samples_to_column<float>(pulled_, inputs_.col(s->row));
    }
  }

  device_.capture(frame_index_, capture_);
  outgoing_.header = PacketHeader{kProtocolVersion, local_.stream_id, 0, seq_,
                                  static_cast<std::uint32_t>(frame_index_), static_cast<std::uint32_t>(now_us)};
  std::copy(capture_.begin(), capture_.end(), outgoing_.payload.begin());
  encode_into(outgoing_, sc, wire_);
  for (auto& link : links_) {
    send_to(*link, wire_);
    link->audio_sent.fetch_add(1, std::memory_order_relaxed);
  }
  samples_to_column<float>(capture_, inputs_.col(*routing_.index_of(SourceId::local())));

  if (metronome_owner_) {
    if (metronome_.enabled) {
      metronome_block(metronome_.bpm, metronome_.beats_per_bar, frame_index_, sc, click_);
      std::transform(click_.begin(), click_.end(), click_samples_.begin(), unit_to_sample<float>);
    } else {
      std::fill(click_samples_.begin(), click_samples_.end(), std::int16_t{0});
    }
    outgoing_.header.stream_id = metronome_.stream_id;
    outgoing_.header.flags = flags::kMetronome;
    std::copy(click_samples_.begin(), click_samples_.end(), outgoing_.payload.begin());
    encode_into(outgoing_, sc, wire_);
    for (auto& link : links_) {
      send_to(*link, wire_);
      link->metronome_sent.fetch_add(1, std::memory_order_relaxed);
    }
    samples_to_column<float>(click_samples_, inputs_.col(metronome_row));
  }

  device_.render(frame_index_, mix(inputs_, routing_));

  for (auto& s : streams_) s->channel.publish();
  frame_index_ += sc.frames_per_packet;
  ++seq_;
  cycles_.fetch_add(1, std::memory_order_relaxed);
}

void PeerEngine::apply_pending() {
  std::vector<Mutation> pending;
  {
    std::lock_guard lock(mailbox_mu_);
    pending.swap(mailbox_);
    mailbox_pending_.store(false, std::memory_order_release);
  }
  for (const auto& m : pending) apply(m);
}

void PeerEngine::apply(const Mutation& m) {
  if (const auto* b = std::get_if<BufferUpdate>(&m)) {
    if (b->percentile) jitter_.percentile = *b->percentile;
    if (b->max_target_frames) jitter_.max_target_frames = *b->max_target_frames;
    if (b->min_target_frames) jitter_.min_target_frames = *b->min_target_frames;
    if (b->safety_margin_frames) jitter_.safety_margin_frames = *b->safety_margin_frames;
    if (b->window_seconds) jitter_.window_seconds = *b->window_seconds;
    for (auto& s : streams_) s->channel.buffer().set_config(jitter_);
  } else if (const auto* mu = std::get_if<MetronomeUpdate>(&m)) {
    if (mu->enabled) metronome_.enabled = *mu->enabled;
    if (mu->bpm) metronome_.bpm = *mu->bpm;
    if (mu->beats_per_bar) metronome_.beats_per_bar = *mu->beats_per_bar;
  } else if (const auto* r = std::get_if<RoutingUpdate>(&m)) {
    routing_.set_gain(r->source, r->bus, r->gain);
  }
}

void PeerEngine::submit(const Mutation& m) {
  std::lock_guard lock(control_mu_);
  if (stopped()) throw MutationError("session_stopped", "session is stopped");
  EngineState next = control_;
  if (const auto* b = std::get_if<BufferUpdate>(&m)) {
    auto& j = next.config.jitter;
    if (b->percentile) j.percentile = *b->percentile;
    if (b->max_target_frames) j.max_target_frames = *b->max_target_frames;
    if (b->min_target_frames) j.min_target_frames = *b->min_target_frames;
    if (b->safety_margin_frames) j.safety_margin_frames = *b->safety_margin_frames;
    if (b->window_seconds) j.window_seconds = *b->window_seconds;
    try {
      j.validate();
    } catch (const ConfigError& e) {
      throw MutationError("out_of_range", e.what());
    }
  } else if (const auto* mu = std::get_if<MetronomeUpdate>(&m)) {
    if (!next.metronome_stream) {
      throw MutationError("metronome_unavailable", "session was started without a metronome stream");
    }
    auto& ms = next.config.metronome;
    if (mu->enabled) ms.enabled = *mu->enabled;
    if (mu->bpm) ms.bpm = *mu->bpm;
    if (mu->beats_per_bar) ms.beats_per_bar = *mu->beats_per_bar;
    // enabled=false must stay valid, so check the tempo fields directly
    if (ms.bpm < kMinBpm || ms.bpm > kMaxBpm) throw MutationError("out_of_range", "bpm must be in [20, 300]");
    if (ms.beats_per_bar < 1 || ms.beats_per_bar > 32) {
      throw MutationError("out_of_range", "beats_per_bar must be in [1, 32]");
    }
  } else if (const auto* r = std::get_if<RoutingUpdate>(&m)) {
    if (!next.routing.index_of(r->source)) {
      throw MutationError("unknown_source", "unknown routing source " + to_string(r->source));
    }
    if (!(r->gain >= 0.0F && r->gain <= 1.0F)) throw MutationError("out_of_range", "gain must be in [0, 1]");
    if (r->source.kind == SourceId::Kind::Metronome && r->bus == Bus::Audience && r->gain != 0.0F &&
        next.routing.metronome_audience_muted()) {
      throw MutationError("metronome_muted", "metronome is muted on the audience bus");
    }
    next.routing.set_gain(r->source, r->bus, r->gain);
  }
  control_ = std::move(next);
  {
    std::lock_guard mb(mailbox_mu_);
    mailbox_.push_back(m);
    mailbox_pending_.store(true, std::memory_order_release);
  }
}

EngineState PeerEngine::state() const {
  std::lock_guard lock(control_mu_);
  EngineState s = control_;
  s.stopped = stopped();
  return s;
}

}  // namespace mevo
