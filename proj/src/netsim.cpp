#include "mevo/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mevo/errors.hpp"

namespace mevo {

std::int64_t cycle_time_ns(std::int64_t k, const StreamConfig& stream, const ClockModel& clock) {
  const double period_ns = 1e9 * stream.frames_per_packet / stream.sample_rate;
  return std::llround(static_cast<double>(k) * period_ns / (1.0 + clock.drift_ppm * 1e-6));
}

std::int64_t local_to_true_ns(double local_s, const ClockModel& clock) {
  return std::llround(local_s * 1e9 / (1.0 + clock.drift_ppm * 1e-6));
}

std::int64_t local_us(std::int64_t true_ns, const ClockModel& clock) {
  return clock.offset_us +
         static_cast<std::int64_t>(std::floor(static_cast<double>(true_ns) * (1.0 + clock.drift_ppm * 1e-6) / 1000.0));
}

bool StreamTruth::conserved() const {
  const bool partition = slots_sent == slots_played + slots_lost + slots_late + slots_skipped + slots_in_flight;
  const bool counters_match = counters.frames_played == frames(slots_played) &&
                              counters.frames_lost == frames(slots_lost) &&
                              counters.frames_late == frames(slots_late) &&
                              counters.frames_skipped == frames(slots_skipped) &&
                              counters.frames_concealed == counters.frames_lost + counters.frames_late;
  return partition && counters_match && slots_overrun == 0 && decision_errors == 0 && resyncs == 0;
}

bool StreamTruth::telemetry_consistent() const {
  const auto& c = tick_counters;
  return final_row.frames_played == c.frames_played && final_row.frames_lost == c.frames_lost &&
         final_row.frames_late == c.frames_late && final_row.frames_concealed == c.frames_concealed &&
         final_row.frames_skipped == c.frames_skipped;
}

const PeerResult& SimResult::peer(PeerId id) const {
  for (const auto& p : peers) {
    if (p.id == id) return p;
  }
  throw ConfigError("no peer " + std::to_string(id) + " in simulation result");
}

const StreamTruth& SimResult::stream(PeerId src, PeerId dst, bool metronome) const {
  for (const auto& s : streams) {
    if (s.src == src && s.dst == dst && s.metronome == metronome) return s;
  }
  throw ConfigError("no stream " + std::to_string(src) + "->" + std::to_string(dst));
}

namespace {

enum class EventKind : std::uint8_t { Deliver = 0, Cycle = 1, Tick = 2 };

struct Event {
  std::int64_t t_ns;
  EventKind kind;
  std::uint64_t order;
  std::uint32_t peer;
  std::uint32_t slot;  // datagram pool slot for deliveries
};

struct Later {
  bool operator()(const Event& a, const Event& b) const {
    if (a.t_ns != b.t_ns) return a.t_ns > b.t_ns;
    if (a.kind != b.kind) return a.kind > b.kind;
    return a.order > b.order;
  }
};

enum class DgramKind : std::uint8_t { Audio, Metronome, Ping, Pong };

const char* kind_name(DgramKind k) {
  switch (k) {
    case DgramKind::Audio: return "audio";
    case DgramKind::Metronome: return "metronome";
    case DgramKind::Ping: return "ping";
    case DgramKind::Pong: return "pong";
  }
  return "?";
}

struct DgramRecord {
  std::uint32_t src;
  std::uint32_t dst;
  std::uint8_t stream_id;
  DgramKind kind;
  std::uint16_t seq;
  std::int64_t sender_index;
  std::int64_t sent_ns;
  std::int64_t delivered_ns;  // -1 when dropped
  bool after_end;
  std::int32_t truth;  // index into truths, -1 for probes
};

// Final outcome of every slot of one receiver stream, by sender cycle index.
struct Tally {
  std::vector<SlotOutcome> outcome;
  std::int64_t offset = INT64_MIN;
  std::uint64_t errors = 0;

  void on_event(const SlotEvent& e) {
    if (offset == INT64_MIN) offset = static_cast<std::int64_t>(e.seq) - e.slot;
    const std::int64_t idx = e.slot + offset;
    if (idx < 0) {
      ++errors;
      return;
    }
    const auto i = static_cast<std::size_t>(idx);
    if (i >= outcome.size()) outcome.resize(std::max(i + 1, outcome.size() * 2), SlotOutcome::Pending);
    auto& o = outcome[i];
    if (e.outcome == SlotOutcome::Late) {
      if (o != SlotOutcome::Lost) ++errors;
      o = SlotOutcome::Late;
    } else {
      if (o != SlotOutcome::Pending) ++errors;
      o = e.outcome;
    }
  }
  SlotOutcome at(std::int64_t idx) const {
    return idx >= 0 && static_cast<std::size_t>(idx) < outcome.size() ? outcome[static_cast<std::size_t>(idx)]
                                                                         : SlotOutcome::Pending;
  }
};

class Simulator;

class SimTransport final : public Transport {
 public:
  SimTransport(Simulator& sim, std::size_t peer) : sim_(sim), peer_(peer) {}
  void send(PeerId to, std::span<const std::uint8_t> datagram) override;

 private:
  Simulator& sim_;
  std::size_t peer_;
};

struct SimPeer {
  const ScenarioPeer* spec = nullptr;
  PeerId id = 0;
  std::unique_ptr<VirtualAudioDevice> device;
  std::unique_ptr<SimTransport> transport;
  std::unique_ptr<PeerEngine> engine;
  std::int64_t end_ns = 0;
  std::int64_t next_cycle = 0;
  std::int64_t ticks = 0;  // last tick index
  std::ostringstream csv;
  std::uint64_t samples = 0;
  std::vector<TelemetryRow> last_rows;
  std::vector<JitterCounters> last_counters;  // per engine stream, at the last sample
};

class Simulator {
 public:
  Simulator(const Scenario& scenario, const SimHooks& hooks) : sc_(scenario), hooks_(hooks) {}

  SimResult run();
  void route(std::size_t src, PeerId to, std::span<const std::uint8_t> bytes);

 private:
  void push(std::int64_t t, EventKind kind, std::uint32_t peer, std::uint32_t slot = 0) {
    heap_.push_back({t, kind, order_++, peer, slot});
    std::push_heap(heap_.begin(), heap_.end(), Later{});
  }
  std::size_t index_of(PeerId id) const {
    for (std::size_t i = 0; i < peers_.size(); ++i) {
      if (peers_[i].id == id) return i;
    }
    throw ConfigError("unknown peer " + std::to_string(id));
  }
  std::int32_t truth_index(PeerId src, PeerId dst, bool metronome) const {
    for (std::size_t i = 0; i < truths_.size(); ++i) {
      const auto& t = truths_[i];
      if (t.src == src && t.dst == dst && t.metronome == metronome) return static_cast<std::int32_t>(i);
    }
    return -1;
  }
  std::uint32_t alloc(std::span<const std::uint8_t> bytes) {
    std::uint32_t slot = 0;
    if (!free_.empty()) {
      slot = free_.back();
      free_.pop_back();
    } else {
      slot = static_cast<std::uint32_t>(pool_.size());
      pool_.emplace_back();
    }
    pool_[slot].assign(bytes.begin(), bytes.end());
    in_flight_.resize(pool_.size());
    return slot;
  }

  void setup();
  void deliver(const Event& e);
  void cycle(std::uint32_t idx);
  void tick(std::uint32_t idx);
  SimResult finish();

  const Scenario& sc_;
  const SimHooks& hooks_;
  std::vector<SimPeer> peers_;
  std::map<std::pair<PeerId, PeerId>, std::unique_ptr<LinkChannel>> links_;
  std::vector<StreamTruth> truths_;
  std::vector<std::unique_ptr<Tally>> tallies_;   // parallel to truths_
  std::vector<std::pair<std::size_t, std::size_t>> stream_pos_;  // (receiver, engine stream index)
  std::vector<DgramRecord> records_;
  std::vector<Event> heap_;
  std::vector<std::vector<std::uint8_t>> pool_;
  std::vector<std::uint32_t> free_;
  struct InFlight {
    std::int32_t truth;
    std::int32_t record;
  };
  std::vector<InFlight> in_flight_;  // per pool slot
  std::uint64_t order_ = 0;
  std::uint64_t events_ = 0;
  std::int64_t now_ns_ = 0;
  std::int64_t end_ns_ = 0;  // audio stops for every peer
};


void SimTransport::send(PeerId to, std::span<const std::uint8_t> datagram) { sim_.route(peer_, to, datagram); }

void Simulator::setup() {
  peers_.resize(sc_.peers.size());
  for (std::size_t i = 0; i < sc_.peers.size(); ++i) {
    const auto& spec = sc_.peers[i];
    auto& p = peers_[i];
    p.spec = &spec;
    p.id = spec.session.local_peer_id;
    p.device = std::make_unique<VirtualAudioDevice>(make_source(spec.source, spec.session.stream), sc_.record_audio);
    p.transport = std::make_unique<SimTransport>(*this, i);
    p.engine = std::make_unique<PeerEngine>(spec.session, *p.device, *p.transport);
    p.end_ns = local_to_true_ns(sc_.duration_s, spec.clock);
    p.csv << telemetry_comment(spec.session.stream.sample_rate, p.id) << '\n' << kTelemetryColumns << '\n';
    end_ns_ = std::max(end_ns_, p.end_ns);
  }
  for (const auto& [key, model] : sc_.links) {
    auto m = model;
    m.seed = sc_.link_seed(key.first, key.second);
    links_[key] = std::make_unique<LinkChannel>(m);
  }
  for (std::size_t r = 0; r < peers_.size(); ++r) {
    auto& engine = *peers_[r].engine;
    const auto& cfg = engine.initial_config();
    for (std::size_t i = 0; i < engine.stream_count(); ++i) {
      const auto key = engine.stream_key(i);
      StreamTruth t;
      t.src = key.peer_id;
      t.dst = peers_[r].id;
      t.stream_id = key.stream_id;
      t.metronome = cfg.metronome.enabled && key.stream_id == cfg.metronome.stream_id;
      t.frames_per_packet = cfg.stream.frames_per_packet;
      truths_.push_back(t);
      auto tally = std::make_unique<Tally>();
      engine.stream(i).buffer().set_observer([raw = tally.get()](const SlotEvent& e) { raw->on_event(e); });
      tallies_.push_back(std::move(tally));
      stream_pos_.emplace_back(r, i);
    }
  }
  for (std::uint32_t i = 0; i < peers_.size(); ++i) {
    push(0, EventKind::Cycle, i);
    push(0, EventKind::Tick, i);
  }
}

void Simulator::route(std::size_t src, PeerId to, std::span<const std::uint8_t> bytes) {
  auto& from = peers_[src];
  // classify from the header without decoding the payload
  DgramKind kind = DgramKind::Audio;
  const std::uint8_t fl = bytes.size() > 4 ? (bytes[4] & 0x0F) : 0;
  if (fl & flags::kControl) {
    kind = bytes.size() > kHeaderSize && bytes[kHeaderSize] == static_cast<std::uint8_t>(ProbeKind::Pong)
               ? DgramKind::Pong
               : DgramKind::Ping;
  } else if (fl & flags::kMetronome) {
    kind = DgramKind::Metronome;
  }
  const bool audio = kind == DgramKind::Audio || kind == DgramKind::Metronome;
  const std::int32_t truth = audio ? truth_index(from.id, to, kind == DgramKind::Metronome) : -1;
  if (truth >= 0) ++truths_[static_cast<std::size_t>(truth)].dgrams_sent;

  const bool scripted_drop = hooks_.drop && hooks_.drop(from.id, to, bytes);
  auto delivered = links_.at({from.id, to})->deliver(now_ns_);
  if (scripted_drop) delivered.reset();

  std::int32_t record = -1;
  if (sc_.full_ground_truth) {
    record = static_cast<std::int32_t>(records_.size());
    const auto seq = static_cast<SeqNo>((bytes[6] << 8) | bytes[7]);
    // the engine counts the cycle after sending, so cycles() is this cycle's index
    const std::int64_t index = audio ? static_cast<std::int64_t>(from.engine->cycles()) : -1;
    records_.push_back({from.id, to, bytes[5], kind, seq, index, now_ns_, delivered ? *delivered : -1, false, truth});
  }
  if (!delivered) {
    if (truth >= 0) ++truths_[static_cast<std::size_t>(truth)].dgrams_dropped;
    return;
  }
  const auto slot = alloc(bytes);
  in_flight_[slot] = {truth, record};
  push(*delivered, EventKind::Deliver, static_cast<std::uint32_t>(index_of(to)), slot);
}

void Simulator::deliver(const Event& e) {
  auto& p = peers_[e.peer];
  const auto meta = in_flight_[e.slot];
  if (e.t_ns > end_ns_) {
    if (meta.truth >= 0) ++truths_[static_cast<std::size_t>(meta.truth)].dgrams_after_end;
    if (meta.record >= 0) records_[static_cast<std::size_t>(meta.record)].after_end = true;
  } else {
    p.engine->on_datagram(pool_[e.slot], local_us(e.t_ns, p.spec->clock));
    if (meta.truth >= 0) ++truths_[static_cast<std::size_t>(meta.truth)].dgrams_delivered;
  }
  free_.push_back(e.slot);
}

void Simulator::cycle(std::uint32_t idx) {
  auto& p = peers_[idx];
  p.engine->run_cycle(local_us(now_ns_, p.spec->clock));
  if (hooks_.after_cycle) hooks_.after_cycle(idx, now_ns_, *p.engine);
  const auto next = cycle_time_ns(++p.next_cycle, p.spec->session.stream, p.spec->clock);
  if (next <= end_ns_) push(next, EventKind::Cycle, idx);
}

void Simulator::tick(std::uint32_t idx) {
  auto& p = peers_[idx];
  const auto now = local_us(now_ns_, p.spec->clock);
  const auto j = p.ticks;
  if (j > 0) {
    const auto sample = p.engine->sample(now, static_cast<double>(j));
    for (const auto& row : sample.rows) p.csv << format_row(row) << '\n';
    p.last_rows = sample.rows;
    p.last_counters.clear();
    for (std::size_t i = 0; i < p.engine->stream_count(); ++i) {
      p.last_counters.push_back(p.engine->stream(i).buffer().counters());
    }
    ++p.samples;
  }
  const auto next = local_to_true_ns(static_cast<double>(j + 1), p.spec->clock);
  if (next <= p.end_ns) {
    p.engine->send_probes(now);
    p.ticks = j + 1;
    push(next, EventKind::Tick, idx);
  }
}

SimResult Simulator::run() {
  setup();
  while (!heap_.empty()) {
    std::pop_heap(heap_.begin(), heap_.end(), Later{});
    const Event e = heap_.back();
    heap_.pop_back();
    now_ns_ = e.t_ns;
    ++events_;
    switch (e.kind) {
      case EventKind::Deliver: deliver(e); break;
      case EventKind::Cycle: cycle(e.peer); break;
      case EventKind::Tick: tick(e.peer); break;
    }
  }
  for (auto& p : peers_) p.engine->stop();
  return finish();
}

SimResult Simulator::finish() {
  SimResult out;
  out.scenario = sc_.name;
  out.events = events_;
  for (auto& p : peers_) {
    PeerResult r;
    r.id = p.id;
    r.telemetry_csv = p.csv.str();
    r.cycles = p.engine->cycles();
    r.samples = p.samples;
    if (sc_.record_audio) {
      r.captured = p.device->captured();
      r.monitor = p.device->recorded(Bus::Monitor);
      r.audience = p.device->recorded(Bus::Audience);
    }
    out.peers.push_back(std::move(r));
  }

  for (std::size_t k = 0; k < truths_.size(); ++k) {
    auto& t = truths_[k];
    const auto& tally = *tallies_[k];
    auto& channel = peers_[stream_pos_[k].first].engine->stream(stream_pos_[k].second);
    const auto& buffer = channel.buffer();
    t.counters = buffer.counters();
    t.resyncs = t.counters.resyncs;
    t.decision_errors = tally.errors;
    t.slots_sent = t.dgrams_sent;
    for (std::uint64_t i = 0; i < t.slots_sent; ++i) {
      switch (tally.at(static_cast<std::int64_t>(i))) {
        case SlotOutcome::Pending: ++t.slots_in_flight; break;
        case SlotOutcome::Played: ++t.slots_played; break;
        case SlotOutcome::Lost: ++t.slots_lost; break;
        case SlotOutcome::Late: ++t.slots_late; break;
        case SlotOutcome::Skipped: ++t.slots_skipped; break;
      }
    }
    for (std::size_t i = t.slots_sent; i < tally.outcome.size(); ++i) {
      if (tally.outcome[i] != SlotOutcome::Pending) ++t.slots_overrun;
    }
    // undecided slots must be exactly those at or past the playout cursor
    if (tally.offset != INT64_MIN) {
      const auto cursor = buffer.next_playout_slot() + tally.offset;
      const auto expect = std::max<std::int64_t>(0, static_cast<std::int64_t>(t.slots_sent) - cursor);
      if (static_cast<std::uint64_t>(expect) != t.slots_in_flight) ++t.decision_errors;
    }
    const auto& receiver = peers_[stream_pos_[k].first];
    for (const auto& row : receiver.last_rows) {
      if (row.peer_id == t.src && row.stream_id == t.stream_id) t.final_row = row;
    }
    if (stream_pos_[k].second < receiver.last_counters.size()) {
      t.tick_counters = receiver.last_counters[stream_pos_[k].second];
    }
  }
  out.streams = truths_;

  std::ostringstream s;
  s << "src_peer,dst_peer,stream_id,kind,dgrams_sent,dgrams_dropped,dgrams_delivered,dgrams_after_end,"
       "frames_sent,frames_played,frames_lost,frames_late,frames_skipped,frames_in_flight,overrun_slots,"
       "decision_errors,resyncs,conserved\n";
  for (const auto& t : truths_) {
    s << t.src << ',' << t.dst << ',' << t.stream_id << ',' << (t.metronome ? "metronome" : "audio") << ','
      << t.dgrams_sent << ',' << t.dgrams_dropped << ',' << t.dgrams_delivered << ',' << t.dgrams_after_end << ','
      << t.frames(t.slots_sent) << ',' << t.frames(t.slots_played) << ',' << t.frames(t.slots_lost) << ','
      << t.frames(t.slots_late) << ',' << t.frames(t.slots_skipped) << ',' << t.frames(t.slots_in_flight) << ','
      << t.slots_overrun << ',' << t.decision_errors << ',' << t.resyncs << ',' << (t.conserved() ? 1 : 0)
      << '\n';
  }
  out.streams_csv = s.str();

  if (sc_.full_ground_truth) {
    std::ostringstream g;
    g << "src_peer,dst_peer,stream_id,kind,seq,sender_index,sent_ns,dropped,delivered_ns,outcome\n";
    for (const auto& r : records_) {
      g << r.src << ',' << r.dst << ',' << unsigned{r.stream_id} << ',' << kind_name(r.kind) << ',' << r.seq << ',';
      if (r.sender_index >= 0) g << r.sender_index;
      g << ',' << r.sent_ns << ',' << (r.delivered_ns < 0 ? 1 : 0) << ',';
      if (r.delivered_ns >= 0) g << r.delivered_ns;
      g << ',';
      if (r.truth >= 0) {
        const auto& tally = *tallies_[static_cast<std::size_t>(r.truth)];
        const auto o = tally.at(r.sender_index);
        g << (o == SlotOutcome::Pending ? "in_flight" : to_string(o));
      }
      g << '\n';
    }
    out.ground_truth_csv = g.str();
  }
  return out;
}

}  // namespace

SimResult run(const Scenario& scenario, const SimHooks& hooks) {
  scenario.validate();
  Simulator sim(scenario, hooks);
  return sim.run();
}

std::vector<std::filesystem::path> write_outputs(const SimResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const auto put = [&](const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw ConfigError("cannot write " + path.string());
    written.push_back(path);
  };
  for (const auto& p : result.peers) put(dir / ("telemetry_peer" + std::to_string(p.id) + ".csv"), p.telemetry_csv);
  if (!result.ground_truth_csv.empty()) put(dir / "ground_truth.csv", result.ground_truth_csv);
  put(dir / "ground_truth_streams.csv", result.streams_csv);
  return written;
}

}  // namespace mevo
