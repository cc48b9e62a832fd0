#include "mevo/session_config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mevo/errors.hpp"

namespace mevo {
namespace pt = boost::property_tree;
namespace {

template <typename T>
T get_or(const pt::ptree& tree, const std::string& key, T fallback) {
  // get(path, default) would swallow a malformed value and return the default
  const auto child = tree.get_child_optional(pt::ptree::path_type(key, '/'));
  if (!child) return fallback;
  try {
    return child->get_value<T>();
  } catch (const pt::ptree_bad_data&) {
    throw ConfigError("invalid value for '" + key + "': '" + child->data() + "'");
  }
}

bool get_bool(const pt::ptree& tree, const std::string& key, bool fallback) {
  const auto raw = tree.get_optional<std::string>(pt::ptree::path_type(key, '/'));
  if (!raw) return fallback;
  if (*raw == "true" || *raw == "1" || *raw == "yes" || *raw == "on") return true;
  if (*raw == "false" || *raw == "0" || *raw == "no" || *raw == "off") return false;
  throw ConfigError("invalid boolean for '" + key + "': " + *raw);
}

std::uint32_t parse_id(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoul(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return static_cast<std::uint32_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("invalid " + what + " '" + text + "'");
  }
}

}  // namespace

const PeerInfo& SessionConfig::local() const {
  const auto* p = find_peer(local_peer_id);
  if (!p) throw ConfigError("local peer " + std::to_string(local_peer_id) + " not in peer list");
  return *p;
}

const PeerInfo* SessionConfig::find_peer(PeerId id) const {
  const auto it = std::find_if(peers.begin(), peers.end(), [id](const PeerInfo& p) { return p.id == id; });
  return it == peers.end() ? nullptr : &*it;
}

std::vector<PeerInfo> SessionConfig::remote_peers() const {
  std::vector<PeerInfo> out;
  for (const auto& p : peers) {
    if (p.id != local_peer_id) out.push_back(p);
  }
  return out;
}

void SessionConfig::validate() const {
  stream.validate();
  jitter.validate();
  metronome.validate();
  std::set<PeerId> ids;
  std::set<std::uint8_t> streams;
  for (const auto& p : peers) {
    if (!ids.insert(p.id).second) throw ConfigError("duplicate peer id " + std::to_string(p.id));
    if (!streams.insert(p.stream_id).second) {
      throw ConfigError("duplicate stream id " + std::to_string(p.stream_id));
    }
  }
  if (metronome.enabled && streams.count(metronome.stream_id) != 0) {
    throw ConfigError("metronome stream id clashes with a peer stream id");
  }
  (void)local();
  if (metronome.enabled && !find_peer(metronome.owner_peer_id)) {
    throw ConfigError("metronome owner " + std::to_string(metronome.owner_peer_id) + " is not a peer");
  }
  const auto sources = routing_sources(*this);
  for (const auto& r : routes) {
    if (std::find(sources.begin(), sources.end(), r.source) == sources.end()) {
      throw ConfigError("routing entry for unknown source " + to_string(r.source));
    }
    if (!(r.gain >= 0.0F && r.gain <= 1.0F)) throw ConfigError("routing gain must be in [0, 1]");
  }
}

std::vector<SourceId> routing_sources(const SessionConfig& config) {
  std::vector<SourceId> out{SourceId::local(), SourceId::metronome()};
  for (const auto& p : config.peers) {
    if (p.id != config.local_peer_id) out.push_back(SourceId::remote(p.id));
  }
  return out;
}

RoutingMatrix<float> build_routing(const SessionConfig& config) {
  RoutingMatrix<float> routing(routing_sources(config));
  routing.set_metronome_audience_muted(false);
  routing.set_gain(SourceId::metronome(), Bus::Monitor, 1.0F);
  for (const auto& p : config.peers) {
    if (p.id == config.local_peer_id) continue;
    routing.set_gain(SourceId::remote(p.id), Bus::Monitor, 1.0F);
    routing.set_gain(SourceId::remote(p.id), Bus::Audience, 1.0F);
  }
  for (const auto& r : config.routes) routing.set_gain(r.source, r.bus, r.gain);
  routing.set_metronome_audience_muted(config.metronome.audience_muting);
  return routing;
}

SessionConfig session_from_ptree(const pt::ptree& tree) {
  SessionConfig c;
  c.local_peer_id = get_or<std::uint32_t>(tree, "session/local_peer_id", 0);
  c.control_port = get_or<std::uint16_t>(tree, "session/control_port", 0);
  c.telemetry_log = get_or<std::string>(tree, "session/telemetry_log", "");

  c.stream.sample_rate = get_or(tree, "stream/sample_rate", c.stream.sample_rate);
  c.stream.channels = get_or(tree, "stream/channels", c.stream.channels);
  c.stream.frames_per_packet = get_or(tree, "stream/frames_per_packet", c.stream.frames_per_packet);
  const auto format = get_or<std::string>(tree, "stream/wire_format", "s16be");
  if (format != "s16be" && format != "S16BE") throw ConfigError("unsupported wire_format " + format);

  auto& j = c.jitter;
  j.window_seconds = get_or(tree, "jitter/window_seconds", j.window_seconds);
  j.percentile = get_or(tree, "jitter/percentile", j.percentile);
  j.safety_margin_frames = get_or(tree, "jitter/safety_margin_frames", j.safety_margin_frames);
  j.min_target_frames = get_or(tree, "jitter/min_target_frames", j.min_target_frames);
  j.max_target_frames = get_or(tree, "jitter/max_target_frames", j.max_target_frames);
  j.late_timeout_ms = get_or(tree, "jitter/late_timeout_ms", j.late_timeout_ms);
  j.adapt_interval_ms = get_or(tree, "jitter/adapt_interval_ms", j.adapt_interval_ms);
  j.regulation_window_ms = get_or(tree, "jitter/regulation_window_ms", j.regulation_window_ms);

  auto& m = c.metronome;
  m.enabled = get_bool(tree, "metronome/enabled", m.enabled);
  m.bpm = get_or(tree, "metronome/bpm", m.bpm);
  m.beats_per_bar = get_or(tree, "metronome/beats_per_bar", m.beats_per_bar);
  m.owner_peer_id = get_or(tree, "metronome/owner_peer_id", m.owner_peer_id);
  m.audience_muting = get_bool(tree, "metronome/audience_muting", m.audience_muting);
  m.stream_id = static_cast<std::uint8_t>(get_or<unsigned>(tree, "metronome/stream_id", m.stream_id));

  for (const auto& [section, body] : tree) {
    if (section.rfind("peer:", 0) != 0) continue;
    PeerInfo p;
    p.id = parse_id(section.substr(5), "peer section");
    p.host = get_or<std::string>(body, "host", p.host);
    p.port = get_or<std::uint16_t>(body, "port", 0);
    p.stream_id = static_cast<std::uint8_t>(get_or<unsigned>(body, "stream_id", p.id & 0xFF));
    p.site = get_or<std::string>(body, "site", "");
    c.peers.push_back(p);
  }

  if (const auto routing = tree.get_child_optional("routing")) {
    for (const auto& [key, value] : *routing) {
      const auto source = parse_source(key);
      if (!source) throw ConfigError("unknown routing source '" + key + "'");
      std::istringstream in(value.data());
      float monitor = 0.0F;
      float audience = 0.0F;
      if (!(in >> monitor >> audience)) {
        throw ConfigError("routing entry '" + key + "' needs two gains: monitor audience");
      }
      c.routes.push_back({*source, Bus::Monitor, monitor});
      c.routes.push_back({*source, Bus::Audience, audience});
    }
  }
  c.validate();
  return c;
}

SessionConfig parse_session_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("session config: ") + e.what());
  }
  return session_from_ptree(tree);
}

SessionConfig load_session_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open session config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_session_config(buf.str());
}

std::string format_session_config(const SessionConfig& c) {
  std::ostringstream out;
  out << "[session]\nlocal_peer_id = " << c.local_peer_id << "\ncontrol_port = " << c.control_port
      << "\n";
  if (!c.telemetry_log.empty()) out << "telemetry_log = " << c.telemetry_log << "\n";
  out << "\n[stream]\nsample_rate = " << c.stream.sample_rate << "\nchannels = " << c.stream.channels
      << "\nframes_per_packet = " << c.stream.frames_per_packet << "\nwire_format = s16be\n";
  const auto& j = c.jitter;
  out << "\n[jitter]\nwindow_seconds = " << j.window_seconds << "\npercentile = " << j.percentile
      << "\nsafety_margin_frames = " << j.safety_margin_frames
      << "\nmin_target_frames = " << j.min_target_frames
      << "\nmax_target_frames = " << j.max_target_frames << "\nlate_timeout_ms = " << j.late_timeout_ms
      << "\nadapt_interval_ms = " << j.adapt_interval_ms
      << "\nregulation_window_ms = " << j.regulation_window_ms << "\n";
  const auto& m = c.metronome;
  out << "\n[metronome]\nenabled = " << (m.enabled ? "true" : "false") << "\nbpm = " << m.bpm
      << "\nbeats_per_bar = " << m.beats_per_bar << "\nowner_peer_id = " << m.owner_peer_id
      << "\naudience_muting = " << (m.audience_muting ? "true" : "false")
      << "\nstream_id = " << unsigned{m.stream_id} << "\n";
  for (const auto& p : c.peers) {
    out << "\n[peer:" << p.id << "]\nhost = " << p.host << "\nport = " << p.port
        << "\nstream_id = " << unsigned{p.stream_id} << "\n";
    if (!p.site.empty()) out << "site = " << p.site << "\n";
  }
  if (!c.routes.empty()) {
    out << "\n[routing]\n";
    const auto routing = build_routing(c);
    for (const auto& s : routing.sources()) {
      out << to_string(s) << " = " << routing.gain(s, Bus::Monitor) << " "
          << routing.gain(s, Bus::Audience) << "\n";
    }
  }
  return out.str();
}

}  // namespace mevo
