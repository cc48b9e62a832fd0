#include "mevo/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mevo/errors.hpp"

namespace mevo {
namespace pt = boost::property_tree;
namespace {

const char* const kJitterKeys[] = {"window_seconds",    "percentile",      "safety_margin_frames",
                                   "min_target_frames", "max_target_frames", "late_timeout_ms",
                                   "adapt_interval_ms", "regulation_window_ms"};

template <typename T>
T get(const pt::ptree& tree, const std::string& key, T fallback) {
  const auto child = tree.get_child_optional(pt::ptree::path_type(key, '/'));
  if (!child) return fallback;
  try {
    return child->get_value<T>();
  } catch (const pt::ptree_bad_data&) {
    throw ConfigError("scenario: invalid value for '" + key + "': '" + child->data() + "'");
  }
}

bool get_bool(const pt::ptree& tree, const std::string& key, bool fallback) {
  const auto raw = tree.get_optional<std::string>(pt::ptree::path_type(key, '/'));
  if (!raw) return fallback;
  if (*raw == "true" || *raw == "1" || *raw == "yes") return true;
  if (*raw == "false" || *raw == "0" || *raw == "no") return false;
  throw ConfigError("scenario: invalid boolean for '" + key + "': " + *raw);
}

std::uint32_t parse_uint(const std::string& text, const std::string& context) {
  try {
    std::size_t used = 0;
    const auto v = std::stoul(text, &used);
    if (used == text.size()) return static_cast<std::uint32_t>(v);
  } catch (const std::exception&) {
  }
  throw ConfigError("scenario: bad number '" + text + "' in " + context);
}

LinkModel link_from(const pt::ptree& body, LinkModel l) {
  l.base_owd_ms = get(body, "base_owd_ms", l.base_owd_ms);
  if (const auto j = body.get_optional<std::string>("jitter")) l.jitter = parse_jitter(*j);
  l.loss_prob = get(body, "loss_prob", l.loss_prob);
  l.reorder = get_bool(body, "reorder", l.reorder);
  l.seed = get<std::uint64_t>(body, "seed", l.seed);
  auto& c = l.congestion;
  c.episodes_per_hour = get(body, "congestion_episodes_per_hour", c.episodes_per_hour);
  c.peak_min_ms = get(body, "congestion_peak_min_ms", c.peak_min_ms);
  c.peak_max_ms = get(body, "congestion_peak_max_ms", c.peak_max_ms);
  c.ramp_ms = get(body, "congestion_ramp_ms", c.ramp_ms);
  c.hold_ms = get(body, "congestion_hold_ms", c.hold_ms);
  l.validate();
  return l;
}

}  // namespace

void ClockModel::validate() const {
  if (!(std::abs(drift_ppm) <= 1000)) throw ConfigError("drift_ppm must be within [-1000, 1000]");
}

void Scenario::validate() const {
  if (!(duration_s >= 1)) throw ConfigError("scenario duration_s must be >= 1");
  if (peers.size() < 2) throw ConfigError("scenario needs at least two peers");
  std::set<PeerId> ids;
  for (const auto& p : peers) {
    p.clock.validate();
    p.session.validate();
    ids.insert(p.session.local_peer_id);
  }
  if (ids.size() != peers.size()) throw ConfigError("scenario: duplicate peer");
  const auto& first = peers.front().session;
  for (const auto& p : peers) {
    if (!(p.session.stream == first.stream)) throw ConfigError("scenario: peers disagree on [stream]");
    if (p.session.peers.size() != first.peers.size()) throw ConfigError("scenario: peers disagree on the peer list");
    if (p.session.metronome.enabled != first.metronome.enabled ||
        p.session.metronome.owner_peer_id != first.metronome.owner_peer_id) {
      throw ConfigError("scenario: peers disagree on the metronome owner");
    }
    for (const auto& q : peers) {
      if (&p != &q) (void)link(p.session.local_peer_id, q.session.local_peer_id);
    }
  }
}

const LinkModel& Scenario::link(PeerId src, PeerId dst) const {
  const auto it = links.find({src, dst});
  if (it == links.end()) {
    throw ConfigError("scenario: no link " + std::to_string(src) + "->" + std::to_string(dst));
  }
  return it->second;
}

std::uint64_t Scenario::link_seed(PeerId src, PeerId dst) const {
  const auto s = link(src, dst).seed;
  return s != 0 ? s : derive_seed(seed, "link", src, dst);
}

Scenario parse_scenario(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  Scenario s;
  s.name = get<std::string>(tree, "scenario/name", s.name);
  s.duration_s = get(tree, "scenario/duration_s", s.duration_s);
  s.seed = get<std::uint64_t>(tree, "scenario/seed", s.seed);
  const auto gt = get<std::string>(tree, "scenario/ground_truth", "full");
  if (gt != "full" && gt != "summary") throw ConfigError("scenario: ground_truth must be full or summary");
  s.full_ground_truth = gt == "full";
  s.record_audio = get_bool(tree, "scenario/record_audio", false);

  // shared session sections plus one [peer:N] section per participant
  pt::ptree shared;
  for (const char* section : {"stream", "jitter", "metronome"}) {
    if (const auto child = tree.get_child_optional(section)) shared.put_child(section, *child);
  }
  std::vector<std::pair<PeerId, const pt::ptree*>> peer_sections;
  for (const auto& [name, body] : tree) {
    if (name.rfind("peer:", 0) == 0) {
      peer_sections.emplace_back(parse_uint(name.substr(5), "[" + name + "]"), &body);
      pt::ptree info;
      info.put("stream_id", body.get<std::string>("stream_id", name.substr(5)));
      info.put("site", body.get<std::string>("site", ""));
      info.put("host", "sim");
      shared.put_child(pt::ptree::path_type(name, '/'), info);
    }
  }

  for (const auto& [id, body] : peer_sections) {
    pt::ptree session = shared;
    session.put(pt::ptree::path_type("session/local_peer_id", '/'), id);
    for (const char* key : kJitterKeys) {
      if (const auto v = body->get_optional<std::string>(key)) {
        session.put(pt::ptree::path_type(std::string("jitter/") + key, '/'), *v);
      }
    }
    const std::string routing_section = "routing:" + std::to_string(id);
    if (const auto r = tree.get_child_optional(pt::ptree::path_type(routing_section, '/'))) {
      session.put_child("routing", *r);
    }
    ScenarioPeer peer;
    peer.session = session_from_ptree(session);
    peer.clock.drift_ppm = get(*body, "drift_ppm", 0.0);
    peer.clock.offset_us = get<std::int64_t>(*body, "offset_us", 0);
    peer.source = get<std::string>(*body, "source", "sine");
    s.peers.push_back(std::move(peer));
  }

  LinkModel fallback;
  if (const auto d = tree.get_child_optional(pt::ptree::path_type("link:default", '/'))) {
    fallback = link_from(*d, fallback);
  }
  for (const auto& a : s.peers) {
    for (const auto& b : s.peers) {
      if (&a != &b) s.links[{a.session.local_peer_id, b.session.local_peer_id}] = fallback;
    }
  }
  for (const auto& [name, body] : tree) {
    if (name.rfind("link:", 0) != 0 || name == "link:default") continue;
    const auto spec = name.substr(5);
    const auto arrow = spec.find("->");
    if (arrow == std::string::npos) throw ConfigError("scenario: link section must be [link:A->B]: " + name);
    const PeerId src = parse_uint(spec.substr(0, arrow), name);
    const PeerId dst = parse_uint(spec.substr(arrow + 2), name);
    const auto it = s.links.find({src, dst});
    if (it == s.links.end()) throw ConfigError("scenario: link between unknown peers: " + name);
    it->second = link_from(body, it->second);
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

Scenario replication_scenario() { return parse_scenario(std::string(kReplicationScenario)); }

Scenario mesh_scenario(std::size_t n, const LinkModel& link, double duration_s, std::uint64_t seed,
                       const SessionConfig& base) {
  Scenario s;
  s.name = "mesh";
  s.duration_s = duration_s;
  s.seed = seed;
  std::vector<PeerInfo> infos;
  for (std::size_t i = 1; i <= n; ++i) {
    PeerInfo p;
    p.id = static_cast<PeerId>(i);
    p.host = "sim";
    p.stream_id = static_cast<std::uint8_t>(i);
    infos.push_back(p);
  }
  for (const auto& p : infos) {
    ScenarioPeer sp;
    sp.session = base;
    sp.session.peers = infos;
    sp.session.local_peer_id = p.id;
    sp.source = "noise:" + std::to_string(p.id);
    s.peers.push_back(sp);
  }
  for (const auto& a : infos) {
    for (const auto& b : infos) {
      if (a.id != b.id) s.links[{a.id, b.id}] = link;
    }
  }
  s.validate();
  return s;
}

}  // namespace mevo
