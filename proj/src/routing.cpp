#include "mevo/routing.hpp"

#include <charconv>

namespace mevo {

std::string_view to_string(Bus bus) {
  return bus == Bus::Monitor ? "monitor" : "audience";
}

std::optional<Bus> parse_bus(std::string_view name) {
  if (name == "monitor" || name == "musician_monitor") return Bus::Monitor;
  if (name == "audience") return Bus::Audience;
  return std::nullopt;
}

std::string to_string(const SourceId& source) {
  switch (source.kind) {
    case SourceId::Kind::Local: return "local";
    case SourceId::Kind::Metronome: return "metronome";
    case SourceId::Kind::Remote: return "peer:" + std::to_string(source.peer);
  }
  return "unknown";
}

std::optional<SourceId> parse_source(std::string_view text) {
  if (text == "local") return SourceId::local();
  if (text == "metronome") return SourceId::metronome();
  constexpr std::string_view prefix = "peer:";
  if (text.substr(0, prefix.size()) != prefix) return std::nullopt;
  const auto digits = text.substr(prefix.size());
  std::uint32_t id = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), id);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || digits.empty()) {
    return std::nullopt;
  }
  return SourceId::remote(id);
}

}  // namespace mevo
