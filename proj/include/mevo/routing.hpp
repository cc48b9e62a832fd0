#pragma once

// Listening topology: a dense gain matrix from sources (local monitor,
// metronome, one row per remote peer) to the two output buses, and the
// saturating mix that applies it.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mevo/errors.hpp"

namespace mevo {

enum class Bus : int { Monitor = 0, Audience = 1 };
inline constexpr int kBusCount = 2;

std::string_view to_string(Bus bus);
std::optional<Bus> parse_bus(std::string_view name);

struct SourceId {
  enum class Kind : std::uint8_t { Local, Metronome, Remote };
  Kind kind = Kind::Local;
  std::uint32_t peer = 0;  // only meaningful for Remote

  static SourceId local() { return {Kind::Local, 0}; }
  static SourceId metronome() { return {Kind::Metronome, 0}; }
  static SourceId remote(std::uint32_t peer) { return {Kind::Remote, peer}; }

  bool operator==(const SourceId&) const = default;
};

/// "local", "metronome" or "peer:<id>".
std::string to_string(const SourceId& source);
std::optional<SourceId> parse_source(std::string_view text);

template <typename Scalar>
using SourceBlock = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;  // samples x sources
template <typename Scalar>
using BusBlock = Eigen::Matrix<Scalar, Eigen::Dynamic, kBusCount>;  // samples x buses

template <typename Scalar>
class RoutingMatrix {
 public:
  using Gains = Eigen::Matrix<Scalar, Eigen::Dynamic, kBusCount>;

  RoutingMatrix() = default;
  explicit RoutingMatrix(std::vector<SourceId> sources)
      : sources_(std::move(sources)), gains_(Gains::Zero(static_cast<Eigen::Index>(sources_.size()), kBusCount)) {}

  Eigen::Index rows() const { return gains_.rows(); }
  const std::vector<SourceId>& sources() const { return sources_; }
  const Gains& gains() const { return gains_; }

  std::optional<Eigen::Index> index_of(const SourceId& source) const {
    const auto it = std::find(sources_.begin(), sources_.end(), source);
    if (it == sources_.end()) return std::nullopt;
    return static_cast<Eigen::Index>(it - sources_.begin());
  }

  Scalar gain(const SourceId& source, Bus bus) const {
    const auto row = index_of(source);
    return row ? gains_(*row, static_cast<int>(bus)) : Scalar(0);
  }

  /// Throws ConfigError for unknown sources, gains outside [0, 1] and
  /// non-zero metronome gains on a muted audience bus.
  void set_gain(const SourceId& source, Bus bus, Scalar value) {
    const auto row = index_of(source);
    if (!row) throw ConfigError("unknown routing source " + to_string(source));
    if (!(value >= Scalar(0) && value <= Scalar(1))) {
      throw ConfigError("routing gain must be in [0, 1]");
    }
    if (source.kind == SourceId::Kind::Metronome && bus == Bus::Audience &&
        metronome_audience_muted_ && value != Scalar(0)) {
      throw ConfigError("metronome is muted on the audience bus");
    }
    gains_(*row, static_cast<int>(bus)) = value;
  }

  bool metronome_audience_muted() const { return metronome_audience_muted_; }
  void set_metronome_audience_muted(bool muted) {
    metronome_audience_muted_ = muted;
    if (muted) {
      if (const auto row = index_of(SourceId::metronome())) {
        gains_(*row, static_cast<int>(Bus::Audience)) = Scalar(0);
      }
    }
  }

 private:
  std::vector<SourceId> sources_;
  Gains gains_;
  bool metronome_audience_muted_ = true;
};

/// bus[b][t] = clamp(sum_s gains[s][b] * input[s][t], -1, 1).
///
/// Sources are accumulated in row order and zero gains are skipped, so a
/// source with a zero gain has a bit-exact zero contribution and removing it
/// does not perturb the remaining sum.
template <typename Derived, typename Scalar>
BusBlock<Scalar> mix(const Eigen::MatrixBase<Derived>& inputs, const RoutingMatrix<Scalar>& routing) {
  if (inputs.cols() != routing.rows()) {
    throw ConfigError("mix: " + std::to_string(inputs.cols()) + " input blocks for " +
                      std::to_string(routing.rows()) + " routing rows");
  }
  BusBlock<Scalar> out = BusBlock<Scalar>::Zero(inputs.rows(), kBusCount);
  for (Eigen::Index s = 0; s < inputs.cols(); ++s) {
    for (int b = 0; b < kBusCount; ++b) {
      const Scalar g = routing.gains()(s, b);
      if (g != Scalar(0)) out.col(b) += g * inputs.col(s);
    }
  }
  return out.cwiseMax(Scalar(-1)).cwiseMin(Scalar(1));
}

template <typename Scalar>
Scalar sample_to_unit(std::int16_t v) {
  return static_cast<Scalar>(v) / Scalar(32768);
}

template <typename Scalar>
std::int16_t unit_to_sample(Scalar x) {
  const auto v = std::lround(static_cast<double>(x) * 32768.0);
  return static_cast<std::int16_t>(std::clamp<long>(v, -32768, 32767));
}

template <typename Scalar>
void samples_to_column(std::span<const std::int16_t> in, Eigen::Ref<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> col) {
  for (std::size_t i = 0; i < in.size(); ++i) col(static_cast<Eigen::Index>(i)) = sample_to_unit<Scalar>(in[i]);
}

}  // namespace mevo
