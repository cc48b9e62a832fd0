#pragma once

// Offline analysis of telemetry logs: RTT distribution, cumulative losses,
// loss ratios, buffer-delay statistics and the M2E latency budget. Every
// function is a pure function of its input; the text writers produce CSV and
// gnuplot data with fixed formatting.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mevo/telemetry.hpp"

namespace mevo {

struct RttHistogram {
  double bin_ms = 0.5;
  double min_edge_ms = 0;  // bins are [min_edge + k*bin, min_edge + (k+1)*bin)
  std::vector<std::uint64_t> counts;
  std::size_t samples = 0;
  double min_ms = 0;
  double max_ms = 0;
  double p50_ms = 0;
  double p99_ms = 0;
  double p999_ms = 0;
  double threshold_ms = 59.0;
  double fraction_below = 0;  // strictly below threshold_ms
};

/// One RTT per (peer, second): rows of a second metronome stream from the
/// same peer repeat the same measurement and are not counted twice.
std::vector<double> rtt_values(const std::vector<TelemetryRow>& rows);

/// Throws AnalysisError when there is no RTT data or bin_ms <= 0.
RttHistogram rtt_histogram(const std::vector<double>& rtts, double bin_ms, double threshold_ms = 59.0);
RttHistogram rtt_histogram(const TelemetryLog& log, double bin_ms, double threshold_ms = 59.0);

struct LossPoint {
  double t_s = 0;
  std::uint64_t frames_lost = 0;
};

/// Per-stream cumulative lost frames, one point per row, non-decreasing.
std::vector<LossPoint> cumulative_loss(const std::vector<TelemetryRow>& rows);

/// Final frames_lost / (duration * sample_rate); same value as summarize().
double loss_ratio(const TelemetryLog& log, StreamKey key);

struct M2EBudget {
  double driver_ms = 5.0;
  double network_ms = 0;  // min rtt / 2
  double buffer_low_ms = 0;   // p2.5
  double buffer_high_ms = 0;  // p97.5
  double buffer_mean_ms = 0;

  double total_low_ms() const { return driver_ms + network_ms + buffer_low_ms; }
  double total_high_ms() const { return driver_ms + network_ms + buffer_high_ms; }
  double total_point_ms() const { return driver_ms + network_ms + buffer_mean_ms; }
};

/// Throws AnalysisError when the rows carry no RTT or are empty, or driver_ms < 0.
M2EBudget m2e_budget(const std::vector<TelemetryRow>& rows, double driver_ms = 5.0);

struct M2EEnvelope {
  double low_ms = 0;
  double high_ms = 0;
};

/// Smallest interval containing every budget interval.
M2EEnvelope pooled_envelope(const std::vector<M2EBudget>& budgets);

/// A parsed log together with the name it was loaded from.
struct NamedLog {
  std::string name;
  TelemetryLog log;
};

struct AnalysisOptions {
  double bin_ms = 0.5;
  double threshold_ms = 59.0;
  double driver_ms = 5.0;
};

// Writers. Each returns the full file text.
std::string rtt_histogram_csv(const RttHistogram& h);
std::string rtt_summary_csv(const std::vector<NamedLog>& logs, const AnalysisOptions& opt);
std::string cumulative_loss_csv(const std::vector<NamedLog>& logs);
std::string cumulative_loss_dat(const std::vector<NamedLog>& logs);  // gnuplot, one block per stream
std::string loss_ratio_csv(const std::vector<NamedLog>& logs);
std::string buffer_csv(const std::vector<NamedLog>& logs);
std::string m2e_csv(const std::vector<NamedLog>& logs, const AnalysisOptions& opt);

}  // namespace mevo
