#include "mevo/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <utility>

#include "mevo/errors.hpp"

namespace mevo {
namespace {

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::vector<double> rtt_values(const std::vector<TelemetryRow>& rows) {
  std::set<std::pair<std::uint32_t, std::int64_t>> seen;
  std::vector<double> out;
  for (const auto& r : rows) {
    if (!r.rtt_ms) continue;
    if (!seen.insert({r.peer_id, std::llround(r.t_s * 1000)}).second) continue;
    out.push_back(*r.rtt_ms);
  }
  return out;
}

RttHistogram rtt_histogram(const std::vector<double>& rtts, double bin_ms, double threshold_ms) {
  if (rtts.empty()) throw AnalysisError("no RTT data in log");
  if (!(bin_ms > 0)) throw AnalysisError("bin width must be positive");
  RttHistogram h;
  h.bin_ms = bin_ms;
  h.threshold_ms = threshold_ms;
  h.samples = rtts.size();
  const auto [lo, hi] = std::minmax_element(rtts.begin(), rtts.end());
  h.min_ms = *lo;
  h.max_ms = *hi;
  h.min_edge_ms = std::floor(h.min_ms / bin_ms) * bin_ms;
  const auto bin_of = [&](double v) {
    auto k = static_cast<std::size_t>(std::floor((v - h.min_edge_ms) / bin_ms));
    // guard against the edge rounding a hair below its own bin
    while (k > 0 && v < h.min_edge_ms + static_cast<double>(k) * bin_ms) --k;
    while (v >= h.min_edge_ms + static_cast<double>(k + 1) * bin_ms) ++k;
    return k;
  };
  h.counts.assign(bin_of(h.max_ms) + 1, 0);
  std::size_t below = 0;
  for (const double v : rtts) {
    ++h.counts[bin_of(v)];
    if (v < threshold_ms) ++below;
  }
  h.fraction_below = static_cast<double>(below) / static_cast<double>(rtts.size());
  h.p50_ms = empirical_percentile(rtts, 50);
  h.p99_ms = empirical_percentile(rtts, 99);
  h.p999_ms = empirical_percentile(rtts, 99.9);
  return h;
}

RttHistogram rtt_histogram(const TelemetryLog& log, double bin_ms, double threshold_ms) {
  return rtt_histogram(rtt_values(log.rows), bin_ms, threshold_ms);
}

std::vector<LossPoint> cumulative_loss(const std::vector<TelemetryRow>& rows) {
  std::vector<LossPoint> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back({r.t_s, r.frames_lost});
  return out;
}

double loss_ratio(const TelemetryLog& log, StreamKey key) {
  return loss_ratio(stream_rows(log, key), log.sample_rate);
}

M2EBudget m2e_budget(const std::vector<TelemetryRow>& rows, double driver_ms) {
  if (rows.empty()) throw AnalysisError("M2E budget of an empty log");
  if (!(driver_ms >= 0)) throw AnalysisError("driver_ms must be >= 0");
  const auto rtts = rtt_values(rows);
  if (rtts.empty()) throw AnalysisError("M2E budget needs RTT data");
  M2EBudget b;
  b.driver_ms = driver_ms;
  b.network_ms = *std::min_element(rtts.begin(), rtts.end()) / 2;
  std::vector<double> occupancy;
  occupancy.reserve(rows.size());
  double sum = 0;
  for (const auto& r : rows) {
    occupancy.push_back(r.buffer_occupancy_ms);
    sum += r.buffer_occupancy_ms;
  }
  b.buffer_low_ms = empirical_percentile(occupancy, 2.5);
  b.buffer_high_ms = empirical_percentile(occupancy, 97.5);
  b.buffer_mean_ms = sum / static_cast<double>(occupancy.size());
  return b;
}

M2EEnvelope pooled_envelope(const std::vector<M2EBudget>& budgets) {
  if (budgets.empty()) throw AnalysisError("no budgets to pool");
  M2EEnvelope e{budgets.front().total_low_ms(), budgets.front().total_high_ms()};
  for (const auto& b : budgets) {
    e.low_ms = std::min(e.low_ms, b.total_low_ms());
    e.high_ms = std::max(e.high_ms, b.total_high_ms());
  }
  return e;
}

std::string rtt_histogram_csv(const RttHistogram& h) {
  std::ostringstream out;
  out << "bin_low_ms,bin_high_ms,count\n";
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    const double lo = h.min_edge_ms + static_cast<double>(k) * h.bin_ms;
    out << fixed(lo) << ',' << fixed(lo + h.bin_ms) << ',' << h.counts[k] << '\n';
  }
  return out.str();
}

std::string rtt_summary_csv(const std::vector<NamedLog>& logs, const AnalysisOptions& opt) {
  std::ostringstream out;
  out << "log,samples,min_ms,p50_ms,p99_ms,p99_9_ms,max_ms,threshold_ms,fraction_below\n";
  for (const auto& l : logs) {
    const auto h = rtt_histogram(l.log, opt.bin_ms, opt.threshold_ms);
    out << l.name << ',' << h.samples << ',' << fixed(h.min_ms) << ',' << fixed(h.p50_ms) << ',' << fixed(h.p99_ms)
        << ',' << fixed(h.p999_ms) << ',' << fixed(h.max_ms) << ',' << fixed(h.threshold_ms) << ','
        << fixed(h.fraction_below, 6) << '\n';
  }
  return out.str();
}

std::string cumulative_loss_csv(const std::vector<NamedLog>& logs) {
  std::ostringstream out;
  out << "log,peer_id,stream_id,t_s,frames_lost,lost_audio_s\n";
  for (const auto& l : logs) {
    for (const auto key : stream_keys(l.log)) {
      for (const auto& p : cumulative_loss(stream_rows(l.log, key))) {
        out << l.name << ',' << key.peer_id << ',' << key.stream_id << ',' << fixed(p.t_s) << ',' << p.frames_lost
            << ',' << fixed(static_cast<double>(p.frames_lost) / l.log.sample_rate, 4) << '\n';
      }
    }
  }
  return out.str();
}

std::string cumulative_loss_dat(const std::vector<NamedLog>& logs) {
  std::ostringstream out;
  for (const auto& l : logs) {
    for (const auto key : stream_keys(l.log)) {
      out << "# " << l.name << " peer " << key.peer_id << " stream " << key.stream_id << "\n# t_s frames_lost\n";
      for (const auto& p : cumulative_loss(stream_rows(l.log, key))) {
        out << fixed(p.t_s) << ' ' << p.frames_lost << '\n';
      }
      out << "\n\n";
    }
  }
  return out.str();
}

std::string loss_ratio_csv(const std::vector<NamedLog>& logs) {
  std::ostringstream out;
  out << "log,peer_id,stream_id,duration_s,frames_lost,frames_late,loss_ratio,lost_audio_s\n";
  for (const auto& l : logs) {
    for (const auto& s : summarize(l.log)) {
      out << l.name << ',' << s.key.peer_id << ',' << s.key.stream_id << ',' << fixed(s.duration_s) << ','
          << s.frames_lost << ',' << s.frames_late << ',' << general(s.loss_ratio) << ',' << fixed(s.lost_audio_s, 4)
          << '\n';
    }
  }
  return out.str();
}

std::string buffer_csv(const std::vector<NamedLog>& logs) {
  std::ostringstream out;
  out << "log,peer_id,stream_id,rows,mean_ms,p2_5_ms,p97_5_ms,target_mean_ms\n";
  for (const auto& l : logs) {
    for (const auto& s : summarize(l.log)) {
      out << l.name << ',' << s.key.peer_id << ',' << s.key.stream_id << ',' << s.rows << ','
          << fixed(s.buffer_mean_ms) << ',' << fixed(s.buffer_p2_5_ms) << ',' << fixed(s.buffer_p97_5_ms) << ','
          << fixed(s.target_mean_ms) << '\n';
    }
  }
  return out.str();
}

std::string m2e_csv(const std::vector<NamedLog>& logs, const AnalysisOptions& opt) {
  std::ostringstream out;
  out << "log,peer_id,stream_id,driver_ms,network_ms,buffer_low_ms,buffer_high_ms,buffer_mean_ms,total_low_ms,"
         "total_high_ms,total_point_ms\n";
  std::vector<M2EBudget> all;
  for (const auto& l : logs) {
    for (const auto key : stream_keys(l.log)) {
      const auto rows = stream_rows(l.log, key);
      if (rtt_values(rows).empty()) continue;
      const auto b = m2e_budget(rows, opt.driver_ms);
      all.push_back(b);
      out << l.name << ',' << key.peer_id << ',' << key.stream_id << ',' << fixed(b.driver_ms) << ','
          << fixed(b.network_ms) << ',' << fixed(b.buffer_low_ms) << ',' << fixed(b.buffer_high_ms) << ','
          << fixed(b.buffer_mean_ms) << ',' << fixed(b.total_low_ms()) << ',' << fixed(b.total_high_ms()) << ','
          << fixed(b.total_point_ms()) << '\n';
    }
  }
  if (all.empty()) throw AnalysisError("M2E budget needs RTT data");
  const auto e = pooled_envelope(all);
  out << "pooled,,,,,,,," << fixed(e.low_ms) << ',' << fixed(e.high_ms) << ",\n";
  return out.str();
}

}  // namespace mevo
