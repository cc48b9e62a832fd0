#include "mevo/scenario.hpp"

namespace mevo {

// Keep identical to scenarios/replication.ini (checked by a unit test).
const std::string_view kReplicationScenario = R"ini(# Two-site rehearsal between Turin (peer 1) and Wroclaw (peer 2), 2 h 45 min.
# Link parameters are fitted to the published RTT and loss figures; see
# docs/scenario-format.md for the derivation.

[scenario]
name = replication
duration_s = 9900
seed = 20190425
ground_truth = summary

[stream]
sample_rate = 44100
channels = 1
frames_per_packet = 128

[jitter]
window_seconds = 4
percentile = 99
safety_margin_frames = 128

[metronome]
enabled = false

# Turin: long window at a high percentile, no extra margin
[peer:1]
site = Turin
source = noise:1
drift_ppm = 5
window_seconds = 120
percentile = 99.99
safety_margin_frames = 0

# Wroclaw: short window with a large fixed margin, capped at 1408 frames
[peer:2]
site = Wroclaw
source = noise:2
drift_ppm = -5
window_seconds = 10
percentile = 99.9
safety_margin_frames = 560
max_target_frames = 1408

[link:default]
base_owd_ms = 25.99

# 2->1 feeds the Turin buffer
[link:2->1]
jitter = shifted_exponential 0 0.35
loss_prob = 0.00177
congestion_episodes_per_hour = 24
congestion_peak_min_ms = 9
congestion_peak_max_ms = 22
congestion_ramp_ms = 2
congestion_hold_ms = 20

[link:1->2]
jitter = shifted_exponential 0 0.72
loss_prob = 0.00131
congestion_episodes_per_hour = 22
congestion_peak_min_ms = 20
congestion_peak_max_ms = 30
congestion_ramp_ms = 2
congestion_hold_ms = 20
)ini";

}  // namespace mevo
