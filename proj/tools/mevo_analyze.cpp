// mevo-analyze: offline analysis of telemetry logs.
//
//   mevo-analyze <rtt|loss|buffer|m2e|report> --log <csv>... --out <dir>
//                [--bin-ms 0.5] [--threshold-ms 59] [--driver-ms 5]

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "mevo/analysis.hpp"
#include "mevo/errors.hpp"

namespace fs = std::filesystem;

namespace {

void put(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw mevo::AnalysisError("cannot write " + path.string());
  std::cout << "wrote " << path.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Telemetry log analysis"};
  std::string cmd;
  std::vector<std::string> logs;
  std::string out = ".";
  mevo::AnalysisOptions opt;
  app.add_option("command", cmd, "rtt, loss, buffer, m2e or report")
      ->required()
      ->check(CLI::IsMember({"rtt", "loss", "buffer", "m2e", "report"}));
  app.add_option("--log", logs, "Telemetry CSV (repeatable)")->required();
  app.add_option("--out", out, "Output directory");
  app.add_option("--bin-ms", opt.bin_ms, "RTT histogram bin width");
  app.add_option("--threshold-ms", opt.threshold_ms, "RTT threshold for fraction_below");
  app.add_option("--driver-ms", opt.driver_ms, "Audio driver and soundcard latency");
  CLI11_PARSE(app, argc, argv);

  try {
    std::vector<mevo::NamedLog> named;
    for (const auto& l : logs) named.push_back({fs::path(l).stem().string(), mevo::load_telemetry(l)});
    fs::create_directories(out);
    const fs::path dir(out);
    const bool all = cmd == "report";
    if (all || cmd == "rtt") {
      for (const auto& l : named) {
        put(dir / ("rtt_hist_" + l.name + ".csv"),
            mevo::rtt_histogram_csv(mevo::rtt_histogram(l.log, opt.bin_ms, opt.threshold_ms)));
      }
      put(dir / "rtt_summary.csv", mevo::rtt_summary_csv(named, opt));
    }
    if (all || cmd == "loss") {
      put(dir / "cumulative_loss.csv", mevo::cumulative_loss_csv(named));
      put(dir / "cumulative_loss.dat", mevo::cumulative_loss_dat(named));
      put(dir / "loss_ratio.csv", mevo::loss_ratio_csv(named));
    }
    if (all || cmd == "buffer") put(dir / "buffer.csv", mevo::buffer_csv(named));
    if (all || cmd == "m2e") put(dir / "m2e.csv", mevo::m2e_csv(named, opt));
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "mevo-analyze: " << e.what() << '\n';
    return 1;
  }
}
