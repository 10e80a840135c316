#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ghostlab/analysis.hpp"
#include "ghostlab/kspace.hpp"
#include "ghostlab/measurement.hpp"
#include "ghostlab/montecarlo.hpp"

// Text formats. Floating-point values are written with %.17g so every file
// round-trips bit-exactly. All readers go through zlib and accept both plain
// and gzip-compressed files; writers compress when asked. Malformed input
// raises ConfigError with a file:line prefix.

namespace ghostlab {

// Whole-file read, transparently inflating gzip.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content,
                     bool gzip = false);

std::string format_g17(double v);

// PHASE v1:
//   PHASE v1 linear <sx> <sy> <off>
//   PHASE v1 sampled <nx> <ny> <x0> <y0> <dx> <dy>  + ny rows of nx radians
void write_phase_profile(const std::string& path, const PhaseProfile& profile,
                         bool gzip = false);
PhaseProfile read_phase_profile(const std::string& path);

// GIFRAME v1, one file per analyzer port:
//   GIFRAME v1 <nx> <ny>
//   theta_s=<rad|INF> theta_i=<rad> channel=<+|->
//   ny rows of nx counts (rows ordered by increasing ky)
struct FrameChannel {
  int nx = 0;
  int ny = 0;
  Setting setting = Setting::angles(0.0, 0.0);
  Channel channel = Channel::plus;
  ArrayXXi64 counts;
};

void write_frame_channel(const std::string& path, const FrameSet& frames,
                         Channel channel, bool gzip = false);
FrameChannel read_frame_channel(const std::string& path);

// Rebuild an analysis-ready FrameSet from a +/- file pair. The frame files
// carry no physical scale, so the field-of-view half-width comes from the
// run manifest (or a matching config).
FrameSet assemble_frames(const FrameChannel& plus, const FrameChannel& minus,
                         double fov_half_width);

// Event log: one line per recorded trial,
//   trial_id bucket readout channel bin_x bin_y noise
// with channel +1/-1/0 and bins -1 -1 when the readout produced no count.
void write_event_log(const std::string& path,
                     const std::vector<TrialEvent>& events, bool gzip = false);
std::vector<TrialEvent> read_event_log(const std::string& path);

// Bell report: key = value lines followed by a [curve] section with
// "phi c c_err n" rows for plotting.
std::string render_bell_report(const BellReport& report);
void write_bell_report(const std::string& path, const BellReport& report,
                       bool gzip = false);

}  // namespace ghostlab
