#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "evsurf/image.hpp"
#include "evsurf/types.hpp"

namespace evsurf {

/// One asynchronous brightness-change record.
struct Event {
  int x = 0;       // pixel column, 0 <= x < W
  int y = 0;       // pixel row, 0 <= y < H
  double t = 0.0;  // seconds
  int p = 0;       // polarity, -1 or +1
};

/// RGGB colour-filter mosaic. channel_at(x, y) is 0 = R, 1 = G, 2 = B.
struct BayerMask {
  int channel_at(int x, int y) const {
    int yy = y & 1, xx = x & 1;
    if (yy == 0) return xx == 0 ? 0 : 1;
    return xx == 0 ? 1 : 2;
  }
};

/// Ordered event sequence with the sensor geometry and simulator constants
/// it was generated (or recorded) under.
struct EventStream {
  std::vector<Event> events;  // sorted by t, ties by (y, x)
  int width = 0;
  int height = 0;
  double threshold = 0.2;  // C, log-brightness units
  double gamma = 2.2;

  // Recorded time span. For simulated streams these are the first and last
  // frame timestamps; a window anywhere inside is valid even if eventless.
  double t_begin = 0.0;
  double t_end = 0.0;
};

/// Per-pixel signed accumulation C * sum(p) over a time window.
struct EventFrame {
  Image1 values;  // H x W, log-brightness units
  double t0 = 0.0;
  double t1 = 0.0;
};

// Intensity floor applied before taking logarithms; keeps log() finite at
// black pixels on both the simulator and the loss side.
inline constexpr double kLogFloor = 1e-5;

/// Log intensity of one sRGB sample under the simulator's response:
/// linearise by x^gamma, clamp below by kLogFloor, natural log.
double log_intensity(double srgb_value, double gamma);

/// Simulate an event stream from an sRGB frame sequence.
///
/// Per pixel the simulator tracks a reference log intensity of the
/// Bayer-selected channel and emits floor(|dL|/C) events whenever the frame-
/// to-frame change crosses the threshold, with timestamps linearly
/// interpolated inside the frame interval.
EventStream simulate_events(const std::vector<Image3>& frames,
                            const std::vector<double>& timestamps,
                            double threshold, double gamma,
                            const BayerMask& bayer = {});

/// Accumulate events with t0 < t <= t1 into C * sum(p) per pixel.
EventFrame accumulate(const EventStream& stream, double t0, double t1);

/// Draw a supervision window ending at t_end: t0 ~ U[t_end - L_max, t_end).
/// If the stream starts less than L_max before t_end, the length shrinks to
/// the available span (t_begin is the earliest allowed start).
std::pair<double, double> sample_window(double t_end, double L_max,
                                        double t_begin, std::mt19937_64& rng);

/// Select the Bayer channel of each pixel: out(y, x) = img(y, x, pattern(y, x)).
Image1 apply_bayer(const Image3& image, const BayerMask& bayer = {});

// Event file: header "# W H C gamma", then one "t x y p" record per line.
void write_event_file(const std::string& path, const EventStream& stream);
EventStream read_event_file(const std::string& path);

}  // namespace evsurf
