#include "evsurf/events.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace evsurf {

double log_intensity(double srgb_value, double gamma) {
  double linear = std::pow(std::max(srgb_value, 0.0), gamma);
  return std::log(std::max(linear, kLogFloor));
}

EventStream simulate_events(const std::vector<Image3>& frames,
                            const std::vector<double>& timestamps,
                            double threshold, double gamma,
                            const BayerMask& bayer) {
  require(frames.size() >= 2, "simulate_events: need at least 2 frames");
  require(frames.size() == timestamps.size(),
          "simulate_events: frame/timestamp count mismatch");
  require(threshold > 0.0, "simulate_events: threshold C must be positive");
  require(gamma > 0.0, "simulate_events: gamma must be positive");

  const int w = frames[0].width, h = frames[0].height;
  for (const auto& f : frames) {
    require(f.width == w && f.height == h, "simulate_events: resolution mismatch");
  }
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    require(timestamps[i] > timestamps[i - 1],
            "simulate_events: timestamps must be strictly increasing");
  }

  EventStream stream;
  stream.width = w;
  stream.height = h;
  stream.threshold = threshold;
  stream.gamma = gamma;
  stream.t_begin = timestamps.front();
  stream.t_end = timestamps.back();

  // Per-pixel reference log intensity, initialised from the first frame.
  std::vector<double> ref(static_cast<std::size_t>(w) * h);
  std::vector<double> prev(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = frames[0].at(x, y, bayer.channel_at(x, y));
      double L = log_intensity(v, gamma);
      ref[static_cast<std::size_t>(y) * w + x] = L;
      prev[static_cast<std::size_t>(y) * w + x] = L;
    }
  }

  for (std::size_t k = 1; k < frames.size(); ++k) {
    const double t_prev = timestamps[k - 1], t_cur = timestamps[k];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t idx = static_cast<std::size_t>(y) * w + x;
        const double L_cur =
            log_intensity(frames[k].at(x, y, bayer.channel_at(x, y)), gamma);
        const double L_prev = prev[idx];
        const double delta = L_cur - ref[idx];
        const int n = static_cast<int>(std::floor(std::abs(delta) / threshold));
        if (n > 0) {
          const int s = delta > 0 ? 1 : -1;
          // Crossing times from linear log-intensity interpolation between
          // the two frames; the slope is nonzero whenever a crossing exists.
          const double slope = L_cur - L_prev;
          for (int j = 1; j <= n; ++j) {
            const double target = ref[idx] + s * j * threshold;
            double frac = slope != 0.0 ? (target - L_prev) / slope : 1.0;
            frac = std::clamp(frac, 0.0, 1.0);
            stream.events.push_back(
                Event{x, y, t_prev + frac * (t_cur - t_prev), s});
          }
          ref[idx] += s * n * threshold;
        }
        prev[idx] = L_cur;
      }
    }
  }

  std::sort(stream.events.begin(), stream.events.end(),
            [](const Event& a, const Event& b) {
              if (a.t != b.t) return a.t < b.t;
              if (a.y != b.y) return a.y < b.y;
              return a.x < b.x;
            });
  return stream;
}

EventFrame accumulate(const EventStream& stream, double t0, double t1) {
  require(t0 < t1, "accumulate: t0 must be < t1");
  require(t0 >= stream.t_begin - 1e-12 && t1 <= stream.t_end + 1e-12,
          "accumulate: window outside recorded span");
  EventFrame frame;
  frame.t0 = t0;
  frame.t1 = t1;
  frame.values = Image1(stream.width, stream.height, 0.0);
  // Events are time-sorted; only the (t0, t1] range contributes.
  auto lo = std::upper_bound(stream.events.begin(), stream.events.end(), t0,
                             [](double t, const Event& e) { return t < e.t; });
  auto hi = std::upper_bound(stream.events.begin(), stream.events.end(), t1,
                             [](double t, const Event& e) { return t < e.t; });
  for (auto it = lo; it != hi; ++it) {
    frame.values.at(it->x, it->y) += stream.threshold * it->p;
  }
  return frame;
}

std::pair<double, double> sample_window(double t_end, double L_max,
                                        double t_begin, std::mt19937_64& rng) {
  require(L_max > 0.0, "sample_window: L_max must be positive");
  const double len = std::min(L_max, t_end - t_begin);
  require(len >= 0.0, "sample_window: t_end precedes stream start");
  const double t0 = t_end - len + len * uniform01(rng);
  return {t0, t_end};
}

Image1 apply_bayer(const Image3& image, const BayerMask& bayer) {
  require(image.width > 0 && image.height > 0, "apply_bayer: empty image");
  Image1 out(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      out.at(x, y) = image.at(x, y, bayer.channel_at(x, y));
    }
  }
  return out;
}

void write_event_file(const std::string& path, const EventStream& stream) {
  std::ofstream f(path);
  if (!f) throw RuntimeFailure("cannot open for writing: " + path);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "# %d %d %.17g %.17g\n", stream.width,
                stream.height, stream.threshold, stream.gamma);
  f << buf;
  for (const Event& e : stream.events) {
    std::snprintf(buf, sizeof(buf), "%.9f %d %d %d\n", e.t, e.x, e.y, e.p);
    f << buf;
  }
  if (!f) throw RuntimeFailure("write failed: " + path);
}

EventStream read_event_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw RuntimeFailure("cannot open event file: " + path);
  EventStream stream;
  std::string line;
  if (!std::getline(f, line) || line.size() < 2 || line[0] != '#') {
    throw RuntimeFailure("event file missing '# W H C gamma' header: " + path);
  }
  {
    std::istringstream hs(line.substr(1));
    if (!(hs >> stream.width >> stream.height >> stream.threshold >> stream.gamma)) {
      throw RuntimeFailure("malformed event file header: " + path);
    }
  }
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    Event e;
    std::istringstream ls(line);
    if (!(ls >> e.t >> e.x >> e.y >> e.p)) {
      throw RuntimeFailure("malformed event record: '" + line + "'");
    }
    require(e.p == 1 || e.p == -1, "event polarity must be -1 or 1");
    require(e.x >= 0 && e.x < stream.width && e.y >= 0 && e.y < stream.height,
            "event out of sensor bounds");
    stream.events.push_back(e);
  }
  if (!stream.events.empty()) {
    stream.t_begin = stream.events.front().t;
    stream.t_end = stream.events.back().t;
  }
  return stream;
}

}  // namespace evsurf
