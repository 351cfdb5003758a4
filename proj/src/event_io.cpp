#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "slipforge/errors.hpp"
#include "slipforge/evsim.hpp"

namespace slipforge {

void pack_event(const Event& e, unsigned char* out) {
  std::uint64_t bits;
  std::memcpy(&bits, &e.t, sizeof bits);
  for (int i = 0; i < 8; ++i) out[i] = static_cast<unsigned char>(bits >> (8 * i));
  out[8] = static_cast<unsigned char>(e.x & 0xFF);
  out[9] = static_cast<unsigned char>(e.x >> 8);
  out[10] = static_cast<unsigned char>(e.y & 0xFF);
  out[11] = static_cast<unsigned char>(e.y >> 8);
  out[12] = static_cast<unsigned char>(e.polarity);
}

Event unpack_event(const unsigned char* in) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  Event e;
  std::memcpy(&e.t, &bits, sizeof bits);
  e.x = static_cast<std::uint16_t>(in[8] | (in[9] << 8));
  e.y = static_cast<std::uint16_t>(in[10] | (in[11] << 8));
  e.polarity = static_cast<std::int8_t>(in[12]);
  return e;
}

void write_events(const EventStream& stream, std::ostream& os, EventFormat format) {
  if (format == EventFormat::text) {
    char buf[96];
    for (const Event& e : stream.events) {
      const int n = std::snprintf(buf, sizeof buf, "%.9f %u %u %d\n", e.t, static_cast<unsigned>(e.x),
                                  static_cast<unsigned>(e.y), static_cast<int>(e.polarity));
      os.write(buf, n);
    }
  } else {
    std::vector<unsigned char> buf(kBinaryEventSize * 4096);
    std::size_t used = 0;
    for (const Event& e : stream.events) {
      pack_event(e, buf.data() + used);
      used += kBinaryEventSize;
      if (used == buf.size()) {
        os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(used));
        used = 0;
      }
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(used));
  }
  if (!os) throw IoError("event write failed");
}

void write_events(const EventStream& stream, const std::filesystem::path& path, EventFormat format) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string());
  write_events(stream, os, format);
}

namespace {

void check_event(const Event& e, int width, int height, double prev_t, long long where) {
  if (!std::isfinite(e.t) || e.t < 0.0) throw ParseError("invalid timestamp", where);
  if (e.x >= width || e.y >= height) throw ParseError("coordinate outside the sensor", where);
  if (e.polarity != 1 && e.polarity != -1) throw ParseError("polarity must be 1 or -1", where);
  if (e.t < prev_t) throw ParseError("timestamps out of order", where);
}

}  // namespace

EventStream read_events(std::istream& is, EventFormat format, int width, int height) {
  EventStream s;
  s.width = width;
  s.height = height;
  double prev_t = 0.0;
  if (format == EventFormat::text) {
    std::string line;
    long long line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::istringstream ss(line);
      double t;
      long long x, y, p;
      std::string extra;
      if (!(ss >> t >> x >> y >> p) || (ss >> extra)) {
        throw ParseError("expected 't x y p'", line_no);
      }
      if (x < 0 || y < 0 || x > 65535 || y > 65535) throw ParseError("negative or oversized coordinate", line_no);
      if (p != 1 && p != -1) throw ParseError("polarity must be 1 or -1", line_no);
      const Event e{t, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                    static_cast<std::int8_t>(p)};
      check_event(e, width, height, prev_t, line_no);
      prev_t = e.t;
      s.events.push_back(e);
    }
  } else {
    unsigned char rec[kBinaryEventSize];
    long long offset = 0;
    while (true) {
      is.read(reinterpret_cast<char*>(rec), kBinaryEventSize);
      const auto got = is.gcount();
      if (got == 0) break;
      if (got != static_cast<std::streamsize>(kBinaryEventSize)) {
        throw ParseError("truncated event record", offset);
      }
      const Event e = unpack_event(rec);
      check_event(e, width, height, prev_t, offset);
      prev_t = e.t;
      s.events.push_back(e);
      offset += static_cast<long long>(kBinaryEventSize);
    }
  }
  return s;
}

EventStream read_events(const std::filesystem::path& path, EventFormat format, int width, int height) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_events(is, format, width, height);
}

void write_event_params(const std::filesystem::path& path, const EventModelParams& p, std::uint64_t seed) {
  const nlohmann::ordered_json j = {
      {"contrast_threshold", p.contrast_threshold}, {"threshold_sigma", p.threshold_sigma},
      {"refractory", p.refractory},                 {"leak_rate", p.leak_rate},
      {"shot_noise_rate", p.shot_noise_rate},       {"upsample_factor", p.upsample_factor},
      {"log_eps", p.log_eps},                       {"seed", seed},
  };
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string());
  os << j.dump(2) << '\n';
}

}  // namespace slipforge
