#pragma once

// Deterministic report serialization. Identical (config, seed, build) must
// produce byte-identical files, so doubles are printed with shortest
// round-trip formatting, keys keep insertion order, and nothing
// time-dependent is written into the files themselves (wall clock goes to
// the log stream only).

#include <json.hpp>

#include <charconv>
#include <cstdint>
#include <string>
#include <vector>

#include "kcmlab/kmc.hpp"

namespace kcmlab {

using Json = nlohmann::ordered_json;

// FNV-1a over the canonical compact dump.
inline std::uint64_t config_hash(const Json& config) {
  std::string s = config.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[19] = "0x0000000000000000";
  for (int i = 0; i < 16; ++i)
    buf[17 - i] = "0123456789abcdef"[(v >> (4 * i)) & 0xF];
  return std::string(buf, 18);
}

inline std::string fmt_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

// CSV with a two-line metadata comment header.
class CsvWriter {
 public:
  CsvWriter(const std::string& title, std::uint64_t cfg_hash, std::uint64_t seed,
            const std::vector<std::string>& columns) {
    body_ += "# kcmlab " + title + "\n";
    body_ += "# config_hash=" + hex64(cfg_hash) +
             " seed=" + std::to_string(seed) + "\n";
    for (std::size_t i = 0; i < columns.size(); ++i)
      body_ += (i ? "," : "") + columns[i];
    body_ += "\n";
  }

  void row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i)
      body_ += (i ? "," : "") + fmt_double(values[i]);
    body_ += "\n";
  }

  const std::string& str() const { return body_; }

 private:
  std::string body_;
};

inline std::string series_csv(const std::string& title, std::uint64_t cfg_hash,
                              std::uint64_t seed, const SeriesEstimate& series) {
  CsvWriter csv(title, cfg_hash, seed, {"time", "mean", "stderr", "replicas"});
  for (std::size_t k = 0; k < series.times.size(); ++k)
    csv.row({series.times[k], series.means[k], series.stderrs[k],
             static_cast<double>(series.replicas)});
  return csv.str();
}

inline Json series_json(const SeriesEstimate& series) {
  Json j;
  j["times"] = series.times;
  j["means"] = series.means;
  j["stderrs"] = series.stderrs;
  j["replicas"] = series.replicas;
  return j;
}

}  // namespace kcmlab
