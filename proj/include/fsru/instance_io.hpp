#pragma once

// Instance files, trip aggregation and the synthetic demand generator.
//
// File layout (optionally gzip-compressed):
//   line 1      JSON header: {"format": ..., "version": 1, dimensions...}
//   "#flow"     then rows  t,src,dst,value
//   "#fare"     same
//   "#cost"     same
// Cells not listed hold the header's fill value. Values are written in the
// shortest form that parses back to the identical double.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsru/augmented.hpp"
#include "fsru/model.hpp"

namespace fsru {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class UnsupportedVersionError : public ParseError {
 public:
  using ParseError::ParseError;
};

inline constexpr int kFileVersion = 1;

void save_instance(const FsruInstance& instance, const std::string& path);
FsruInstance load_instance(const std::string& path);

void save_policy(const Policy& policy, const std::string& path);
Policy load_policy(const std::string& path);

// Masked cells are written as "nan".
void save_occupancy(const OccupancyMatrix& occupancy, const std::string& path);
OccupancyMatrix load_occupancy(const std::string& path);

// Whole-file helpers; paths ending in ".gz" are compressed on write, and
// compressed input is detected on read.
std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

struct TripRecord {
  double pickup_minute = 0.0;   // minutes since the start of the day
  double dropoff_minute = 0.0;
  int pickup_zone = 0;
  int dropoff_zone = 0;
  double fare = 0.0;
};

// Zones sit on a square grid of width ceil(sqrt(Z)); distance is Manhattan.
int zone_hops(int num_zones, int a, int b);

struct CostModel {
  double base = 0.0;     // any zone-to-zone move
  double per_hop = 0.0;
  double sink = 0.0;     // both directions between a zone and the sink

  double cost(int num_zones, int from, int to) const;
};

struct FlowBuildResult {
  FsruInstance instance;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

struct FlowBuildOptions {
  int num_zones = 0;
  int horizon = 48;
  double step_minutes = 30.0;
  int num_agents = 1;
  int max_hours = 1;
  int max_breaks = 0;
  CostModel cost;
};

// Counts trips by pickup bucket and zone pair; fares are averaged per cell.
FlowBuildResult build_flows(const std::vector<TripRecord>& trips,
                            const FlowBuildOptions& options);

struct DemandPeak {
  double time = 0.0;         // step index of the peak
  std::vector<int> zones;    // empty: every zone
  double intensity = 0.0;    // extra expected pickups per zone at the peak
  double width = 2.0;        // standard deviation in steps
};

struct SynthConfig {
  int num_zones = 100;
  int horizon = 48;
  double step_minutes = 30.0;
  int num_agents = 20000;
  int max_hours = 20;
  int max_breaks = 2;
  double base_intensity = 40.0;  // expected pickups per zone and step
  std::vector<DemandPeak> peaks;
  double fare_base = 3.0;
  double fare_per_hop = 1.5;
  double fare_noise = 0.5;  // uniform +- noise on each trip fare
  CostModel cost{0.2, 0.3, 0.0};
  std::uint64_t seed = 0;
};

struct SynthResult {
  FsruInstance instance;
  std::vector<TripRecord> trips;
};

FlowBuildOptions flow_options(const SynthConfig& config);
SynthResult generate_synthetic(const SynthConfig& config);

// Commuter day: morning and evening peaks on the lowest-index zones.
SynthConfig weekday_config(int num_zones, int horizon, int num_agents, std::uint64_t seed);
// Leisure day: one broad midday peak on the highest-index zones.
SynthConfig weekend_config(int num_zones, int horizon, int num_agents, std::uint64_t seed);

}  // namespace fsru
