#include "fsru/instance_io.hpp"

#include <zlib.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>
#include <string_view>

#include "fsru/rng.hpp"

namespace fsru {

using nlohmann::json;

ParseError::ParseError(const std::string& path, std::size_t line, const std::string& what)
    : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void append_number(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

bool is_positive_zero(double v) { return v == 0.0 && !std::signbit(v); }

// Line-oriented reader over a whole file.
class Lines {
 public:
  Lines(std::string path, std::string text) : path_(std::move(path)), text_(std::move(text)) {}

  bool next(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    const auto end = text_.find('\n', pos_);
    const std::size_t stop = end == std::string::npos ? text_.size() : end;
    line = std::string_view(text_).substr(pos_, stop - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = stop + 1;
    ++number_;
    return true;
  }
  std::size_t number() const { return number_; }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, number_, what); }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::string text_;
  std::size_t pos_ = 0;
  std::size_t number_ = 0;
};

json read_header(Lines& lines, const std::string& format) {
  std::string_view line;
  if (!lines.next(line)) lines.fail("empty file");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    lines.fail(std::string("malformed header: ") + e.what());
  }
  if (!header.is_object() || !header.contains("format") || !header["format"].is_string()) {
    lines.fail("header lacks a format field");
  }
  if (header["format"] != format) {
    lines.fail("expected format '" + format + "', found '" +
               header["format"].get<std::string>() + "'");
  }
  if (!header.contains("version") || !header["version"].is_number_integer()) {
    lines.fail("header lacks an integer version");
  }
  const int version = header["version"].get<int>();
  if (version != kFileVersion) {
    throw UnsupportedVersionError(lines.path(), lines.number(),
                                  "unsupported version " + std::to_string(version) +
                                      " (expected " + std::to_string(kFileVersion) + ")");
  }
  return header;
}

int header_int(const json& header, const char* key, Lines& lines) {
  if (!header.contains(key) || !header[key].is_number_integer()) {
    lines.fail(std::string("header field '") + key + "' missing or not an integer");
  }
  return header[key].get<int>();
}

template <std::size_t N>
void parse_row(std::string_view line, Lines& lines, std::array<long long, N>& idx,
               double& value) {
  const char* p = line.data();
  const char* end = line.data() + line.size();
  for (std::size_t k = 0; k < N; ++k) {
    const auto res = std::from_chars(p, end, idx[k]);
    if (res.ec != std::errc() || res.ptr == end || *res.ptr != ',') {
      lines.fail("field " + std::to_string(k + 1) + ": expected an integer followed by ','");
    }
    p = res.ptr + 1;
  }
  const auto res = std::from_chars(p, end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    lines.fail("field " + std::to_string(N + 1) + ": malformed number");
  }
}

// Reads "#name count" and returns count.
std::size_t read_block_header(Lines& lines, std::string_view name) {
  std::string_view line;
  if (!lines.next(line)) lines.fail("truncated file: missing block #" + std::string(name));
  const std::string expect = "#" + std::string(name) + " ";
  if (line.substr(0, expect.size()) != expect) {
    lines.fail("expected block header '#" + std::string(name) + " <count>'");
  }
  std::size_t count = 0;
  const auto body = line.substr(expect.size());
  const auto res = std::from_chars(body.data(), body.data() + body.size(), count);
  if (res.ec != std::errc() || res.ptr != body.data() + body.size()) {
    lines.fail("malformed entry count");
  }
  return count;
}

void read_end(Lines& lines) {
  std::string_view line;
  if (!lines.next(line) || line != "#end") lines.fail("truncated file: missing #end");
  while (lines.next(line)) {
    if (!line.empty()) lines.fail("unexpected content after #end");
  }
}

void write_tensor_block(std::string& out, const char* name, const FsruInstance& inst,
                        const std::vector<double>& values) {
  const int l = inst.num_locations();
  std::string rows;
  std::size_t count = 0;
  for (int t = 0; t < inst.horizon; ++t) {
    for (int i = 0; i < l; ++i) {
      for (int j = 0; j < l; ++j) {
        const double v = values[inst.index(t, i, j)];
        if (is_positive_zero(v)) continue;
        ++count;
        rows += std::to_string(t) + ',' + std::to_string(i) + ',' + std::to_string(j) + ',';
        append_number(rows, v);
        rows += '\n';
      }
    }
  }
  out += "#";
  out += name;
  out += " " + std::to_string(count) + "\n";
  out += rows;
}

void read_tensor_block(Lines& lines, const char* name, FsruInstance& inst,
                       std::vector<double>& values) {
  const std::size_t count = read_block_header(lines, name);
  const int l = inst.num_locations();
  std::string_view line;
  std::array<long long, 3> idx{};
  for (std::size_t k = 0; k < count; ++k) {
    if (!lines.next(line)) lines.fail("truncated file inside block #" + std::string(name));
    double v = 0.0;
    parse_row(line, lines, idx, v);
    if (idx[0] < 0 || idx[0] >= inst.horizon) lines.fail("time index out of range");
    if (idx[1] < 0 || idx[1] >= l || idx[2] < 0 || idx[2] >= l) {
      lines.fail("location index out of range");
    }
    values[inst.index(static_cast<int>(idx[0]), static_cast<int>(idx[1]),
                      static_cast<int>(idx[2]))] = v;
  }
}

const char* mode_name(ShiftMode mode) {
  return mode == ShiftMode::Rigid ? "rigid" : "flexible";
}

std::string tensor_header(const char* format, const AugmentedSpace& space, bool nan_fill) {
  json header = {{"format", format},
                 {"version", kFileVersion},
                 {"num_zones", space.num_zones()},
                 {"horizon", space.horizon()},
                 {"max_hours", space.max_hours()},
                 {"max_breaks", space.max_breaks()},
                 {"mode", mode_name(space.mode())}};
  if (nan_fill) {
    header["fill"] = "nan";
  } else {
    header["fill"] = 0;
  }
  return header.dump() + "\n";
}

// Writes cells selected by `keep` as t,s,n,b,a,value rows.
template <typename Keep>
std::string tensor_rows(const StateActionTensor& tensor, Keep keep, std::size_t& count) {
  const auto& space = tensor.space();
  std::string rows;
  count = 0;
  const auto actions = static_cast<std::size_t>(space.num_actions());
  for (std::size_t s = 0; s < space.num_states(); ++s) {
    const auto [t, u] = space.decode(s);
    for (std::size_t a = 0; a < actions; ++a) {
      const std::size_t cell = s * actions + a;
      if (!keep(cell)) continue;
      ++count;
      rows += std::to_string(t) + ',' + std::to_string(u.location) + ',' +
              std::to_string(u.hours_served) + ',' + std::to_string(u.breaks_taken) + ',' +
              std::to_string(a) + ',';
      append_number(rows, tensor.values()[cell]);
      rows += '\n';
    }
  }
  return rows;
}

struct TensorFile {
  AugmentedSpace space;
  bool nan_fill = false;
};

TensorFile read_tensor_header(Lines& lines, const char* format) {
  const json header = read_header(lines, format);
  TensorFile f;
  const int z = header_int(header, "num_zones", lines);
  const int h = header_int(header, "horizon", lines);
  const int m = header_int(header, "max_hours", lines);
  const int b = header_int(header, "max_breaks", lines);
  ShiftMode mode = ShiftMode::Flexible;
  if (header.contains("mode")) {
    if (header["mode"] == "rigid") {
      mode = ShiftMode::Rigid;
    } else if (header["mode"] != "flexible") {
      lines.fail("unknown shift mode");
    }
  }
  if (header.contains("fill")) {
    const auto& fill = header["fill"];
    if (fill.is_string() && fill == "nan") {
      f.nan_fill = true;
    } else if (!(fill.is_number() && fill.get<double>() == 0.0)) {
      lines.fail("fill must be 0 or \"nan\"");
    }
  }
  try {
    f.space = AugmentedSpace(z, h, m, b, mode);
  } catch (const std::invalid_argument& e) {
    lines.fail(e.what());
  }
  return f;
}

template <typename Store>
void read_tensor_rows(Lines& lines, const AugmentedSpace& space, Store store) {
  const std::size_t count = read_block_header(lines, "values");
  std::string_view line;
  std::array<long long, 5> idx{};
  for (std::size_t k = 0; k < count; ++k) {
    if (!lines.next(line)) lines.fail("truncated file inside block #values");
    double v = 0.0;
    parse_row(line, lines, idx, v);
    if (idx[0] < 0 || idx[0] >= space.horizon() || idx[1] < 0 ||
        idx[1] >= space.num_locations() || idx[2] < 0 || idx[2] > space.max_hours() ||
        idx[3] < 0 || idx[3] > space.max_breaks() || idx[4] < 0 ||
        idx[4] >= space.num_actions()) {
      lines.fail("cell index out of range");
    }
    const AugmentedState u{static_cast<Location>(idx[1]), static_cast<int>(idx[2]),
                           static_cast<int>(idx[3])};
    store(space.cell_index(static_cast<int>(idx[0]), u, static_cast<Action>(idx[4])), v);
  }
}

}  // namespace

std::string read_text(const std::string& path) {
  gzFile file = gzopen(path.c_str(), "rb");
  if (!file) throw ParseError(path, 0, "cannot open file");
  std::string out;
  char buf[1 << 16];
  int n = 0;
  while ((n = gzread(file, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
  int err = 0;
  const char* msg = gzerror(file, &err);
  const std::string message = msg ? msg : "";
  gzclose(file);
  if (n < 0 || (err != Z_OK && err != Z_STREAM_END)) {
    throw ParseError(path, 0, "read failed: " + message);
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (ends_with(path, ".gz")) {
    gzFile file = gzopen(path.c_str(), "wb");
    if (!file) throw std::runtime_error("cannot write " + path);
    std::size_t done = 0;
    while (done < text.size()) {
      const auto chunk = static_cast<unsigned>(std::min<std::size_t>(text.size() - done, 1u << 30));
      if (gzwrite(file, text.data() + done, chunk) != static_cast<int>(chunk)) {
        gzclose(file);
        throw std::runtime_error("write failed: " + path);
      }
      done += chunk;
    }
    if (gzclose(file) != Z_OK) throw std::runtime_error("write failed: " + path);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

void save_instance(const FsruInstance& instance, const std::string& path) {
  json header = {{"format", "fsru-instance"},   {"version", kFileVersion},
                 {"num_zones", instance.num_zones}, {"horizon", instance.horizon},
                 {"num_agents", instance.num_agents}, {"max_hours", instance.max_hours},
                 {"max_breaks", instance.max_breaks}, {"fill", 0}};
  std::string out = header.dump() + "\n";
  if (!instance.initial_distribution.empty()) {
    out += "#initial " + std::to_string(instance.initial_distribution.size()) + "\n";
    for (std::size_t i = 0; i < instance.initial_distribution.size(); ++i) {
      out += std::to_string(i) + ',';
      append_number(out, instance.initial_distribution[i]);
      out += '\n';
    }
  }
  write_tensor_block(out, "flow", instance, instance.flow);
  write_tensor_block(out, "fare", instance, instance.fare);
  write_tensor_block(out, "cost", instance, instance.cost);
  out += "#end\n";
  write_text(path, out);
}

FsruInstance load_instance(const std::string& path) {
  Lines lines(path, read_text(path));
  const json header = read_header(lines, "fsru-instance");
  const int z = header_int(header, "num_zones", lines);
  const int h = header_int(header, "horizon", lines);
  if (z < 1 || h < 1) lines.fail("num_zones and horizon must be positive");
  FsruInstance inst = FsruInstance::zeros(z, h, header_int(header, "num_agents", lines),
                                          header_int(header, "max_hours", lines),
                                          header_int(header, "max_breaks", lines));
  // Optional initial distribution precedes the tensors.
  Lines probe = lines;
  std::string_view line;
  if (probe.next(line) && line.substr(0, 9) == "#initial ") {
    const std::size_t count = read_block_header(lines, "initial");
    if (count != static_cast<std::size_t>(inst.num_locations())) {
      lines.fail("initial distribution must have one entry per location");
    }
    inst.initial_distribution.assign(count, 0.0);
    std::array<long long, 1> idx{};
    for (std::size_t k = 0; k < count; ++k) {
      if (!lines.next(line)) lines.fail("truncated file inside block #initial");
      double v = 0.0;
      parse_row(line, lines, idx, v);
      if (idx[0] < 0 || idx[0] >= static_cast<long long>(count)) lines.fail("index out of range");
      inst.initial_distribution[static_cast<std::size_t>(idx[0])] = v;
    }
  }
  read_tensor_block(lines, "flow", inst, inst.flow);
  read_tensor_block(lines, "fare", inst, inst.fare);
  read_tensor_block(lines, "cost", inst, inst.cost);
  read_end(lines);
  return inst;
}

void save_policy(const Policy& policy, const std::string& path) {
  std::size_t count = 0;
  const std::string rows = tensor_rows(
      policy, [&](std::size_t c) { return !is_positive_zero(policy.values()[c]); }, count);
  write_text(path, tensor_header("fsru-policy", policy.space(), false) + "#values " +
                       std::to_string(count) + "\n" + rows + "#end\n");
}

Policy load_policy(const std::string& path) {
  Lines lines(path, read_text(path));
  const TensorFile f = read_tensor_header(lines, "fsru-policy");
  if (f.nan_fill) lines.fail("policies cannot have missing cells");
  Policy policy(f.space);
  read_tensor_rows(lines, f.space, [&](std::size_t cell, double v) {
    if (std::isnan(v)) lines.fail("policy value is nan");
    policy.values()[cell] = v;
  });
  read_end(lines);
  return policy;
}

void save_occupancy(const OccupancyMatrix& occupancy, const std::string& path) {
  std::size_t count = 0;
  const bool masked = occupancy.has_mask();
  const std::string rows = tensor_rows(
      occupancy,
      [&](std::size_t c) {
        return masked ? occupancy.observed(c) : !is_positive_zero(occupancy.values()[c]);
      },
      count);
  write_text(path, tensor_header("fsru-occupancy", occupancy.space(), masked) + "#values " +
                       std::to_string(count) + "\n" + rows + "#end\n");
}

OccupancyMatrix load_occupancy(const std::string& path) {
  Lines lines(path, read_text(path));
  const TensorFile f = read_tensor_header(lines, "fsru-occupancy");
  OccupancyMatrix occ(f.space);
  if (f.nan_fill) occ.enable_mask(false);
  read_tensor_rows(lines, f.space, [&](std::size_t cell, double v) {
    if (std::isnan(v)) {
      if (!occ.has_mask()) occ.enable_mask(true);
      occ.mask()[cell] = 0;
      occ.values()[cell] = 0.0;
      return;
    }
    occ.values()[cell] = v;
    if (occ.has_mask()) occ.mask()[cell] = 1;
  });
  read_end(lines);
  return occ;
}

int zone_hops(int num_zones, int a, int b) {
  const int w = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(num_zones))));
  return std::abs(a % w - b % w) + std::abs(a / w - b / w);
}

double CostModel::cost(int num_zones, int from, int to) const {
  const bool from_sink = from == num_zones;
  const bool to_sink = to == num_zones;
  if (from_sink && to_sink) return 0.0;
  if (from_sink || to_sink) return sink;
  return base + per_hop * zone_hops(num_zones, from, to);
}

FlowBuildResult build_flows(const std::vector<TripRecord>& trips,
                            const FlowBuildOptions& options) {
  if (options.num_zones < 1 || options.horizon < 1 || !(options.step_minutes > 0.0)) {
    throw std::invalid_argument("build_flows: zones, horizon and step must be positive");
  }
  FlowBuildResult out;
  FsruInstance& inst = out.instance;
  inst = FsruInstance::zeros(options.num_zones, options.horizon, options.num_agents,
                             options.max_hours, options.max_breaks);
  std::vector<double> fare_sum(inst.flow.size(), 0.0);
  const int z = options.num_zones;
  for (const TripRecord& trip : trips) {
    const bool ok = trip.pickup_zone >= 0 && trip.pickup_zone < z && trip.dropoff_zone >= 0 &&
                    trip.dropoff_zone < z && std::isfinite(trip.pickup_minute) &&
                    std::isfinite(trip.dropoff_minute) && trip.pickup_minute >= 0.0 &&
                    trip.dropoff_minute >= trip.pickup_minute && std::isfinite(trip.fare) &&
                    trip.fare >= 0.0;
    const double bucket = ok ? std::floor(trip.pickup_minute / options.step_minutes) : -1.0;
    if (!ok || bucket >= options.horizon) {
      ++out.rejected;
      continue;
    }
    const std::size_t cell = inst.index(static_cast<int>(bucket), trip.pickup_zone,
                                        trip.dropoff_zone);
    inst.flow[cell] += 1.0;
    fare_sum[cell] += trip.fare;
    ++out.accepted;
  }
  for (int t = 0; t < inst.horizon; ++t) {
    for (int i = 0; i <= z; ++i) {
      for (int j = 0; j <= z; ++j) {
        const std::size_t cell = inst.index(t, i, j);
        if (inst.flow[cell] > 0.0) inst.fare[cell] = fare_sum[cell] / inst.flow[cell];
        inst.cost[cell] = options.cost.cost(z, i, j);
      }
    }
  }
  return out;
}

FlowBuildOptions flow_options(const SynthConfig& config) {
  FlowBuildOptions o;
  o.num_zones = config.num_zones;
  o.horizon = config.horizon;
  o.step_minutes = config.step_minutes;
  o.num_agents = config.num_agents;
  o.max_hours = config.max_hours;
  o.max_breaks = config.max_breaks;
  o.cost = config.cost;
  return o;
}

SynthResult generate_synthetic(const SynthConfig& config) {
  if (config.num_zones < 1 || config.horizon < 1) {
    throw std::invalid_argument("synthetic: zones and horizon must be positive");
  }
  if (config.base_intensity < 0.0) throw std::invalid_argument("synthetic: negative intensity");
  for (const auto& peak : config.peaks) {
    if (peak.intensity < 0.0) throw std::invalid_argument("synthetic: negative peak intensity");
    if (!(peak.width > 0.0)) throw std::invalid_argument("synthetic: peak width must be positive");
    for (const int zone : peak.zones) {
      if (zone < 0 || zone >= config.num_zones) {
        throw std::invalid_argument("synthetic: peak zone out of range");
      }
    }
  }
  const int z = config.num_zones;
  // Destination choice falls off with grid distance.
  std::vector<std::discrete_distribution<int>> destination;
  destination.reserve(static_cast<std::size_t>(z));
  for (int i = 0; i < z; ++i) {
    std::vector<double> w(static_cast<std::size_t>(z));
    for (int j = 0; j < z; ++j) w[static_cast<std::size_t>(j)] = 1.0 / (1.0 + zone_hops(z, i, j));
    destination.emplace_back(w.begin(), w.end());
  }
  std::vector<double> intensity(static_cast<std::size_t>(config.horizon * z),
                                config.base_intensity);
  for (const auto& peak : config.peaks) {
    for (int t = 0; t < config.horizon; ++t) {
      const double dt = (t - peak.time) / peak.width;
      const double extra = peak.intensity * std::exp(-0.5 * dt * dt);
      if (peak.zones.empty()) {
        for (int i = 0; i < z; ++i) intensity[static_cast<std::size_t>(t * z + i)] += extra;
      } else {
        for (const int i : peak.zones) intensity[static_cast<std::size_t>(t * z + i)] += extra;
      }
    }
  }

  SynthResult out;
  std::size_t expected = 0;
  for (const double v : intensity) expected += static_cast<std::size_t>(v);
  out.trips.reserve(expected + expected / 8);
  for (int t = 0; t < config.horizon; ++t) {
    for (int i = 0; i < z; ++i) {
      // One stream per (t, zone) cell.
      SplitMix64 rng = make_stream(config.seed, static_cast<std::uint64_t>(t * z + i));
      const double lambda = intensity[static_cast<std::size_t>(t * z + i)];
      if (lambda <= 0.0) continue;
      const int count = std::poisson_distribution<int>(lambda)(rng);
      for (int k = 0; k < count; ++k) {
        TripRecord trip;
        trip.pickup_zone = i;
        trip.dropoff_zone = destination[static_cast<std::size_t>(i)](rng);
        const int hops = zone_hops(z, i, trip.dropoff_zone);
        trip.pickup_minute = (t + rng.uniform()) * config.step_minutes;
        trip.dropoff_minute = trip.pickup_minute + 5.0 + 4.0 * hops;
        trip.fare = config.fare_base + config.fare_per_hop * hops +
                    config.fare_noise * (2.0 * rng.uniform() - 1.0);
        trip.fare = std::max(trip.fare, 0.0);
        out.trips.push_back(trip);
      }
    }
  }
  out.instance = build_flows(out.trips, flow_options(config)).instance;
  return out;
}

SynthConfig weekday_config(int num_zones, int horizon, int num_agents, std::uint64_t seed) {
  SynthConfig c;
  c.num_zones = num_zones;
  c.horizon = horizon;
  c.step_minutes = 24.0 * 60.0 / horizon;
  c.num_agents = num_agents;
  c.max_hours = std::max(1, horizon * 5 / 12);
  c.max_breaks = 2;
  c.seed = seed;
  std::vector<int> core;
  for (int i = 0; i < std::max(1, num_zones / 4); ++i) core.push_back(i);
  c.base_intensity = 10.0;
  c.peaks = {{horizon * 8.5 / 24.0, core, 80.0, horizon / 24.0 * 1.5},
             {horizon * 18.5 / 24.0, core, 70.0, horizon / 24.0 * 1.5}};
  return c;
}

SynthConfig weekend_config(int num_zones, int horizon, int num_agents, std::uint64_t seed) {
  SynthConfig c = weekday_config(num_zones, horizon, num_agents, seed);
  std::vector<int> leisure;
  for (int i = num_zones - std::max(1, num_zones / 4); i < num_zones; ++i) leisure.push_back(i);
  c.base_intensity = 8.0;
  c.peaks = {{horizon * 14.0 / 24.0, leisure, 60.0, horizon / 24.0 * 3.0}};
  return c;
}

}  // namespace fsru
