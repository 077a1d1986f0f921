#include "pcamm/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

namespace pcamm {

std::vector<std::string> split(std::string_view s, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(delim, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  return std::string::npos;
}

CsvTable read_csv(std::istream& in, const std::vector<std::string>& required, const std::string& source) {
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto cells = split(line, ',');
    for (auto& c : cells) c = trim(c);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      for (const auto& r : required)
        if (t.column(r) == std::string::npos) throw InputError(source + ": missing column '" + r + "'");
      continue;
    }
    if (cells.size() > t.header.size())
      throw InputError(source + ":" + std::to_string(line_no) + ": too many fields");
    cells.resize(t.header.size());
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(line_no);
  }
  if (!have_header) throw InputError(source + ": empty file (header row required)");
  return t;
}

CsvTable read_csv_file(const std::string& path, const std::vector<std::string>& required) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return read_csv(in, required, path);
}

double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) throw InputError(context + ": bad number '" + s + "'");
  return v;
}

std::int64_t parse_int(const std::string& s, const std::string& context) {
  std::int64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) throw InputError(context + ": bad integer '" + s + "'");
  return v;
}

std::string format_double(double x) {
  char buf[64];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

std::string format_fixed(double x, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
  return buf;
}

// ---------------------------------------------------------------------------
// network tables

std::vector<NodeRecord> read_nodes(std::istream& in, const std::string& source) {
  const auto t = read_csv(in, {"node_id", "lon", "lat"}, source);
  const auto ci = t.column("node_id"), cx = t.column("lon"), cy = t.column("lat");
  std::vector<NodeRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto ctx = source + ":" + std::to_string(t.line_numbers[r]);
    const auto& row = t.rows[r];
    out.push_back({parse_int(row[ci], ctx), parse_double(row[cx], ctx), parse_double(row[cy], ctx)});
  }
  return out;
}

std::vector<LinkRecord> read_links(std::istream& in, const std::string& source) {
  const auto t = read_csv(in, {"link_id", "from_node", "to_node"}, source);
  const auto ci = t.column("link_id"), cf = t.column("from_node"), ct = t.column("to_node");
  const auto cl = t.column("length_m"), cb = t.column("bearing_deg");
  std::vector<LinkRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto ctx = source + ":" + std::to_string(t.line_numbers[r]);
    const auto& row = t.rows[r];
    LinkRecord l{parse_int(row[ci], ctx), parse_int(row[cf], ctx), parse_int(row[ct], ctx), {}, {}};
    if (cl != std::string::npos && !row[cl].empty()) l.length = parse_double(row[cl], ctx);
    if (cb != std::string::npos && !row[cb].empty()) l.bearing = parse_double(row[cb], ctx);
    out.push_back(l);
  }
  return out;
}

RoadNetwork read_network(const std::string& nodes_path, const std::string& links_path, double split_length) {
  std::ifstream nin(nodes_path);
  if (!nin) throw InputError("cannot open " + nodes_path);
  std::ifstream lin(links_path);
  if (!lin) throw InputError("cannot open " + links_path);
  return load_network(read_nodes(nin, nodes_path), read_links(lin, links_path), split_length);
}

void write_nodes(std::ostream& out, const RoadNetwork& net) {
  out << "node_id,lon,lat\n";
  for (const auto& n : net.nodes()) out << n.id << ',' << format_fixed(n.lon, 9) << ',' << format_fixed(n.lat, 9) << '\n';
}

void write_links(std::ostream& out, const RoadNetwork& net) {
  out << "link_id,from_node,to_node,length_m,bearing_deg\n";
  for (const auto& l : net.links())
    out << l.id << ',' << l.from << ',' << l.to << ',' << format_double(l.length) << ',' << format_double(l.direction)
        << '\n';
}

// ---------------------------------------------------------------------------
// probes

std::vector<ProbeRow> read_probe_rows(std::istream& in, const std::string& source) {
  const auto t = read_csv(in, {"vehicle_id", "timestamp", "lon", "lat", "speed_mps", "bearing_deg"}, source);
  const auto cv = t.column("vehicle_id"), ct = t.column("timestamp"), cx = t.column("lon"), cy = t.column("lat"),
             cs = t.column("speed_mps"), cb = t.column("bearing_deg");
  std::vector<ProbeRow> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto ctx = source + ":" + std::to_string(t.line_numbers[r]);
    const auto& row = t.rows[r];
    if (row[cv].empty()) throw InputError(ctx + ": empty vehicle id");
    ProbeRow p;
    p.vehicle = row[cv];
    p.probe.t = parse_double(row[ct], ctx);
    p.probe.lon = parse_double(row[cx], ctx);
    p.probe.lat = parse_double(row[cy], ctx);
    p.probe.speed = parse_double(row[cs], ctx);
    p.probe.bearing = parse_double(row[cb], ctx);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Trajectory> group_trajectories(std::vector<ProbeRow> rows, double trip_gap) {
  std::map<std::string, std::vector<Probe>> by_vehicle;
  for (auto& r : rows) by_vehicle[r.vehicle].push_back(r.probe);
  std::vector<Trajectory> out;
  for (auto& [vehicle, probes] : by_vehicle) {
    std::stable_sort(probes.begin(), probes.end(), [](const Probe& a, const Probe& b) { return a.t < b.t; });
    std::vector<Probe> current;
    int trip = 0;
    auto flush = [&] {
      if (current.empty()) return;
      out.push_back(make_trajectory(vehicle + "-" + std::to_string(trip++), vehicle, std::move(current)));
      current.clear();
    };
    for (const auto& p : probes) {
      if (!current.empty() && p.t - current.back().t > trip_gap) flush();
      current.push_back(p);
    }
    flush();
  }
  std::sort(out.begin(), out.end(), [](const Trajectory& a, const Trajectory& b) {
    return a.t0() != b.t0() ? a.t0() < b.t0() : a.id < b.id;
  });
  return out;
}

std::vector<Trajectory> read_trajectories(const std::string& path, double trip_gap) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return group_trajectories(read_probe_rows(in, path), trip_gap);
}

void write_probes_header(std::ostream& out) { out << "vehicle_id,timestamp,lon,lat,speed_mps,bearing_deg\n"; }

void write_probes(std::ostream& out, const Trajectory& traj) {
  for (const auto& p : traj.probes)
    out << traj.vehicle << ',' << format_double(p.t) << ',' << format_fixed(p.lon, 9) << ',' << format_fixed(p.lat, 9)
        << ',' << format_fixed(p.speed, 3) << ',' << format_fixed(p.bearing, 3) << '\n';
}

}  // namespace pcamm
