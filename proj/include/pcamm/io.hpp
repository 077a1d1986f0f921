#pragma once

#include "pcamm/road_graph.hpp"
#include "pcamm/trajectory.hpp"

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace pcamm {

/// Rows of a comma separated file. The header row is required and checked
/// against `required` (prefix match; extra optional columns allowed).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;

  std::size_t column(std::string_view name) const;  // npos when absent
};

CsvTable read_csv(std::istream& in, const std::vector<std::string>& required, const std::string& source);
CsvTable read_csv_file(const std::string& path, const std::vector<std::string>& required);

std::vector<std::string> split(std::string_view s, char delim);
std::string trim(std::string_view s);

double parse_double(const std::string& s, const std::string& context);
std::int64_t parse_int(const std::string& s, const std::string& context);

/// Shortest round-trippable decimal rendering ("%.17g" trimmed to what is needed).
std::string format_double(double x);
/// Fixed number of decimals.
std::string format_fixed(double x, int decimals);

std::vector<NodeRecord> read_nodes(std::istream& in, const std::string& source = "nodes");
std::vector<LinkRecord> read_links(std::istream& in, const std::string& source = "links");
RoadNetwork read_network(const std::string& nodes_path, const std::string& links_path, double split_length);

void write_nodes(std::ostream& out, const RoadNetwork& net);
void write_links(std::ostream& out, const RoadNetwork& net);

struct ProbeRow {
  std::string vehicle;
  Probe probe;
};

std::vector<ProbeRow> read_probe_rows(std::istream& in, const std::string& source = "probes");

/// Groups probe rows into trips: per vehicle, ordered by time, split where
/// the gap exceeds `trip_gap` seconds. Trip ids are `<vehicle>-<n>` with n
/// counting from 0 in time order. Output is sorted by (t0, id).
std::vector<Trajectory> group_trajectories(std::vector<ProbeRow> rows, double trip_gap);
std::vector<Trajectory> read_trajectories(const std::string& path, double trip_gap);

void write_probes_header(std::ostream& out);
void write_probes(std::ostream& out, const Trajectory& traj);

}  // namespace pcamm
