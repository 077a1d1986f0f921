#include "pcamm/io.hpp"
#include "pcamm/road_graph.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

using namespace pcamm;
using pcamm::test::NetBuilder;

TEST(SplitLink, CeilingRule) {
  EXPECT_EQ(split_link_lengths(130.0, 50.0), (std::vector<double>{50.0, 50.0, 30.0}));
  EXPECT_EQ(split_link_lengths(50.0, 50.0), (std::vector<double>{50.0}));
  EXPECT_EQ(split_link_lengths(20.0, 50.0), (std::vector<double>{20.0}));
}

TEST(SplitLink, TinyTrailingPieceMerges) {
  const auto e = split_link_lengths(100.0005, 50.0);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_DOUBLE_EQ(e[1], 50.0005);
}

TEST(SplitLink, EdgesCoverLinkExactly) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> len(0.5, 2000.0);
  for (int i = 0; i < 500; ++i) {
    const double L = len(rng);
    const auto e = split_link_lengths(L, 50.0);
    EXPECT_NEAR(std::accumulate(e.begin(), e.end(), 0.0), L, 1e-9);
    for (std::size_t k = 0; k + 1 < e.size(); ++k) EXPECT_EQ(e[k], 50.0);
    EXPECT_GT(e.back(), 0.0);
    EXPECT_LE(e.back(), 50.0 + 1e-3);
    EXPECT_EQ(e.size(), static_cast<std::size_t>(std::ceil(L / 50.0 - 1e-3 / 50.0)));
  }
}

TEST(LoadNetwork, EdgesAndGeometry) {
  NetBuilder b;
  const auto a = b.node(0, 0), c = b.node(130, 0);
  b.link(a, c);
  const auto net = b.build();
  const Link& l = net.link(1);
  EXPECT_NEAR(l.length, 130.0, 0.01);
  ASSERT_EQ(l.edge_count(), 3);
  EXPECT_DOUBLE_EQ(l.edge(1).length, 50.0);
  EXPECT_NEAR(l.edge(3).length, l.length - 100.0, 1e-9);
  EXPECT_NEAR(l.edge(2).link_offset, 50.0, 1e-12);
  EXPECT_NEAR(l.direction, 0.0, 1e-6);
  EXPECT_NEAR((l.edge(3).end - net.node(c).pos).norm(), 0.0, 1e-9);
  EXPECT_EQ(net.edge_count(), 3u);
}

TEST(LoadNetwork, InputLengthAndBearingWin) {
  NetBuilder b;
  const auto a = b.node(0, 0), c = b.node(100, 0);
  b.link(a, c, 120.0, 45.0);
  b.link(c, a);
  const auto net = b.build();
  EXPECT_DOUBLE_EQ(net.link(1).length, 120.0);
  EXPECT_DOUBLE_EQ(net.link(1).direction, 45.0);
  EXPECT_NEAR(net.link(2).direction, 180.0, 1e-6);
}

TEST(LoadNetwork, RejectsMalformedTables) {
  NetBuilder b;
  const auto a = b.node(0, 0), c = b.node(100, 0);
  auto nodes = b.nodes();
  EXPECT_THROW(load_network(nodes, {{1, a, 99, {}, {}}}, 50.0), InputError);          // dangling
  EXPECT_THROW(load_network(nodes, {{1, a, c, {}, {}}, {1, c, a, {}, {}}}, 50.0), InputError);  // duplicate id
  EXPECT_THROW(load_network(nodes, {{1, a, a, {}, {}}}, 50.0), InputError);           // self loop
  EXPECT_THROW(load_network(nodes, {{1, a, c, -5.0, {}}}, 50.0), InputError);         // non-positive length
  EXPECT_THROW(load_network(nodes, {{1, a, c, {}, {}}}, 0.0), InputError);            // bad delta
  nodes.push_back(nodes.front());
  EXPECT_THROW(load_network(nodes, {{1, a, c, {}, {}}}, 50.0), InputError);           // duplicate node
}

TEST(LoadNetwork, CsvRoundTrip) {
  NetBuilder b;
  const auto a = b.node(0, 0), c = b.node(100, 20), d = b.node(30, 200);
  b.both_ways(a, c);
  b.link(c, d, 250.0);
  const auto net = b.build();
  std::stringstream ns, ls;
  write_nodes(ns, net);
  write_links(ls, net);
  const auto again = load_network(read_nodes(ns), read_links(ls), 50.0);
  ASSERT_EQ(again.links().size(), net.links().size());
  for (std::size_t i = 0; i < net.links().size(); ++i) {
    EXPECT_NEAR(again.link_at(i).length, net.link_at(i).length, 1e-9);
    EXPECT_NEAR(again.link_at(i).direction, net.link_at(i).direction, 1e-9);
  }
}

TEST(LoadNetwork, CsvErrors) {
  std::stringstream missing("node_id,lon\n1,118.0\n");
  EXPECT_THROW(read_nodes(missing), InputError);
  std::stringstream bad("node_id,lon,lat\n1,abc,24.0\n");
  EXPECT_THROW(read_nodes(bad), InputError);
  std::stringstream empty("");
  EXPECT_THROW(read_links(empty), InputError);
}

TEST(Projection, OriginAndMeridianArc) {
  const GeoOrigin o{118.0, 24.5};
  EXPECT_NEAR(project_to_plane(118.0, 24.5, o).norm(), 0.0, 1e-12);
  EXPECT_NEAR(project_to_plane(118.0, 24.501, o).y(), 111.195, 1e-3);
  const GeoOrigin eq{10.0, -60.0};
  EXPECT_NEAR(project_to_plane(10.0, -59.999, eq).y(), 111.195, 1e-3);
}

TEST(Projection, RoundTripWithinTwentyKilometres) {
  const GeoOrigin o{117.65, 24.51};
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10000.0, 10000.0);
  for (int i = 0; i < 1000; ++i) {
    const Point2d p(u(rng), u(rng));
    const auto ll = unproject_from_plane(p, o);
    EXPECT_LT((project_to_plane(ll.x(), ll.y(), o) - p).norm(), 1e-6);
  }
}

TEST(Projection, PointToSegment) {
  const auto r = project_point_to_segment<double>({3, 4}, {0, 0}, {10, 0});
  EXPECT_DOUBLE_EQ(r.point.x(), 3.0);
  EXPECT_DOUBLE_EQ(r.point.y(), 0.0);
  EXPECT_DOUBLE_EQ(r.distance, 4.0);
  EXPECT_DOUBLE_EQ(r.fraction * 10.0, 3.0);
  const auto beyond = project_point_to_segment<double>({14, 3}, {0, 0}, {10, 0});
  EXPECT_DOUBLE_EQ(beyond.fraction, 1.0);
  EXPECT_DOUBLE_EQ(beyond.distance, 5.0);
  const auto on = project_point_to_segment<double>({6, 0}, {0, 0}, {10, 0});
  EXPECT_DOUBLE_EQ(on.distance, 0.0);
  EXPECT_DOUBLE_EQ(on.fraction * 10.0, 6.0);
}

TEST(Bearing, Inclination) {
  EXPECT_DOUBLE_EQ(bearing_inclination(10.0, 10.0), 0.0);
  EXPECT_DOUBLE_EQ(bearing_inclination(350.0, 10.0), 20.0);
  EXPECT_DOUBLE_EQ(bearing_inclination(10.0, 350.0), 20.0);
  EXPECT_DOUBLE_EQ(bearing_inclination(0.0, 180.0), 180.0);
  EXPECT_DOUBLE_EQ(bearing_inclination(-90.0, 630.0), 0.0);
}

TEST(Spectrum, TwoConnectedLinks) {
  NetBuilder b;
  const auto a = b.node(0, 0), c = b.node(100, 0), d = b.node(200, 0);
  b.link(a, c);
  b.link(c, d);
  const auto net = b.build();
  const Eigen::MatrixXd A = net.adjacency();
  EXPECT_EQ(A, (Eigen::MatrixXd(2, 2) << 0, 1, 1, 0).finished());
  EXPECT_EQ(net.laplacian(), (Eigen::MatrixXd(2, 2) << 1, -1, -1, 1).finished());
  const auto& s = net.spectrum();
  EXPECT_NEAR(s.eigenvalues(0), 0.0, 1e-12);
  EXPECT_NEAR(s.eigenvalues(1), 2.0, 1e-12);
  EXPECT_NEAR(s.normalized(0), 0.0, 1e-12);
  EXPECT_NEAR(s.normalized(1), 1.0, 1e-12);
}

TEST(Spectrum, DisconnectedPairHasDoubleZero) {
  NetBuilder b;
  const auto a = b.node(0, 0), c = b.node(100, 0), d = b.node(0, 500), e = b.node(100, 500);
  b.link(a, c);
  b.link(d, e);
  const auto& s = b.build().spectrum();
  EXPECT_NEAR(s.eigenvalues(0), 0.0, 1e-12);
  EXPECT_NEAR(s.eigenvalues(1), 0.0, 1e-12);
}

TEST(Spectrum, RandomNetworkInvariants) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1000.0);
  NetBuilder b;
  for (int i = 0; i < 12; ++i) b.node(u(rng), u(rng));
  std::uniform_int_distribution<int> pick(1, 12);
  std::set<std::pair<int, int>> used;
  while (b.links().size() < 30) {
    const int x = pick(rng), y = pick(rng);
    if (x == y || !used.insert({x, y}).second) continue;
    b.link(x, y);
  }
  const auto net = b.build();
  const Eigen::MatrixXd A = net.adjacency();
  EXPECT_TRUE(A.isApprox(A.transpose()));
  EXPECT_EQ(A.diagonal().cwiseAbs().sum(), 0.0);
  const Eigen::MatrixXd L = net.laplacian();
  EXPECT_LT(L.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);

  // Independent oracle: adjacency from shared endpoints.
  for (std::size_t i = 0; i < net.links().size(); ++i)
    for (std::size_t j = 0; j < net.links().size(); ++j) {
      if (i == j) continue;
      const auto& li = net.link_at(i);
      const auto& lj = net.link_at(j);
      const bool share = li.from == lj.from || li.from == lj.to || li.to == lj.from || li.to == lj.to;
      EXPECT_EQ(A(i, j), share ? 1.0 : 0.0);
    }

  const auto& s = net.spectrum();
  const auto n = s.eigenvectors.cols();
  EXPECT_LT((s.eigenvectors.transpose() * s.eigenvectors - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff(),
            1e-8);
  const Eigen::MatrixXd Lnorm = L / s.max_eigenvalue;
  const Eigen::MatrixXd R = s.eigenvectors * s.normalized.asDiagonal() * s.eigenvectors.transpose();
  EXPECT_LT((R - Lnorm).norm() / Lnorm.norm(), 1e-6);
  EXPECT_GE(s.normalized.minCoeff(), -1e-12);
  EXPECT_NEAR(s.normalized.maxCoeff(), 1.0, 1e-12);
}

TEST(SpatialIndex, NeverMissesAnEdgeWithinRadius) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 3000.0);
  for (int round = 0; round < 5; ++round) {
    NetBuilder b;
    for (int i = 0; i < 40; ++i) b.node(u(rng), u(rng));
    std::uniform_int_distribution<int> pick(1, 40);
    while (b.links().size() < 80) {
      const int x = pick(rng), y = pick(rng);
      if (x != y) b.link(x, y);
    }
    const auto net = b.build();
    for (int q = 0; q < 50; ++q) {
      const Point2d c = net.node(pick(rng)).pos + Point2d(u(rng) / 10 - 150, u(rng) / 10 - 150);
      const double radius = 50.0 + u(rng) / 10;
      const auto hits = net.spatial_index().query_radius(c, radius);
      const std::set<EdgeRef> got(hits.begin(), hits.end());
      for (const auto& l : net.links())
        for (const auto& e : l.edges)
          if (point_segment_distance(c, e.start, e.end) <= radius) EXPECT_TRUE(got.count(e.ref())) << to_string(e.ref());
    }
  }
}
