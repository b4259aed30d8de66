#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gcvd/geometry.hpp"

namespace gcvd {

// Edge between keyframe vertices i and j. The measurement is the relative
// transform from frame i to frame j in world-to-camera storage:
// Z_ij = P_j * P_i^-1.
struct PoseGraphEdge {
  int i = 0;
  int j = 0;
  Pose measurement;
  Vec6 information = Vec6::Ones();  // diagonal of the 6x6 weight
  bool sequential = true;
};

struct PoseGraph {
  std::vector<Pose> vertices;  // world-to-camera keyframe poses
  std::vector<PoseGraphEdge> edges;
  int anchor = 0;

  // Throws DataError for bad endpoints, non-positive weights or a graph that
  // is not connected to the anchor.
  void validate() const;

  std::size_t sequential_edge_count() const;
  std::size_t covisible_edge_count() const;
};

struct RelativeMeasurement {
  int i = 0;
  int j = 0;
  Pose measurement;  // Z_ij
};

// Sequential edges (i, i + tau) for every tau in tau_set with weight 1/tau on
// all six diagonal entries, plus co-visible edges with identity weight.
// `measurements` must cover every sequential edge and accepted pair; the
// anchor is vertex 0.
PoseGraph build_pose_graph(int keyframe_count, const std::vector<int>& tau_set,
                           const std::vector<std::pair<int, int>>& covisible_pairs,
                           const std::vector<Pose>& initial_poses,
                           const std::vector<RelativeMeasurement>& measurements);

// r = log(Z^-1 * T_j * T_i^-1)
Vec6 edge_residual(const PoseGraphEdge& edge, const Pose& pose_i, const Pose& pose_j);

double graph_cost(const PoseGraph& graph, const std::vector<Pose>& poses);

struct PoseGraphResult {
  std::vector<Pose> poses;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  std::vector<double> cost_history;  // after every accepted step, starting with the initial cost
};

// Levenberg-Marquardt over all non-anchor vertices with left-multiplicative
// twist updates. Throws NumericalError("LM diverged") if the damped normal
// equations keep failing to solve until the damping exceeds 1e8.
PoseGraphResult optimize_pose_graph(const PoseGraph& graph, int max_iterations = 100);

// One edge per line: "i j" + 12 numbers of the 3x4 measurement matrix
// (row-major) + 6 diagonal weights.
std::string format_pose_graph(const PoseGraph& graph);
void write_pose_graph(const PoseGraph& graph, const std::filesystem::path& path);
// Reads the edge dump back; vertices are left empty.
std::vector<PoseGraphEdge> parse_pose_graph_edges(const std::string& text);

}  // namespace gcvd
