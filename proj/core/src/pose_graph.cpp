#include "gcvd/pose_graph.hpp"

#include <Eigen/Cholesky>
#include <cstdio>
#include <map>
#include <queue>
#include <sstream>

#include "gcvd/error.hpp"
#include "gcvd/rasters_io.hpp"

namespace gcvd {

void PoseGraph::validate() const {
  const int n = static_cast<int>(vertices.size());
  if (n == 0) throw DataError("pose graph has no vertices");
  if (anchor < 0 || anchor >= n) throw DataError("pose graph anchor out of range");
  std::vector<std::vector<int>> adjacency(n);
  for (const auto& e : edges) {
    if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n || e.i == e.j) {
      throw DataError("pose graph edge has invalid endpoints");
    }
    if ((e.information.array() <= 0.0).any()) {
      throw DataError("pose graph edge has non-positive weight");
    }
    adjacency[e.i].push_back(e.j);
    adjacency[e.j].push_back(e.i);
  }
  std::vector<bool> seen(n, false);
  std::queue<int> queue;
  queue.push(anchor);
  seen[anchor] = true;
  int reached = 1;
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop();
    for (int u : adjacency[v]) {
      if (!seen[u]) {
        seen[u] = true;
        ++reached;
        queue.push(u);
      }
    }
  }
  if (reached != n) throw DataError("pose graph is disconnected");
}

std::size_t PoseGraph::sequential_edge_count() const {
  std::size_t n = 0;
  for (const auto& e : edges) n += e.sequential ? 1 : 0;
  return n;
}

std::size_t PoseGraph::covisible_edge_count() const {
  return edges.size() - sequential_edge_count();
}

PoseGraph build_pose_graph(int keyframe_count, const std::vector<int>& tau_set,
                           const std::vector<std::pair<int, int>>& covisible_pairs,
                           const std::vector<Pose>& initial_poses,
                           const std::vector<RelativeMeasurement>& measurements) {
  if (static_cast<int>(initial_poses.size()) != keyframe_count) {
    throw DataError("build_pose_graph: one initial pose per keyframe required");
  }
  std::map<std::pair<int, int>, Pose> lookup;
  for (const auto& m : measurements) lookup[{m.i, m.j}] = m.measurement;
  auto find = [&](int i, int j) -> Pose {
    auto it = lookup.find({i, j});
    if (it != lookup.end()) return it->second;
    auto rev = lookup.find({j, i});
    if (rev != lookup.end()) return rev->second.inverse();
    throw DataError("build_pose_graph: missing relative pose for edge (" +
                    std::to_string(i) + ", " + std::to_string(j) + ")");
  };

  PoseGraph graph;
  graph.vertices = initial_poses;
  graph.anchor = 0;
  for (int tau : tau_set) {
    for (int i = 0; i + tau < keyframe_count; ++i) {
      PoseGraphEdge e;
      e.i = i;
      e.j = i + tau;
      e.measurement = find(e.i, e.j);
      e.information = Vec6::Constant(1.0 / tau);
      e.sequential = true;
      graph.edges.push_back(e);
    }
  }
  for (const auto& [i, j] : covisible_pairs) {
    PoseGraphEdge e;
    e.i = i;
    e.j = j;
    e.measurement = find(i, j);
    e.information = Vec6::Ones();
    e.sequential = false;
    graph.edges.push_back(e);
  }
  graph.validate();
  return graph;
}

Vec6 edge_residual(const PoseGraphEdge& edge, const Pose& pose_i, const Pose& pose_j) {
  return se3_log(edge.measurement.inverse() * pose_j * pose_i.inverse());
}

double graph_cost(const PoseGraph& graph, const std::vector<Pose>& poses) {
  double cost = 0.0;
  for (const auto& e : graph.edges) {
    const Vec6 r = edge_residual(e, poses[e.i], poses[e.j]);
    cost += r.dot(e.information.cwiseProduct(r));
  }
  return cost;
}

PoseGraphResult optimize_pose_graph(const PoseGraph& graph, int max_iterations) {
  graph.validate();
  const int n = static_cast<int>(graph.vertices.size());
  // Column offset of each free vertex; -1 for the anchor.
  std::vector<int> column(n, -1);
  int dim = 0;
  for (int v = 0; v < n; ++v) {
    if (v == graph.anchor) continue;
    column[v] = dim;
    dim += 6;
  }

  PoseGraphResult result;
  result.poses = graph.vertices;
  result.initial_cost = graph_cost(graph, result.poses);
  result.final_cost = result.initial_cost;
  result.cost_history.push_back(result.initial_cost);
  if (dim == 0 || max_iterations == 0) return result;

  double lambda = 1e-4;
  double cost = result.initial_cost;
  for (int iter = 0; iter < max_iterations; ++iter) {
    // Residuals at round-off level: consistent measurements, nothing to do.
    if (cost < 1e-24 * static_cast<double>(graph.edges.size())) break;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    for (const auto& e : graph.edges) {
      const Pose& ti = result.poses[e.i];
      const Pose& tj = result.poses[e.j];
      const Pose err = e.measurement.inverse() * tj * ti.inverse();
      const Vec6 r = se3_log(err);
      const Mat6 jl_inv = se3_left_jacobian(r).inverse();
      const Mat6 jj = jl_inv * se3_adjoint(e.measurement.inverse());
      const Mat6 ji = -jl_inv * se3_adjoint(err);
      const Mat6 w = e.information.asDiagonal();
      const int ci = column[e.i];
      const int cj = column[e.j];
      if (ci >= 0) {
        h.block<6, 6>(ci, ci) += ji.transpose() * w * ji;
        g.segment<6>(ci) += ji.transpose() * w * r;
      }
      if (cj >= 0) {
        h.block<6, 6>(cj, cj) += jj.transpose() * w * jj;
        g.segment<6>(cj) += jj.transpose() * w * r;
      }
      if (ci >= 0 && cj >= 0) {
        const Mat6 hij = ji.transpose() * w * jj;
        h.block<6, 6>(ci, cj) += hij;
        h.block<6, 6>(cj, ci) += hij.transpose();
      }
    }

    bool accepted = false;
    bool solve_failed = false;
    while (!accepted) {
      Eigen::MatrixXd damped = h;
      for (int d = 0; d < dim; ++d) damped(d, d) += lambda * (h(d, d) + 1e-12);
      Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
      Eigen::VectorXd delta;
      bool ok = ldlt.info() == Eigen::Success;
      if (ok) {
        delta = -ldlt.solve(g);
        ok = delta.allFinite();
      }
      solve_failed = !ok;
      if (ok) {
        std::vector<Pose> trial = result.poses;
        for (int v = 0; v < n; ++v) {
          if (column[v] < 0) continue;
          trial[v] = se3_exp(delta.segment<6>(column[v])) * trial[v];
        }
        double trial_cost = 0.0;
        try {
          trial_cost = graph_cost(graph, trial);
        } catch (const NumericalError&) {
          trial_cost = std::numeric_limits<double>::infinity();
        }
        if (trial_cost < cost) {
          const double decrease = (cost - trial_cost) / std::max(cost, 1e-300);
          result.poses = std::move(trial);
          cost = trial_cost;
          result.cost_history.push_back(cost);
          lambda = std::max(lambda * 0.5, 1e-12);
          accepted = true;
          result.iterations = iter + 1;
          if (decrease < 1e-9) {
            result.final_cost = cost;
            return result;
          }
          break;
        }
      }
      lambda *= 10.0;
      if (lambda > 1e8) {
        if (solve_failed) throw NumericalError("LM diverged");
        // No further decrease is attainable: converged.
        result.final_cost = cost;
        return result;
      }
    }
  }
  result.final_cost = cost;
  return result;
}

std::string format_pose_graph(const PoseGraph& graph) {
  std::string out;
  char buf[64];
  for (const auto& e : graph.edges) {
    out += std::to_string(e.i) + " " + std::to_string(e.j);
    const Eigen::Matrix4d m = e.measurement.matrix();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        std::snprintf(buf, sizeof(buf), " %.17g", m(r, c) + 0.0);
        out += buf;
      }
    }
    for (int d = 0; d < 6; ++d) {
      std::snprintf(buf, sizeof(buf), " %.17g", e.information[d]);
      out += buf;
    }
    out += e.sequential ? " sequential\n" : " covisible\n";
  }
  return out;
}

void write_pose_graph(const PoseGraph& graph, const std::filesystem::path& path) {
  write_text_file(format_pose_graph(graph), path);
}

std::vector<PoseGraphEdge> parse_pose_graph_edges(const std::string& text) {
  std::vector<PoseGraphEdge> edges;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    PoseGraphEdge e;
    Eigen::Matrix<double, 3, 4> m;
    std::string kind;
    fields >> e.i >> e.j;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) fields >> m(r, c);
    for (int d = 0; d < 6; ++d) fields >> e.information[d];
    fields >> kind;
    if (!fields) throw DataError("pose graph line " + std::to_string(line_no) + ": malformed");
    e.measurement = Pose(Mat3(m.leftCols<3>()), Vec3(m.col(3)));
    e.sequential = kind != "covisible";
    edges.push_back(e);
  }
  return edges;
}

}  // namespace gcvd
