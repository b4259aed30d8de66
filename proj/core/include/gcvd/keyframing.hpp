#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "gcvd/image.hpp"

namespace gcvd {

struct KeyframeSet {
  std::vector<int> indices;               // strictly increasing, starts at 0
  std::vector<double> step_magnitudes;    // per adjacent pair (t, t+1)
  std::vector<double> accumulation;       // running sum at each frame
};

// (1/|M|) sum_{x in M} ||F(x)|| / long_side. Throws DataError("no static
// pixels") for an empty mask.
double mean_static_flow_magnitude(const FlowField& flow, const Mask& mask, int long_side);

// Frame 0 is always a keyframe. Scanning forward, frame t becomes a keyframe
// once the magnitudes accumulated since the last keyframe reach the threshold;
// the last frame is appended if not selected. `frame_count` must equal
// step_magnitudes.size() + 1.
KeyframeSet select_keyframes(const std::vector<double>& step_magnitudes, double threshold);

// `count` evenly spaced keyframes including the first and last frame.
std::vector<int> uniform_keyframes(int frame_count, int count);

inline constexpr int kDescriptorGrid = 16;

// 16x16 area-averaged thumbnail, mean-subtracted and L2-normalised. A
// constant image maps to e_1.
Eigen::VectorXd image_descriptor(const ImageD& image);

// A_ij = <d_i, d_j>.
Eigen::MatrixXd similarity_matrix(const std::vector<Eigen::VectorXd>& descriptors);

struct CandidatePair {
  int i = 0;
  int j = 0;
  double similarity = 0.0;
};

// Pairs (i < j) with j - i > gap and symmetrised similarity >= threshold that
// are the maximum of their window x window neighbourhood among admissible
// entries. Equal values are resolved toward the lexicographically smaller
// pair.
std::vector<CandidatePair> associate_candidates(const Eigen::MatrixXd& similarity,
                                                double threshold, int gap,
                                                int window = 3);

struct PairVerification {
  bool accepted = false;
  double fb_inlier_ratio = 0.0;
  double mean_flow = 0.0;
  std::string reason;
};

// Gate (a): fraction of static pixels of i whose forward-backward error is
// within fb_epsilon is at least min_inlier_ratio. Gate (b): mean static flow
// magnitude of flow_ij is at most the keyframe threshold.
PairVerification verify_pair(const FlowField& flow_ij, const FlowField& flow_ji,
                             const Mask& mask_i, double keyframe_threshold,
                             int long_side, double fb_epsilon,
                             double min_inlier_ratio);

// ||F_ab(x) + F_ba(x + F_ab(x))||, or +inf where the lookup leaves the image.
ImageD forward_backward_error(const FlowField& flow_ab, const FlowField& flow_ba);

}  // namespace gcvd
