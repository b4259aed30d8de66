#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "gcvd/geometry.hpp"
#include "gcvd/image.hpp"
#include "gcvd/run_config.hpp"

namespace gcvd {

// D = exp(a + b * n + upsample(mesh)). An empty mesh means zero offsets.
struct DepthParams {
  double a = 0.0;
  double b = 1.0;
  Eigen::MatrixXd mesh;  // rows = grid height, cols = grid width
};

struct FrameVariables {
  DepthParams depth;
  Twist xi = Twist::Zero();
  Pose base;  // P0; realised pose is exp(xi) * P0

  Pose pose() const { return se3_exp(xi) * base; }
};

struct FrameGradient {
  double a = 0.0;
  double b = 0.0;
  Eigen::MatrixXd mesh;
  Vec6 xi = Vec6::Zero();
};

// (grid width, grid height): the long side gets `long_side` vertices, the
// short side round((long_side - 1) * short / long) + 1.
std::pair<int, int> mesh_grid_size(int width, int height, int long_side);

// Vertices span [0, W-1] x [0, H-1]; separable bilinear interpolation.
ImageD upsample_mesh(const Eigen::MatrixXd& mesh, int width, int height);
Eigen::MatrixXd upsample_mesh_adjoint(const ImageD& pixel_grad, int grid_w, int grid_h);

DepthMap depth_from_params(const ImageD& normalized_prior, const DepthParams& params,
                           bool use_mesh = true);

// 1 where the pixels nearest to a vertex are less than half static.
std::vector<std::uint8_t> dynamic_vertices(const Mask& static_mask, int grid_w, int grid_h);

struct LossValue {
  double value = 0.0;
  std::size_t count = 0;  // pixels (or pairs) averaged over; 0 flags an empty set
};

// Mean over valid & static pixels of |I_b(x_b) - I_a| + (1 - SSIM) / 2.
LossValue photometric_loss(const ImageD& image_a, const ImageD& image_b, const DepthMap& depth_a,
                           const Pose& pose_a, const Pose& pose_b, const Intrinsics& k,
                           const Mask& static_a);
// Mean over pixels valid in both masks of the L1 norm of the difference.
LossValue flow_loss(const FlowField& rigid, const Mask& rigid_valid, const FlowField& observed,
                    const Mask& observed_valid);
// Mean over projection-valid pixels of |d_b - D_b(x_b)| / (d_b + D_b(x_b)).
LossValue depth_consistency_loss(const DepthMap& depth_a, const DepthMap& depth_b,
                                 const Pose& pose_a, const Pose& pose_b, const Intrinsics& k);
// Sum over three area-downsampled scales of the mean (1 - cos)^2 between
// forward-difference gradients.
double depth_gradient_loss(const DepthMap& depth, const DepthMap& prior);
double deform_regularizer(const Eigen::MatrixXd& mesh, const std::vector<std::uint8_t>& dynamic,
                          double dynamic_weight);

inline constexpr int kGradientScales = 3;

struct LossFrame {
  ImageD image;
  ImageD normalized_prior;
  DepthMap prior_depth;
  Mask static_mask;
  // Forward-difference gradients of the prior per scale (2 channels).
  std::array<ImageD, kGradientScales> prior_gradients;
  std::vector<std::uint8_t> dynamic_vertex;
};

LossFrame make_loss_frame(ImageD image, ImageD normalized_prior, DepthMap prior_depth,
                          Mask static_mask, int grid_w, int grid_h);

struct LossPair {
  int a = 0;
  int b = 0;
  double weight = 1.0;
  bool adjacent = false;
  // Observed flows and their forward-backward validity (only read when adjacent).
  FlowField flow_ab;
  FlowField flow_ba;
  Mask flow_valid_ab;
  Mask flow_valid_ba;
};

struct LossProblem {
  Intrinsics k;
  std::vector<LossFrame> frames;
  std::vector<LossPair> pairs;
  std::vector<int> regularized_frames;  // frames whose unary terms are counted
  LossWeights weights;
  double dynamic_pair_weight = 4.0;
  bool use_mesh = true;
  int threads = 1;
};

// Weighted contributions; total() is their sum.
struct LossBreakdown {
  double photometric = 0.0;
  double flow = 0.0;
  double consistency = 0.0;
  double gradient = 0.0;
  double deform = 0.0;
  int empty_sets = 0;

  double total() const { return photometric + flow + consistency + gradient + deform; }
};

// Total objective over the problem's pairs (both directions) and regularised
// frames. When `gradients` is non-null it is resized to one entry per frame
// and filled with the analytic gradient. `signature` receives a hash of every
// discrete branch taken (bilinear cells, validity, signs, skips) so callers
// can detect non-differentiable neighbourhoods.
double evaluate_loss(const LossProblem& problem, const std::vector<FrameVariables>& vars,
                     LossBreakdown* breakdown = nullptr,
                     std::vector<FrameGradient>* gradients = nullptr,
                     std::uint64_t* signature = nullptr);

}  // namespace gcvd
