#pragma once

#include <vector>

#include "gcvd/geometry.hpp"
#include "gcvd/image.hpp"

namespace gcvd {

struct ChainedFlow {
  FlowField flow;  // (dx, dy) from frame i to frame t
  Mask valid;
};

// Adjacent flows of a video: forward[t] maps t -> t+1 (size N-1), backward[t]
// maps t -> t-1 (backward[0] unused, may be empty).
struct AdjacentFlows {
  std::vector<FlowField> forward;
  std::vector<FlowField> backward;
};

// F_{i->t}, composed one frame at a time:
//   F_{i->t'+1}(x) = F_{i->t'}(x) + F^{t'}_{t'+1}(x + F_{i->t'}(x))
// Identity when i == t. A pixel stays valid only while every intermediate
// lookup is inside the bilinear support.
ChainedFlow chain_flow(const AdjacentFlows& flows, int i, int t);

// ||F_{i->t}(x) + F_{t->i}(x + F_{i->t}(x))||; +inf where either chain is
// invalid or the lookup leaves the image.
ImageD fb_inconsistency(const ChainedFlow& forward, const ChainedFlow& backward);

struct FilterParams {
  int span = 4;             // Omega
  double gamma_depth = 2.0; // gamma_1
  double gamma_flow = 0.1;  // gamma_2
};

// Weighted temporal filter of depth t using neighbours t-span..t+span clipped
// to the video. Each neighbour depth is sampled through the chained flow,
// lifted into 3D with its pose and re-expressed as a depth in frame t; the
// weight is exp(-g1 * max/min depth ratio - g2 * fb inconsistency),
// normalised per pixel.
DepthMap filter_depth(int t, const std::vector<DepthMap>& depths,
                      const std::vector<Pose>& poses, const Intrinsics& k,
                      const AdjacentFlows& flows, const FilterParams& params);

}  // namespace gcvd
