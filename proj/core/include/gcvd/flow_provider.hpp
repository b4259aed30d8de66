#pragma once

#include <memory>
#include <string>

#include "gcvd/image.hpp"
#include "gcvd/post_filter.hpp"
#include "gcvd/rasters_io.hpp"

namespace gcvd {

class SyntheticScene;

struct PairFlow {
  FlowField flow;  // i -> j
  Mask valid;
};

// Serves dense flow between arbitrary frame pairs.
class FlowProvider {
 public:
  virtual ~FlowProvider() = default;
  virtual PairFlow flow(int i, int j) const = 0;
  virtual std::string name() const = 0;
};

// Exact flows recomputed from a synthetic scene.
class OracleFlowProvider : public FlowProvider {
 public:
  explicit OracleFlowProvider(const SyntheticScene& scene) : scene_(scene) {}
  PairFlow flow(int i, int j) const override;
  std::string name() const override { return "oracle"; }

 private:
  const SyntheticScene& scene_;
};

// Precomputed pair files, then adjacent priors, then chained adjacent flows.
class FileFlowProvider : public FlowProvider {
 public:
  FileFlowProvider(SceneLayout layout, const AdjacentFlows& adjacent)
      : layout_(std::move(layout)), adjacent_(adjacent) {}
  // Throws DataError("flow provider miss") when nothing can serve the pair.
  PairFlow flow(int i, int j) const override;
  std::string name() const override { return "files"; }

 private:
  SceneLayout layout_;
  const AdjacentFlows& adjacent_;
};

}  // namespace gcvd
