#include "gcvd/flow_provider.hpp"

#include "gcvd/error.hpp"
#include "gcvd/synth_oracle.hpp"

namespace gcvd {

PairFlow OracleFlowProvider::flow(int i, int j) const {
  FlowField f = scene_.flow(i, j);
  Mask valid(f.width(), f.height(), 1, 1);
  return {std::move(f), std::move(valid)};
}

PairFlow FileFlowProvider::flow(int i, int j) const {
  const auto path = layout_.pair_flow(i, j);
  if (std::filesystem::exists(path)) {
    const Raster r = read_raster(path);
    if (r.channels() != 2) throw DataError("pair flow " + path.string() + " must have 2 channels");
    FlowField f = image_cast<double>(r);
    Mask valid(f.width(), f.height(), 1, 1);
    return {std::move(f), std::move(valid)};
  }
  const int n = static_cast<int>(adjacent_.forward.size()) + 1;
  if (i < 0 || j < 0 || i >= n || j >= n || adjacent_.forward.empty()) {
    throw DataError("flow provider miss for pair (" + std::to_string(i) + ", " +
                    std::to_string(j) + ")");
  }
  if (j == i + 1) {
    const FlowField& f = adjacent_.forward[i];
    return {f, Mask(f.width(), f.height(), 1, 1)};
  }
  if (j == i - 1 && !adjacent_.backward[i].empty()) {
    const FlowField& f = adjacent_.backward[i];
    return {f, Mask(f.width(), f.height(), 1, 1)};
  }
  ChainedFlow chained = chain_flow(adjacent_, i, j);
  return {std::move(chained.flow), std::move(chained.valid)};
}

}  // namespace gcvd
