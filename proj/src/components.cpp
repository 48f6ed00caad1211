#include <algorithm>
#include <array>
#include <cstdlib>
#include <vector>

#include "mclab/error.hpp"
#include "mclab/lesion_eval.hpp"

namespace mclab {

namespace {

std::vector<std::array<int, 3>> neighbour_offsets(int connectivity) {
  std::vector<std::array<int, 3>> offs;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (manhattan == 0) continue;
        if (connectivity == 6 && manhattan > 1) continue;
        if (connectivity == 18 && manhattan > 2) continue;
        offs.push_back({dx, dy, dz});
      }
  return offs;
}

}  // namespace

ComponentMap connected_components(const Volume& mask, int connectivity) {
  if (connectivity != 6 && connectivity != 18 && connectivity != 26) {
    throw Error(ErrorCode::Config, "connectivity must be 6, 18 or 26");
  }
  const Dims d = mask.dims();
  ComponentMap cm;
  cm.dims = d;
  cm.spacing = mask.spacing();
  cm.labels.assign(d.count(), 0);
  const auto m = mask.mask_values();
  const auto offs = neighbour_offsets(connectivity);

  std::vector<std::size_t> stack;
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) {
        const std::size_t seed = mask.index(x, y, z);
        if (!m[seed] || cm.labels[seed] != 0) continue;
        const int id = ++cm.count;
        std::vector<std::size_t> voxels;
        cm.labels[seed] = id;
        stack.push_back(seed);
        while (!stack.empty()) {
          const std::size_t cur = stack.back();
          stack.pop_back();
          voxels.push_back(cur);
          const int cx = static_cast<int>(cur % d.x);
          const int cy = static_cast<int>((cur / d.x) % d.y);
          const int cz = static_cast<int>(cur / (static_cast<std::size_t>(d.x) * d.y));
          for (const auto& o : offs) {
            const int nx = cx + o[0], ny = cy + o[1], nz = cz + o[2];
            if (!mask.contains(nx, ny, nz)) continue;
            const std::size_t ni = mask.index(nx, ny, nz);
            if (m[ni] && cm.labels[ni] == 0) {
              cm.labels[ni] = id;
              stack.push_back(ni);
            }
          }
        }
        std::sort(voxels.begin(), voxels.end());
        cm.voxel_lists.push_back(std::move(voxels));
      }
  return cm;
}

}  // namespace mclab
