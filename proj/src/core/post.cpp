#include "core/post.hpp"

#include <array>
#include <cmath>
#include <numeric>

namespace voxpipe {

MaskVolume binarize(const Volume& prob, double threshold) {
  prob.validate();
  MaskVolume out;
  out.dims = prob.dims;
  out.spacing = prob.spacing;
  out.data.resize(prob.data.size());
  const float t = static_cast<float>(threshold);
  for (size_t i = 0; i < prob.data.size(); ++i) {
    out.data[i] = prob.data[i] >= t ? 1 : 0;
  }
  return out;
}

namespace {

struct Offset {
  int dz, dy, dx;
};

// Prior neighbors in (z, y, x) scan order for the given connectivity.
std::vector<Offset> prior_neighbors(int connectivity) {
  std::vector<Offset> out;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dz == 0 && dy == 0 && dx == 0) continue;
        int manhattan = std::abs(dz) + std::abs(dy) + std::abs(dx);
        if (connectivity == 6 && manhattan > 1) continue;
        if (connectivity == 18 && manhattan > 2) continue;
        bool prior = dz < 0 || (dz == 0 && (dy < 0 || (dy == 0 && dx < 0)));
        if (prior) out.push_back({dz, dy, dx});
      }
    }
  }
  return out;
}

int32_t uf_find(std::vector<int32_t>& parent, int32_t a) {
  while (parent[static_cast<size_t>(a)] != a) {
    parent[static_cast<size_t>(a)] = parent[static_cast<size_t>(parent[static_cast<size_t>(a)])];
    a = parent[static_cast<size_t>(a)];
  }
  return a;
}

void uf_union(std::vector<int32_t>& parent, int32_t a, int32_t b) {
  a = uf_find(parent, a);
  b = uf_find(parent, b);
  if (a == b) return;
  if (a < b) parent[static_cast<size_t>(b)] = a;  // keep the earlier label as root
  else parent[static_cast<size_t>(a)] = b;
}

}  // namespace

CcResult connected_components(const MaskVolume& m, int connectivity) {
  m.validate();
  if (connectivity != 6 && connectivity != 18 && connectivity != 26) {
    throw ConfigError("connectivity must be 6, 18 or 26");
  }
  const auto& d = m.dims;
  auto nbrs = prior_neighbors(connectivity);

  CcResult r;
  r.labels.assign(m.data.size(), 0);
  std::vector<int32_t> parent{0};  // provisional labels, index 0 unused

  for (int64_t z = 0; z < d.z; ++z) {
    for (int64_t y = 0; y < d.y; ++y) {
      for (int64_t x = 0; x < d.x; ++x) {
        int64_t idx = voxel_index(d, x, y, z);
        if (!m.data[static_cast<size_t>(idx)]) continue;
        int32_t label = 0;
        for (const auto& o : nbrs) {
          int64_t nz = z + o.dz, ny = y + o.dy, nx = x + o.dx;
          if (nz < 0 || ny < 0 || nx < 0 || ny >= d.y || nx >= d.x) continue;
          int32_t nl = r.labels[static_cast<size_t>(voxel_index(d, nx, ny, nz))];
          if (nl == 0) continue;
          if (label == 0) label = nl;
          else uf_union(parent, label, nl);
        }
        if (label == 0) {
          label = static_cast<int32_t>(parent.size());
          parent.push_back(label);
        }
        r.labels[static_cast<size_t>(idx)] = label;
      }
    }
  }

  // Flatten and renumber roots 1..K by first appearance in scan order.
  std::vector<int32_t> remap(parent.size(), 0);
  int32_t next = 0;
  for (size_t i = 0; i < r.labels.size(); ++i) {
    int32_t l = r.labels[i];
    if (l == 0) continue;
    int32_t root = uf_find(parent, l);
    if (remap[static_cast<size_t>(root)] == 0) remap[static_cast<size_t>(root)] = ++next;
    r.labels[i] = remap[static_cast<size_t>(root)];
  }
  r.count = next;
  r.sizes.assign(static_cast<size_t>(next), 0);
  for (int32_t l : r.labels) {
    if (l > 0) ++r.sizes[static_cast<size_t>(l - 1)];
  }
  return r;
}

MaskVolume remove_small(const MaskVolume& m, double min_fraction,
                        int connectivity, RemoveSmallReport* report) {
  if (min_fraction < 0.0 || min_fraction > 1.0) {
    throw ConfigError("min_fraction must be within [0, 1]");
  }
  CcResult cc = connected_components(m, connectivity);
  int64_t total = std::accumulate(cc.sizes.begin(), cc.sizes.end(), int64_t{0});
  double cutoff = min_fraction * static_cast<double>(total);

  std::vector<uint8_t> keep(cc.sizes.size(), 1);
  RemoveSmallReport rep;
  rep.total_before = total;
  for (size_t k = 0; k < cc.sizes.size(); ++k) {
    if (static_cast<double>(cc.sizes[k]) < cutoff) {
      keep[k] = 0;
      rep.removed_voxels += cc.sizes[k];
      ++rep.removed_components;
    }
  }

  MaskVolume out = m;
  for (size_t i = 0; i < out.data.size(); ++i) {
    int32_t l = cc.labels[i];
    if (l > 0 && !keep[static_cast<size_t>(l - 1)]) out.data[i] = 0;
  }
  if (report) *report = rep;
  return out;
}

}  // namespace voxpipe
