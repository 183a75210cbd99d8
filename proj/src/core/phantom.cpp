#include "core/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace voxpipe {

const std::vector<std::string> kPhantomGroups = {"LD", "SD", "CTA", "AN", "ANNC"};
const std::vector<double> kPhantomGroupWeights = {150, 150, 150, 119, 18};

AneurysmSite site_from_string(const std::string& s) {
  if (s == "any") return AneurysmSite::any;
  if (s == "ascending") return AneurysmSite::ascending;
  if (s == "arch") return AneurysmSite::arch;
  if (s == "descending") return AneurysmSite::descending;
  throw ConfigError("unknown aneurysm site: " + s);
}

std::string site_to_string(AneurysmSite s) {
  switch (s) {
    case AneurysmSite::any: return "any";
    case AneurysmSite::ascending: return "ascending";
    case AneurysmSite::arch: return "arch";
    case AneurysmSite::descending: return "descending";
  }
  return "any";
}

namespace {

struct Vec3 {
  double x, y, z;
};

// Centerline sample with local lumen radius.
struct Sample {
  Vec3 p;
  double r_lumen;
};

struct Curve {
  std::vector<Sample> samples;
  double seg1_len, arch_len, seg3_len;  // ascending, arch, descending
  double total_len;
  double max_outer;  // max lumen radius + wall, for rasterizer margins
};

struct CaseDraws {
  int64_t nz;
  double thickness;
  double ratio;
  double extent_mm;
  double site_s_frac;              // position along the eligible interval
  double jitter_amp_x, jitter_amp_y;
  double jitter_freq_x, jitter_freq_y;
  double jitter_phase_x, jitter_phase_y;
  double radius_freq, radius_phase;
};

bool group_has_aneurysm(const std::string& g) { return g == "AN" || g == "ANNC"; }
bool group_has_contrast(const std::string& g) { return g == "CTA" || g == "AN"; }

CaseDraws draw_case(const PhantomConfig& cfg, const std::string& group, Rng& rng) {
  CaseDraws d;
  d.nz = cfg.nz_min + rng.uniform_int(cfg.nz_max - cfg.nz_min + 1);
  d.thickness = rng.uniform(cfg.thickness_min, cfg.thickness_max);
  // Lift the slice thickness when a short stack could not hold the arch,
  // its apex margin and the worst-case bulge.
  double r_worst = (cfg.base_radius_mm * (1.0 + cfg.radius_jitter_frac) + cfg.wall_mm) *
                   std::max(1.0, cfg.aneurysm_ratio_max);
  double z_need = cfg.arch_radius_mm + r_worst + 16.0;
  d.thickness = std::max(d.thickness, z_need / static_cast<double>(d.nz));
  // Every group consumes the ratio draw, so same-seed cases across groups
  // share their geometry and differ only in bulge, contrast and noise.
  double ratio_draw = rng.uniform(cfg.aneurysm_ratio_min, cfg.aneurysm_ratio_max);
  d.ratio = group_has_aneurysm(group) ? ratio_draw : 1.0;
  d.extent_mm = rng.uniform(cfg.aneurysm_extent_mm_min, cfg.aneurysm_extent_mm_max);
  d.site_s_frac = rng.uniform();
  d.jitter_amp_x = rng.uniform(0.0, cfg.jitter_mm);
  d.jitter_amp_y = rng.uniform(0.0, cfg.jitter_mm);
  d.jitter_freq_x = rng.uniform(1.0, 3.0);
  d.jitter_freq_y = rng.uniform(1.0, 3.0);
  d.jitter_phase_x = rng.uniform(0.0, 2.0 * std::numbers::pi);
  d.jitter_phase_y = rng.uniform(0.0, 2.0 * std::numbers::pi);
  d.radius_freq = rng.uniform(1.0, 2.0);
  d.radius_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return d;
}

Curve build_curve(const PhantomConfig& cfg, const CaseDraws& d) {
  const double X = cfg.nx * cfg.spacing_xy;
  const double Z = d.nz * d.thickness;
  const double R = cfg.arch_radius_mm;

  // Worst-case tube reach fixes the apex margin so the arch always fits.
  double r_peak =
      (cfg.base_radius_mm * (1.0 + cfg.radius_jitter_frac) + cfg.wall_mm) * d.ratio;
  double z_arch = Z - R - r_peak - 2.0;
  double z_asc_bot = std::min(0.35 * Z, z_arch - 10.0);
  double z_desc_bot = std::min(0.05 * Z, z_asc_bot);
  if (z_desc_bot < 1.0) z_desc_bot = 1.0;
  if (z_arch - z_asc_bot < 5.0 || z_arch - z_desc_bot < 10.0) {
    throw ConfigError("phantom does not fit: increase nz or shrink arch_radius_mm");
  }

  const double x_c = 0.52 * X;
  const double y_desc = 0.62 * cfg.nx * cfg.spacing_xy;
  const double y_asc = y_desc - 2.0 * R;
  const double y_arch_c = 0.5 * (y_asc + y_desc);

  Curve c;
  c.seg1_len = z_arch - z_asc_bot;
  c.arch_len = std::numbers::pi * R;
  c.seg3_len = z_arch - z_desc_bot;
  c.total_len = c.seg1_len + c.arch_len + c.seg3_len;

  // Aneurysm center restricted to the requested limb, away from the ends.
  double s_lo = 0.10 * c.total_len, s_hi = 0.90 * c.total_len;
  switch (cfg.aneurysm_site) {
    case AneurysmSite::any: break;
    case AneurysmSite::ascending:
      s_lo = 0.10 * c.seg1_len;
      s_hi = 0.80 * c.seg1_len;
      break;
    case AneurysmSite::arch:
      s_lo = c.seg1_len + 0.15 * c.arch_len;
      s_hi = c.seg1_len + 0.85 * c.arch_len;
      break;
    case AneurysmSite::descending:
      s_lo = c.seg1_len + c.arch_len + 0.15 * c.seg3_len;
      s_hi = c.seg1_len + c.arch_len + 0.90 * c.seg3_len;
      break;
  }
  const double s_an = s_lo + d.site_s_frac * (s_hi - s_lo);
  const double sigma_an = d.extent_mm / 6.0;  // +-3 sigma covers the extent

  const double ds = 1.0;
  const int64_t n = static_cast<int64_t>(std::ceil(c.total_len / ds)) + 1;
  c.samples.reserve(static_cast<size_t>(n));
  c.max_outer = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double s = std::min(c.total_len, i * ds);
    Vec3 p;
    if (s <= c.seg1_len) {
      p = {x_c, y_asc, z_asc_bot + s};
    } else if (s <= c.seg1_len + c.arch_len) {
      double theta = (s - c.seg1_len) / R;
      p = {x_c, y_arch_c - R * std::cos(theta), z_arch + R * std::sin(theta)};
    } else {
      double t = s - c.seg1_len - c.arch_len;
      p = {x_c, y_desc, z_arch - t};
    }
    double u = s / c.total_len;
    p.x += d.jitter_amp_x * std::sin(2.0 * std::numbers::pi * d.jitter_freq_x * u + d.jitter_phase_x);
    p.y += d.jitter_amp_y * std::sin(2.0 * std::numbers::pi * d.jitter_freq_y * u + d.jitter_phase_y);

    double r = cfg.base_radius_mm *
               (1.0 + cfg.radius_jitter_frac *
                          std::sin(2.0 * std::numbers::pi * d.radius_freq * u + d.radius_phase));
    if (d.ratio > 1.0) {
      // The ratio dilates the outer vessel diameter (wall included), the
      // quantity clinical aneurysm grading measures.
      double dz = (s - s_an) / sigma_an;
      double factor = 1.0 + (d.ratio - 1.0) * std::exp(-0.5 * dz * dz);
      r = (r + cfg.wall_mm) * factor - cfg.wall_mm;
    }
    c.samples.push_back({p, r});
    c.max_outer = std::max(c.max_outer, r + cfg.wall_mm);
  }
  return c;
}

}  // namespace

CaseRecord make_phantom(const PhantomConfig& cfg, const std::string& group,
                        uint64_t case_seed, const std::string& id) {
  if (std::find(kPhantomGroups.begin(), kPhantomGroups.end(), group) == kPhantomGroups.end()) {
    throw ConfigError("unknown phantom group: " + group);
  }
  if (cfg.nx < 16 || cfg.nz_min < 4 || cfg.nz_max < cfg.nz_min) {
    throw ConfigError("phantom grid config invalid");
  }

  Rng curve_rng = Rng(case_seed).stream(kRngPhantomCurve);
  Rng noise_rng = Rng(case_seed).stream(kRngPhantomNoise);
  CaseDraws draws = draw_case(cfg, group, curve_rng);
  Curve curve = build_curve(cfg, draws);

  const Dims3 dims{cfg.nx, cfg.nx, draws.nz};
  const Spacing3 sp{cfg.spacing_xy, cfg.spacing_xy, draws.thickness};
  const double X = dims.x * sp.x, Y = dims.y * sp.y, Z = dims.z * sp.z;

  Volume hu = make_volume(dims, sp, VolumeKind::raw, static_cast<float>(cfg.tissue_hu));
  MaskVolume mask = make_mask(dims, sp);

  // Lungs: two ellipsoids flanking the mediastinum.
  struct Ell { Vec3 c, ax; };
  const Ell lungs[2] = {
      {{0.24 * X, 0.46 * Y, 0.52 * Z}, {0.17 * X, 0.30 * Y, 0.46 * Z}},
      {{0.80 * X, 0.46 * Y, 0.52 * Z}, {0.17 * X, 0.30 * Y, 0.46 * Z}},
  };
  // Spine: cylinder posterior to the descending limb, full z.
  const double spine_r = 11.0;
  const double y_desc = 0.62 * Y;
  const Vec3 spine_c = {0.52 * X,
                        y_desc + cfg.base_radius_mm * (1.0 + cfg.radius_jitter_frac) +
                            cfg.wall_mm + 3.0 + spine_r,
                        0.0};

  for (int64_t z = 0; z < dims.z; ++z) {
    double zc = (z + 0.5) * sp.z;
    for (int64_t y = 0; y < dims.y; ++y) {
      double yc = (y + 0.5) * sp.y;
      float* row = &hu.data[static_cast<size_t>(voxel_index(dims, 0, y, z))];
      for (int64_t x = 0; x < dims.x; ++x) {
        double xc = (x + 0.5) * sp.x;
        for (const auto& e : lungs) {
          double dx = (xc - e.c.x) / e.ax.x;
          double dy = (yc - e.c.y) / e.ax.y;
          double dz = (zc - e.c.z) / e.ax.z;
          if (dx * dx + dy * dy + dz * dz <= 1.0) {
            row[x] = static_cast<float>(cfg.lung_hu);
          }
        }
        double sx = xc - spine_c.x, sy = yc - spine_c.y;
        if (sx * sx + sy * sy <= spine_r * spine_r) {
          row[x] = static_cast<float>(cfg.spine_hu);
        }
      }
    }
  }

  // Tube rasterization: per slice, every nearby centerline sample relaxes
  // two distance margins (outer wall, lumen) over its in-plane disk.
  const double lumen_hu =
      group_has_contrast(group) ? cfg.lumen_contrast_hu : cfg.lumen_noncontrast_hu;
  const size_t plane_n = static_cast<size_t>(dims.x * dims.y);
  std::vector<float> wall_margin(plane_n), lumen_margin(plane_n);
  const float inf = std::numeric_limits<float>::infinity();

  // Samples bucketed by slice index range they can reach.
  for (int64_t z = 0; z < dims.z; ++z) {
    double zc = (z + 0.5) * sp.z;
    std::fill(wall_margin.begin(), wall_margin.end(), inf);
    std::fill(lumen_margin.begin(), lumen_margin.end(), inf);
    bool touched = false;
    for (const auto& smp : curve.samples) {
      double outer = smp.r_lumen + cfg.wall_mm;
      double dz = zc - smp.p.z;
      if (std::abs(dz) > outer) continue;
      double reach = std::sqrt(outer * outer - dz * dz);
      int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>((smp.p.x - reach) / sp.x - 0.5));
      int64_t x1 = std::min(dims.x - 1, static_cast<int64_t>((smp.p.x + reach) / sp.x + 0.5));
      int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>((smp.p.y - reach) / sp.y - 0.5));
      int64_t y1 = std::min(dims.y - 1, static_cast<int64_t>((smp.p.y + reach) / sp.y + 0.5));
      for (int64_t y = y0; y <= y1; ++y) {
        double dy = (y + 0.5) * sp.y - smp.p.y;
        float* wrow = &wall_margin[static_cast<size_t>(y * dims.x)];
        float* lrow = &lumen_margin[static_cast<size_t>(y * dims.x)];
        for (int64_t x = x0; x <= x1; ++x) {
          double dx = (x + 0.5) * sp.x - smp.p.x;
          double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
          float wm = static_cast<float>(dist - outer);
          float lm = static_cast<float>(dist - smp.r_lumen);
          if (wm < wrow[x]) wrow[x] = wm;
          if (lm < lrow[x]) lrow[x] = lm;
          touched = true;
        }
      }
    }
    if (!touched) continue;
    for (int64_t y = 0; y < dims.y; ++y) {
      float* row = &hu.data[static_cast<size_t>(voxel_index(dims, 0, y, z))];
      uint8_t* mrow = &mask.data[static_cast<size_t>(voxel_index(dims, 0, y, z))];
      const float* wrow = &wall_margin[static_cast<size_t>(y * dims.x)];
      const float* lrow = &lumen_margin[static_cast<size_t>(y * dims.x)];
      for (int64_t x = 0; x < dims.x; ++x) {
        if (wrow[x] <= 0.0f) {
          mrow[x] = 1;
          row[x] = static_cast<float>(lrow[x] <= 0.0f ? lumen_hu : cfg.wall_hu);
        }
      }
    }
  }

  // Additive acquisition noise; the geometry above never consumes the
  // noise stream, so sigma=0 reruns share identical structure.
  double sigma = group == "LD" ? cfg.noise_sigma_ld_hu : cfg.noise_sigma_hu;
  if (sigma > 0.0) {
    for (float& v : hu.data) {
      v += static_cast<float>(noise_rng.normal(0.0, sigma));
    }
  }

  CaseRecord rec;
  rec.id = id;
  rec.group = group;
  rec.ratio = draws.ratio;
  rec.label = draws.ratio >= 1.5 ? 1 : 0;
  rec.seed = case_seed;
  rec.mask = std::move(mask);

  // Store DICOM-style raw values so hu_convert has real work to do.
  rec.scan = std::move(hu);
  rec.scan.meta.rescale_slope = 1.0;
  rec.scan.meta.rescale_intercept = -1024.0;
  rec.scan.meta.group = group;
  rec.scan.meta.label = rec.label;
  for (float& v : rec.scan.data) v += 1024.0f;
  return rec;
}

std::vector<int64_t> cohort_group_counts(int64_t n) {
  double wsum = 0.0;
  for (double w : kPhantomGroupWeights) wsum += w;
  std::vector<int64_t> counts(kPhantomGroups.size(), 0);
  std::vector<double> frac(kPhantomGroups.size(), 0.0);
  int64_t assigned = 0;
  for (size_t g = 0; g < kPhantomGroups.size(); ++g) {
    double quota = n * kPhantomGroupWeights[g] / wsum;
    counts[g] = static_cast<int64_t>(std::floor(quota));
    frac[g] = quota - static_cast<double>(counts[g]);
    assigned += counts[g];
  }
  // Largest remainder; ties resolved toward earlier groups.
  while (assigned < n) {
    size_t best = 0;
    for (size_t g = 1; g < frac.size(); ++g) {
      if (frac[g] > frac[best]) best = g;
    }
    ++counts[best];
    frac[best] = -1.0;
    ++assigned;
  }
  return counts;
}

std::vector<CaseRecord> make_cohort(const PhantomConfig& cfg, int64_t n, uint64_t seed) {
  if (n <= 0) throw ConfigError("cohort size must be positive");
  auto counts = cohort_group_counts(n);
  Rng seeder = Rng(seed).stream(kRngPhantomCurve, 0xC0F0u);
  std::vector<CaseRecord> out;
  out.reserve(static_cast<size_t>(n));
  int64_t idx = 0;
  for (size_t g = 0; g < kPhantomGroups.size(); ++g) {
    for (int64_t i = 0; i < counts[g]; ++i, ++idx) {
      char id[32];
      std::snprintf(id, sizeof(id), "case_%04lld", static_cast<long long>(idx));
      uint64_t case_seed = seeder.next_u64();
      out.push_back(make_phantom(cfg, kPhantomGroups[g], case_seed, id));
    }
  }
  return out;
}

void write_manifest(const std::vector<ManifestRow>& rows, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "id,group,label,nz,ratio,seed\n";
  for (const auto& r : rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%s,%s,%d,%lld,%.9g,%llu\n", r.id.c_str(),
                  r.group.c_str(), r.label, static_cast<long long>(r.nz), r.ratio,
                  static_cast<unsigned long long>(r.seed));
    f << line;
  }
  if (!f) throw IoError("write failed: " + path);
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line)) throw IoError("empty manifest: " + path);
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  if (line != "id,group,label,nz,ratio,seed") {
    throw IoError("bad manifest header: " + line);
  }
  std::vector<ManifestRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    ManifestRow r;
    std::string tok;
    std::getline(is, r.id, ',');
    std::getline(is, r.group, ',');
    std::getline(is, tok, ',');
    r.label = std::stoi(tok);
    std::getline(is, tok, ',');
    r.nz = std::stoll(tok);
    std::getline(is, tok, ',');
    r.ratio = std::stod(tok);
    std::getline(is, tok, ',');
    r.seed = std::stoull(tok);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace voxpipe
