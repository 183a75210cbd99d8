#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/volume.hpp"

namespace voxpipe {

enum class AneurysmSite { any, ascending, arch, descending };

AneurysmSite site_from_string(const std::string& s);
std::string site_to_string(AneurysmSite s);

// Synthetic thoracic CT phantom: a candy-cane aorta (ascending limb,
// semicircular arch in the y-z plane, descending limb) with wall shell,
// spine, lungs and soft-tissue background, plus a fusiform aneurysm for
// the positive groups. All distances in mm.
struct PhantomConfig {
  int64_t nx = 160;            // in-plane grid (square)
  double spacing_xy = 1.6;
  int64_t nz_min = 40;
  int64_t nz_max = 96;
  double thickness_min = 1.5;  // per-case slice thickness
  double thickness_max = 3.0;

  double base_radius_mm = 15.0;
  double radius_jitter_frac = 0.10;  // smooth radius variation amplitude
  double wall_mm = 2.0;
  double arch_radius_mm = 35.0;
  double jitter_mm = 4.0;            // max sinusoidal centerline wobble

  double lumen_contrast_hu = 300.0;
  double lumen_noncontrast_hu = 40.0;
  double wall_hu = 50.0;
  double tissue_hu = 30.0;
  double spine_hu = 700.0;
  double lung_hu = -800.0;
  double noise_sigma_ld_hu = 40.0;
  double noise_sigma_hu = 15.0;

  double aneurysm_ratio_min = 1.5;  // peak diameter / nominal diameter
  double aneurysm_ratio_max = 2.2;
  double aneurysm_extent_mm_min = 30.0;
  double aneurysm_extent_mm_max = 60.0;
  AneurysmSite aneurysm_site = AneurysmSite::any;
};

// Cohort groups: LD low-dose, SD standard-dose, CTA contrast, AN
// contrast aneurysm, ANNC non-contrast aneurysm.
extern const std::vector<std::string> kPhantomGroups;
extern const std::vector<double> kPhantomGroupWeights;

struct CaseRecord {
  std::string id;
  std::string group;
  int label = 0;       // 1 when diameter ratio >= 1.5
  double ratio = 1.0;  // aneurysm diameter ratio (1.0 = none)
  uint64_t seed = 0;
  Volume scan;         // kind=raw with DICOM-style rescale pair in meta
  MaskVolume mask;     // aorta (lumen + wall)
};

CaseRecord make_phantom(const PhantomConfig& cfg, const std::string& group,
                        uint64_t case_seed, const std::string& id);

// n cases with group counts by largest remainder over the cohort
// weights; per-case seeds fanned out from the cohort seed.
std::vector<CaseRecord> make_cohort(const PhantomConfig& cfg, int64_t n,
                                    uint64_t seed);

// Group counts for a cohort of n (largest remainder, ties to earlier
// groups). Exposed for tests and manifest checks.
std::vector<int64_t> cohort_group_counts(int64_t n);

struct ManifestRow {
  std::string id;
  std::string group;
  int label = 0;
  int64_t nz = 0;
  double ratio = 1.0;
  uint64_t seed = 0;
};

void write_manifest(const std::vector<ManifestRow>& rows, const std::string& path);
std::vector<ManifestRow> read_manifest(const std::string& path);

}  // namespace voxpipe
