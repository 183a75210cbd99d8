#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/augment.hpp"
#include "core/metrics.hpp"
#include "core/nets.hpp"
#include "core/optim.hpp"
#include "core/post.hpp"
#include "core/volume.hpp"

namespace voxpipe {

// ----- tensor/volume bridging -----

nn::Tensor to_tensor(const Volume& v);
nn::Tensor to_tensor(const MaskVolume& m);
Volume volume_from_tensor(const nn::Tensor& t, Spacing3 spacing, VolumeKind kind);

// ----- dataset plumbing -----

struct SegCase {
  std::string id;
  int group = 0;
  int label = 0;
  Volume image;     // windowed
  MaskVolume mask;  // reference
};

struct ClsCase {
  std::string id;
  int label = 0;
  MaskVolume mask;
};

// Majority vote across an odd number of equally shaped masks.
MaskVolume vote_masks(const std::vector<MaskVolume>& masks);

// Fold id per case; strata are shuffled independently and dealt
// round-robin so every fold gets an even share of each stratum.
std::vector<int> stratified_kfold(const std::vector<int>& strata, int k, Rng rng);

// Marks test_count cases as held out (1), allocating per stratum by
// largest remainder of the stratum sizes.
std::vector<int> holdout_split(const std::vector<int>& strata, int test_count, Rng rng);

// Indices that survive downsampling every label to the rarest label's
// count; selection order inside a label is shuffled.
std::vector<size_t> balance_downsample(const std::vector<int>& labels, Rng rng);

// ----- adversarial segmentation training -----

struct SegTrainConfig {
  int epochs = 40;
  int folds = 4;
  int holdout = 12;           // held out before cross-validation
  int g_base = 16;
  int d_base = 32;
  double lr = 1e-3;           // cosine restart peak for both nets
  double lr_alpha = 1e-6;     // cosine restart floor
  double t_mul = 1.5;
  double m_mul = 1.0;
  nn::HybridFocalParams hybrid;
  double hybrid_weight = 5.0;
  double binarize_thresh = 0.5;
  double min_component_frac = 0.05;
  bool augment = true;
  AugmentConfig aug;
  uint64_t seed = 1;
  std::string out_dir;
};

struct GanStepStats {
  double d_loss = 0.0;
  double g_adv = 0.0;
  double g_seg = 0.0;  // hybrid segmentation term, unweighted
  double g_total = 0.0;
};

// One adversarial update on a single case: the discriminator sees the
// detached fake, then the generator trains through the frozen
// discriminator. Both optimizers share the learning rate.
GanStepStats gan_train_step(nn::Network& gen, nn::Network& disc, nn::Adam& opt_g,
                            nn::Adam& opt_d, const nn::Tensor& image,
                            const nn::Tensor& mask, const SegTrainConfig& cfg,
                            double lr);

// Forward plus the fixed mask cleanup: binarize at thresh, then drop
// small components.
MaskVolume predict_mask(nn::Network& gen, const Volume& image, double thresh,
                        double min_component_frac);

// Round-trips a network (architecture, build, weights) through one file.
void save_network(const std::string& path, const nn::Network& net);
nn::Network load_network(const std::string& path);

using LogFn = std::function<void(const std::string&)>;

struct SegTrainResult {
  std::vector<double> fold_best_dsc;
  double mean_best_dsc = 0.0;
  std::vector<int> holdout_flags;  // per input case
  std::vector<int> fold_of;        // -1 for held out cases
};

SegTrainResult train_segmentation(const std::vector<SegCase>& cases,
                                  const SegTrainConfig& cfg, const LogFn& log);

// ----- mask classifier training -----

struct ClsTrainConfig {
  int epochs = 30;
  int folds = 10;
  int base = 32;
  double lr = 1e-4;
  nn::PlateauConfig plateau;
  uint64_t seed = 1;
  std::string out_dir;
};

struct ClsTrainResult {
  std::vector<ClsScores> fold_best;  // dev scores at the best epoch per fold
  ClsScores mean;                    // field-wise mean over folds
};

ClsTrainResult train_classifier(const std::vector<ClsCase>& cases,
                                const ClsTrainConfig& cfg, const LogFn& log);

}  // namespace voxpipe
