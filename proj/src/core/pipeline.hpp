#pragma once

#include <string>

#include "core/config.hpp"
#include "core/metrics.hpp"
#include "core/train.hpp"

namespace voxpipe {

// Each command reads and writes under cfg.out_dir:
//   data/  phantom scans, masks, sidecar meta, manifest.csv
//   prep/  windowed, resampled, cropped volumes plus manifest.csv
//   seg/   per-fold checkpoints and metrics, dev mask predictions
//   cls/   classifier folds and metrics
//   eval/  held-out test scores

void run_gen_data(const RunConfig& cfg, const LogFn& log);

void run_preprocess(const RunConfig& cfg, const LogFn& log);

SegTrainResult run_train_seg(const RunConfig& cfg, const LogFn& log);

// source picks the classifier inputs: "pred" uses the segmentation dev
// predictions, "truth" the preprocessed reference masks.
ClsTrainResult run_train_cls(const RunConfig& cfg, const std::string& source,
                             const LogFn& log);

void run_predict(const RunConfig& cfg, const std::string& model_path,
                 const std::string& input_path, const std::string& output_path,
                 const LogFn& log);

struct EvalResult {
  int test_cases = 0;
  double mean_dsc = 0.0;
  double mean_precision = 0.0;
  double mean_sensitivity = 0.0;
  bool has_cls = false;
  ClsScores cls;
};

EvalResult run_eval(const RunConfig& cfg, const std::string& model_path,
                    const std::string& cls_model_path, const LogFn& log);

void run_gradcam(const RunConfig& cfg, const std::string& model_path,
                 const std::string& input_path, const std::string& output_path,
                 const std::string& montage_path, const LogFn& log);

void run_stats(const std::string& scores_csv, const std::string& out_json,
               const LogFn& log);

void run_montage(const std::string& image_path, const std::string& mask_path,
                 const std::string& heat_path, const std::string& output_path);

}  // namespace voxpipe
