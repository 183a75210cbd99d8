#include "core/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "core/csvio.hpp"
#include "core/gradcam.hpp"
#include "core/montage.hpp"
#include "core/nrrd.hpp"
#include "core/post.hpp"
#include "core/prep.hpp"
#include "core/stats.hpp"

namespace voxpipe {

namespace fs = std::filesystem;

namespace {

int group_index(const std::string& name) {
  for (size_t i = 0; i < kPhantomGroups.size(); ++i) {
    if (kPhantomGroups[i] == name) return static_cast<int>(i);
  }
  throw IoError("unknown cohort group in manifest: " + name);
}

Volume read_volume(const std::string& path) {
  auto v = read_nrrd(path);
  if (!std::holds_alternative<Volume>(v)) {
    throw IoError(path + " holds a mask, expected a scan volume");
  }
  return std::get<Volume>(std::move(v));
}

MaskVolume read_mask(const std::string& path) {
  auto v = read_nrrd(path);
  if (!std::holds_alternative<MaskVolume>(v)) {
    throw IoError(path + " holds a scan volume, expected a mask");
  }
  return std::get<MaskVolume>(std::move(v));
}

// Raw or HU scans run the full chain; windowed inputs skip conversion.
Volume preprocess_volume(Volume v, const PrepConfig& prep) {
  if (v.kind == VolumeKind::raw) v = hu_convert(v);
  if (v.kind == VolumeKind::hu) {
    v = reorient_hfs(v);
    v = window(v, prep.window);
  }
  v = resample_nn(v, Spacing3{prep.spacing_xy, prep.spacing_xy, prep.spacing_z});
  return crop_or_pad_xy(v, prep.crop_xy);
}

MaskVolume preprocess_mask(MaskVolume m, Orientation o, const PrepConfig& prep) {
  m = reorient_hfs(m, o);
  m = resample_nn(m, Spacing3{prep.spacing_xy, prep.spacing_xy, prep.spacing_z});
  return crop_or_pad_xy(m, prep.crop_xy);
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw IoError(path + " is empty");
  return rows;
}

std::vector<SegCase> load_prep_cases(const RunConfig& cfg) {
  const std::string prep_dir = cfg.out_dir + "/prep";
  auto rows = read_manifest(prep_dir + "/manifest.csv");
  std::vector<SegCase> cases;
  cases.reserve(rows.size());
  for (const auto& r : rows) {
    SegCase c;
    c.id = r.id;
    c.group = group_index(r.group);
    c.label = r.label;
    c.image = read_volume(prep_dir + "/" + r.id + ".nrrd");
    c.mask = read_mask(prep_dir + "/" + r.id + "_mask.nrrd");
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace

void run_gen_data(const RunConfig& cfg, const LogFn& log) {
  const std::string dir = cfg.out_dir + "/data";
  fs::create_directories(dir);
  std::vector<ManifestRow> rows;
  // Same ids and case seeds as make_cohort, but generated one at a time
  // so only the manifest stays resident.
  const std::vector<int64_t> counts = cohort_group_counts(cfg.data.cases);
  Rng seeder = Rng(cfg.seed).stream(kRngPhantomCurve, 0xC0F0u);
  int64_t made = 0;
  for (size_t g = 0; g < kPhantomGroups.size(); ++g) {
    for (int64_t i = 0; i < counts[g]; ++i) {
      char idbuf[32];
      std::snprintf(idbuf, sizeof(idbuf), "case_%04lld",
                    static_cast<long long>(made));
      CaseRecord rec = make_phantom(cfg.data.phantom, kPhantomGroups[g],
                                    seeder.next_u64(), idbuf);
      write_nrrd(rec.scan, dir + "/" + rec.id + ".nrrd");
      write_meta_json(rec.scan.meta, dir + "/" + rec.id + ".json");
      write_nrrd(rec.mask, dir + "/" + rec.id + "_mask.nrrd");
      rows.push_back({rec.id, rec.group, rec.label, rec.scan.dims.z, rec.ratio,
                      rec.seed});
      ++made;
      if (log && made % 25 == 0) {
        log("generated " + std::to_string(made) + "/" +
            std::to_string(cfg.data.cases) + " cases");
      }
    }
  }
  write_manifest(rows, dir + "/manifest.csv");
  if (log) log("wrote " + std::to_string(made) + " cases to " + dir);
}

void run_preprocess(const RunConfig& cfg, const LogFn& log) {
  const std::string data_dir = cfg.out_dir + "/data";
  const std::string prep_dir = cfg.out_dir + "/prep";
  fs::create_directories(prep_dir);
  auto rows = read_manifest(data_dir + "/manifest.csv");
  std::vector<ManifestRow> out_rows;
  for (const auto& r : rows) {
    Volume scan = read_volume(data_dir + "/" + r.id + ".nrrd");
    scan.meta = read_meta_json(data_dir + "/" + r.id + ".json");
    MaskVolume mask = read_mask(data_dir + "/" + r.id + "_mask.nrrd");
    Orientation o = scan.meta.orientation;

    Volume prepped = preprocess_volume(std::move(scan), cfg.prep);
    MaskVolume mprepped = preprocess_mask(std::move(mask), o, cfg.prep);
    write_nrrd(prepped, prep_dir + "/" + r.id + ".nrrd");
    write_nrrd(mprepped, prep_dir + "/" + r.id + "_mask.nrrd");
    ManifestRow nr = r;
    nr.nz = prepped.dims.z;
    out_rows.push_back(nr);
  }
  write_manifest(out_rows, prep_dir + "/manifest.csv");
  if (log) log("preprocessed " + std::to_string(out_rows.size()) + " cases");
}

SegTrainResult run_train_seg(const RunConfig& cfg, const LogFn& log) {
  std::vector<SegCase> cases = load_prep_cases(cfg);
  SegTrainConfig sc = cfg.seg;
  sc.out_dir = cfg.out_dir + "/seg";
  return train_segmentation(cases, sc, log);
}

ClsTrainResult run_train_cls(const RunConfig& cfg, const std::string& source,
                             const LogFn& log) {
  std::vector<ClsCase> cases;
  if (source == "pred") {
    const std::string seg_dir = cfg.out_dir + "/seg";
    auto rows = read_csv(seg_dir + "/dev_manifest.csv");
    if (rows[0] != std::vector<std::string>{"id", "group", "label", "fold", "path"}) {
      throw IoError("unexpected header in " + seg_dir + "/dev_manifest.csv");
    }
    for (size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() != 5) throw IoError("bad row in dev_manifest.csv");
      ClsCase c;
      c.id = rows[i][0];
      c.label = std::stoi(rows[i][2]);
      c.mask = read_mask(seg_dir + "/" + rows[i][4]);
      cases.push_back(std::move(c));
    }
  } else if (source == "truth") {
    const std::string prep_dir = cfg.out_dir + "/prep";
    for (const auto& r : read_manifest(prep_dir + "/manifest.csv")) {
      ClsCase c;
      c.id = r.id;
      c.label = r.label;
      c.mask = read_mask(prep_dir + "/" + r.id + "_mask.nrrd");
      c.mask = z_trim(c.mask, mask_z_range(c.mask));
      cases.push_back(std::move(c));
    }
  } else {
    throw ConfigError("classifier source must be pred or truth, got " + source);
  }
  ClsTrainConfig cc = cfg.cls;
  cc.out_dir = cfg.out_dir + "/cls";
  return train_classifier(cases, cc, log);
}

void run_predict(const RunConfig& cfg, const std::string& model_path,
                 const std::string& input_path, const std::string& output_path,
                 const LogFn& log) {
  nn::Network net = load_network(model_path);
  if (net.arch() != nn::Arch::seg_generator) {
    throw ConfigError("predict needs a segmentation generator checkpoint");
  }
  Volume scan = read_volume(input_path);
  // Sidecar meta is optional; raw inputs need the rescale pair from it.
  std::string meta_path = input_path;
  if (meta_path.size() > 5 && meta_path.ends_with(".nrrd")) {
    meta_path = meta_path.substr(0, meta_path.size() - 5) + ".json";
  }
  if (fs::exists(meta_path)) scan.meta = read_meta_json(meta_path);

  Volume prepped = preprocess_volume(std::move(scan), cfg.prep);
  MaskVolume pred = predict_mask(net, prepped, cfg.seg.binarize_thresh,
                                 cfg.seg.min_component_frac);
  pred = z_trim(pred, mask_z_range(pred));
  write_nrrd(pred, output_path);
  if (log) {
    log("wrote " + output_path + " (" + std::to_string(pred.foreground_count()) +
        " foreground voxels)");
  }
}

EvalResult run_eval(const RunConfig& cfg, const std::string& model_path,
                    const std::string& cls_model_path, const LogFn& log) {
  const std::string seg_dir = cfg.out_dir + "/seg";
  const std::string eval_dir = cfg.out_dir + "/eval";
  fs::create_directories(eval_dir);

  auto splits = read_csv(seg_dir + "/splits.csv");
  if (splits[0] != std::vector<std::string>{"id", "group", "label", "role", "fold"}) {
    throw IoError("unexpected header in " + seg_dir + "/splits.csv");
  }
  std::vector<std::string> test_ids;
  std::vector<int> test_labels;
  for (size_t i = 1; i < splits.size(); ++i) {
    if (splits[i].size() != 5) throw IoError("bad row in splits.csv");
    if (splits[i][3] == "test") {
      test_ids.push_back(splits[i][0]);
      test_labels.push_back(std::stoi(splits[i][2]));
    }
  }
  if (test_ids.empty()) throw ConfigError("no held-out test cases recorded");

  nn::Network net = load_network(model_path);
  if (net.arch() != nn::Arch::seg_generator) {
    throw ConfigError("eval needs a segmentation generator checkpoint");
  }
  std::optional<nn::Network> cls;
  if (!cls_model_path.empty()) {
    cls.emplace(load_network(cls_model_path));
    if (cls->arch() != nn::Arch::mask_classifier) {
      throw ConfigError("eval classifier checkpoint has the wrong architecture");
    }
  }

  const std::string prep_dir = cfg.out_dir + "/prep";
  EvalResult res;
  res.test_cases = static_cast<int>(test_ids.size());
  auto csv = open_text(eval_dir + "/per_case.csv");
  csv << "id,label,dsc,precision,sensitivity,cls_prob\n";
  std::vector<int> cls_pred, cls_truth;
  for (size_t i = 0; i < test_ids.size(); ++i) {
    const std::string& id = test_ids[i];
    Volume image = read_volume(prep_dir + "/" + id + ".nrrd");
    MaskVolume truth = read_mask(prep_dir + "/" + id + "_mask.nrrd");
    MaskVolume pred = predict_mask(net, image, cfg.seg.binarize_thresh,
                                   cfg.seg.min_component_frac);
    SegScores s = seg_scores(pred, truth);
    res.mean_dsc += s.dsc;
    res.mean_precision += s.precision;
    res.mean_sensitivity += s.sensitivity;

    double prob = -1.0;
    if (cls) {
      MaskVolume trimmed = z_trim(pred, mask_z_range(pred));
      const bool was = cls->trainable();
      cls->set_trainable(false);
      prob = cls->forward(to_tensor(trimmed)).out.data()[0];
      cls->set_trainable(was);
      cls_pred.push_back(prob >= 0.5 ? 1 : 0);
      cls_truth.push_back(test_labels[i]);
    }
    csv << id << "," << test_labels[i] << "," << format_g(s.dsc) << ","
        << format_g(s.precision) << "," << format_g(s.sensitivity) << ","
        << format_g(prob) << "\n";
    if (log) log(id + " dsc " + format_g(s.dsc));
  }
  res.mean_dsc /= res.test_cases;
  res.mean_precision /= res.test_cases;
  res.mean_sensitivity /= res.test_cases;

  nlohmann::json j;
  j["test_cases"] = res.test_cases;
  j["mean_dsc"] = res.mean_dsc;
  j["mean_precision"] = res.mean_precision;
  j["mean_sensitivity"] = res.mean_sensitivity;
  if (cls) {
    res.has_cls = true;
    res.cls = cls_scores(cls_pred, cls_truth);
    j["cls_accuracy"] = res.cls.accuracy;
    j["cls_precision"] = res.cls.precision;
    j["cls_sensitivity"] = res.cls.sensitivity;
    j["cls_specificity"] = res.cls.specificity;
    j["cls_f1"] = res.cls.f1;
  }
  open_text(eval_dir + "/summary.json") << j.dump(2) << "\n";
  return res;
}

void run_gradcam(const RunConfig& cfg, const std::string& model_path,
                 const std::string& input_path, const std::string& output_path,
                 const std::string& montage_path, const LogFn& log) {
  (void)cfg;
  nn::Network net = load_network(model_path);
  MaskVolume mask = read_mask(input_path);
  Volume heat = gradcam_map(net, mask);
  write_nrrd(heat, output_path);
  if (!montage_path.empty()) {
    Volume gray = make_volume(mask.dims, mask.spacing, VolumeKind::windowed);
    for (size_t i = 0; i < mask.data.size(); ++i) {
      gray.data[i] = mask.data[i] ? 1.0f : 0.0f;
    }
    write_montage(montage_path, gray, nullptr, &heat);
  }
  if (log) log("wrote " + output_path);
}

void run_stats(const std::string& scores_csv, const std::string& out_json,
               const LogFn& log) {
  auto rows = read_csv(scores_csv);
  if (rows[0].size() < 3) {
    throw ConfigError("scores table needs an id column and at least two methods");
  }
  const size_t k = rows[0].size() - 1;
  std::vector<std::string> methods(rows[0].begin() + 1, rows[0].end());
  std::vector<std::vector<double>> scores;
  for (size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != k + 1) throw IoError("ragged row in " + scores_csv);
    std::vector<double> row;
    for (size_t j = 1; j < rows[i].size(); ++j) {
      size_t pos = 0;
      row.push_back(std::stod(rows[i][j], &pos));
      if (pos != rows[i][j].size()) throw IoError("bad number in " + scores_csv);
    }
    scores.push_back(std::move(row));
  }

  FriedmanResult fr = friedman_test(scores);
  double cd = nemenyi_cd(static_cast<int>(k), static_cast<int>(scores.size()));

  nlohmann::json j;
  j["blocks"] = scores.size();
  j["methods"] = methods;
  j["chi2"] = fr.chi2;
  j["df"] = fr.df;
  j["p"] = fr.p;
  j["mean_ranks"] = fr.mean_ranks;
  j["critical_difference"] = cd;
  nlohmann::json pairs = nlohmann::json::array();
  for (size_t a = 0; a < k; ++a) {
    for (size_t b = a + 1; b < k; ++b) {
      double diff = std::fabs(fr.mean_ranks[a] - fr.mean_ranks[b]);
      pairs.push_back({{"a", methods[a]},
                       {"b", methods[b]},
                       {"rank_diff", diff},
                       {"significant", diff >= cd}});
    }
  }
  j["pairwise"] = pairs;
  open_text(out_json) << j.dump(2) << "\n";
  if (log) {
    log("chi2 " + format_g(fr.chi2) + " p " + format_g(fr.p) + " cd " + format_g(cd));
  }
}

void run_montage(const std::string& image_path, const std::string& mask_path,
                 const std::string& heat_path, const std::string& output_path) {
  Volume image = read_volume(image_path);
  std::optional<MaskVolume> mask;
  std::optional<Volume> heat;
  if (!mask_path.empty()) mask.emplace(read_mask(mask_path));
  if (!heat_path.empty()) heat.emplace(read_volume(heat_path));
  write_montage(output_path, image, mask ? &*mask : nullptr,
                heat ? &*heat : nullptr);
}

}  // namespace voxpipe
