#include "core/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "core/checkpoint.hpp"
#include "core/csvio.hpp"
#include "core/nrrd.hpp"
#include "core/prep.hpp"

namespace voxpipe {

namespace fs = std::filesystem;
using nn::Tensor;

// ----- tensor/volume bridging -----

Tensor to_tensor(const Volume& v) {
  Tensor t = Tensor::zeros(nn::Shape{1, 1, v.dims.z, v.dims.y, v.dims.x});
  std::copy(v.data.begin(), v.data.end(), t.data());
  return t;
}

Tensor to_tensor(const MaskVolume& m) {
  Tensor t = Tensor::zeros(nn::Shape{1, 1, m.dims.z, m.dims.y, m.dims.x});
  float* d = t.data();
  for (size_t i = 0; i < m.data.size(); ++i) d[i] = m.data[i] ? 1.0f : 0.0f;
  return t;
}

Volume volume_from_tensor(const Tensor& t, Spacing3 spacing, VolumeKind kind) {
  if (t.shape().ndim() != 5 || t.shape().dim(0) != 1 || t.shape().dim(1) != 1) {
    throw ShapeError("volume_from_tensor expects a [1,1,D,H,W] tensor");
  }
  Volume v = make_volume(Dims3{t.shape().dim(4), t.shape().dim(3), t.shape().dim(2)},
                         spacing, kind);
  std::copy(t.data(), t.data() + t.numel(), v.data.begin());
  return v;
}

// ----- dataset plumbing -----

MaskVolume vote_masks(const std::vector<MaskVolume>& masks) {
  if (masks.empty() || masks.size() % 2 == 0) {
    throw ConfigError("vote_masks needs an odd, nonzero number of masks");
  }
  const Dims3 d = masks[0].dims;
  for (const auto& m : masks) {
    if (m.dims.x != d.x || m.dims.y != d.y || m.dims.z != d.z) {
      throw ShapeError("vote_masks: mask dims differ");
    }
  }
  MaskVolume out = make_mask(d, masks[0].spacing);
  const size_t need = masks.size() / 2 + 1;
  for (size_t i = 0; i < out.data.size(); ++i) {
    size_t votes = 0;
    for (const auto& m : masks) votes += m.data[i] ? 1 : 0;
    out.data[i] = votes >= need ? 1 : 0;
  }
  return out;
}

namespace {

void shuffle_indices(std::vector<size_t>& v, Rng& r) {
  for (size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[static_cast<size_t>(r.uniform_int(static_cast<int64_t>(i)))]);
  }
}

// Stratum value -> member indices, in first-appearance order of strata.
std::vector<std::pair<int, std::vector<size_t>>> group_by_stratum(
    const std::vector<int>& strata) {
  std::vector<std::pair<int, std::vector<size_t>>> out;
  for (size_t i = 0; i < strata.size(); ++i) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const auto& p) { return p.first == strata[i]; });
    if (it == out.end()) {
      out.push_back({strata[i], {i}});
    } else {
      it->second.push_back(i);
    }
  }
  return out;
}

}  // namespace

std::vector<int> stratified_kfold(const std::vector<int>& strata, int k, Rng rng) {
  if (k < 2 || strata.size() < static_cast<size_t>(k)) {
    throw ConfigError("stratified_kfold needs 2 <= k <= case count");
  }
  std::vector<int> fold(strata.size(), -1);
  int t = 0;
  for (auto& [value, members] : group_by_stratum(strata)) {
    Rng r = rng.stream(static_cast<uint32_t>(t++), 1);
    shuffle_indices(members, r);
    for (size_t p = 0; p < members.size(); ++p) {
      fold[members[p]] = static_cast<int>(p % static_cast<size_t>(k));
    }
  }
  return fold;
}

std::vector<int> holdout_split(const std::vector<int>& strata, int test_count, Rng rng) {
  const size_t n = strata.size();
  if (test_count < 0 || static_cast<size_t>(test_count) > n) {
    throw ConfigError("holdout_split: test_count out of range");
  }
  auto groups = group_by_stratum(strata);
  // Largest-remainder allocation of test_count across strata.
  std::vector<int> take(groups.size(), 0);
  std::vector<double> frac(groups.size());
  int assigned = 0;
  for (size_t g = 0; g < groups.size(); ++g) {
    double exact = static_cast<double>(test_count) * groups[g].second.size() / n;
    take[g] = static_cast<int>(exact);
    frac[g] = exact - take[g];
    assigned += take[g];
  }
  while (assigned < test_count) {
    size_t best = 0;
    for (size_t g = 1; g < groups.size(); ++g) {
      if (frac[g] > frac[best]) best = g;
    }
    frac[best] = -1.0;
    ++take[best];
    ++assigned;
  }
  std::vector<int> flags(n, 0);
  for (size_t g = 0; g < groups.size(); ++g) {
    auto members = groups[g].second;
    int want = std::min<int>(take[g], static_cast<int>(members.size()));
    Rng r = rng.stream(static_cast<uint32_t>(g), 2);
    shuffle_indices(members, r);
    for (int i = 0; i < want; ++i) flags[members[static_cast<size_t>(i)]] = 1;
  }
  return flags;
}

std::vector<size_t> balance_downsample(const std::vector<int>& labels, Rng rng) {
  auto groups = group_by_stratum(labels);
  size_t keep = groups[0].second.size();
  for (const auto& [v, members] : groups) keep = std::min(keep, members.size());
  std::vector<size_t> kept;
  int t = 0;
  for (auto& [value, members] : groups) {
    Rng r = rng.stream(static_cast<uint32_t>(t++), 3);
    shuffle_indices(members, r);
    kept.insert(kept.end(), members.begin(), members.begin() + static_cast<long>(keep));
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

// ----- network checkpoint glue -----

void save_network(const std::string& path, const nn::Network& net) {
  Checkpoint ck;
  ck.arch = nn::arch_name(net.arch());
  ck.config_json = net.build().to_json();
  for (const auto& [name, t] : net.named_parameters()) {
    Tensor copy = Tensor::zeros(t.shape());
    std::copy(t.data(), t.data() + t.numel(), copy.data());
    ck.tensors.emplace_back(name, std::move(copy));
  }
  save_checkpoint(path, ck);
}

nn::Network load_network(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  nn::Network net(nn::arch_from_string(ck.arch), nn::NetBuild::from_json(ck.config_json),
                  Rng(0));
  net.load_tensors(ck.tensors);
  return net;
}

// ----- adversarial segmentation training -----

GanStepStats gan_train_step(nn::Network& gen, nn::Network& disc, nn::Adam& opt_g,
                            nn::Adam& opt_d, const Tensor& image, const Tensor& mask,
                            const SegTrainConfig& cfg, double lr) {
  GanStepStats st;
  Tensor fake = gen.forward(image).out;

  // Discriminator sees the generator output as a constant.
  Tensor d_real = disc.forward(nn::concat_channels(image, mask)).out;
  Tensor d_fake = disc.forward(nn::concat_channels(image, fake.detach())).out;
  Tensor d_loss = nn::lsgan_d_loss(d_real, d_fake);
  opt_d.set_lr(lr);
  opt_d.zero_grad();
  nn::backward(d_loss);
  opt_d.step();
  st.d_loss = d_loss.item();

  // Generator trains through the frozen, just-updated discriminator.
  disc.set_trainable(false);
  Tensor d_fake_g = disc.forward(nn::concat_channels(image, fake)).out;
  Tensor g_adv = nn::lsgan_g_adv(d_fake_g);
  Tensor g_seg = nn::hybrid_focal(fake, mask, cfg.hybrid);
  Tensor g_total = nn::add(g_adv, nn::scale(g_seg, cfg.hybrid_weight));
  opt_g.set_lr(lr);
  opt_g.zero_grad();
  nn::backward(g_total);
  opt_g.step();
  disc.set_trainable(true);

  st.g_adv = g_adv.item();
  st.g_seg = g_seg.item();
  st.g_total = g_total.item();
  return st;
}

MaskVolume predict_mask(nn::Network& gen, const Volume& image, double thresh,
                        double min_component_frac) {
  const bool was = gen.trainable();
  gen.set_trainable(false);
  Tensor prob = gen.forward(to_tensor(image)).out;
  gen.set_trainable(was);
  Volume pv = volume_from_tensor(prob, image.spacing, VolumeKind::windowed);
  MaskVolume m = binarize(pv, thresh);
  return remove_small(m, min_component_frac);
}

namespace {

struct DevEval {
  SegScores macro;
};

DevEval eval_dev(nn::Network& gen, const std::vector<SegCase>& cases,
                 const std::vector<size_t>& idx, const SegTrainConfig& cfg) {
  DevEval ev;
  for (size_t i : idx) {
    MaskVolume pred = predict_mask(gen, cases[i].image, cfg.binarize_thresh,
                                   cfg.min_component_frac);
    SegScores s = seg_scores(pred, cases[i].mask);
    ev.macro.dsc += s.dsc;
    ev.macro.precision += s.precision;
    ev.macro.sensitivity += s.sensitivity;
  }
  const double n = static_cast<double>(idx.size());
  ev.macro.dsc /= n;
  ev.macro.precision /= n;
  ev.macro.sensitivity /= n;
  return ev;
}

}  // namespace

SegTrainResult train_segmentation(const std::vector<SegCase>& cases,
                                  const SegTrainConfig& cfg, const LogFn& log) {
  if (cases.size() < static_cast<size_t>(cfg.folds + cfg.holdout)) {
    throw ConfigError("not enough cases for the requested holdout and folds");
  }
  fs::create_directories(cfg.out_dir);

  std::vector<int> groups;
  groups.reserve(cases.size());
  for (const auto& c : cases) groups.push_back(c.group);

  Rng master(cfg.seed);
  SegTrainResult result;
  result.holdout_flags = holdout_split(groups, cfg.holdout, master.stream(kRngSplit, 0));

  std::vector<size_t> cv_idx;
  std::vector<int> cv_groups;
  for (size_t i = 0; i < cases.size(); ++i) {
    if (!result.holdout_flags[i]) {
      cv_idx.push_back(i);
      cv_groups.push_back(groups[i]);
    }
  }
  std::vector<int> cv_fold = stratified_kfold(cv_groups, cfg.folds,
                                              master.stream(kRngSplit, 1));
  result.fold_of.assign(cases.size(), -1);
  for (size_t j = 0; j < cv_idx.size(); ++j) result.fold_of[cv_idx[j]] = cv_fold[j];

  {
    auto os = open_text(cfg.out_dir + "/splits.csv");
    os << "id,group,label,role,fold\n";
    for (size_t i = 0; i < cases.size(); ++i) {
      os << cases[i].id << "," << cases[i].group << "," << cases[i].label << ","
         << (result.holdout_flags[i] ? "test" : "cv") << "," << result.fold_of[i]
         << "\n";
    }
  }

  fs::create_directories(cfg.out_dir + "/dev_masks");
  auto manifest = open_text(cfg.out_dir + "/dev_manifest.csv");
  manifest << "id,group,label,fold,path\n";

  for (int fold = 0; fold < cfg.folds; ++fold) {
    std::vector<size_t> train_idx, dev_idx;
    for (size_t j = 0; j < cv_idx.size(); ++j) {
      (cv_fold[j] == fold ? dev_idx : train_idx).push_back(cv_idx[j]);
    }
    if (train_idx.empty() || dev_idx.empty()) {
      throw ConfigError("fold " + std::to_string(fold) + " has an empty split");
    }

    nn::Network gen(nn::Arch::seg_generator, {1, cfg.g_base, 128},
                    master.stream(kRngNet, static_cast<uint32_t>(fold), 0));
    nn::Network disc(nn::Arch::seg_discriminator, {2, cfg.d_base, 128},
                     master.stream(kRngNet, static_cast<uint32_t>(fold), 1));
    nn::AdamConfig ac;
    ac.lr = cfg.lr;
    nn::Adam opt_g(gen.parameters(), ac);
    nn::Adam opt_d(disc.parameters(), ac);
    nn::CosineRestartConfig cos;
    cos.eta0 = cfg.lr;
    cos.alpha = cfg.lr_alpha;
    cos.l0 = static_cast<double>(train_idx.size());
    cos.t_mul = cfg.t_mul;
    cos.m_mul = cfg.m_mul;

    const std::string fold_dir = cfg.out_dir + "/fold_" + std::to_string(fold);
    fs::create_directories(fold_dir);
    auto csv = open_text(fold_dir + "/metrics.csv");
    csv << "epoch,lr,train_loss,dev_dsc,dev_precision,dev_sensitivity\n";

    double best_dsc = -1.0;
    int64_t gstep = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::vector<size_t> order = train_idx;
      Rng shuf = master.stream(kRngShuffle, static_cast<uint32_t>(fold),
                               static_cast<uint32_t>(epoch));
      shuffle_indices(order, shuf);

      double loss_sum = 0.0;
      double lr = cfg.lr;
      for (size_t i : order) {
        const SegCase& c = cases[i];
        Tensor x, y;
        if (cfg.augment) {
          auto [ai, am] = augment_pair(c.image, c.mask, cfg.aug,
                                       master.stream(kRngAugment, static_cast<uint32_t>(i),
                                                     static_cast<uint32_t>(epoch)));
          x = to_tensor(ai);
          y = to_tensor(am);
        } else {
          x = to_tensor(c.image);
          y = to_tensor(c.mask);
        }
        lr = nn::cosine_restart_lr(gstep, cos);
        GanStepStats st = gan_train_step(gen, disc, opt_g, opt_d, x, y, cfg, lr);
        loss_sum += st.g_total;
        ++gstep;
      }

      DevEval ev = eval_dev(gen, cases, dev_idx, cfg);
      csv << epoch << "," << format_g(lr) << ","
          << format_g(loss_sum / static_cast<double>(order.size())) << ","
          << format_g(ev.macro.dsc) << "," << format_g(ev.macro.precision) << ","
          << format_g(ev.macro.sensitivity) << "\n";
      csv.flush();
      if (ev.macro.dsc > best_dsc) {
        best_dsc = ev.macro.dsc;
        save_network(fold_dir + "/best.ckpt", gen);
      }
      if (log) {
        log("fold " + std::to_string(fold) + " epoch " + std::to_string(epoch) +
            " loss " + format_g(loss_sum / static_cast<double>(order.size())) +
            " dev dsc " + format_g(ev.macro.dsc));
      }
    }
    save_network(fold_dir + "/final.ckpt", gen);
    result.fold_best_dsc.push_back(best_dsc);

    // Dev predictions from the best weights feed the classifier stage.
    nn::Network best = load_network(fold_dir + "/best.ckpt");
    for (size_t i : dev_idx) {
      MaskVolume pred = predict_mask(best, cases[i].image, cfg.binarize_thresh,
                                     cfg.min_component_frac);
      pred = z_trim(pred, mask_z_range(pred));
      const std::string rel = "dev_masks/" + cases[i].id + ".nrrd";
      write_nrrd(pred, cfg.out_dir + "/" + rel);
      manifest << cases[i].id << "," << cases[i].group << "," << cases[i].label << ","
               << fold << "," << rel << "\n";
    }
    manifest.flush();
  }

  for (double d : result.fold_best_dsc) result.mean_best_dsc += d;
  result.mean_best_dsc /= static_cast<double>(cfg.folds);

  nlohmann::json j;
  j["fold_best_dsc"] = result.fold_best_dsc;
  j["mean_best_dsc"] = result.mean_best_dsc;
  open_text(cfg.out_dir + "/summary.json") << j.dump(2) << "\n";
  return result;
}

// ----- mask classifier training -----

ClsTrainResult train_classifier(const std::vector<ClsCase>& cases,
                                const ClsTrainConfig& cfg, const LogFn& log) {
  if (cases.size() < static_cast<size_t>(cfg.folds)) {
    throw ConfigError("not enough cases for the requested folds");
  }
  fs::create_directories(cfg.out_dir);

  Rng master(cfg.seed);
  std::vector<int> labels;
  for (const auto& c : cases) labels.push_back(c.label);
  std::vector<size_t> kept = balance_downsample(labels, master.stream(kRngSplit, 2));
  std::vector<int> kept_labels;
  for (size_t i : kept) kept_labels.push_back(labels[i]);
  std::vector<int> fold_of = stratified_kfold(kept_labels, cfg.folds,
                                              master.stream(kRngSplit, 3));

  {
    auto os = open_text(cfg.out_dir + "/splits.csv");
    os << "id,label,fold\n";
    for (size_t j = 0; j < kept.size(); ++j) {
      os << cases[kept[j]].id << "," << kept_labels[j] << "," << fold_of[j] << "\n";
    }
  }

  ClsTrainResult result;
  for (int fold = 0; fold < cfg.folds; ++fold) {
    std::vector<size_t> train_idx, dev_idx;
    for (size_t j = 0; j < kept.size(); ++j) {
      (fold_of[j] == fold ? dev_idx : train_idx).push_back(kept[j]);
    }
    if (train_idx.empty() || dev_idx.empty()) {
      throw ConfigError("fold " + std::to_string(fold) + " has an empty split");
    }

    nn::Network net(nn::Arch::mask_classifier, {1, cfg.base, 128},
                    master.stream(kRngNet, static_cast<uint32_t>(fold), 2));
    nn::AdamConfig ac;
    ac.lr = cfg.lr;
    ac.beta1 = 0.9;
    nn::Adam opt(net.parameters(), ac);
    nn::PlateauScheduler sched(cfg.lr, cfg.plateau);

    const std::string fold_dir = cfg.out_dir + "/fold_" + std::to_string(fold);
    fs::create_directories(fold_dir);
    auto csv = open_text(fold_dir + "/metrics.csv");
    csv << "epoch,lr,train_loss,dev_loss,dev_accuracy,dev_precision,dev_sensitivity,"
           "dev_specificity,dev_f1\n";

    double best_loss = std::numeric_limits<double>::infinity();
    ClsScores best_scores;
    double lr = cfg.lr;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::vector<size_t> order = train_idx;
      Rng shuf = master.stream(kRngShuffle, static_cast<uint32_t>(100 + fold),
                               static_cast<uint32_t>(epoch));
      shuffle_indices(order, shuf);

      double loss_sum = 0.0;
      for (size_t i : order) {
        Tensor x = to_tensor(cases[i].mask);
        Tensor y = Tensor::filled(nn::Shape{1, 1},
                                  cases[i].label ? 1.0f : 0.0f);
        Tensor p = net.forward(x).out;
        Tensor loss = nn::bce(p, y);
        opt.set_lr(lr);
        opt.zero_grad();
        nn::backward(loss);
        opt.step();
        loss_sum += loss.item();
      }

      // Dev pass: mean loss plus scores at the 0.5 decision threshold.
      const bool was = net.trainable();
      net.set_trainable(false);
      double dev_loss = 0.0;
      std::vector<int> pred, truth;
      for (size_t i : dev_idx) {
        Tensor p = net.forward(to_tensor(cases[i].mask)).out;
        Tensor y = Tensor::filled(nn::Shape{1, 1}, cases[i].label ? 1.0f : 0.0f);
        dev_loss += nn::bce(p, y).item();
        pred.push_back(p.data()[0] >= 0.5f ? 1 : 0);
        truth.push_back(cases[i].label);
      }
      net.set_trainable(was);
      dev_loss /= static_cast<double>(dev_idx.size());
      ClsScores sc = cls_scores(pred, truth);

      csv << epoch << "," << format_g(lr) << ","
          << format_g(loss_sum / static_cast<double>(order.size())) << ","
          << format_g(dev_loss) << "," << format_g(sc.accuracy) << ","
          << format_g(sc.precision) << "," << format_g(sc.sensitivity) << ","
          << format_g(sc.specificity) << "," << format_g(sc.f1) << "\n";
      csv.flush();

      if (dev_loss < best_loss) {
        best_loss = dev_loss;
        best_scores = sc;
        save_network(fold_dir + "/best.ckpt", net);
      }
      lr = sched.update(dev_loss);
      if (log) {
        log("fold " + std::to_string(fold) + " epoch " + std::to_string(epoch) +
            " dev loss " + format_g(dev_loss) + " acc " + format_g(sc.accuracy));
      }
    }
    result.fold_best.push_back(best_scores);
  }

  for (const ClsScores& s : result.fold_best) {
    result.mean.accuracy += s.accuracy;
    result.mean.precision += s.precision;
    result.mean.sensitivity += s.sensitivity;
    result.mean.specificity += s.specificity;
    result.mean.f1 += s.f1;
    result.mean.degenerate = result.mean.degenerate || s.degenerate;
  }
  const double nf = static_cast<double>(cfg.folds);
  result.mean.accuracy /= nf;
  result.mean.precision /= nf;
  result.mean.sensitivity /= nf;
  result.mean.specificity /= nf;
  result.mean.f1 /= nf;

  nlohmann::json j;
  j["mean_accuracy"] = result.mean.accuracy;
  j["mean_precision"] = result.mean.precision;
  j["mean_sensitivity"] = result.mean.sensitivity;
  j["mean_specificity"] = result.mean.specificity;
  j["mean_f1"] = result.mean.f1;
  open_text(cfg.out_dir + "/summary.json") << j.dump(2) << "\n";
  return result;
}

}  // namespace voxpipe
