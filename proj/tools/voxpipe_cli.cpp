// Command-line front end for the voxpipe shared library. All pipeline
// work happens behind the C API; this file only parses arguments, wires
// progress output and maps vox_status to the process exit code
// (0 ok, 1 runtime failure, 2 configuration failure).

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "voxpipe/voxpipe.h"

namespace {

void print_log(const char* message, void*) {
  std::fprintf(stderr, "%s\n", message);
  std::fflush(stderr);
}

int fail(vox_status st) {
  std::fprintf(stderr, "error: %s\n", vox_last_error());
  return static_cast<int>(st);
}

struct ConfigHandle {
  vox_config* cfg = nullptr;
  ~ConfigHandle() { vox_config_destroy(cfg); }
};

// Builds the config from --config/--set; returns nonzero exit code on
// failure with the message already printed.
int make_config(const std::string& path, const std::vector<std::string>& sets,
                ConfigHandle& out) {
  vox_status st = vox_config_create(path.empty() ? nullptr : path.c_str(), &out.cfg);
  if (st != VOX_OK) return fail(st);
  for (const auto& s : sets) {
    st = vox_config_set(out.cfg, s.c_str());
    if (st != VOX_OK) return fail(st);
  }
  return 0;
}

int finish(vox_status st, char* summary) {
  if (st != VOX_OK) return fail(st);
  if (summary) {
    std::printf("%s\n", summary);
    vox_free(summary);
  }
  return 0;
}

void add_config_options(CLI::App* cmd, std::string& config_path,
                        std::vector<std::string>& sets) {
  cmd->add_option("-c,--config", config_path, "JSON configuration file")
      ->check(CLI::ExistingFile);
  cmd->add_option("-s,--set", sets,
                  "Override a setting, e.g. --set seg.epochs=12");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxpipe: synthetic CT aneurysm segmentation and detection"};
  app.set_version_flag("--version", std::string(vox_version()));
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("-t,--threads", threads, "Worker thread cap (0 = automatic)");

  std::string config_path;
  std::vector<std::string> sets;
  std::string model, cls_model, input, output, montage, heat, mask, image;
  std::string source = "pred";
  std::string scores, out_json;

  CLI::App* gen = app.add_subcommand("gen-data", "Generate the phantom cohort");
  add_config_options(gen, config_path, sets);

  CLI::App* prep = app.add_subcommand(
      "preprocess", "Window, resample and crop the cohort");
  add_config_options(prep, config_path, sets);

  CLI::App* tseg = app.add_subcommand(
      "train-seg", "Train the adversarial segmentation folds");
  add_config_options(tseg, config_path, sets);

  CLI::App* tcls = app.add_subcommand(
      "train-cls", "Train the aneurysm classifier on binary masks");
  add_config_options(tcls, config_path, sets);
  tcls->add_option("--source", source,
                   "Mask source: pred (segmentation dev output) or truth")
      ->check(CLI::IsMember({"pred", "truth"}));

  CLI::App* pred = app.add_subcommand(
      "predict", "Segment one scan with a trained generator");
  add_config_options(pred, config_path, sets);
  pred->add_option("--model", model, "Generator checkpoint")->required();
  pred->add_option("--input", input, "Scan NRRD")->required();
  pred->add_option("--output", output, "Mask NRRD to write")->required();

  CLI::App* ev = app.add_subcommand(
      "eval", "Score a generator (and optionally a classifier) on the held-out test split");
  add_config_options(ev, config_path, sets);
  ev->add_option("--model", model, "Generator checkpoint")->required();
  ev->add_option("--cls-model", cls_model, "Classifier checkpoint");

  CLI::App* cam = app.add_subcommand(
      "gradcam", "Class-activation map for a classifier on one mask");
  add_config_options(cam, config_path, sets);
  cam->add_option("--model", model, "Classifier checkpoint")->required();
  cam->add_option("--input", input, "Mask NRRD")->required();
  cam->add_option("--output", output, "Heat map NRRD to write")->required();
  cam->add_option("--montage", montage, "Optional overlay montage PPM");

  CLI::App* st = app.add_subcommand(
      "stats", "Friedman test with Nemenyi post hoc on a score table");
  st->add_option("--scores", scores, "CSV: id column then one column per method")
      ->required()
      ->check(CLI::ExistingFile);
  st->add_option("--out", out_json, "Result JSON to write")->required();

  CLI::App* mont = app.add_subcommand(
      "montage", "Slice montage of a scan with optional mask/heat overlays");
  mont->add_option("--image", image, "Scan or heat NRRD")->required();
  mont->add_option("--mask", mask, "Optional mask NRRD");
  mont->add_option("--heat", heat, "Optional heat NRRD");
  mont->add_option("--output", output, "PPM to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    // CLI11 returns 0 for --help/--version; anything else is bad usage.
    return rc == 0 ? 0 : 2;
  }

  vox_set_logger(print_log, nullptr);
  if (threads > 0) vox_set_threads(threads);

  char* summary = nullptr;
  if (gen->parsed() || prep->parsed() || tseg->parsed() || tcls->parsed() ||
      pred->parsed() || ev->parsed() || cam->parsed()) {
    ConfigHandle cfg;
    if (int rc = make_config(config_path, sets, cfg); rc != 0) return rc;

    if (gen->parsed()) return finish(vox_run_gen_data(cfg.cfg), nullptr);
    if (prep->parsed()) return finish(vox_run_preprocess(cfg.cfg), nullptr);
    if (tseg->parsed()) {
      vox_status rc = vox_run_train_seg(cfg.cfg, &summary);
      return finish(rc, summary);
    }
    if (tcls->parsed()) {
      vox_status rc = vox_run_train_cls(cfg.cfg, source.c_str(), &summary);
      return finish(rc, summary);
    }
    if (pred->parsed())
      return finish(vox_run_predict(cfg.cfg, model.c_str(), input.c_str(),
                                    output.c_str()),
                    nullptr);
    if (ev->parsed()) {
      vox_status rc =
          vox_run_eval(cfg.cfg, model.c_str(),
                       cls_model.empty() ? nullptr : cls_model.c_str(), &summary);
      return finish(rc, summary);
    }
    return finish(vox_run_gradcam(cfg.cfg, model.c_str(), input.c_str(),
                                  output.c_str(),
                                  montage.empty() ? nullptr : montage.c_str()),
                  nullptr);
  }
  if (st->parsed()) {
    vox_status rc = vox_run_stats(scores.c_str(), out_json.c_str(), &summary);
    return finish(rc, summary);
  }
  return finish(vox_run_montage(image.c_str(),
                                mask.empty() ? nullptr : mask.c_str(),
                                heat.empty() ? nullptr : heat.c_str(),
                                output.c_str()),
                nullptr);
}
