#include "voxpipe/voxpipe.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "core/common.hpp"
#include "core/config.hpp"
#include "core/nrrd.hpp"
#include "core/parallel.hpp"
#include "core/pipeline.hpp"
#include "core/volume.hpp"

using nlohmann::json;

namespace {

thread_local std::string t_error;

void (*g_log_fn)(const char*, void*) = nullptr;
void* g_log_user = nullptr;

voxpipe::LogFn bridge_logger() {
  // Copies the registration at call entry so a concurrent vox_set_logger
  // cannot tear the pair mid-run.
  auto fn = g_log_fn;
  auto user = g_log_user;
  if (!fn) return [](const std::string&) {};
  return [fn, user](const std::string& msg) { fn(msg.c_str(), user); };
}

// Every entry point funnels through here so the error contract stays
// uniform: exceptions never cross the C boundary.
template <typename F>
vox_status guarded(F&& body) {
  try {
    body();
    return VOX_OK;
  } catch (const voxpipe::ConfigError& e) {
    t_error = e.what();
    return VOX_ERR_CONFIG;
  } catch (const std::exception& e) {
    t_error = e.what();
    return VOX_ERR_RUNTIME;
  } catch (...) {
    t_error = "unknown error";
    return VOX_ERR_RUNTIME;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw voxpipe::ConfigError(what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** dst, const json& j) {
  if (dst) *dst = dup_string(j.dump(2));
}

json scores_json(const voxpipe::ClsScores& s) {
  return json{{"accuracy", s.accuracy},       {"precision", s.precision},
              {"sensitivity", s.sensitivity}, {"specificity", s.specificity},
              {"f1", s.f1},                   {"degenerate", s.degenerate}};
}

}  // namespace

struct vox_config {
  std::string path;                   // empty keeps defaults
  std::vector<std::string> overrides; // key=value, applied in order

  voxpipe::RunConfig materialize() const {
    return voxpipe::load_run_config(path, overrides);
  }
};

struct vox_volume {
  std::variant<voxpipe::Volume, voxpipe::MaskVolume> v;

  const voxpipe::Dims3& dims() const {
    if (auto* m = std::get_if<voxpipe::MaskVolume>(&v)) return m->dims;
    return std::get<voxpipe::Volume>(v).dims;
  }
  const voxpipe::Spacing3& spacing() const {
    if (auto* m = std::get_if<voxpipe::MaskVolume>(&v)) return m->spacing;
    return std::get<voxpipe::Volume>(v).spacing;
  }
};

extern "C" {

const char* vox_version(void) { return "0.1.0"; }

const char* vox_last_error(void) { return t_error.c_str(); }

void vox_free(void* p) { std::free(p); }

void vox_set_threads(int n) { voxpipe::set_max_threads(n < 1 ? 0 : n); }

void vox_set_logger(void (*fn)(const char*, void*), void* user) {
  g_log_fn = fn;
  g_log_user = user;
}

vox_status vox_config_create(const char* json_path, vox_config** out) {
  return guarded([&] {
    require(out != nullptr, "out is null");
    auto cfg = std::make_unique<vox_config>();
    if (json_path) cfg->path = json_path;
    cfg->materialize();  // validate eagerly so failures surface here
    *out = cfg.release();
  });
}

vox_status vox_config_set(vox_config* cfg, const char* key_eq_value) {
  return guarded([&] {
    require(cfg != nullptr, "config is null");
    require(key_eq_value != nullptr, "override is null");
    cfg->overrides.emplace_back(key_eq_value);
    try {
      cfg->materialize();
    } catch (...) {
      cfg->overrides.pop_back();  // reject without poisoning the handle
      throw;
    }
  });
}

vox_status vox_config_dump(const vox_config* cfg, char** json_out) {
  return guarded([&] {
    require(cfg != nullptr, "config is null");
    require(json_out != nullptr, "json_out is null");
    *json_out = dup_string(cfg->materialize().json_text);
  });
}

void vox_config_destroy(vox_config* cfg) { delete cfg; }

vox_status vox_run_gen_data(const vox_config* cfg) {
  return guarded([&] {
    require(cfg != nullptr, "config is null");
    voxpipe::run_gen_data(cfg->materialize(), bridge_logger());
  });
}

vox_status vox_run_preprocess(const vox_config* cfg) {
  return guarded([&] {
    require(cfg != nullptr, "config is null");
    voxpipe::run_preprocess(cfg->materialize(), bridge_logger());
  });
}

vox_status vox_run_train_seg(const vox_config* cfg, char** summary_out) {
  return guarded([&] {
    require(cfg != nullptr, "config is null");
    auto r = voxpipe::run_train_seg(cfg->materialize(), bridge_logger());
    emit(summary_out, json{{"fold_best_dsc", r.fold_best_dsc},
                           {"mean_best_dsc", r.mean_best_dsc}});
  });
}

vox_status vox_run_train_cls(const vox_config* cfg, const char* source,
                             char** summary_out) {
  return guarded([&] {
    require(cfg != nullptr, "config is null");
    require(source != nullptr, "source is null");
    auto r = voxpipe::run_train_cls(cfg->materialize(), source, bridge_logger());
    json folds = json::array();
    for (const auto& s : r.fold_best) folds.push_back(scores_json(s));
    emit(summary_out, json{{"fold_best", folds}, {"mean", scores_json(r.mean)}});
  });
}

vox_status vox_run_predict(const vox_config* cfg, const char* model_path,
                           const char* input_path, const char* output_path) {
  return guarded([&] {
    require(cfg != nullptr, "config is null");
    require(model_path != nullptr, "model_path is null");
    require(input_path != nullptr, "input_path is null");
    require(output_path != nullptr, "output_path is null");
    voxpipe::run_predict(cfg->materialize(), model_path, input_path,
                         output_path, bridge_logger());
  });
}

vox_status vox_run_eval(const vox_config* cfg, const char* model_path,
                        const char* cls_model_path, char** summary_out) {
  return guarded([&] {
    require(cfg != nullptr, "config is null");
    require(model_path != nullptr, "model_path is null");
    auto r = voxpipe::run_eval(cfg->materialize(), model_path,
                               cls_model_path ? cls_model_path : "",
                               bridge_logger());
    json j{{"test_cases", r.test_cases},
           {"mean_dsc", r.mean_dsc},
           {"mean_precision", r.mean_precision},
           {"mean_sensitivity", r.mean_sensitivity}};
    if (r.has_cls) j["cls"] = scores_json(r.cls);
    emit(summary_out, j);
  });
}

vox_status vox_run_gradcam(const vox_config* cfg, const char* model_path,
                           const char* input_path, const char* output_path,
                           const char* montage_path) {
  return guarded([&] {
    require(cfg != nullptr, "config is null");
    require(model_path != nullptr, "model_path is null");
    require(input_path != nullptr, "input_path is null");
    require(output_path != nullptr, "output_path is null");
    voxpipe::run_gradcam(cfg->materialize(), model_path, input_path,
                         output_path, montage_path ? montage_path : "",
                         bridge_logger());
  });
}

vox_status vox_run_stats(const char* scores_csv, const char* out_json,
                         char** summary_out) {
  return guarded([&] {
    require(scores_csv != nullptr, "scores_csv is null");
    require(out_json != nullptr, "out_json is null");
    voxpipe::run_stats(scores_csv, out_json, bridge_logger());
    if (summary_out) {
      std::ifstream in(out_json, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      *summary_out = dup_string(ss.str());
    }
  });
}

vox_status vox_run_montage(const char* image_path, const char* mask_path,
                           const char* heat_path, const char* output_path) {
  return guarded([&] {
    require(image_path != nullptr, "image_path is null");
    require(output_path != nullptr, "output_path is null");
    voxpipe::run_montage(image_path, mask_path ? mask_path : "",
                         heat_path ? heat_path : "", output_path);
  });
}

vox_status vox_volume_read(const char* path, vox_volume** out) {
  return guarded([&] {
    require(path != nullptr, "path is null");
    require(out != nullptr, "out is null");
    auto v = std::make_unique<vox_volume>();
    v->v = voxpipe::read_nrrd(path);
    *out = v.release();
  });
}

vox_status vox_volume_dims(const vox_volume* v, int64_t dims[3]) {
  return guarded([&] {
    require(v != nullptr, "volume is null");
    require(dims != nullptr, "dims is null");
    const auto& d = v->dims();
    dims[0] = d.x;
    dims[1] = d.y;
    dims[2] = d.z;
  });
}

vox_status vox_volume_spacing(const vox_volume* v, double spacing[3]) {
  return guarded([&] {
    require(v != nullptr, "volume is null");
    require(spacing != nullptr, "spacing is null");
    const auto& s = v->spacing();
    spacing[0] = s.x;
    spacing[1] = s.y;
    spacing[2] = s.z;
  });
}

int vox_volume_is_mask(const vox_volume* v) {
  return v && std::holds_alternative<voxpipe::MaskVolume>(v->v) ? 1 : 0;
}

vox_status vox_volume_count(const vox_volume* v, int64_t* count) {
  return guarded([&] {
    require(v != nullptr, "volume is null");
    require(count != nullptr, "count is null");
    *count = v->dims().count();
  });
}

vox_status vox_volume_data(const vox_volume* v, float* buf, size_t cap) {
  return guarded([&] {
    require(v != nullptr, "volume is null");
    require(buf != nullptr, "buf is null");
    size_t need = static_cast<size_t>(v->dims().count());
    require(cap >= need, "buffer too small");
    if (auto* m = std::get_if<voxpipe::MaskVolume>(&v->v)) {
      for (size_t i = 0; i < need; ++i) buf[i] = m->data[i] ? 1.0f : 0.0f;
    } else {
      const auto& vol = std::get<voxpipe::Volume>(v->v);
      std::memcpy(buf, vol.data.data(), need * sizeof(float));
    }
  });
}

vox_status vox_volume_write(const vox_volume* v, const char* path) {
  return guarded([&] {
    require(v != nullptr, "volume is null");
    require(path != nullptr, "path is null");
    if (auto* m = std::get_if<voxpipe::MaskVolume>(&v->v)) {
      voxpipe::write_nrrd(*m, path);
    } else {
      voxpipe::write_nrrd(std::get<voxpipe::Volume>(v->v), path);
    }
  });
}

void vox_volume_destroy(vox_volume* v) { delete v; }

}  // extern "C"
