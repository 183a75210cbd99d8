#ifndef VOXPIPE_H
#define VOXPIPE_H

/* C interface to the voxpipe pipeline: phantom generation, preprocessing,
 * adversarial segmentation training, mask classification, inference,
 * evaluation, class-activation maps, rank statistics and montages.
 *
 * Every function that can fail returns vox_status; on failure a
 * thread-local message is available from vox_last_error(). Out-pointers
 * are written only on VOX_OK. Handles are opaque and must be released
 * with their destroy function. Strings returned through char** are owned
 * by the caller and released with vox_free().
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vox_status {
  VOX_OK = 0,
  VOX_ERR_RUNTIME = 1, /* io failures, malformed inputs, internal errors */
  VOX_ERR_CONFIG = 2   /* bad configuration, unknown keys, bad arguments */
} vox_status;

const char* vox_version(void);

/* Message from the most recent failing call on this thread; never NULL. */
const char* vox_last_error(void);

void vox_free(void* p);

/* Worker threads for all pipeline work; n < 1 resets to automatic
 * (VOXPIPE_THREADS or the hardware count). */
void vox_set_threads(int n);

/* Progress messages; fn == NULL disables. The callback may be invoked
 * from the calling thread only. */
void vox_set_logger(void (*fn)(const char* message, void* user), void* user);

/* ----- configuration ----- */

typedef struct vox_config vox_config;

/* json_path may be NULL for built-in defaults. */
vox_status vox_config_create(const char* json_path, vox_config** out);

/* Override one setting on a dotted path, e.g. "seg.epochs=12". */
vox_status vox_config_set(vox_config* cfg, const char* key_eq_value);

/* Merged configuration as pretty JSON. */
vox_status vox_config_dump(const vox_config* cfg, char** json_out);

void vox_config_destroy(vox_config* cfg);

/* ----- pipeline commands -----
 * Artifacts are laid out under the configured out_dir (data/, prep/,
 * seg/, cls/, eval/). summary_out, where present, receives the same JSON
 * summary the command writes to disk and may be NULL.
 */

vox_status vox_run_gen_data(const vox_config* cfg);

vox_status vox_run_preprocess(const vox_config* cfg);

vox_status vox_run_train_seg(const vox_config* cfg, char** summary_out);

/* source is "pred" (segmentation dev predictions) or "truth". */
vox_status vox_run_train_cls(const vox_config* cfg, const char* source,
                             char** summary_out);

vox_status vox_run_predict(const vox_config* cfg, const char* model_path,
                           const char* input_path, const char* output_path);

/* cls_model_path may be NULL to skip classification of the test masks. */
vox_status vox_run_eval(const vox_config* cfg, const char* model_path,
                        const char* cls_model_path, char** summary_out);

/* montage_path may be NULL. */
vox_status vox_run_gradcam(const vox_config* cfg, const char* model_path,
                           const char* input_path, const char* output_path,
                           const char* montage_path);

/* scores_csv holds one id column then one column per method. */
vox_status vox_run_stats(const char* scores_csv, const char* out_json,
                         char** summary_out);

/* mask_path and heat_path may be NULL. */
vox_status vox_run_montage(const char* image_path, const char* mask_path,
                           const char* heat_path, const char* output_path);

/* ----- volumes ----- */

typedef struct vox_volume vox_volume;

vox_status vox_volume_read(const char* path, vox_volume** out);

/* dims is written as x, y, z; spacing as mm per voxel along x, y, z. */
vox_status vox_volume_dims(const vox_volume* v, int64_t dims[3]);
vox_status vox_volume_spacing(const vox_volume* v, double spacing[3]);

/* 1 when the volume is a binary mask, else 0. */
int vox_volume_is_mask(const vox_volume* v);

/* Element count (x * y * z). */
vox_status vox_volume_count(const vox_volume* v, int64_t* count);

/* Copies the voxels (x fastest, then y, then z) into buf; cap is the
 * buffer capacity in floats. Mask voxels arrive as 0.0f or 1.0f. */
vox_status vox_volume_data(const vox_volume* v, float* buf, size_t cap);

vox_status vox_volume_write(const vox_volume* v, const char* path);

void vox_volume_destroy(vox_volume* v);

#ifdef __cplusplus
}
#endif

#endif /* VOXPIPE_H */
