/* C interface to the action-field workbench: configuration, data generation,
 * training, rollout evaluation, and plotting behind opaque handles.
 *
 * Every function returning int yields AFW_OK or an error code; the message
 * for the calling thread's last failure is readable via afw_last_error().
 * Handles are freed with their matching _free function; passing NULL to a
 * _free function is a no-op.
 */
#ifndef AFW_H
#define AFW_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

enum {
  AFW_OK = 0,
  AFW_ERR_CONFIG = 1,    /* invalid configuration or argument combination */
  AFW_ERR_CONTRACT = 2,  /* precondition violated by the caller */
  AFW_ERR_DATA = 3,      /* unreadable or inconsistent file content */
  AFW_ERR_NO_ACTION = 4, /* no executable pixel for a policy decision */
  AFW_ERR_TRAIN = 5,     /* optimization diverged */
  AFW_ERR_RUNTIME = 6    /* anything else */
};

/* Message for this thread's most recent failure; empty string if none. The
 * pointer stays valid until the next failing call on the same thread. */
const char* afw_last_error(void);

/* ---- configuration ---- */

typedef struct afw_config afw_config;

/* Full-scale defaults (128x128 input). */
afw_config* afw_config_default(void);
/* Desk-scale preset (64x64 input, slim model, short training). */
afw_config* afw_config_desk(void);
int afw_config_load(const char* path, afw_config** out);
int afw_config_save(const afw_config* cfg, const char* path);
/* assignment is "section.key=value", e.g. "train.epochs=5". */
int afw_config_override(afw_config* cfg, const char* assignment);
/* JSON echo of the whole config; free with afw_string_free. */
int afw_config_dump(const afw_config* cfg, char** json_out);
void afw_config_free(afw_config* cfg);

void afw_string_free(char* s);

/* ---- digests ---- */

/* SHA-256 of one file as 64 hex chars plus NUL. */
int afw_file_digest(const char* path, char out_hex65[65]);
/* Content digest of a dataset directory (sidecar stamps excluded). */
int afw_dataset_digest(const char* root, char out_hex65[65]);

/* ---- pipeline operations ---- */

/* Generates (or reuses, when an identical generation is already on disk) a
 * labeled dataset under out_dir. task is "smoothing" or "alignment"; episode
 * i is seeded seed+i and alternates hard/easy crumpling. */
int afw_gen_data(const afw_config* cfg, const char* task, int episodes,
                 int steps_per_episode, unsigned long long seed, const char* out_dir,
                 char digest_out_hex65[65]);

/* Refines the dataset per the config and trains a model from scratch, or
 * resumes from out_dir/checkpoint.bin when resume is nonzero and one exists.
 * Writes checkpoint.bin and train_log.jsonl under out_dir. */
int afw_train_model(const afw_config* cfg, const char* task, const char* data_dir,
                    const char* out_dir, int resume);

/* Trains only when cache_dir lacks a checkpoint for this (config, task,
 * dataset digest) key; returns the checkpoint path into path_out. */
int afw_ensure_model(const afw_config* cfg, const char* task, const char* data_dir,
                     const char* cache_dir, char* path_out, size_t path_cap);

/* One greedy rollout. policy is "model", "random", or "radial"; checkpoint
 * may be NULL except for "model". The record is written as JSON to out_path. */
int afw_rollout_once(const afw_config* cfg, const char* policy, const char* checkpoint,
                     const char* task, unsigned long long seed, const char* out_path);

/* Rollouts over eval.n_scenes crumpled scenes. Writes summary.txt,
 * summary.json, and records/seed_*.json under out_dir. */
int afw_evaluate(const afw_config* cfg, const char* policy, const char* checkpoint,
                 const char* task, const char* out_dir);

/* Score-map ablation over variant letters a..h ("a,h") and/or an alignment
 * shape-weight sweep ("0,1,10,25,100"); either list may be NULL or empty.
 * Trained models are cached in cache_dir; the table lands in out_dir. */
int afw_ablate(const afw_config* cfg, const char* variants, const char* shape_weights,
               const char* data_dir, const char* align_data_dir, const char* cache_dir,
               const char* out_dir);

/* Renders coverage and IoU curves for every record under run_dir/records. */
int afw_plot_run(const char* run_dir);

/* ---- model handle ---- */

typedef struct afw_model afw_model;

int afw_model_open(const char* checkpoint_path, afw_model** out);
/* Input height/width the network expects. */
int afw_model_input_size(const afw_model* model, int* h, int* w);
/* One forward pass on an h*w*3 RGB image plus its h*w 0/1 garment mask;
 * returns the selected pull action. AFW_ERR_NO_ACTION when the mask admits
 * no decodable pixel. */
int afw_model_predict(afw_model* model, const unsigned char* rgb, const unsigned char* mask,
                      int h, int w, double* x, double* y, double* theta, double* d);
void afw_model_free(afw_model* model);

/* Process-wide count of network forward passes (the single-shot property:
 * exactly one per model decision). */
unsigned long long afw_forward_passes(void);

/* ---- simulator handle ---- */

typedef struct afw_sim afw_sim;

/* Crumpled scene for the task ("smoothing"/"alignment") at the given level
 * ("easy"/"hard"), deterministic per seed. */
int afw_sim_create(const afw_config* cfg, const char* task, const char* level,
                   unsigned long long seed, afw_sim** out);
/* Renders into caller buffers of h*w*3 and h*w bytes (mask values 0/1);
 * either pointer may be NULL to skip that output. */
int afw_sim_render(afw_sim* sim, unsigned char* rgb, unsigned char* mask);
int afw_sim_size(const afw_sim* sim, int* h, int* w);
/* Executes a pull; *missed (optional) reports a grab that touched nothing. */
int afw_sim_pull(afw_sim* sim, double x, double y, double theta, double d, int* missed);
/* Coverage against the flat reference; IoU against the alignment target
 * (0 for smoothing sims). */
int afw_sim_metrics(afw_sim* sim, double* coverage, double* iou);
void afw_sim_free(afw_sim* sim);

#ifdef __cplusplus
}
#endif

#endif /* AFW_H */
