#ifndef SEMCOM_H
#define SEMCOM_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SemcomStatus {
  SEMCOM_STATUS_OK = 0,
  SEMCOM_STATUS_NULL_POINTER = 1,
  SEMCOM_STATUS_INVALID_ARGUMENT = 2,
  SEMCOM_STATUS_IO = 3,
  SEMCOM_STATUS_PARSE = 4,
  SEMCOM_STATUS_CHECKPOINT = 5,
  SEMCOM_STATUS_DIMENSION = 6,
  SEMCOM_STATUS_NUMERICAL = 7,
  SEMCOM_STATUS_PANIC = 8,
} SemcomStatus;

// One draw of the K-user MIMO interference channel.
typedef struct SemcomChannel SemcomChannel;

// Trained or freshly initialized transceiver parameters.
typedef struct SemcomModel SemcomModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next call into this library on the same thread.
const char *semcom_last_error(void);

// Library version as a static NUL-terminated string.
const char *semcom_version(void);

// Fresh model with Glorot-initialized weights. `variant` is the checkpoint
// tag: 0 csi_free, 1 csir, 2 csitr, 3 interference_free, 4 semi_conventional.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum SemcomStatus semcom_model_new(uint32_t variant,
                                   size_t users,
                                   size_t tx,
                                   size_t rx,
                                   size_t block_len,
                                   size_t hidden,
                                   uint64_t seed,
                                   struct SemcomModel **out);

// Loads a checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SemcomStatus semcom_model_load(const char *path, struct SemcomModel **out);

// Writes a checkpoint file.
//
// # Safety
// `model` must come from this library; `path` must be NUL-terminated.
enum SemcomStatus semcom_model_save(const struct SemcomModel *model, const char *path);

// Releases a model. NULL is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void semcom_model_free(struct SemcomModel *model);

// Variant tag, user count and pixels per image of a model.
//
// # Safety
// All pointers must be valid.
enum SemcomStatus semcom_model_info(const struct SemcomModel *model,
                                    uint32_t *variant,
                                    size_t *users,
                                    size_t *image_len);

// Draws a Rayleigh channel with `σ² = P·10^(−snr_db/10)` from `seed`.
//
// # Safety
// `out` must be writable.
enum SemcomStatus semcom_channel_sample(size_t users,
                                        size_t tx,
                                        size_t rx,
                                        double snr_db,
                                        double power,
                                        uint64_t seed,
                                        struct SemcomChannel **out);

// Releases a channel. NULL is ignored.
//
// # Safety
// `channel` must come from this library and not be used afterwards.
void semcom_channel_free(struct SemcomChannel *channel);

// Copies the flattened channel state (length `2·K²·N_t·N_r`) into `buf`.
// `written` receives the required length even when `cap` is too small.
//
// # Safety
// `buf` must hold `cap` doubles.
enum SemcomStatus semcom_channel_csi(const struct SemcomChannel *channel,
                                     double *buf,
                                     size_t cap,
                                     size_t *written);

// Sends `batch` images per user through `model` over `channel` (shared by
// every sample) and writes the reconstructions.
//
// `images` and `out` hold `users × batch × image_len` doubles, user-major,
// values in `[−1, 1]`. Noise comes from `seed`.
//
// # Safety
// Pointers must be valid for the stated lengths.
enum SemcomStatus semcom_model_transmit(const struct SemcomModel *model,
                                        const struct SemcomChannel *channel,
                                        const double *images,
                                        size_t batch,
                                        uint64_t seed,
                                        double power,
                                        double *out);

// Global-statistics SSIM of two images in `[−1, 1]`.
//
// # Safety
// `a` and `b` must hold `len` doubles.
enum SemcomStatus semcom_ssim(const double *a, const double *b, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMCOM_H */
