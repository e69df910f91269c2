#ifndef CODEDEVENT_H
#define CODEDEVENT_H

/* Generated by cbindgen from the codedevent-ffi crate. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum CeStatus {
  CE_STATUS_OK = 0,
  CE_STATUS_NULL_POINTER = 1,
  CE_STATUS_CONFIG = 2,
  CE_STATUS_INVALID_INPUT = 3,
  CE_STATUS_NUMERICAL = 4,
  CE_STATUS_IO = 5,
  CE_STATUS_BUFFER_SIZE = 6,
  CE_STATUS_PANIC = 7,
} CeStatus;

typedef enum CeMaskKind {
  CE_MASK_KIND_PHASE = 0,
  CE_MASK_KIND_AMPLITUDE = 1,
} CeMaskKind;

/**
 * Pupil mask handle, bound to the support of the optics it was made for.
 */
typedef struct CeMask CeMask;

/**
 * Optical model handle.
 */
typedef struct CeOptics CeOptics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ce_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `len > 0`). Returns the full message length
 * excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t ce_last_error_message(char *buf, size_t len);

/**
 * Optics with the default microscope and the given sensor size, photon
 * budget and background fraction.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum CeStatus ce_optics_new(size_t grid,
                            double signal_photons,
                            double background_fraction,
                            struct CeOptics **out);

/**
 * Optics with every setting at its default.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum CeStatus ce_optics_new_default(struct CeOptics **out);

/**
 * # Safety
 * `optics` must be null or a handle from `ce_optics_new*` not yet freed.
 */
void ce_optics_free(struct CeOptics *optics);

/**
 * Sensor pixels per side (0 for a null handle).
 *
 * # Safety
 * `optics` must be null or a live handle.
 */
size_t ce_optics_grid(const struct CeOptics *optics);

/**
 * Number of pupil samples inside the aperture, the length of mask value arrays.
 *
 * # Safety
 * `optics` must be null or a live handle.
 */
size_t ce_optics_pupil_support(const struct CeOptics *optics);

/**
 * Mask by name (`open`, `fisher`, `levin`) or mask file path.
 *
 * # Safety
 * `optics` must be a live handle, `name` a NUL-terminated string and `out`
 * a valid pointer to a handle slot.
 */
enum CeStatus ce_mask_load(const struct CeOptics *optics, const char *name, struct CeMask **out);

/**
 * Mask from per-sample values over the pupil support (phase in radians or
 * transmittance in [0, 1]).
 *
 * # Safety
 * `optics` must be a live handle, `values` must point to `len` doubles and
 * `out` must be a valid pointer to a handle slot.
 */
enum CeStatus ce_mask_from_values(const struct CeOptics *optics,
                                  enum CeMaskKind kind,
                                  const double *values,
                                  size_t len,
                                  struct CeMask **out);

/**
 * # Safety
 * `mask` must be null or a handle not yet freed.
 */
void ce_mask_free(struct CeMask *mask);

/**
 * PSF in photons per pixel, row-major `grid x grid`, for an emitter at
 * object-space position (x, y, z) in meters.
 *
 * # Safety
 * Handles must be live; `out` must point to `len` writable doubles.
 */
enum CeStatus ce_psf(const struct CeOptics *optics,
                     const struct CeMask *mask,
                     double x,
                     double y,
                     double z,
                     double *out,
                     size_t len);

/**
 * PSF and its derivatives with respect to x, y and z (photons per pixel
 * per meter). Each output holds `grid x grid` values.
 *
 * # Safety
 * Handles must be live; each output must point to `len` writable doubles.
 */
enum CeStatus ce_psf_gradients(const struct CeOptics *optics,
                               const struct CeMask *mask,
                               double x,
                               double y,
                               double z,
                               double *h,
                               double *dx,
                               double *dy,
                               double *dz,
                               size_t len);

/**
 * Moving-source bounds (meters) for an emitter at depth `z` moving by
 * (mx, my, mz). `out` receives x, y, z of the previous pose, then x, y, z
 * of the current pose.
 *
 * # Safety
 * Handles must be live; `out` must point to 6 writable doubles.
 */
enum CeStatus ce_event_crb(const struct CeOptics *optics,
                           const struct CeMask *mask,
                           double z,
                           double mx,
                           double my,
                           double mz,
                           double *out);

/**
 * Single-frame bounds (meters) on x, y, z for an on-axis emitter at depth `z`.
 *
 * # Safety
 * Handles must be live; `out` must point to 3 writable doubles.
 */
enum CeStatus ce_flashing_crb(const struct CeOptics *optics,
                              const struct CeMask *mask,
                              double z,
                              double *out);

/**
 * Mean moving-source bound (meters) over 30 planes in +-1.5 um and
 * `n_motions` seeded isotropic motions of about 100 nm.
 *
 * # Safety
 * Handles must be live; `out` must point to one writable double.
 */
enum CeStatus ce_mean_event_crb(const struct CeOptics *optics,
                                const struct CeMask *mask,
                                size_t n_motions,
                                uint64_t seed,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CODEDEVENT_H */
