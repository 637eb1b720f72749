#ifndef QSCOPE_H
#define QSCOPE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QscopeStatus {
  QSCOPE_STATUS_OK = 0,
  QSCOPE_STATUS_NULL_POINTER = 1,
  QSCOPE_STATUS_INVALID_ARGUMENT = 2,
  QSCOPE_STATUS_FORMAT = 3,
  QSCOPE_STATUS_IO = 4,
  QSCOPE_STATUS_TIMELINE = 5,
  QSCOPE_STATUS_NUMERICAL = 6,
  QSCOPE_STATUS_PANIC = 7,
} QscopeStatus;

typedef enum QscopeDirections {
  QSCOPE_DIRECTIONS_BOTH = 0,
  QSCOPE_DIRECTIONS_FORWARD_ONLY = 1,
  QSCOPE_DIRECTIONS_REVERSE_ONLY = 2,
} QscopeDirections;

typedef struct QscopeHistogram QscopeHistogram;

typedef struct QscopeImage QscopeImage;

/**
 * Time-ordered tag list; times in picoseconds.
 */
typedef struct QscopeStream QscopeStream;

typedef struct QscopeDelay {
  double delay_ps;
  double significance;
  size_t peak_bin;
} QscopeDelay;

typedef struct QscopeScanConfig {
  uint32_t pixels_x;
  uint32_t pixels_y;
  double dwell_time_us;
  double turnaround_time_us;
  double field_of_view_x_um;
  double field_of_view_y_um;
  bool bidirectional;
  bool flyback_equals_frame;
  enum QscopeDirections directions;
} QscopeScanConfig;

typedef struct QscopeSource {
  double pair_rate_hz;
  double signal_efficiency;
  double idler_path_efficiency;
  double signal_dark_rate_hz;
  double idler_dark_rate_hz;
  int64_t inter_arm_delay_ps;
  double jitter_sigma_ps;
  uint64_t rng_seed;
} QscopeSource;

typedef struct QscopeEdgeFit {
  double amplitude;
  double offset;
  double center_um;
  double sigma_um;
  double amplitude_err;
  double offset_err;
  double center_err_um;
  double sigma_err_um;
  double residual_norm;
  double reduced_chi_squared;
  size_t iterations;
  bool sharper_than_sampling;
} QscopeEdgeFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *qscope_last_error(void);

/**
 * Builds a stream from parallel arrays. Tags must be time-ordered.
 */
enum QscopeStatus qscope_stream_from_tags(const uint16_t *channels,
                                          const int64_t *times_ps,
                                          size_t len,
                                          uint64_t resolution_ps,
                                          struct QscopeStream **out);

enum QscopeStatus qscope_stream_read(const char *path, struct QscopeStream **out);

enum QscopeStatus qscope_stream_write(const struct QscopeStream *stream, const char *path);

/**
 * Number of tags; 0 for NULL.
 */
size_t qscope_stream_len(const struct QscopeStream *stream);

uint64_t qscope_stream_resolution_ps(const struct QscopeStream *stream);

enum QscopeStatus qscope_stream_get(const struct QscopeStream *stream,
                                    size_t index,
                                    uint16_t *channel,
                                    int64_t *time_ps);

/**
 * Copies up to `capacity` times into `times_ps`; returns how many were copied.
 */
size_t qscope_stream_times(const struct QscopeStream *stream, int64_t *times_ps, size_t capacity);

/**
 * New stream holding only the tags of `channel`.
 */
enum QscopeStatus qscope_stream_channel(const struct QscopeStream *stream,
                                        uint16_t channel,
                                        struct QscopeStream **out);

enum QscopeStatus qscope_stream_merge(const struct QscopeStream *a,
                                      const struct QscopeStream *b,
                                      struct QscopeStream **out);

/**
 * Writes the number of ordering, sign and channel violations.
 */
enum QscopeStatus qscope_stream_validate(const struct QscopeStream *stream, size_t *violations);

void qscope_stream_free(struct QscopeStream *stream);

enum QscopeStatus qscope_histogram(const struct QscopeStream *signal,
                                   const struct QscopeStream *idler,
                                   int64_t bin_width_ps,
                                   int64_t lag_min_ps,
                                   int64_t lag_max_ps,
                                   struct QscopeHistogram **out);

size_t qscope_histogram_len(const struct QscopeHistogram *hist);

/**
 * Copies up to `capacity` bin counts; returns how many were copied. Bin `k`
 * starts at lag `lag_min + k * bin_width`.
 */
size_t qscope_histogram_counts(const struct QscopeHistogram *hist,
                               uint64_t *counts,
                               size_t capacity);

enum QscopeStatus qscope_estimate_delay(const struct QscopeHistogram *hist,
                                        struct QscopeDelay *out);

void qscope_histogram_free(struct QscopeHistogram *hist);

/**
 * Greedy coincidence matching. The result is an idler-channel stream of
 * the matched idler times.
 */
enum QscopeStatus qscope_match_coincidences(const struct QscopeStream *signal,
                                            const struct QscopeStream *idler,
                                            int64_t delay_ps,
                                            int64_t window_ps,
                                            struct QscopeStream **out);

/**
 * 96 x 96 px, 10 us dwell, 400 us turnaround, 100 um field, bidirectional.
 */
struct QscopeScanConfig qscope_scan_config_default(void);

/**
 * Decodes the line triggers and bins every event of `events` into pixels.
 */
enum QscopeStatus qscope_assign_pixels(const struct QscopeStream *events,
                                       const struct QscopeStream *triggers,
                                       const struct QscopeScanConfig *config,
                                       struct QscopeImage **out);

enum QscopeStatus qscope_image_dims(const struct QscopeImage *image, size_t *width, size_t *height);

/**
 * Copies up to `capacity` row-major counts; returns how many were copied.
 */
size_t qscope_image_counts(const struct QscopeImage *image, uint64_t *counts, size_t capacity);

uint64_t qscope_image_discarded(const struct QscopeImage *image);

uint64_t qscope_image_frames(const struct QscopeImage *image);

void qscope_image_free(struct QscopeImage *image);

struct QscopeSource qscope_source_default(void);

/**
 * Simulates a square grating (`square_um` squares, `gap_um` gaps, map
 * rasterised at `resolution` cells over the x field of view) blurred by
 * `blur_sigma_um`. Writes three new streams.
 */
enum QscopeStatus qscope_simulate_grating(double square_um,
                                          double gap_um,
                                          size_t resolution,
                                          double blur_sigma_um,
                                          const struct QscopeSource *source,
                                          const struct QscopeScanConfig *config,
                                          double duration_s,
                                          struct QscopeStream **signal,
                                          struct QscopeStream **idler,
                                          struct QscopeStream **triggers);

enum QscopeStatus qscope_idler_wavelength(double pump, double signal, double *out);

/**
 * `0.33 * wavelength / na`, in the units of `wavelength`.
 */
double qscope_confocal_limit(double wavelength, double na);

/**
 * Contrast-to-noise of `image` with bright/dark regions thresholded at the
 * mean of `reference`.
 */
enum QscopeStatus qscope_snr(const struct QscopeImage *image,
                             const struct QscopeImage *reference,
                             double *out);

/**
 * Fits `A erf((x - c) / (sqrt(2) sigma)) + B` to `n` points.
 */
enum QscopeStatus qscope_fit_edge(const double *positions_um,
                                  const double *counts,
                                  size_t n,
                                  struct QscopeEdgeFit *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QSCOPE_H */
