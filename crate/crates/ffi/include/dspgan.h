#ifndef DSPGAN_H
#define DSPGAN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DspganStatus {
  DSPGAN_STATUS_OK = 0,
  DSPGAN_STATUS_NULL_POINTER = 1,
  DSPGAN_STATUS_INVALID_ARGUMENT = 2,
  DSPGAN_STATUS_IO = 3,
  DSPGAN_STATUS_MODEL = 4,
  DSPGAN_STATUS_SIGNAL = 5,
  DSPGAN_STATUS_PANIC = 6,
} DspganStatus;

/**
 * Owned array of doubles returned by the library.
 */
typedef struct DspganBuffer DspganBuffer;

/**
 * Trained generator, DSP vocoder and optional pitch predictor.
 */
typedef struct DspganVocoder DspganVocoder;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dspgan_version(void);

/**
 * Message of the last failure on this thread; empty if none. Valid until
 * the next failing call on the same thread.
 */
const char *dspgan_last_error(void);

/**
 * Loads a generator and DSP vocoder checkpoint. `pitch_path` may be null.
 *
 * # Safety
 * Paths must be null or NUL-terminated; `out` must be writable.
 */
enum DspganStatus dspgan_vocoder_load(const char *generator_path,
                                      const char *dsp_path,
                                      const char *pitch_path,
                                      struct DspganVocoder **out);

/**
 * # Safety
 * `vocoder` must be null or come from `dspgan_vocoder_load`, freed once.
 */
void dspgan_vocoder_free(struct DspganVocoder *vocoder);

/**
 * Copy synthesis of `samples` through the GAN path at 24 kHz. f0 comes
 * from the pitch predictor when one was loaded, else from the reference
 * tracker. Either MCD pointer may be null.
 *
 * # Safety
 * `samples` must hold `len` doubles; out pointers must be writable or null
 * where allowed.
 */
enum DspganStatus dspgan_copy_synth(const struct DspganVocoder *vocoder,
                                    const double *samples,
                                    size_t len,
                                    uint32_t sample_rate,
                                    uint64_t seed,
                                    struct DspganBuffer **out,
                                    double *mcd_gan_db,
                                    double *mcd_dsp_db);

/**
 * Log-mel spectrogram, frame-major (`frames × n_mels`).
 *
 * # Safety
 * `samples` must hold `len` doubles; `out` and `n_mels` must be writable.
 */
enum DspganStatus dspgan_log_mel(const double *samples,
                                 size_t len,
                                 uint32_t sample_rate,
                                 struct DspganBuffer **out,
                                 size_t *n_mels);

/**
 * Mel cepstral distortion in dB between two signals at one rate.
 *
 * # Safety
 * `a` and `b` must hold `a_len` and `b_len` doubles; `out` must be writable.
 */
enum DspganStatus dspgan_mcd(const double *a,
                             size_t a_len,
                             const double *b,
                             size_t b_len,
                             uint32_t sample_rate,
                             double *out);

/**
 * Harmonic sine excitation for a per-sample f0 track (0 = unvoiced).
 *
 * # Safety
 * `f0` must hold `len` doubles; `out` must be writable.
 */
enum DspganStatus dspgan_sine_excitation(const double *f0,
                                         size_t len,
                                         size_t harmonics,
                                         double sample_rate,
                                         struct DspganBuffer **out);

/**
 * Number of doubles in `buffer`; 0 for null.
 *
 * # Safety
 * `buffer` must be null or a live buffer.
 */
size_t dspgan_buffer_len(const struct DspganBuffer *buffer);

/**
 * Pointer to the first double, valid until the buffer is freed; null for
 * null.
 *
 * # Safety
 * `buffer` must be null or a live buffer.
 */
const double *dspgan_buffer_data(const struct DspganBuffer *buffer);

/**
 * # Safety
 * `buffer` must be null or come from this library, freed once.
 */
void dspgan_buffer_free(struct DspganBuffer *buffer);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSPGAN_H */
