#ifndef SARCSTANCE_H
#define SARCSTANCE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SsStatus {
  SS_STATUS_OK = 0,
  SS_STATUS_NULL_POINTER = 1,
  SS_STATUS_INVALID_ARGUMENT = 2,
  SS_STATUS_IO = 3,
  SS_STATUS_PARSE = 4,
  SS_STATUS_BUNDLE = 5,
  SS_STATUS_BUFFER_TOO_SMALL = 6,
  SS_STATUS_INTERNAL = 7,
} SsStatus;

/**
 * A loaded parameter bundle.
 */
typedef struct SsBundle SsBundle;

/**
 * A loaded canonical corpus.
 */
typedef struct SsCorpus SsCorpus;

/**
 * Hashtag segmenter backed by a word-frequency table.
 */
typedef struct SsSegmenter SsSegmenter;

/**
 * Affinity between an intermediate and a target corpus.
 */
typedef struct SsAffinity {
  double avg_len_intermediate;
  double avg_len_target;
  double length_ratio;
  double vocab_jaccard;
  double size_ratio;
  /**
   * Composite score under the default weights.
   */
  double score;
} SsAffinity;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *ss_last_error(void);

/**
 * Library version as a static string.
 */
const char *ss_version(void);

/**
 * Mean F1 of the FAVOR (0) and AGAINST (1) classes over `n` gold and
 * predicted labels in {0, 1, 2}.
 */
enum SsStatus ss_macro_f1(const uint32_t *gold, const uint32_t *predicted, size_t n, double *out);

/**
 * Inverse-frequency class weights for `n` class counts (2 for sarcasm,
 * 3 for stance), written to `out[0..n]`.
 */
enum SsStatus ss_class_weights(const size_t *counts, size_t n, double *out);

/**
 * Learning rate of 1-based `epoch` under the per-epoch exponential decay.
 */
enum SsStatus ss_lr_at_epoch(double lr_initial,
                             double lr_final,
                             size_t max_epochs,
                             size_t epoch,
                             double *out);

/**
 * Segmenter with the built-in English word list.
 */
struct SsSegmenter *ss_segmenter_new(void);

/**
 * Segmenter from a word list file, one word per line, most frequent first.
 */
enum SsStatus ss_segmenter_load(const char *path, struct SsSegmenter **out);

void ss_segmenter_free(struct SsSegmenter *segmenter);

/**
 * Splits a hashtag (with or without the leading `#`) into words and writes
 * them space-separated.
 */
enum SsStatus ss_segment_hashtag(const struct SsSegmenter *segmenter,
                                 const char *tag,
                                 char *buf,
                                 size_t len,
                                 size_t *needed);

/**
 * Loads a canonical corpus. `name` is one of SemEval, MPCHI, SaV2C, SARC,
 * ST; `max_rows` (0 for all) subsamples sarcasm corpora.
 */
enum SsStatus ss_corpus_load(const char *path,
                             const char *name,
                             size_t max_rows,
                             struct SsCorpus **out);

/**
 * Number of examples, or 0 for NULL.
 */
size_t ss_corpus_len(const struct SsCorpus *corpus);

void ss_corpus_free(struct SsCorpus *corpus);

enum SsStatus ss_affinity(const struct SsCorpus *intermediate,
                          const struct SsCorpus *target,
                          struct SsAffinity *out);

/**
 * Loads and verifies a parameter bundle directory.
 */
enum SsStatus ss_bundle_load(const char *dir, struct SsBundle **out);

void ss_bundle_free(struct SsBundle *bundle);

/**
 * Architecture fingerprint (hex SHA-256) of the bundle.
 */
enum SsStatus ss_bundle_fingerprint(const struct SsBundle *bundle,
                                    char *buf,
                                    size_t len,
                                    size_t *needed);

/**
 * Number of output classes of the bundle's head.
 */
enum SsStatus ss_bundle_head_classes(const struct SsBundle *bundle, size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SARCSTANCE_H */
