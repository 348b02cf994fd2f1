/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef OCRCHAIN_H
#define OCRCHAIN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OcrStatus {
  OCR_STATUS_OK = 0,
  OCR_STATUS_NULL_POINTER = 1,
  OCR_STATUS_INVALID_UTF8 = 2,
  OCR_STATUS_INVALID_ARGUMENT = 3,
  // Ground-truth HTML has no table.
  OCR_STATUS_NO_TABLE = 4,
  // The chain is not well formed; the last error holds the violations.
  OCR_STATUS_INVALID_CHAIN = 5,
  OCR_STATUS_PANIC = 6,
} OcrStatus;

typedef enum OcrTask {
  OCR_TASK_SEAL = 0,
  OCR_TASK_TABLE = 1,
  OCR_TASK_FORMULA = 2,
} OcrTask;

// Chain sections, for [`ocr_chain_section`].
typedef enum OcrSection {
  OCR_SECTION_THINK = 0,
  OCR_SECTION_TOOL = 1,
  OCR_SECTION_RETHINK = 2,
  OCR_SECTION_ANSWER = 3,
} OcrSection;

// Opaque parsed chain.
typedef struct OcrChain OcrChain;

// Opaque reward engine.
typedef struct OcrRewardEngine OcrRewardEngine;

typedef struct OcrRewardScore {
  double format_reward;
  double accuracy_reward;
  double total;
} OcrRewardScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer is
// valid until the next call into this library on the same thread.
const char *ocr_last_error(void);

// Library version, static storage.
const char *ocr_version(void);

// Frees a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void ocr_string_free(char *s);

// # Safety
// `out` must be valid for writes.
enum OcrStatus ocr_reward_engine_new(bool strict_gating, struct OcrRewardEngine **out);

// # Safety
// `engine` must come from [`ocr_reward_engine_new`] and not have been freed.
void ocr_reward_engine_free(struct OcrRewardEngine *engine);

// Scores one rollout against its ground truth.
//
// # Safety
// `engine` must be a live handle; strings NUL-terminated; `out` writable.
enum OcrStatus ocr_reward_engine_score(const struct OcrRewardEngine *engine,
                                       enum OcrTask task,
                                       const char *rollout,
                                       const char *gt,
                                       struct OcrRewardScore *out);

// 1.0 for a well-formed chain, else 0.0.
//
// # Safety
// `raw` NUL-terminated; `out` writable.
enum OcrStatus ocr_format_reward(const char *raw, double *out);

// TEDS, or STEDS when `structure_only`. An unparseable prediction scores 0.
//
// # Safety
// Strings NUL-terminated; `out` writable.
enum OcrStatus ocr_teds(const char *pred_html,
                        const char *gt_html,
                        bool structure_only,
                        double *out);

// Normalized edit distance over characters.
//
// # Safety
// Strings NUL-terminated; `out` writable.
enum OcrStatus ocr_ned(const char *pred, const char *gt, double *out);

// 1.0 when the strings match after NFC and trimming, else 0.0.
//
// # Safety
// Strings NUL-terminated; `out` writable.
enum OcrStatus ocr_exact_match(const char *pred, const char *gt, double *out);

// Token-level formula match score in [0, 1].
//
// # Safety
// Strings NUL-terminated; `out` writable.
enum OcrStatus ocr_cdm_proxy(const char *pred, const char *gt, double *out);

// Parses a chain. On [`OcrStatus::InvalidChain`] the last error holds the
// violations as JSON.
//
// # Safety
// `raw` NUL-terminated; `out` writable.
enum OcrStatus ocr_chain_parse(const char *raw, struct OcrChain **out);

// # Safety
// `chain` must come from [`ocr_chain_parse`] and not have been freed.
void ocr_chain_free(struct OcrChain *chain);

// Number of `<tool>` blocks.
//
// # Safety
// `chain` live; `out` writable.
enum OcrStatus ocr_chain_tool_count(const struct OcrChain *chain, size_t *out);

// Copies a section body into a new string. `index` selects the tool block
// and must be 0 for the other sections.
//
// # Safety
// `chain` live; `out` writable. Free the result with [`ocr_string_free`].
enum OcrStatus ocr_chain_section(const struct OcrChain *chain,
                                 enum OcrSection section,
                                 size_t index,
                                 char **out);

// Canonical text of a chain.
//
// # Safety
// `chain` live; `out` writable. Free the result with [`ocr_string_free`].
enum OcrStatus ocr_chain_render(const struct OcrChain *chain, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OCRCHAIN_H */
