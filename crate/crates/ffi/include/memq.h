#ifndef MEMQ_H
#define MEMQ_H

#pragma once

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Bytes in one observation: 3 channels of `32 × 32`, channel-major.
 */
#define MEMQ_OBS_LEN ((3 * 32) * 32)

#define MEMQ_NUM_ACTIONS 6

typedef enum MemqStatus {
  MEMQ_STATUS_OK = 0,
  MEMQ_STATUS_NULL_POINTER = 1,
  MEMQ_STATUS_INVALID_ARGUMENT = 2,
  MEMQ_STATUS_IO = 3,
  MEMQ_STATUS_FORMAT = 4,
  MEMQ_STATUS_SHAPE = 5,
  MEMQ_STATUS_EPISODE_OVER = 6,
  MEMQ_STATUS_PANIC = 7,
} MemqStatus;

/**
 * A trained network with its streaming state.
 */
typedef struct MemqAgent MemqAgent;

/**
 * An environment: one map plus the running episode.
 */
typedef struct MemqEnv MemqEnv;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message, NUL-terminated and
 * truncated to `len` bytes. Returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t memq_last_error(char *buf, size_t len);

/**
 * Parses a map from its text form and starts an episode seeded by `seed`.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MemqStatus memq_env_from_text(const char *text, uint64_t seed, struct MemqEnv **out);

/**
 * Reads a `.map` file and starts an episode.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MemqStatus memq_env_load(const char *path, uint64_t seed, struct MemqEnv **out);

/**
 * Starts a new episode on the same map.
 *
 * # Safety
 * `env` must be a live handle.
 */
enum MemqStatus memq_env_reset(struct MemqEnv *env);

/**
 * Applies `action` (0..6) and reports the reward and whether the episode
 * ended.
 *
 * # Safety
 * `env` must be a live handle; `reward` and `done` valid pointers.
 */
enum MemqStatus memq_env_step(struct MemqEnv *env, uint32_t action, double *reward, bool *done);

/**
 * Renders the current view into `buf` (`MEMQ_OBS_LEN` bytes, CHW).
 *
 * # Safety
 * `env` must be a live handle and `buf` point to `len` writable bytes.
 */
enum MemqStatus memq_env_observe(struct MemqEnv *env, uint8_t *buf, size_t len);

/**
 * Episode return so far.
 *
 * # Safety
 * `env` must be a live handle and `out` a valid pointer.
 */
enum MemqStatus memq_env_total_reward(struct MemqEnv *env, double *out);

/**
 * # Safety
 * `env` must be null or a handle not yet freed.
 */
void memq_env_free(struct MemqEnv *env);

/**
 * Loads a recurrent or memory agent from a checkpoint. Stacked-frame
 * agents have no streaming state and are rejected.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MemqStatus memq_agent_load(const char *path, struct MemqAgent **out);

/**
 * Clears the agent's memory and recurrent state for a new episode.
 *
 * # Safety
 * `agent` must be a live handle.
 */
enum MemqStatus memq_agent_reset(struct MemqAgent *agent);

/**
 * Feeds one observation, writes the `MEMQ_NUM_ACTIONS` Q-values to `q`
 * (may be null) and the greedy action to `action`.
 *
 * # Safety
 * `agent` must be a live handle, `obs` point to `obs_len` bytes, `q` be
 * null or point to `q_len` writable doubles, and `action` be valid.
 */
enum MemqStatus memq_agent_step(struct MemqAgent *agent,
                                const uint8_t *obs,
                                size_t obs_len,
                                double *q,
                                size_t q_len,
                                uint32_t *action);

/**
 * # Safety
 * `agent` must be null or a handle not yet freed.
 */
void memq_agent_free(struct MemqAgent *agent);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEMQ_H */
