#ifndef CLAIMLOCK_H
#define CLAIMLOCK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ClaimlockStatus {
  CLAIMLOCK_STATUS_OK = 0,
  CLAIMLOCK_STATUS_NULL_ARGUMENT = 1,
  CLAIMLOCK_STATUS_NULL_PID = 2,
  CLAIMLOCK_STATUS_OUT_OF_CAPACITY = 3,
  CLAIMLOCK_STATUS_CAPACITY_TOO_LARGE = 4,
  CLAIMLOCK_STATUS_NOT_ACTIVE = 5,
  CLAIMLOCK_STATUS_NOT_PARKED = 6,
  CLAIMLOCK_STATUS_REENTRANT = 7,
  CLAIMLOCK_STATUS_NOT_OWNER = 8,
  CLAIMLOCK_STATUS_INVALID_CONFIG = 9,
  CLAIMLOCK_STATUS_INTERNAL = 10,
} ClaimlockStatus;

/**
 * Protocol variant for exploration; anything but `Faithful` is a deliberate bug.
 */
typedef enum ClaimlockVariant {
  CLAIMLOCK_VARIANT_FAITHFUL = 0,
  CLAIMLOCK_VARIANT_BLIND_OWNER_STORE = 1,
  CLAIMLOCK_VARIANT_SINGLE_SCHEDULE_CAS = 2,
  CLAIMLOCK_VARIANT_GRANT_WHILE_UNSCHEDULED = 3,
} ClaimlockVariant;

/**
 * Opaque mutex handle.
 */
typedef struct ClaimlockMutex ClaimlockMutex;

/**
 * Runtime callbacks. Either may be NULL. `user_data` is passed back untouched.
 */
typedef struct ClaimlockHooks {
  void (*on_wait)(void *user_data, uint32_t pid);
  void (*on_schedule)(void *user_data, uint32_t pid);
  void *user_data;
} ClaimlockHooks;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a mutex for process ids `1..=capacity`.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum ClaimlockStatus claimlock_mutex_new(uint32_t capacity, struct ClaimlockMutex **out);

/**
 * Destroys a handle. NULL is ignored.
 *
 * # Safety
 * `m` is NULL or came from `claimlock_mutex_new` and is not used afterwards.
 */
void claimlock_mutex_free(struct ClaimlockMutex *m);

/**
 * Attempts to take the mutex. On `*granted == false` the caller must park
 * and later call `claimlock_yield`.
 *
 * # Safety
 * `m` is a live handle, `granted` is writable, `hooks` is NULL or valid.
 */
enum ClaimlockStatus claimlock_claim(const struct ClaimlockMutex *m,
                                     uint32_t pid,
                                     const struct ClaimlockHooks *hooks,
                                     bool *granted);

/**
 * Gives up the mutex, scheduling the next waiter through `on_schedule`.
 *
 * # Safety
 * `m` is a live handle, `hooks` is NULL or valid.
 */
enum ClaimlockStatus claimlock_release(const struct ClaimlockMutex *m,
                                       uint32_t pid,
                                       const struct ClaimlockHooks *hooks);

/**
 * Continues a denied claim. `*resumed` is true once the caller holds the
 * mutex; false means `on_wait` was called and the caller should park.
 *
 * # Safety
 * `m` is a live handle, `resumed` is writable, `hooks` is NULL or valid.
 */
enum ClaimlockStatus claimlock_yield(const struct ClaimlockMutex *m,
                                     uint32_t pid,
                                     const struct ClaimlockHooks *hooks,
                                     bool *resumed);

/**
 * Writes the process state: 0 ACTIVE, 1 ENGAGING, 2 WAITING, 3 SCHEDULED.
 *
 * # Safety
 * `m` is a live handle and `out` is writable.
 */
enum ClaimlockStatus claimlock_state(const struct ClaimlockMutex *m, uint32_t pid, uint8_t *out);

/**
 * Writes the current owner, 0 for none.
 *
 * # Safety
 * `m` is a live handle and `out` is writable.
 */
enum ClaimlockStatus claimlock_owner(const struct ClaimlockMutex *m, uint32_t *out);

/**
 * Runs an exhaustive exploration and returns its JSON report in `*json`,
 * to be released with `claimlock_string_free`. `max_states` 0 means no budget.
 * `*exit_code` gets 0 clean, 1 violation, 2 budget exhausted.
 *
 * # Safety
 * `json` and `exit_code` are writable.
 */
enum ClaimlockStatus claimlock_explore_json(uint32_t processes,
                                            uint32_t cycles,
                                            enum ClaimlockVariant variant,
                                            uint64_t max_states,
                                            char **json,
                                            int32_t *exit_code);

/**
 * Frees a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` is NULL or came from this library and is not used afterwards.
 */
void claimlock_string_free(char *s);

/**
 * Static, NUL-terminated description of a status.
 */
const char *claimlock_status_message(enum ClaimlockStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLAIMLOCK_H */
