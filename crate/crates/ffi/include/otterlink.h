#ifndef OTTERLINK_H
#define OTTERLINK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OtlStatus {
  OTL_STATUS_OK = 0,
  OTL_STATUS_NULL_POINTER = 1,
  OTL_STATUS_INVALID_UTF8 = 2,
  OTL_STATUS_FRAMING = 3,
  OTL_STATUS_CHECKSUM = 4,
  OTL_STATUS_UNKNOWN_SENTENCE = 5,
  OTL_STATUS_MALFORMED = 6,
  OTL_STATUS_OUT_OF_RANGE = 7,
  OTL_STATUS_BUFFER_TOO_SMALL = 8,
  OTL_STATUS_INVALID_ARGUMENT = 9,
  OTL_STATUS_NUMERIC_FAULT = 10,
  OTL_STATUS_PANIC = 11,
} OtlStatus;

typedef enum OtlKind {
  OTL_KIND_POS = 0,
  OTL_KIND_ATT = 1,
  OTL_KIND_STATUS = 2,
  OTL_KIND_TIME = 3,
  OTL_KIND_DRIFT = 4,
  OTL_KIND_MANUAL = 5,
  OTL_KIND_STATION_KEEP = 6,
  OTL_KIND_COURSE_SPEED = 7,
} OtlKind;

typedef enum OtlMode {
  OTL_MODE_DRIFT = 0,
  OTL_MODE_MANUAL = 1,
  OTL_MODE_STATION_KEEP = 2,
  OTL_MODE_COURSE_SPEED = 3,
} OtlMode;

/**
 * NMPC path follower with its warm start and path progress.
 */
typedef struct OtlNmpc OtlNmpc;

/**
 * Simulated OBC.
 */
typedef struct OtlSim OtlSim;

typedef struct OtlPos {
  double utc;
  double lat;
  double lon;
  double alt;
  double sog;
  double cog;
} OtlPos;

typedef struct OtlAtt {
  double utc;
  double roll;
  double pitch;
  double yaw;
  double p;
  double q;
  double r;
} OtlAtt;

typedef struct OtlStatusReport {
  enum OtlMode mode;
  uint32_t rpm_port;
  uint32_t rpm_stbd;
  double temp;
  double battery;
  double power;
} OtlStatusReport;

typedef struct OtlTime {
  uint32_t utc_date;
  double utc_time;
} OtlTime;

typedef struct OtlDrift {
  bool on;
} OtlDrift;

typedef struct OtlManual {
  double x;
  double y;
  double z;
} OtlManual;

typedef struct OtlStationKeep {
  double lat;
  double lon;
  double speed;
} OtlStationKeep;

typedef struct OtlCourseSpeed {
  double course;
  double speed;
} OtlCourseSpeed;

/**
 * Payload selected by [`OtlMessage::kind`].
 */
typedef union OtlBody {
  struct OtlPos pos;
  struct OtlAtt att;
  struct OtlStatusReport status;
  struct OtlTime time;
  struct OtlDrift drift;
  struct OtlManual manual;
  struct OtlStationKeep station_keep;
  struct OtlCourseSpeed course_speed;
} OtlBody;

typedef struct OtlMessage {
  enum OtlKind kind;
  union OtlBody body;
} OtlMessage;

typedef struct OtlSimConfig {
  double telemetry_hz;
  double start_north;
  double start_east;
  double start_heading_deg;
  double current_north;
  double current_east;
} OtlSimConfig;

/**
 * Planar vessel state in the local frame. Heading in radians, clockwise
 * from north; rates in rad/s.
 */
typedef struct OtlState {
  double north;
  double east;
  double psi;
  double u;
  double v;
  double r;
} OtlState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `cap > 0`). Returns the full message length.
 *
 * # Safety
 * `buf` is null or valid for `cap` bytes.
 */
size_t otl_last_error(char *buf, size_t cap);

/**
 * Writes the two-digit XOR checksum of `payload` and a NUL into `out`.
 *
 * # Safety
 * `payload` is a NUL-terminated string; `out` holds at least 3 bytes.
 */
enum OtlStatus otl_checksum(const char *payload, char *out);

/**
 * Encodes `msg` as one sentence including `\r\n`. `written` receives the
 * sentence length, also when the buffer is too small.
 *
 * # Safety
 * `msg` is valid with a body matching its kind; `buf` is valid for `cap`
 * bytes; `written` is null or valid.
 */
enum OtlStatus otl_encode(const struct OtlMessage *msg, char *buf, size_t cap, size_t *written);

/**
 * Decodes one sentence, with or without the trailing `\r\n`.
 *
 * # Safety
 * `line` is a NUL-terminated string; `out` is valid.
 */
enum OtlStatus otl_decode(const char *line, struct OtlMessage *out);

/**
 * Defaults used when `otl_sim_new` gets a null config.
 */
struct OtlSimConfig otl_sim_config_default(void);

/**
 * # Safety
 * `cfg` is null or valid; `out` is valid.
 */
enum OtlStatus otl_sim_new(const struct OtlSimConfig *cfg, struct OtlSim **out);

/**
 * # Safety
 * `sim` is null or was returned by `otl_sim_new` and not yet freed.
 */
void otl_sim_free(struct OtlSim *sim);

/**
 * Applies one command sentence.
 *
 * # Safety
 * `sim` is a live handle; `line` is a NUL-terminated string.
 */
enum OtlStatus otl_sim_command(struct OtlSim *sim, const char *line);

/**
 * Advances the simulation to `now` (s) and writes the due telemetry
 * sentences, concatenated, into `buf`. `written` receives their total
 * length. On `BUFFER_TOO_SMALL` the sentences are lost; size the buffer
 * for a full tick (1 KiB is ample).
 *
 * # Safety
 * `sim` is a live handle; `buf` is valid for `cap` bytes; `written` is
 * null or valid.
 */
enum OtlStatus otl_sim_tick(struct OtlSim *sim, double now, char *buf, size_t cap, size_t *written);

/**
 * # Safety
 * `sim` is a live handle; `out` is valid.
 */
enum OtlStatus otl_sim_state(const struct OtlSim *sim, struct OtlState *out);

/**
 * NMPC tracking a lemniscate of the given amplitude (m) centred on the
 * local origin, with default weights and horizon.
 *
 * # Safety
 * `out` is valid.
 */
enum OtlStatus otl_nmpc_new_figure_eight(double amplitude, double ref_speed, struct OtlNmpc **out);

/**
 * # Safety
 * `h` is null or was returned by `otl_nmpc_new_figure_eight` and not yet
 * freed.
 */
void otl_nmpc_free(struct OtlNmpc *h);

/**
 * One solve from `state`. `prev` is the previously applied `(x, z)` pair;
 * the first optimal input is written to `out`. Calls should follow the
 * vessel at the control rate so path progress stays unambiguous.
 *
 * # Safety
 * `h` is a live handle; `state` is valid; `prev` and `out` point to two
 * doubles each.
 */
enum OtlStatus otl_nmpc_solve(struct OtlNmpc *h,
                              const struct OtlState *state,
                              const double *prev,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OTTERLINK_H */
