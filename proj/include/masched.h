#ifndef MASCHED_H
#define MASCHED_H

/* C interface to the masched scheduling engine.
 *
 * Every function returns a mas_status. On failure mas_last_error() describes
 * the problem for the calling thread. Strings handed out through char** are
 * owned by the caller and released with mas_string_free(). JSON in and out
 * is UTF-8 text.
 */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define MAS_API __declspec(dllexport)
#else
#define MAS_API __attribute__((visibility("default")))
#endif

typedef enum mas_status {
  MAS_OK = 0,
  MAS_ERR_INVALID_ARGUMENT = 1,
  MAS_ERR_NOT_FOUND = 2,
  MAS_ERR_CONFLICT = 3,
  MAS_ERR_PARSE = 4,
  MAS_ERR_VALIDATION = 5,
  MAS_ERR_IO = 6,
  MAS_ERR_RUNTIME = 7
} mas_status;

typedef struct mas_engine mas_engine;

MAS_API const char* mas_version(void);
MAS_API const char* mas_status_name(mas_status s);
/* Message of the last failed call on this thread; "" if none. */
MAS_API const char* mas_last_error(void);
MAS_API void mas_string_free(char* s);

/* Options are a JSON object or NULL:
 *   {"seed": 7, "horizon": 20160, "default_strategy": "Force"}
 * seed and horizon override the scenario; default_strategy applies to
 * orders without a strategy field. */

/* Lints a scenario document. *issues_json receives an array of
 * {"path","message"}; MAS_ERR_VALIDATION when it is not empty. */
MAS_API mas_status mas_validate(const char* scenario_text, const char* options_json, char** issues_json);

MAS_API mas_status mas_engine_open(const char* scenario_text, const char* options_json, mas_engine** out);
MAS_API mas_status mas_engine_open_file(const char* path, const char* options_json, mas_engine** out);
MAS_API mas_status mas_engine_restore(const char* snapshot_json, mas_engine** out);
/* Stops a running service first. NULL is ignored. */
MAS_API void mas_engine_free(mas_engine* e);

/* *advanced is 0 once the run is over. */
MAS_API mas_status mas_engine_step(mas_engine* e, int* advanced);
MAS_API mas_status mas_engine_run(mas_engine* e);
MAS_API mas_status mas_engine_run_until(mas_engine* e, int64_t t);

/* Applies a gateway command. *result_json gets {"ok","event_ids","data"} or
 * an error body; the status mirrors the rejection code. */
MAS_API mas_status mas_engine_command(mas_engine* e, const char* command_json, char** result_json);
/* Re-applies the commands recorded in a trace during the next run. */
MAS_API mas_status mas_engine_replay(mas_engine* e, const char* trace_ndjson);

/* what: "plan", "orders", "approvals", "runs", "metrics", "state", "messages" */
MAS_API mas_status mas_engine_query(mas_engine* e, const char* what, char** json_out);
/* Events with sequence number > after, one JSON record per line. */
MAS_API mas_status mas_engine_events(mas_engine* e, uint64_t after, char** ndjson_out);
MAS_API mas_status mas_engine_snapshot(mas_engine* e, char** json_out);
MAS_API mas_status mas_engine_hash(mas_engine* e, char** hex_out);

/* Serves the engine over HTTP. Port 0 picks a free port. While serving,
 * the other mas_engine_* calls go through the service mailbox. */
MAS_API mas_status mas_engine_serve(mas_engine* e, const char* host, int port, int* bound_port);
MAS_API mas_status mas_engine_serve_stop(mas_engine* e);

/* Dispatches every order of a scenario into one initial plan and runs the
 * optimizer on it. *report_json holds both plans and the run summary. */
MAS_API mas_status mas_optimize_offline(const char* scenario_text, const char* options_json, char** report_json);

#ifdef __cplusplus
}
#endif

#endif
