/*
 * blehop C API
 *
 * Channel selection, sniffer-trace simulation, parameter reconstruction and
 * channel-access prediction for BLE connections, behind opaque handles.
 *
 * Conventions:
 *  - Every fallible call returns a blehop_status; on failure the thread-local
 *    message from blehop_last_error() describes the cause.
 *  - Strings returned through char** out-parameters are owned by the caller
 *    and released with blehop_string_free().
 *  - Handles are released with their matching *_free() function; passing NULL is a no-op.
 *  - Documents are JSON text; durations in configuration documents are microseconds.
 */
#ifndef BLEHOP_BLEHOP_H
#define BLEHOP_BLEHOP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(BLEHOP_BUILDING_LIBRARY)
#    define BLEHOP_API __declspec(dllexport)
#  else
#    define BLEHOP_API __declspec(dllimport)
#  endif
#else
#  define BLEHOP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum blehop_status {
    BLEHOP_OK = 0,
    BLEHOP_ERROR_INVALID_ARGUMENT = 1,
    BLEHOP_ERROR_CONFIG = 2,
    BLEHOP_ERROR_PARSE = 3,
    BLEHOP_ERROR_ESTIMATION = 4,
    BLEHOP_ERROR_AMBIGUOUS = 5,
    BLEHOP_ERROR_IO = 6,
    BLEHOP_ERROR_INSUFFICIENT_DATA = 7,
    BLEHOP_ERROR_INTERNAL = 8
} blehop_status;

typedef enum blehop_format {
    BLEHOP_FORMAT_CSV = 0,
    BLEHOP_FORMAT_JSONL = 1
} blehop_format;

typedef struct blehop_trace blehop_trace;
typedef struct blehop_simulation blehop_simulation;
typedef struct blehop_report_set blehop_report_set;
typedef struct blehop_prediction blehop_prediction;

BLEHOP_API const char* blehop_version(void);
BLEHOP_API const char* blehop_last_error(void);
BLEHOP_API const char* blehop_status_name(blehop_status status);
BLEHOP_API void blehop_string_free(char* str);

/* Channel selection primitives. Channel maps are 37-bit masks, bit i = channel i. */
BLEHOP_API uint16_t blehop_channel_identifier(uint32_t access_address);
BLEHOP_API uint16_t blehop_prn_e(uint16_t counter, uint16_t channel_identifier);
BLEHOP_API blehop_status blehop_csa2_channel(uint16_t counter, uint16_t channel_identifier,
                                             uint64_t channel_map, uint8_t* out_channel);
BLEHOP_API blehop_status blehop_csa1_channel(uint8_t initial_channel, int hop_increment,
                                             uint64_t channel_map, int64_t event,
                                             uint8_t* out_channel);
BLEHOP_API blehop_status blehop_channel_map_parse(const char* text, uint64_t* out_mask);
BLEHOP_API blehop_status blehop_channel_map_format(uint64_t mask, char** out_text);
BLEHOP_API blehop_status blehop_reconstruction_budget(int n_ch, int64_t* out_events);

/* Sniffer traces. */
BLEHOP_API blehop_status blehop_trace_parse(const char* data, size_t size, blehop_format format,
                                            blehop_trace** out_trace);
/* Format chosen by extension: .jsonl/.ndjson for JSONL, CSV otherwise. */
BLEHOP_API blehop_status blehop_trace_load_file(const char* path, blehop_trace** out_trace);
BLEHOP_API blehop_status blehop_trace_save_file(const blehop_trace* trace, const char* path);
BLEHOP_API blehop_status blehop_trace_serialize(const blehop_trace* trace, blehop_format format,
                                                char** out_text);
BLEHOP_API size_t blehop_trace_size(const blehop_trace* trace);
/* Number of distinct access addresses in the trace. */
BLEHOP_API size_t blehop_trace_connection_count(const blehop_trace* trace);
BLEHOP_API void blehop_trace_free(blehop_trace* trace);

/* Simulation of a scenario document. */
BLEHOP_API blehop_status blehop_simulate(const char* scenario_json, blehop_simulation** out_sim);
BLEHOP_API const blehop_trace* blehop_simulation_trace(const blehop_simulation* sim);
BLEHOP_API size_t blehop_simulation_connection_count(const blehop_simulation* sim);
BLEHOP_API blehop_status blehop_simulation_timelines_jsonl(const blehop_simulation* sim,
                                                           char** out_text);
BLEHOP_API void blehop_simulation_free(blehop_simulation* sim);

/*
 * Reconstruction: one report per access address. options_json may be NULL or
 * {"train_duration_us": d (only observations with timestamp <= d are used),
 *  "lattice_tolerance_us": t, "csa1_fill_threshold": f, "alignment_slack_sigma": s}.
 */
BLEHOP_API blehop_status blehop_reconstruct(const blehop_trace* trace, const char* options_json,
                                            blehop_report_set** out_reports);
BLEHOP_API size_t blehop_report_set_size(const blehop_report_set* reports);
BLEHOP_API uint32_t blehop_report_set_access_address(const blehop_report_set* reports, size_t index);
/* Status of report `index`: BLEHOP_OK, or the failure class of that connection. */
BLEHOP_API blehop_status blehop_report_set_status(const blehop_report_set* reports, size_t index);
BLEHOP_API blehop_status blehop_report_set_json(const blehop_report_set* reports, size_t index,
                                                char** out_json);
BLEHOP_API void blehop_report_set_free(blehop_report_set* reports);

/*
 * Prediction from one estimation report and the trace it came from. Options:
 * {"horizon": events (-1 = to end of trace), "channel": n,
 *  "measurement_noise_us": s, "gate_sigma": g, "interval_process_noise": q}.
 * Observations after the report's last timestamp are the held-out set.
 */
BLEHOP_API blehop_status blehop_predict(const char* report_json, const blehop_trace* trace,
                                        const char* options_json, blehop_prediction** out_prediction);
BLEHOP_API blehop_status blehop_prediction_forecast_json(const blehop_prediction* prediction,
                                                         char** out_json);
/* BLEHOP_ERROR_ESTIMATION when nothing could be evaluated. */
BLEHOP_API blehop_status blehop_prediction_eval_json(const blehop_prediction* prediction,
                                                     char** out_json);
BLEHOP_API blehop_status blehop_prediction_eccdf_csv(const blehop_prediction* prediction,
                                                     char** out_csv);
BLEHOP_API void blehop_prediction_free(blehop_prediction* prediction);

/* Evaluation of a forecast document against held-out observations or ground truth. */
BLEHOP_API blehop_status blehop_evaluate_trace(const char* forecast_json, const blehop_trace* trace,
                                               char** out_eval_json);
BLEHOP_API blehop_status blehop_evaluate_timelines(const char* forecast_json,
                                                   const char* timelines_jsonl,
                                                   char** out_eval_json);
BLEHOP_API blehop_status blehop_eval_eccdf_csv(const char* eval_json, char** out_csv);

/* Raw hop sequence as CSV for a {"params": {...}, "start_k": n, "count": n} document. */
BLEHOP_API blehop_status blehop_hopgen(const char* request_json, char** out_csv);

#ifdef __cplusplus
}
#endif

#endif /* BLEHOP_BLEHOP_H */
