/* C interface to the figure retrieval core. All functions are safe to call from
 * any thread; handles are not internally synchronized except where noted. */
#ifndef FIGRET_H
#define FIGRET_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FIGRET_API __declspec(dllexport)
#else
#define FIGRET_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum figret_status {
  FIGRET_OK = 0,
  FIGRET_E_PARAMETER = 1,
  FIGRET_E_STRUCTURAL = 2,
  FIGRET_E_PROTOCOL = 3,
  FIGRET_E_FORMAT = 4,
  FIGRET_E_IO = 5,
  FIGRET_E_CONSISTENCY = 6,
  FIGRET_E_NUMERIC = 7,
  FIGRET_E_NOT_FOUND = 8,
  FIGRET_E_INTERNAL = 9
} figret_status;

typedef struct figret_project figret_project;
typedef struct figret_index figret_index;
typedef struct figret_model figret_model;
typedef struct figret_server figret_server;

/* Receives one line of progress output (no trailing newline). */
typedef void (*figret_log_fn)(const char* line, void* user);

FIGRET_API const char* figret_version(void);
FIGRET_API const char* figret_status_name(figret_status status);
/* Message of the most recent failure on the calling thread; "" if none. */
FIGRET_API const char* figret_last_error(void);
/* Frees strings returned through char** out-parameters. */
FIGRET_API void figret_string_free(char* s);

/* Project: a config file plus the pipeline stages it drives.
 * config_path may be NULL for built-in defaults relative to the working directory. */
FIGRET_API figret_status figret_project_open(const char* config_path, figret_project** out);
FIGRET_API figret_status figret_project_from_json(const char* json, const char* base_dir, figret_project** out);
FIGRET_API void figret_project_free(figret_project* project);
FIGRET_API figret_status figret_project_config_json(const figret_project* project, char** out_json);

/* Each stage writes its artifacts and returns a JSON summary (out may be NULL). */
FIGRET_API figret_status figret_gen_data(figret_project* project, char** out_json);
FIGRET_API figret_status figret_train(figret_project* project, figret_log_fn log, void* user, char** out_json);
FIGRET_API figret_status figret_build_index(figret_project* project, char** out_json);
/* out_path may be NULL for the project's default map path. */
FIGRET_API figret_status figret_make_map(figret_project* project, const char* out_path, char** out_json);
/* marks_path may be NULL. Returns a text report. */
FIGRET_API figret_status figret_eval(figret_project* project, const char* marks_path, char** out_report);

/* Query against the project's index and model, using the same JSON contract as
 * POST /query. The service state is loaded on first use and then cached. On a
 * rejected request *out_json still receives the {"error": ...} body. */
FIGRET_API figret_status figret_query(figret_project* project, const char* request_json, char** out_json);
/* Query by an image; pgm/len hold the bytes of a binary PGM. */
FIGRET_API figret_status figret_query_pgm(figret_project* project, const void* pgm, size_t len, size_t k,
                                          char** out_json);

/* HTTP service. start returns once the socket is bound (port 0 picks a free one);
 * wait blocks until stop is called from another thread. */
FIGRET_API figret_status figret_server_start(figret_project* project, const char* host, int port,
                                             figret_server** out, int* bound_port);
FIGRET_API void figret_server_wait(figret_server* server);
FIGRET_API void figret_server_stop(figret_server* server);
FIGRET_API void figret_server_free(figret_server* server);

/* Index files. */
FIGRET_API figret_status figret_index_open(const char* path, figret_index** out);
FIGRET_API void figret_index_free(figret_index* index);
FIGRET_API size_t figret_index_size(const figret_index* index);
FIGRET_API size_t figret_index_dim(const figret_index* index);
FIGRET_API uint64_t figret_index_snapshot(const figret_index* index);
/* Writes up to k results; *count receives how many. ids are owned by the index. */
FIGRET_API figret_status figret_index_topk(const figret_index* index, const float* query, size_t dim, size_t k,
                                           const char** out_ids, double* out_sims, size_t* count);

/* Model checkpoints. */
FIGRET_API figret_status figret_model_open(const char* path, figret_model** out);
FIGRET_API void figret_model_free(figret_model* model);
FIGRET_API size_t figret_model_embedding_dim(const figret_model* model);
/* Embeds a PGM image (resized to the network input). out must hold embedding_dim floats. */
FIGRET_API figret_status figret_model_embed_pgm(const figret_model* model, const void* pgm, size_t len, float* out,
                                                size_t capacity);

#ifdef __cplusplus
}
#endif

#endif
