/* C interface of the mvinpaint library. All handles are opaque; every call
 * that can fail returns an mvi_status and leaves a message retrievable with
 * mvi_last_error() on the calling thread. */
#ifndef MVINPAINT_H
#define MVINPAINT_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define MVI_API __declspec(dllexport)
#else
#define MVI_API __attribute__((visibility("default")))
#endif

typedef enum mvi_status {
    MVI_OK = 0,
    MVI_ERR_USAGE = 1,    /* bad arguments, unknown key or stage, invalid parameter */
    MVI_ERR_DATA = 2,     /* unreadable or malformed dataset, missing stage artifact */
    MVI_ERR_PIPELINE = 3, /* one or more mask regions failed; report still produced */
    MVI_ERR_INTERNAL = 4
} mvi_status;

typedef struct mvi_config mvi_config;
typedef struct mvi_report mvi_report;

MVI_API const char* mvi_version(void);
/* Message of the last failed call on this thread ("" when none). */
MVI_API const char* mvi_last_error(void);

MVI_API mvi_status mvi_config_create(mvi_config** out);
MVI_API void mvi_config_destroy(mvi_config* config);
/* Reads `key = value` lines; '#' starts a comment. */
MVI_API mvi_status mvi_config_load(mvi_config* config, const char* path);
MVI_API mvi_status mvi_config_set(mvi_config* config, const char* key, const char* value);
MVI_API mvi_status mvi_config_validate(const mvi_config* config);
/* Current values, one `key = value` per line. Owned by the config. */
MVI_API const char* mvi_config_text(mvi_config* config);

/* On MVI_OK and MVI_ERR_PIPELINE *out receives a report to destroy. */
MVI_API mvi_status mvi_run(const mvi_config* config, mvi_report** out);
/* stage: select, warp, combine, color or depth. */
MVI_API mvi_status mvi_run_stage(const mvi_config* config, const char* stage, mvi_report** out);

MVI_API const char* mvi_report_text(const mvi_report* report);
MVI_API const char* mvi_report_json(const mvi_report* report);
MVI_API int mvi_report_failed_regions(const mvi_report* report);
MVI_API void mvi_report_destroy(mvi_report* report);

#ifdef __cplusplus
}
#endif

#endif
