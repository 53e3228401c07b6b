#include "mvinpaint/mvinpaint.h"

#include "mvinpaint/pipeline.hpp"

#include <string>

struct mvi_config {
    mvi::PipelineConfig cfg;
    std::string text;
};

struct mvi_report {
    mvi::RunReport report;
    std::string text;
    std::string json;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
mvi_status guarded(Fn fn) {
    g_last_error.clear();
    try {
        return fn();
    } catch (const mvi::ConfigError& e) {
        g_last_error = e.what();
        return MVI_ERR_USAGE;
    } catch (const mvi::InputError& e) {
        g_last_error = e.what();
        return MVI_ERR_DATA;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return MVI_ERR_PIPELINE;
    } catch (...) {
        g_last_error = "unknown error";
        return MVI_ERR_INTERNAL;
    }
}

mvi_status null_arg(const char* what) {
    g_last_error = std::string("null argument: ") + what;
    return MVI_ERR_USAGE;
}

mvi_status finish(mvi::RunReport report, mvi_report** out) {
    auto* r = new mvi_report{std::move(report), {}, {}};
    r->text = r->report.to_text();
    r->json = r->report.to_json().dump(2);
    const int failed = r->report.failed_regions();
    *out = r;
    if (failed > 0) {
        g_last_error = std::to_string(failed) + " mask region(s) failed; see the report";
        return MVI_ERR_PIPELINE;
    }
    return MVI_OK;
}

}  // namespace

extern "C" {

const char* mvi_version(void) { return "0.1.0"; }

const char* mvi_last_error(void) { return g_last_error.c_str(); }

mvi_status mvi_config_create(mvi_config** out) {
    if (!out) return null_arg("out");
    return guarded([&] {
        *out = new mvi_config();
        return MVI_OK;
    });
}

void mvi_config_destroy(mvi_config* config) { delete config; }

mvi_status mvi_config_load(mvi_config* config, const char* path) {
    if (!config) return null_arg("config");
    if (!path) return null_arg("path");
    return guarded([&] {
        config->cfg.load_file(path);
        return MVI_OK;
    });
}

mvi_status mvi_config_set(mvi_config* config, const char* key, const char* value) {
    if (!config) return null_arg("config");
    if (!key || !value) return null_arg("key/value");
    return guarded([&] {
        config->cfg.set(key, value);
        return MVI_OK;
    });
}

mvi_status mvi_config_validate(const mvi_config* config) {
    if (!config) return null_arg("config");
    return guarded([&] {
        config->cfg.validate();
        return MVI_OK;
    });
}

const char* mvi_config_text(mvi_config* config) {
    if (!config) return "";
    config->text = config->cfg.to_text();
    return config->text.c_str();
}

mvi_status mvi_run(const mvi_config* config, mvi_report** out) {
    if (!config) return null_arg("config");
    if (!out) return null_arg("out");
    *out = nullptr;
    return guarded([&] { return finish(mvi::run(config->cfg), out); });
}

mvi_status mvi_run_stage(const mvi_config* config, const char* stage, mvi_report** out) {
    if (!config) return null_arg("config");
    if (!stage) return null_arg("stage");
    if (!out) return null_arg("out");
    *out = nullptr;
    return guarded([&] { return finish(mvi::run_stage(config->cfg, stage), out); });
}

const char* mvi_report_text(const mvi_report* report) { return report ? report->text.c_str() : ""; }

const char* mvi_report_json(const mvi_report* report) { return report ? report->json.c_str() : ""; }

int mvi_report_failed_regions(const mvi_report* report) { return report ? report->report.failed_regions() : 0; }

void mvi_report_destroy(mvi_report* report) { delete report; }

}  // extern "C"
