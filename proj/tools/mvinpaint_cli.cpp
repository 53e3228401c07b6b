// Command-line front end; talks to the library only through the C API.
#include "mvinpaint/mvinpaint.h"

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

namespace {

struct Common {
    std::string config;
    std::vector<std::string> targets;
    std::string out;
    bool debug = false;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config,-c", c.config, "key = value configuration file")->required();
    app->add_option("--target,-t", c.targets, "target frame id (repeatable; default: every masked frame)");
    app->add_option("--out,-o", c.out, "output directory");
    app->add_flag("--debug", c.debug, "write debug images and stage artifacts");
    app->add_option("--set", c.overrides, "override a config entry, key=value (repeatable)");
}

int fail(mvi_status s) {
    std::fprintf(stderr, "mvinpaint: %s\n", mvi_last_error());
    return static_cast<int>(s);
}

// Config file first, then flags.
mvi_status build_config(const Common& c, mvi_config** out) {
    mvi_status s = mvi_config_create(out);
    if (s != MVI_OK) return s;
    if ((s = mvi_config_load(*out, c.config.c_str())) != MVI_OK) return s;
    for (const auto& kv : c.overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "mvinpaint: --set expects key=value, got '%s'\n", kv.c_str());
            return MVI_ERR_USAGE;
        }
        if ((s = mvi_config_set(*out, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str())) != MVI_OK) return s;
    }
    if (!c.targets.empty()) {
        std::string list;
        for (const auto& t : c.targets) list += (list.empty() ? "" : ",") + t;
        if ((s = mvi_config_set(*out, "targets", list.c_str())) != MVI_OK) return s;
    }
    if (!c.out.empty() && (s = mvi_config_set(*out, "output", c.out.c_str())) != MVI_OK) return s;
    if (c.debug && (s = mvi_config_set(*out, "debug", "true")) != MVI_OK) return s;
    return mvi_config_validate(*out);
}

int execute(const Common& c, const std::string* stage) {
    mvi_config* cfg = nullptr;
    mvi_status s = build_config(c, &cfg);
    if (s != MVI_OK) {
        int code = *mvi_last_error() ? fail(s) : static_cast<int>(s);
        mvi_config_destroy(cfg);
        return code;
    }
    mvi_report* report = nullptr;
    s = stage ? mvi_run_stage(cfg, stage->c_str(), &report) : mvi_run(cfg, &report);
    if (report) std::fputs(mvi_report_text(report), stdout);
    int code = s == MVI_OK ? 0 : fail(s);
    mvi_report_destroy(report);
    mvi_config_destroy(cfg);
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-view RGB-D object removal"};
    app.set_version_flag("--version", std::string(mvi_version()));
    app.require_subcommand(1);

    Common run_opts, stage_opts, show_opts;
    CLI::App* run = app.add_subcommand("run", "run the whole pipeline");
    add_common(run, run_opts);

    std::string stage_name;
    CLI::App* stage = app.add_subcommand("stage", "run one stage from the previous stage's artifacts");
    stage->add_option("name", stage_name, "select, warp, combine, color or depth")->required();
    add_common(stage, stage_opts);

    CLI::App* show = app.add_subcommand("config", "print the effective configuration");
    add_common(show, show_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    if (*run) return execute(run_opts, nullptr);
    if (*stage) return execute(stage_opts, &stage_name);

    mvi_config* cfg = nullptr;
    mvi_status s = build_config(show_opts, &cfg);
    if (s == MVI_OK) std::fputs(mvi_config_text(cfg), stdout);
    int code = s == MVI_OK ? 0 : fail(s);
    mvi_config_destroy(cfg);
    return code;
}
