// critlab: batch driver for the critical-exponent laboratory.
//
//   critlab <experiment> [--config file] [--key value ...]
//
// Experiments: classify, solve, bisect, green, mass, blowup, counterexample,
// testfn, probe. Any config key can be passed as a flag; flags override file
// keys. Exit codes: 0 success, 2 solver error, 3 config error.

#include <CLI11.hpp>

#include "critlab/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"critlab: critical-exponent elliptic PDE laboratory"};
    app.allow_extras();

    std::string experiment;
    std::string config_path;
    app.add_option("experiment", experiment,
                   "classify | solve | bisect | green | mass | blowup | counterexample | "
                   "testfn | probe")
        ->required();
    app.add_option("--config", config_path, "key = value config file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 3;
    }

    critlab::ExperimentConfig cfg;
    try {
        if (!config_path.empty()) cfg = critlab::load_config_file(config_path);
    } catch (const critlab::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 3;
    }
    cfg.set("experiment", experiment);

    // remaining --key value pairs override file keys
    std::vector<std::string> extras = app.remaining();
    for (std::size_t i = 0; i < extras.size(); ++i) {
        std::string key = extras[i];
        if (key.rfind("--", 0) != 0) {
            std::fprintf(stderr, "config error: expected --key, got '%s'\n", key.c_str());
            return 3;
        }
        key = key.substr(2);
        std::string value;
        const auto eq = key.find('=');
        if (eq != std::string::npos) {
            value = key.substr(eq + 1);
            key = key.substr(0, eq);
        } else {
            if (i + 1 >= extras.size()) {
                std::fprintf(stderr, "config error: flag --%s needs a value\n", key.c_str());
                return 3;
            }
            value = extras[++i];
        }
        cfg.set(key, value);
    }

    return critlab::run(cfg);
}
