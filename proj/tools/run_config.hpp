#pragma once

// Option registry for the command-line tool. Every option has a built-in
// default; a JSON config file may override defaults, and flags given on the
// command line override both. The merged values are kept as JSON so they can
// be echoed into output metadata.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace surfmatch::cli {

class RunConfig {
public:
    explicit RunConfig(std::string command) : command_(std::move(command)) {}

    /// Registers `--name` on `app` with the given default.
    template <class T>
    CLI::Option *add(CLI::App &app, const std::string &name, T fallback, const std::string &help) {
        auto value = std::make_shared<T>(fallback);
        CLI::Option *opt = app.add_option("--" + name, *value, help);
        register_key(name, nlohmann::json(fallback), [value, opt]() -> std::optional<nlohmann::json> {
            if (opt->count() == 0) return std::nullopt;
            return nlohmann::json(*value);
        });
        return opt;
    }

    /// Registers a boolean switch `--name` (default false).
    void add_flag(CLI::App &app, const std::string &name, const std::string &help);

    /// Registers `--config PATH`; the file is read by resolve().
    void add_config_option(CLI::App &app);

    /// Builds the merged view: defaults, then the config file (if any), then
    /// flags. Unknown or mistyped config keys throw kInvalidArgument.
    void resolve();
    /// Same with an already parsed config object instead of a file.
    void resolve(const nlohmann::json &file_config);

    const nlohmann::json &merged() const { return merged_; }
    const std::string &command() const { return command_; }

    template <class T>
    T get(const std::string &name) const {
        return merged_.at(name).get<T>();
    }

    /// {"command": ..., "config": merged, "tool": ...} for output files.
    nlohmann::json meta() const;

private:
    struct Entry {
        nlohmann::json fallback;
        std::function<std::optional<nlohmann::json>()> given;
    };

    void register_key(const std::string &name, nlohmann::json fallback,
                      std::function<std::optional<nlohmann::json>()> given);

    std::string command_;
    std::string config_path_;
    std::vector<std::string> order_;
    std::map<std::string, Entry> entries_;
    nlohmann::json merged_ = nlohmann::json::object();
};

/// True when `value` may stand in for an option whose default is `fallback`.
bool same_kind(const nlohmann::json &fallback, const nlohmann::json &value);

}  // namespace surfmatch::cli
