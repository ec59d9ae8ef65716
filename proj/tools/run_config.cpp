#include "run_config.hpp"

#include "surfmatch/error.hpp"
#include "surfmatch/synth/dataset.hpp"

namespace surfmatch::cli {

using nlohmann::json;

inline constexpr const char *kToolVersion = "1.0.0";

bool same_kind(const json &fallback, const json &value) {
    if (fallback.is_boolean()) return value.is_boolean();
    if (fallback.is_number_integer()) return value.is_number_integer();
    if (fallback.is_number()) return value.is_number();
    if (fallback.is_string()) return value.is_string();
    if (fallback.is_array()) {
        if (!value.is_array()) return false;
        if (fallback.empty()) return true;
        for (const auto &v : value) {
            if (!same_kind(fallback.front(), v)) return false;
        }
        return true;
    }
    return fallback.type() == value.type();
}

void RunConfig::register_key(const std::string &name, json fallback,
                             std::function<std::optional<json>()> given) {
    if (entries_.count(name)) throw Error(ErrorCode::kInvalidArgument, "option registered twice: " + name);
    order_.push_back(name);
    entries_[name] = {std::move(fallback), std::move(given)};
}

void RunConfig::add_flag(CLI::App &app, const std::string &name, const std::string &help) {
    auto value = std::make_shared<bool>(false);
    CLI::Option *opt = app.add_flag("--" + name, *value, help);
    register_key(name, json(false), [value, opt]() -> std::optional<json> {
        if (opt->count() == 0) return std::nullopt;
        return json(*value);
    });
}

void RunConfig::add_config_option(CLI::App &app) {
    app.add_option("--config", config_path_, "JSON file of option values (keys are option names)");
}

void RunConfig::resolve() {
    json file = json::object();
    if (!config_path_.empty()) {
        file = read_json(config_path_);
        if (!file.is_object()) {
            throw Error(ErrorCode::kInvalidArgument, "config file " + config_path_ + " must hold a JSON object");
        }
    }
    resolve(file);
}

void RunConfig::resolve(const json &file_config) {
    for (const auto &[key, value] : file_config.items()) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) {
            throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + key + "' for " + command_);
        }
        if (!same_kind(it->second.fallback, value)) {
            throw Error(ErrorCode::kInvalidArgument, "config key '" + key + "' has the wrong type");
        }
    }
    merged_ = json::object();
    for (const auto &name : order_) {
        const Entry &e = entries_.at(name);
        json v = e.fallback;
        if (file_config.contains(name)) v = file_config.at(name);
        if (auto flag = e.given()) v = *flag;
        merged_[name] = v;
    }
}

json RunConfig::meta() const {
    return {{"command", command_}, {"config", merged_}, {"tool_version", kToolVersion}};
}

}  // namespace surfmatch::cli
