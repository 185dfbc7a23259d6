#pragma once

// NDJSON messages exchanged with forecasting adapters. One compact JSON
// object per '\n'-terminated line.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mortfc/common.hpp"

namespace mortfc::wire {

inline constexpr int kProtocolVersion = 1;

class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class MessageType { Hello, Capabilities, Forecast, ForecastResult, Train, TrainResult, Error };

inline std::string_view to_string(MessageType t)
{
    switch (t) {
    case MessageType::Hello:
        return "hello";
    case MessageType::Capabilities:
        return "capabilities";
    case MessageType::Forecast:
        return "forecast";
    case MessageType::ForecastResult:
        return "forecast_result";
    case MessageType::Train:
        return "train";
    case MessageType::TrainResult:
        return "train_result";
    case MessageType::Error:
        return "error";
    }
    return "error";
}

inline std::optional<MessageType> parse_type(std::string_view s)
{
    for (auto t : {MessageType::Hello, MessageType::Capabilities, MessageType::Forecast, MessageType::ForecastResult, MessageType::Train,
                   MessageType::TrainResult, MessageType::Error}) {
        if (to_string(t) == s) {
            return t;
        }
    }
    return std::nullopt;
}

struct WireMessage {
    MessageType type = MessageType::Error;
    std::string id; // empty: no correlation (hello)
    std::optional<std::string> name;
    std::optional<int> protocol;
    std::optional<int> start_year;
    std::optional<std::vector<double>> values;
    std::optional<int> horizon;
    std::optional<std::string> tag;
    std::optional<std::string> message;
    std::optional<std::string> path;              // train: exported training windows
    std::optional<nlohmann::json> params;         // train: adapter-specific knobs
    std::optional<bool> supports_training;        // capabilities
    std::optional<bool> deterministic;            // capabilities

    friend bool operator==(const WireMessage&, const WireMessage&) = default;
};

inline nlohmann::json to_json(const WireMessage& m)
{
    nlohmann::json j;
    j["type"] = std::string(to_string(m.type));
    if (!m.id.empty()) {
        j["id"] = m.id;
    }
    if (m.name) {
        j["name"] = *m.name;
    }
    if (m.protocol) {
        j["protocol"] = *m.protocol;
    }
    if (m.start_year) {
        j["start_year"] = *m.start_year;
    }
    if (m.values) {
        j["values"] = *m.values;
    }
    if (m.horizon) {
        j["horizon"] = *m.horizon;
    }
    if (m.tag) {
        j["tag"] = *m.tag;
    }
    if (m.message) {
        j["message"] = *m.message;
    }
    if (m.path) {
        j["path"] = *m.path;
    }
    if (m.params) {
        j["params"] = *m.params;
    }
    if (m.supports_training) {
        j["supports_training"] = *m.supports_training;
    }
    if (m.deterministic) {
        j["deterministic"] = *m.deterministic;
    }
    return j;
}

/// Compact single-line encoding without the trailing newline.
inline std::string encode(const WireMessage& m)
{
    for (double v : m.values.value_or(std::vector<double>{})) {
        if (!std::isfinite(v)) {
            throw ProtocolError("cannot encode non-finite value");
        }
    }
    return to_json(m).dump();
}

inline WireMessage decode(std::string_view line)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
        throw ProtocolError("not a JSON object: '" + std::string(line.substr(0, 200)) + "'");
    }
    if (!j.is_object()) {
        throw ProtocolError("not a JSON object: '" + std::string(line.substr(0, 200)) + "'");
    }
    WireMessage m;
    try {
        auto type = parse_type(j.at("type").get<std::string>());
        if (!type) {
            throw ProtocolError("unknown message type in '" + std::string(line.substr(0, 200)) + "'");
        }
        m.type = *type;
        if (j.contains("id")) {
            m.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
        }
        if (j.contains("name")) {
            m.name = j["name"].get<std::string>();
        }
        if (j.contains("protocol")) {
            m.protocol = j["protocol"].get<int>();
        }
        if (j.contains("start_year")) {
            m.start_year = j["start_year"].get<int>();
        }
        if (j.contains("values")) {
            std::vector<double> vs;
            for (const auto& v : j["values"]) {
                if (!v.is_number()) {
                    throw ProtocolError("non-numeric entry in values");
                }
                vs.push_back(v.get<double>());
            }
            m.values = std::move(vs);
        }
        if (j.contains("horizon")) {
            m.horizon = j["horizon"].get<int>();
        }
        if (j.contains("tag")) {
            m.tag = j["tag"].get<std::string>();
        }
        if (j.contains("message")) {
            m.message = j["message"].get<std::string>();
        }
        if (j.contains("path")) {
            m.path = j["path"].get<std::string>();
        }
        if (j.contains("params")) {
            m.params = j["params"];
        }
        if (j.contains("supports_training")) {
            m.supports_training = j["supports_training"].get<bool>();
        }
        if (j.contains("deterministic")) {
            m.deterministic = j["deterministic"].get<bool>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("malformed message: ") + e.what());
    }
    return m;
}

} // namespace mortfc::wire
