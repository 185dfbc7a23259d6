// Persistence adapter: forecasts the last observed value for every step.
// Serves as the protocol reference and as a naive baseline.

#include <iostream>
#include <string>

#include "mortfc/wire.hpp"

using mortfc::wire::MessageType;
using mortfc::wire::WireMessage;

namespace {

void send(const WireMessage& m)
{
    std::cout << mortfc::wire::encode(m) << '\n' << std::flush;
}

WireMessage error_reply(const std::string& id, std::string text)
{
    WireMessage e;
    e.type = MessageType::Error;
    e.id = id;
    e.message = std::move(text);
    return e;
}

} // namespace

int main()
{
    std::ios::sync_with_stdio(false);
    WireMessage hello;
    hello.type = MessageType::Hello;
    hello.name = "constant";
    hello.protocol = mortfc::wire::kProtocolVersion;
    send(hello);

    std::string line;
    while (std::getline(std::cin, line)) {
        if (line.empty()) {
            continue;
        }
        WireMessage req;
        try {
            req = mortfc::wire::decode(line);
        } catch (const mortfc::wire::ProtocolError& e) {
            send(error_reply({}, e.what()));
            continue;
        }
        switch (req.type) {
        case MessageType::Capabilities: {
            WireMessage caps;
            caps.type = MessageType::Capabilities;
            caps.id = req.id;
            caps.supports_training = false;
            caps.deterministic = true;
            send(caps);
            break;
        }
        case MessageType::Forecast: {
            if (!req.values || req.values->empty() || !req.horizon || *req.horizon < 0) {
                send(error_reply(req.id, "forecast needs non-empty values and a horizon"));
                break;
            }
            WireMessage res;
            res.type = MessageType::ForecastResult;
            res.id = req.id;
            res.values = std::vector<double>(static_cast<std::size_t>(*req.horizon), req.values->back());
            send(res);
            break;
        }
        case MessageType::Train:
            send(error_reply(req.id, "training not supported"));
            break;
        default:
            send(error_reply(req.id, "unsupported message type"));
        }
    }
    return 0;
}
