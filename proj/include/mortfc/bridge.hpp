#pragma once

// Child-process adapters speaking the NDJSON wire protocol over a Unix
// socket bound to the child's stdin and stdout. stderr passes through.

#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "mortfc/common.hpp"
#include "mortfc/wire.hpp"

extern char** environ;

namespace mortfc {

class AdapterError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CapabilityError : public AdapterError {
public:
    using AdapterError::AdapterError;
};

struct AdapterSpec {
    std::string name; // method name the adapter is registered under
    std::string command;
    std::vector<std::string> args;
    std::map<std::string, std::string> env;
    double timeout_seconds = 60.0;
    double train_timeout_seconds = 3600.0;
    int batch_size = 256;
    bool train = false; // request training on the pooled windows before forecasting
    nlohmann::json train_params = nlohmann::json::object();
};

struct ForecastRequest {
    std::string id;
    int start_year = 0;
    std::vector<double> values;
    int horizon = 0;
};

struct ForecastOutcome {
    std::string id;
    std::optional<std::vector<double>> values;
    std::string error;

    [[nodiscard]] bool ok() const { return values.has_value(); }
};

/// Reads an adapter registry: {"adapters": [{"name", "command", "args", "env",
/// "timeout_seconds", "train_timeout_seconds", "batch_size", "train", "params"}]}.
/// Relative commands containing '/' resolve against the registry's directory.
inline std::vector<AdapterSpec> read_adapter_registry(const std::filesystem::path& file)
{
    std::ifstream in(file);
    if (!in) {
        throw DataError("cannot open adapter registry " + file.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("adapter registry " + file.string() + ": " + e.what());
    }
    std::vector<AdapterSpec> specs;
    std::set<std::string> names;
    try {
        for (const auto& a : j.at("adapters")) {
            AdapterSpec s;
            s.name = a.at("name").get<std::string>();
            s.command = a.at("command").get<std::string>();
            if (s.command.find('/') != std::string::npos && std::filesystem::path(s.command).is_relative()) {
                s.command = (file.parent_path() / s.command).lexically_normal().string();
            }
            s.args = a.value("args", std::vector<std::string>{});
            s.env = a.value("env", std::map<std::string, std::string>{});
            s.timeout_seconds = a.value("timeout_seconds", s.timeout_seconds);
            s.train_timeout_seconds = a.value("train_timeout_seconds", s.train_timeout_seconds);
            s.batch_size = a.value("batch_size", s.batch_size);
            s.train = a.value("train", false);
            s.train_params = a.value("params", nlohmann::json::object());
            if (!(s.timeout_seconds > 0.0) || s.batch_size < 1) {
                throw FormatError("adapter " + s.name + ": timeout and batch_size must be positive");
            }
            if (!names.insert(s.name).second) {
                throw FormatError("adapter registry: duplicate name " + s.name);
            }
            specs.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("adapter registry " + file.string() + ": " + e.what());
    }
    return specs;
}

/// A running adapter process. All calls are serialized; requests within one
/// call are pipelined and matched back by id.
class AdapterHandle {
public:
    using Clock = std::chrono::steady_clock;

    explicit AdapterHandle(AdapterSpec spec) : spec_(std::move(spec)) { start(); }

    AdapterHandle(const AdapterHandle&) = delete;
    AdapterHandle& operator=(const AdapterHandle&) = delete;

    ~AdapterHandle() { stop(); }

    [[nodiscard]] const AdapterSpec& spec() const { return spec_; }
    [[nodiscard]] const std::string& adapter_name() const { return hello_name_; }
    [[nodiscard]] bool supports_training() const { return supports_training_; }
    [[nodiscard]] bool deterministic() const { return deterministic_; }
    [[nodiscard]] bool usable() const { return !excluded_; }
    [[nodiscard]] int restarts() const { return restarts_; }
    [[nodiscard]] const std::optional<std::string>& model_tag() const { return tag_; }

    /// One outcome per request, in request order. Never throws for per-id
    /// problems; those become failed outcomes.
    std::vector<ForecastOutcome> request_forecast(const std::vector<ForecastRequest>& batch)
    {
        std::lock_guard lock(mu_);
        std::vector<ForecastOutcome> out(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            out[i].id = batch[i].id;
        }
        const auto chunk = static_cast<std::size_t>(spec_.batch_size);
        for (std::size_t begin = 0; begin < batch.size(); begin += chunk) {
            const std::size_t end = std::min(batch.size(), begin + chunk);
            if (!ensure_running()) {
                for (std::size_t i = begin; i < end; ++i) {
                    out[i].error = "adapter " + spec_.name + " unavailable";
                }
                continue;
            }
            run_chunk(batch, begin, end, out);
        }
        return out;
    }

    /// Asks the adapter to train on an exported training-window CSV. Returns
    /// the model tag, which accompanies all later forecast requests.
    std::string request_training(const std::string& path, const nlohmann::json& params)
    {
        std::lock_guard lock(mu_);
        if (!supports_training_) {
            throw CapabilityError("adapter " + spec_.name + " does not support training");
        }
        if (!ensure_running()) {
            throw AdapterError("adapter " + spec_.name + " unavailable");
        }
        auto tag = train_locked(path, params);
        train_request_ = std::make_pair(path, params);
        return tag;
    }

private:
    // --- process lifecycle -----------------------------------------------------

    void start()
    {
        int sv[2];
        if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
            throw AdapterError("socketpair: " + std::string(std::strerror(errno)));
        }
        int status_pipe[2];
        if (::pipe2(status_pipe, O_CLOEXEC) != 0) {
            ::close(sv[0]);
            ::close(sv[1]);
            throw AdapterError("pipe: " + std::string(std::strerror(errno)));
        }

        std::vector<std::string> argv_s{spec_.command};
        argv_s.insert(argv_s.end(), spec_.args.begin(), spec_.args.end());
        std::vector<char*> argv;
        for (auto& a : argv_s) {
            argv.push_back(a.data());
        }
        argv.push_back(nullptr);
        std::vector<std::string> env_s;
        for (char** e = environ; e && *e; ++e) {
            std::string kv(*e);
            auto key = kv.substr(0, kv.find('='));
            if (!spec_.env.contains(key)) {
                env_s.push_back(std::move(kv));
            }
        }
        for (const auto& [k, v] : spec_.env) {
            env_s.push_back(k + "=" + v);
        }
        std::vector<char*> envp;
        for (auto& e : env_s) {
            envp.push_back(e.data());
        }
        envp.push_back(nullptr);

        pid_t pid = ::fork();
        if (pid < 0) {
            ::close(sv[0]);
            ::close(sv[1]);
            ::close(status_pipe[0]);
            ::close(status_pipe[1]);
            throw AdapterError("fork: " + std::string(std::strerror(errno)));
        }
        if (pid == 0) {
            ::dup2(sv[1], STDIN_FILENO);
            ::dup2(sv[1], STDOUT_FILENO);
            ::execvpe(argv[0], argv.data(), envp.data());
            int err = errno;
            [[maybe_unused]] auto n = ::write(status_pipe[1], &err, sizeof err);
            ::_exit(127);
        }
        ::close(sv[1]);
        ::close(status_pipe[1]);
        int child_errno = 0;
        ssize_t n = 0;
        do {
            n = ::read(status_pipe[0], &child_errno, sizeof child_errno);
        } while (n < 0 && errno == EINTR);
        ::close(status_pipe[0]);
        if (n > 0) {
            ::close(sv[0]);
            ::waitpid(pid, nullptr, 0);
            throw AdapterError("adapter " + spec_.name + ": cannot launch '" + spec_.command + "': " + std::strerror(child_errno));
        }
        pid_ = pid;
        fd_ = sv[0];
        inbuf_.clear();
        dead_ = false;
        try {
            handshake();
        } catch (...) {
            stop();
            throw;
        }
    }

    void stop()
    {
        if (fd_ >= 0) {
            ::shutdown(fd_, SHUT_RDWR);
            ::close(fd_);
            fd_ = -1;
        }
        if (pid_ > 0) {
            auto deadline = Clock::now() + std::chrono::milliseconds(500);
            int status = 0;
            while (::waitpid(pid_, &status, WNOHANG) == 0) {
                if (Clock::now() > deadline) {
                    ::kill(pid_, SIGKILL);
                    ::waitpid(pid_, &status, 0);
                    break;
                }
                std::this_thread::sleep_for(std::chrono::milliseconds(5));
            }
            pid_ = -1;
        }
        dead_ = true;
    }

    /// Restarts a dead adapter once per run; afterwards it stays excluded.
    bool ensure_running()
    {
        if (excluded_) {
            return false;
        }
        if (!dead_) {
            return true;
        }
        if (restarts_ >= 1) {
            excluded_ = true;
            return false;
        }
        ++restarts_;
        try {
            start();
            if (train_request_) {
                train_locked(train_request_->first, train_request_->second);
            }
        } catch (const std::exception&) {
            stop();
            excluded_ = true;
            return false;
        }
        return true;
    }

    void handshake()
    {
        auto deadline = Clock::now() + timeout(spec_.timeout_seconds);
        auto line = read_line(deadline);
        if (!line) {
            throw AdapterError("adapter " + spec_.name + ": no hello within timeout");
        }
        wire::WireMessage hello;
        try {
            hello = wire::decode(*line);
        } catch (const wire::ProtocolError&) {
            throw wire::ProtocolError("adapter " + spec_.name + ": expected hello, got non-JSON line '" + line->substr(0, 200) + "'");
        }
        if (hello.type != wire::MessageType::Hello) {
            throw wire::ProtocolError("adapter " + spec_.name + ": expected hello, got '" + *line + "'");
        }
        if (hello.protocol.value_or(0) != wire::kProtocolVersion) {
            throw wire::ProtocolError("adapter " + spec_.name + ": protocol version " + std::to_string(hello.protocol.value_or(0)) + " not supported");
        }
        hello_name_ = hello.name.value_or("");

        wire::WireMessage caps;
        caps.type = wire::MessageType::Capabilities;
        caps.id = next_id("cap");
        send_all(wire::encode(caps) + "\n", deadline);
        for (;;) {
            auto l = read_line(deadline);
            if (!l) {
                throw AdapterError("adapter " + spec_.name + ": no capabilities reply within timeout");
            }
            auto m = wire::decode(*l);
            if (m.id != caps.id) {
                continue;
            }
            if (m.type != wire::MessageType::Capabilities) {
                throw wire::ProtocolError("adapter " + spec_.name + ": capabilities request answered with " + std::string(wire::to_string(m.type)));
            }
            supports_training_ = m.supports_training.value_or(false);
            deterministic_ = m.deterministic.value_or(false);
            return;
        }
    }

    std::string train_locked(const std::string& path, const nlohmann::json& params)
    {
        wire::WireMessage req;
        req.type = wire::MessageType::Train;
        req.id = next_id("t");
        req.path = path;
        req.params = params;
        auto deadline = Clock::now() + timeout(spec_.train_timeout_seconds);
        if (!send_all(wire::encode(req) + "\n", deadline)) {
            stop();
            throw AdapterError("adapter " + spec_.name + ": exited before training request was sent");
        }
        for (;;) {
            auto l = read_line(deadline);
            if (!l) {
                bool exited = dead_;
                stop();
                throw AdapterError("adapter " + spec_.name + (exited ? ": exited during training" : ": training timed out"));
            }
            wire::WireMessage m;
            try {
                m = wire::decode(*l);
            } catch (const wire::ProtocolError&) {
                continue;
            }
            if (m.id != req.id) {
                continue;
            }
            if (m.type == wire::MessageType::TrainResult && m.tag) {
                tag_ = *m.tag;
                return *m.tag;
            }
            throw AdapterError("adapter " + spec_.name + ": training failed: " + m.message.value_or("no train_result"));
        }
    }

    void run_chunk(const std::vector<ForecastRequest>& batch, std::size_t begin, std::size_t end, std::vector<ForecastOutcome>& out)
    {
        std::map<std::string, std::size_t> pending; // wire id -> batch index
        std::string payload;
        for (std::size_t i = begin; i < end; ++i) {
            wire::WireMessage m;
            m.type = wire::MessageType::Forecast;
            m.id = next_id("f");
            m.start_year = batch[i].start_year;
            m.values = batch[i].values;
            m.horizon = batch[i].horizon;
            m.tag = tag_;
            try {
                payload += wire::encode(m);
            } catch (const wire::ProtocolError& e) {
                out[i].error = e.what();
                continue;
            }
            payload += '\n';
            pending.emplace(m.id, i);
        }

        const auto deadline = Clock::now() + timeout(spec_.timeout_seconds);
        std::size_t sent = 0;
        while (!pending.empty() && !dead_) {
            auto now = Clock::now();
            if (now >= deadline) {
                break;
            }
            pollfd pfd{fd_, static_cast<short>(POLLIN | (sent < payload.size() ? POLLOUT : 0)), 0};
            auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
            int rc = ::poll(&pfd, 1, static_cast<int>(wait_ms));
            if (rc < 0) {
                if (errno == EINTR) {
                    continue;
                }
                dead_ = true;
                break;
            }
            if (rc == 0) {
                continue;
            }
            if ((pfd.revents & POLLOUT) && sent < payload.size()) {
                ssize_t n = ::send(fd_, payload.data() + sent, payload.size() - sent, MSG_NOSIGNAL | MSG_DONTWAIT);
                if (n > 0) {
                    sent += static_cast<std::size_t>(n);
                } else if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) {
                    dead_ = true;
                }
            }
            if (pfd.revents & (POLLIN | POLLHUP | POLLERR)) {
                if (!fill_buffer()) {
                    dead_ = true;
                }
                while (auto line = take_line()) {
                    handle_response(*line, batch, pending, out);
                }
            }
        }

        if (!pending.empty()) {
            const bool exited = dead_;
            for (const auto& [wid, idx] : pending) {
                out[idx].error = exited ? "adapter exited before answering" : "adapter timed out";
            }
            // A hung or crashed adapter is replaced before the next request.
            stop();
        }
    }

    void handle_response(const std::string& line, const std::vector<ForecastRequest>& batch, std::map<std::string, std::size_t>& pending,
                         std::vector<ForecastOutcome>& out)
    {
        wire::WireMessage m;
        try {
            m = wire::decode(line);
        } catch (const wire::ProtocolError&) {
            return; // not attributable to an id
        }
        auto it = pending.find(m.id);
        if (it == pending.end()) {
            return; // stale or unknown id
        }
        const std::size_t idx = it->second;
        pending.erase(it);
        if (m.type == wire::MessageType::Error) {
            out[idx].error = "adapter error: " + m.message.value_or("unspecified");
            return;
        }
        if (m.type != wire::MessageType::ForecastResult || !m.values) {
            out[idx].error = "malformed response: expected forecast_result with values";
            return;
        }
        const auto h = static_cast<std::size_t>(batch[idx].horizon);
        if (m.values->size() != h) {
            out[idx].error = "malformed response: " + std::to_string(m.values->size()) + " values for horizon " + std::to_string(h);
            return;
        }
        for (double v : *m.values) {
            if (!std::isfinite(v)) {
                out[idx].error = "malformed response: non-finite value";
                return;
            }
        }
        out[idx].values = std::move(*m.values);
    }

    // --- line I/O ------------------------------------------------------------------

    static Clock::duration timeout(double seconds)
    {
        return std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(seconds));
    }

    std::string next_id(const char* prefix) { return std::string(prefix) + std::to_string(++counter_); }

    bool send_all(const std::string& data, Clock::time_point deadline)
    {
        std::size_t sent = 0;
        while (sent < data.size()) {
            auto now = Clock::now();
            if (now >= deadline) {
                return false;
            }
            pollfd pfd{fd_, POLLOUT, 0};
            auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
            int rc = ::poll(&pfd, 1, static_cast<int>(wait_ms));
            if (rc <= 0) {
                continue;
            }
            ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL | MSG_DONTWAIT);
            if (n > 0) {
                sent += static_cast<std::size_t>(n);
            } else if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) {
                dead_ = true;
                return false;
            }
        }
        return true;
    }

    /// Reads what is available; false on EOF or error.
    bool fill_buffer()
    {
        char buf[65536];
        for (;;) {
            ssize_t n = ::recv(fd_, buf, sizeof buf, MSG_DONTWAIT);
            if (n > 0) {
                inbuf_.append(buf, static_cast<std::size_t>(n));
                continue;
            }
            if (n == 0) {
                return false;
            }
            if (errno == EINTR) {
                continue;
            }
            return errno == EAGAIN || errno == EWOULDBLOCK;
        }
    }

    std::optional<std::string> take_line()
    {
        auto pos = inbuf_.find('\n');
        if (pos == std::string::npos) {
            return std::nullopt;
        }
        std::string line = inbuf_.substr(0, pos);
        inbuf_.erase(0, pos + 1);
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        return line;
    }

    std::optional<std::string> read_line(Clock::time_point deadline)
    {
        for (;;) {
            if (auto l = take_line()) {
                if (trim(*l).empty()) {
                    continue;
                }
                return l;
            }
            if (dead_) {
                return std::nullopt;
            }
            auto now = Clock::now();
            if (now >= deadline) {
                return std::nullopt;
            }
            pollfd pfd{fd_, POLLIN, 0};
            auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
            int rc = ::poll(&pfd, 1, static_cast<int>(wait_ms));
            if (rc > 0 && !fill_buffer()) {
                dead_ = true;
            }
        }
    }

    AdapterSpec spec_;
    std::mutex mu_;
    pid_t pid_ = -1;
    int fd_ = -1;
    std::string inbuf_;
    bool dead_ = true;
    bool excluded_ = false;
    int restarts_ = 0;
    std::uint64_t counter_ = 0;
    std::string hello_name_;
    bool supports_training_ = false;
    bool deterministic_ = false;
    std::optional<std::string> tag_;
    std::optional<std::pair<std::string, nlohmann::json>> train_request_;
};

/// Adapters of one run, started on first use and shared across methods.
class AdapterPool {
public:
    AdapterPool() = default;
    explicit AdapterPool(std::vector<AdapterSpec> specs)
    {
        for (auto& s : specs) {
            auto name = s.name;
            specs_.emplace(std::move(name), std::move(s));
        }
    }

    [[nodiscard]] bool has(const std::string& name) const { return specs_.contains(name); }
    [[nodiscard]] const AdapterSpec& spec(const std::string& name) const
    {
        auto it = specs_.find(name);
        if (it == specs_.end()) {
            throw AdapterError("no adapter registered under '" + name + "'");
        }
        return it->second;
    }
    [[nodiscard]] std::vector<std::string> names() const
    {
        std::vector<std::string> out;
        for (const auto& [n, s] : specs_) {
            out.push_back(n);
        }
        return out;
    }

    /// Throws AdapterError when the adapter cannot be launched or handshaken.
    std::shared_ptr<AdapterHandle> get(const std::string& name)
    {
        std::lock_guard lock(mu_);
        if (auto it = running_.find(name); it != running_.end()) {
            return it->second;
        }
        auto it = specs_.find(name);
        if (it == specs_.end()) {
            throw AdapterError("no adapter registered under '" + name + "'");
        }
        auto h = std::make_shared<AdapterHandle>(it->second);
        running_.emplace(name, h);
        return h;
    }

private:
    std::map<std::string, AdapterSpec> specs_;
    std::map<std::string, std::shared_ptr<AdapterHandle>> running_;
    std::mutex mu_;
};

} // namespace mortfc
