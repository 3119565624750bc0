#pragma once

// Operator link: JSON messages over WebSocket frames. Every frame carries
// newline-terminated JSON documents; the loop broadcasts one state message
// per control step and drains inbound messages once per step.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include "asee/sim.hpp"

namespace asee::teleop {

// Inbound commands are clamped to these magnitudes before use.
inline constexpr double kMaxLinearSpeed = 0.05;   // m/s
inline constexpr double kMaxAngularSpeed = 0.5;   // rad/s

struct Action {
    enum class Kind { Land, Retract, Pause, Resume } kind;
};

struct Tune {
    std::string key;
    double value = 0.0;
};

using Message = std::variant<TeleopCommand, Action, Tune>;

struct Parsed {
    std::optional<Message> message;
    std::string warning;  // set when the input was rejected
};

namespace detail {

inline double finite_number(const nlohmann::json& j, const char* key, bool& ok) {
    const auto it = j.find(key);
    if (it == j.end()) return 0.0;
    if (!it->is_number() || !std::isfinite(it->get<double>())) {
        ok = false;
        return 0.0;
    }
    return it->get<double>();
}

} // namespace detail

/// Parses one JSON document. Unknown fields are ignored; anything that is
/// not a well-formed cmd/action/tune message comes back with a warning.
inline Parsed parse_message(std::string_view text) {
    const auto j = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) return {std::nullopt, "not valid JSON"};
    if (!j.is_object()) return {std::nullopt, "message is not an object"};
    const auto type = j.find("type");
    if (type == j.end() || !type->is_string()) return {std::nullopt, "message has no string 'type'"};
    const std::string t = type->get<std::string>();

    if (t == "cmd") {
        bool ok = true;
        TeleopCommand c;
        c.vx = detail::finite_number(j, "vx", ok);
        c.vy = detail::finite_number(j, "vy", ok);
        c.wz = detail::finite_number(j, "wz", ok);
        if (!ok) return {std::nullopt, "cmd fields must be finite numbers"};
        c.vx = std::clamp(c.vx, -kMaxLinearSpeed, kMaxLinearSpeed);
        c.vy = std::clamp(c.vy, -kMaxLinearSpeed, kMaxLinearSpeed);
        c.wz = std::clamp(c.wz, -kMaxAngularSpeed, kMaxAngularSpeed);
        return {c, {}};
    }
    if (t == "action") {
        const auto name = j.find("name");
        if (name == j.end() || !name->is_string()) return {std::nullopt, "action has no string 'name'"};
        const std::string n = name->get<std::string>();
        if (n == "land") return {Action{Action::Kind::Land}, {}};
        if (n == "retract") return {Action{Action::Kind::Retract}, {}};
        if (n == "pause") return {Action{Action::Kind::Pause}, {}};
        if (n == "resume") return {Action{Action::Kind::Resume}, {}};
        return {std::nullopt, "unknown action '" + n + "'"};
    }
    if (t == "tune") {
        const auto key = j.find("key");
        const auto value = j.find("value");
        if (key == j.end() || !key->is_string()) return {std::nullopt, "tune has no string 'key'"};
        if (value == j.end() || !value->is_number() || !std::isfinite(value->get<double>()))
            return {std::nullopt, "tune has no finite 'value'"};
        return {Tune{key->get<std::string>(), value->get<double>()}, {}};
    }
    return {std::nullopt, "unknown message type '" + t + "'"};
}

inline nlohmann::json state_json(const LogRecord& r) {
    nlohmann::json j;
    j["type"] = "state";
    j["t"] = r.t;
    j["q"] = std::vector<double>(r.q.data(), r.q.data() + r.q.size());
    j["pos"] = {r.position.x(), r.position.y(), r.position.z()};
    j["quat"] = {r.orientation.w(), r.orientation.x(), r.orientation.y(), r.orientation.z()};
    j["normal"] = {r.normal.x(), r.normal.y(), r.normal.z()};
    j["force_n"] = r.force;
    j["err_deg"] = r.err_deg;
    j["stage"] = to_string(r.stage);
    return j;
}

/// One state message, newline-terminated.
inline std::string state_message(const LogRecord& r) { return state_json(r).dump() + '\n'; }

/// Inbound side of the session. Network threads push; the control loop
/// drains once per step. Only the newest command is kept; actions and tune
/// requests are kept in arrival order.
class Inbox {
public:
    void push(Message m) {
        std::lock_guard lock(mutex_);
        if (auto* c = std::get_if<TeleopCommand>(&m)) latest_ = *c;
        else controls_.push_back(std::move(m));
    }

    struct Drained {
        std::optional<TeleopCommand> command;
        std::vector<Message> controls;
    };

    Drained drain() {
        std::lock_guard lock(mutex_);
        Drained d{latest_, std::move(controls_)};
        latest_.reset();
        controls_.clear();
        return d;
    }

    /// Splits a frame into lines and queues every valid message.
    void push_frame(std::string_view frame, const std::function<void(const std::string&)>& warn) {
        std::size_t start = 0;
        while (start <= frame.size()) {
            auto end = frame.find('\n', start);
            if (end == std::string_view::npos) end = frame.size();
            std::string_view line = frame.substr(start, end - start);
            while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
            if (!line.empty()) {
                auto p = parse_message(line);
                if (p.message) push(std::move(*p.message));
                else if (warn) warn("ignored message: " + p.warning);
            }
            start = end + 1;
        }
    }

private:
    std::mutex mutex_;
    std::optional<TeleopCommand> latest_;
    std::vector<Message> controls_;
};

/// WebSocket fan-out server on its own I/O thread. Construction binds the
/// port (0 picks a free one); broadcast() may be called from any thread.
class Server {
    using tcp = boost::asio::ip::tcp;

public:
    Server(unsigned short port, Inbox& inbox, std::function<void(const std::string&)> warn = {})
        : inbox_(inbox), warn_(std::move(warn)), acceptor_(io_) {
        const tcp::endpoint ep(boost::asio::ip::make_address("0.0.0.0"), port);
        acceptor_.open(ep.protocol());
        acceptor_.set_option(boost::asio::socket_base::reuse_address(true));
        acceptor_.bind(ep);
        acceptor_.listen();
        port_ = acceptor_.local_endpoint().port();
        accept();
        thread_ = std::thread([this] { io_.run(); });
    }

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    ~Server() { stop(); }

    unsigned short port() const { return port_; }
    std::size_t client_count() const { return clients_.load(); }

    void broadcast(std::string text) {
        auto msg = std::make_shared<const std::string>(std::move(text));
        boost::asio::post(io_, [this, msg] {
            for (const auto& s : sessions_) s->send(msg);
        });
    }

    void stop() {
        if (stopped_.exchange(true)) return;
        boost::asio::post(io_, [this] {
            boost::system::error_code ec;
            acceptor_.close(ec);
            for (const auto& s : sessions_) s->close();
            sessions_.clear();
        });
        // Give sessions a moment to send close frames, then stop the loop.
        boost::asio::steady_timer t(io_, std::chrono::milliseconds(100));
        t.async_wait([this](auto) { io_.stop(); });
        if (thread_.joinable()) thread_.join();
    }

private:
    class Session : public std::enable_shared_from_this<Session> {
    public:
        Session(tcp::socket socket, Server& server) : ws_(std::move(socket)), server_(server) {}

        void start() {
            ws_.text(true);
            ws_.async_accept([self = shared_from_this()](boost::beast::error_code ec) {
                if (ec) return self->server_.drop(self);
                self->open_ = true;
                ++self->server_.clients_;
                self->read();
                self->flush();
            });
        }

        void send(const std::shared_ptr<const std::string>& msg) {
            // A slow client loses the oldest pending states instead of
            // stalling the others.
            if (queue_.size() >= kMaxQueued) queue_.erase(queue_.begin() + (writing_ ? 1 : 0));
            queue_.push_back(msg);
            if (open_ && !writing_) flush();
        }

        // Pending states are flushed before the socket goes away.
        void close() {
            closing_ = true;
            if (!writing_) shutdown();
        }

    private:
        static constexpr std::size_t kMaxQueued = 64;

        void read() {
            ws_.async_read(buffer_, [self = shared_from_this()](boost::beast::error_code ec, std::size_t) {
                if (ec) return self->server_.drop(self);
                const std::string frame = boost::beast::buffers_to_string(self->buffer_.data());
                self->buffer_.consume(self->buffer_.size());
                self->server_.inbox_.push_frame(frame, self->server_.warn_);
                self->read();
            });
        }

        void shutdown() {
            if (!open_) return;
            open_ = false;
            --server_.clients_;
            boost::beast::error_code ec;
            boost::beast::get_lowest_layer(ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
            boost::beast::get_lowest_layer(ws_).close();
        }

        void flush() {
            if (queue_.empty() || !open_) {
                writing_ = false;
                if (closing_) shutdown();
                return;
            }
            writing_ = true;
            auto msg = queue_.front();
            ws_.async_write(boost::asio::buffer(*msg),
                            [self = shared_from_this(), msg](boost::beast::error_code ec, std::size_t) {
                                if (ec) {
                                    self->writing_ = false;
                                    return self->server_.drop(self);
                                }
                                self->queue_.pop_front();
                                self->flush();
                            });
        }

        boost::beast::websocket::stream<boost::beast::tcp_stream> ws_;
        Server& server_;
        boost::beast::flat_buffer buffer_;
        std::deque<std::shared_ptr<const std::string>> queue_;
        bool writing_ = false;
        bool open_ = false;
        bool closing_ = false;
    };

    void accept() {
        acceptor_.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
            if (ec) return;  // acceptor closed
            auto s = std::make_shared<Session>(std::move(socket), *this);
            sessions_.insert(s);
            s->start();
            accept();
        });
    }

    void drop(const std::shared_ptr<Session>& s) {
        s->close();
        sessions_.erase(s);
    }

    Inbox& inbox_;
    std::function<void(const std::string&)> warn_;
    boost::asio::io_context io_;
    tcp::acceptor acceptor_;
    std::set<std::shared_ptr<Session>> sessions_;  // touched only on the I/O thread
    std::atomic<std::size_t> clients_{0};
    std::atomic<bool> stopped_{false};
    unsigned short port_ = 0;
    std::thread thread_;
};

inline void warn_to_stderr(const std::string& m) { std::cerr << "warning: " << m << '\n'; }

struct ServeOptions {
    unsigned short port = 0;
    // Pace steps at the control rate on the wall clock; tests may disable it.
    bool realtime = true;
    // Steps to run; unset means until `stop` is raised.
    std::optional<std::size_t> max_steps;
    // A command holds until replaced or until this much simulated time
    // passes without a new one.
    double command_timeout = 0.5;  // s
    bool keep_log = true;
    const std::atomic<bool>* stop = nullptr;
    std::function<void(unsigned short)> on_listening;
    std::function<void(const std::string&)> warn = warn_to_stderr;
    // Called with the server after it binds and before the first step.
    std::function<void(Server&)> on_ready;
};

namespace detail {

inline void apply_control(Simulator& sim, const Message& m, const std::function<void(const std::string&)>& warn) {
    if (const auto* a = std::get_if<Action>(&m)) {
        switch (a->kind) {
        case Action::Kind::Land: sim.land(); break;
        case Action::Kind::Retract: sim.retract(); break;
        case Action::Kind::Pause: sim.pause(); break;
        case Action::Kind::Resume: sim.resume(); break;
        }
    } else if (const auto* t = std::get_if<Tune>(&m)) {
        if (!sim.tune(t->key, t->value) && warn) warn("rejected tune of '" + t->key + "'");
    }
}

class Pacer {
public:
    Pacer(bool on, double period) : on_(on), period_(period), start_(std::chrono::steady_clock::now()) {}
    void wait(std::size_t step) const {
        if (!on_) return;
        std::this_thread::sleep_until(start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                   std::chrono::duration<double>(period_ * static_cast<double>(step))));
    }

private:
    bool on_;
    double period_;
    std::chrono::steady_clock::time_point start_;
};

} // namespace detail

/// Runs the scenario live: one state broadcast per step, newest operator
/// command applied each step. Returns the records when keep_log is set.
inline std::vector<LogRecord> serve(const ScenarioConfig& cfg, const ServeOptions& opt = {}) {
    Simulator sim(cfg);
    Inbox inbox;
    Server server(opt.port, inbox, opt.warn);
    if (opt.on_listening) opt.on_listening(server.port());
    if (opt.on_ready) opt.on_ready(server);

    const double dt = cfg.dt();
    const auto timeout_steps = static_cast<std::size_t>(std::llround(opt.command_timeout / dt));
    detail::Pacer pacer(opt.realtime, dt);
    TeleopCommand current;
    std::size_t since_command = 0;
    std::vector<LogRecord> log;

    for (std::size_t k = 0; !opt.max_steps || k < *opt.max_steps; ++k) {
        if (opt.stop && opt.stop->load()) break;
        auto in = inbox.drain();
        for (const auto& m : in.controls) detail::apply_control(sim, m, opt.warn);
        if (in.command) {
            current = *in.command;
            since_command = 0;
        } else if (++since_command > timeout_steps) {
            current = {};
        }
        LogRecord r;
        try {
            r = sim.step(current);
        } catch (const Error& e) {
            if (opt.warn) opt.warn(std::string("step failed, operator command dropped: ") + e.what());
            current = {};
            r = sim.step({});
        }
        server.broadcast(state_message(r));
        if (opt.keep_log) log.push_back(r);
        pacer.wait(k + 1);
    }
    server.stop();
    return log;
}

/// Streams a recorded log at the control rate; inbound messages are ignored.
inline void replay(const std::vector<LogRecord>& records, const ServeOptions& opt = {}) {
    Inbox inbox;
    Server server(opt.port, inbox, opt.warn);
    if (opt.on_listening) opt.on_listening(server.port());
    if (opt.on_ready) opt.on_ready(server);
    const double dt = records.size() > 1 ? records[1].t - records[0].t : 1.0 / 30.0;
    detail::Pacer pacer(opt.realtime, dt > 0.0 ? dt : 1.0 / 30.0);
    for (std::size_t k = 0; k < records.size(); ++k) {
        if (opt.stop && opt.stop->load()) break;
        inbox.drain();
        server.broadcast(state_message(records[k]));
        pacer.wait(k + 1);
    }
    server.stop();
}

} // namespace asee::teleop
