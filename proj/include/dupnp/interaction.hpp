#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace dupnp {

enum class Layer { ssdp, description, control, eventing, presentation };
enum class Outcome { served, rejected, fault };

std::string_view to_string(Layer layer);
std::string_view to_string(Outcome outcome);
std::optional<Layer> layer_from_string(std::string_view s);
std::optional<Outcome> outcome_from_string(std::string_view s);

// One logged touch of a honeypot instance by a peer.
struct InteractionRecord {
    std::chrono::system_clock::time_point timestamp{};
    std::string instance_uuid; // "-" when not attributable to an instance
    Layer layer = Layer::presentation;
    std::string peer;
    std::string summary; // request summary, e.g. "GET /setup.xml"
    std::string raw;     // raw request bytes, capped at the sink's limit
    std::string status;  // response summary, e.g. "200" or "fault 401"
    std::chrono::microseconds latency{0};
    Outcome outcome = Outcome::served;
};

// One record per line, tab-separated, fields in this order:
//   timestamp  instance  layer  peer  outcome  status  latency_us  summary  raw
// summary and raw are percent-escaped so they never contain tabs or newlines.
std::string to_line(const InteractionRecord& record);
std::optional<InteractionRecord> record_from_line(std::string_view line);

struct LogConfig {
    std::string sink_path;       // empty: no file, callback only
    size_t raw_capture_cap = 2048;
    size_t queue_capacity = 4096;
};

// Bounded, ordered sink decoupled from request threads. append() never
// blocks: when the queue is full the record is counted as dropped.
class InteractionLog {
public:
    using Callback = std::function<void(const InteractionRecord&)>;

    explicit InteractionLog(LogConfig config = {});
    ~InteractionLog();
    InteractionLog(const InteractionLog&) = delete;
    InteractionLog& operator=(const InteractionLog&) = delete;

    void append(InteractionRecord record);
    void set_callback(Callback cb); // invoked from the writer thread, in order
    void flush();                   // drains the queue to the sink

    uint64_t appended() const { return m_appended.load(); }
    uint64_t written() const { return m_written.load(); }
    uint64_t dropped() const { return m_dropped.load(); }
    size_t raw_capture_cap() const { return m_config.raw_capture_cap; }

private:
    void writer_loop();

    LogConfig m_config;
    Callback m_callback;
    mutable std::mutex m_mutex;
    std::condition_variable m_cv;
    std::deque<InteractionRecord> m_queue;
    bool m_stopping = false;
    bool m_in_flight = false;
    std::atomic<uint64_t> m_appended{0};
    std::atomic<uint64_t> m_written{0};
    std::atomic<uint64_t> m_dropped{0};
    std::thread m_writer;
};

} // namespace dupnp
