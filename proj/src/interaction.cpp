#include "dupnp/interaction.hpp"

#include <filesystem>
#include <fstream>

#include "dupnp/util.hpp"

namespace dupnp {

std::string_view to_string(Layer layer) {
    switch (layer) {
    case Layer::ssdp: return "ssdp";
    case Layer::description: return "description";
    case Layer::control: return "control";
    case Layer::eventing: return "eventing";
    case Layer::presentation: return "presentation";
    }
    return "?";
}

std::string_view to_string(Outcome outcome) {
    switch (outcome) {
    case Outcome::served: return "served";
    case Outcome::rejected: return "rejected";
    case Outcome::fault: return "fault";
    }
    return "?";
}

std::optional<Layer> layer_from_string(std::string_view s) {
    if (s == "ssdp") return Layer::ssdp;
    if (s == "description") return Layer::description;
    if (s == "control") return Layer::control;
    if (s == "eventing") return Layer::eventing;
    if (s == "presentation") return Layer::presentation;
    return std::nullopt;
}

std::optional<Outcome> outcome_from_string(std::string_view s) {
    if (s == "served") return Outcome::served;
    if (s == "rejected") return Outcome::rejected;
    if (s == "fault") return Outcome::fault;
    return std::nullopt;
}

std::string to_line(const InteractionRecord& r) {
    std::string out;
    out += iso8601_utc(r.timestamp);
    out += '\t';
    out += r.instance_uuid.empty() ? "-" : r.instance_uuid;
    out += '\t';
    out += to_string(r.layer);
    out += '\t';
    out += r.peer.empty() ? "-" : r.peer;
    out += '\t';
    out += to_string(r.outcome);
    out += '\t';
    out += r.status.empty() ? "-" : r.status;
    out += '\t';
    out += std::to_string(r.latency.count());
    out += '\t';
    out += escape_field(r.summary);
    out += '\t';
    out += escape_field(r.raw);
    return out;
}

std::optional<InteractionRecord> record_from_line(std::string_view line) {
    auto fields = split(line, '\t');
    if (fields.size() != 9) return std::nullopt;
    InteractionRecord r;
    auto ts = parse_iso8601(fields[0]);
    auto layer = layer_from_string(fields[2]);
    auto outcome = outcome_from_string(fields[4]);
    if (!ts || !layer || !outcome) return std::nullopt;
    r.timestamp = *ts;
    r.instance_uuid = fields[1];
    r.layer = *layer;
    r.peer = fields[3];
    r.outcome = *outcome;
    r.status = fields[5];
    try {
        r.latency = std::chrono::microseconds(std::stoll(fields[6]));
    } catch (...) {
        return std::nullopt;
    }
    r.summary = unescape_field(fields[7]);
    r.raw = unescape_field(fields[8]);
    return r;
}

InteractionLog::InteractionLog(LogConfig config) : m_config(std::move(config)) {
    m_writer = std::thread([this] { writer_loop(); });
}

InteractionLog::~InteractionLog() {
    {
        std::lock_guard lock(m_mutex);
        m_stopping = true;
    }
    m_cv.notify_all();
    if (m_writer.joinable()) m_writer.join();
}

void InteractionLog::set_callback(Callback cb) {
    std::lock_guard lock(m_mutex);
    m_callback = std::move(cb);
}

void InteractionLog::append(InteractionRecord record) {
    if (record.raw.size() > m_config.raw_capture_cap)
        record.raw.resize(m_config.raw_capture_cap);
    m_appended.fetch_add(1);
    {
        std::lock_guard lock(m_mutex);
        if (m_queue.size() >= m_config.queue_capacity) {
            m_dropped.fetch_add(1);
            return;
        }
        m_queue.push_back(std::move(record));
    }
    m_cv.notify_one();
}

void InteractionLog::flush() {
    std::unique_lock lock(m_mutex);
    m_cv.notify_all();
    m_cv.wait(lock, [this] { return m_queue.empty() && !m_in_flight; });
}

void InteractionLog::writer_loop() {
    std::ofstream file;
    if (!m_config.sink_path.empty()) {
        std::error_code ec;
        auto parent = std::filesystem::path(m_config.sink_path).parent_path();
        if (!parent.empty()) std::filesystem::create_directories(parent, ec);
        file.open(m_config.sink_path, std::ios::app);
    }
    while (true) {
        InteractionRecord record;
        Callback cb;
        {
            std::unique_lock lock(m_mutex);
            m_cv.wait(lock, [this] { return m_stopping || !m_queue.empty(); });
            if (m_queue.empty()) {
                if (m_stopping) break;
                continue;
            }
            record = std::move(m_queue.front());
            m_queue.pop_front();
            cb = m_callback;
            m_in_flight = true;
        }
        if (file.is_open()) {
            file << to_line(record) << '\n';
            file.flush();
        }
        if (cb) cb(record);
        m_written.fetch_add(1);
        {
            std::lock_guard lock(m_mutex);
            m_in_flight = false;
        }
        m_cv.notify_all(); // wake flush() waiters
    }
    if (file.is_open()) file.flush();
}

} // namespace dupnp
