#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

namespace wkc {

using WarningSink = std::function<void(const std::string&)>;

namespace detail {

struct WarningState {
    std::mutex mutex;
    WarningSink sink;
};

inline WarningState& warning_state() {
    static WarningState state;
    return state;
}

}  // namespace detail

/// Replaces the process-wide warning sink; returns the previous one.
/// An empty sink restores the default (stderr).
inline WarningSink set_warning_sink(WarningSink sink) {
    auto& state = detail::warning_state();
    std::lock_guard lock(state.mutex);
    return std::exchange(state.sink, std::move(sink));
}

inline void warn(const std::string& message) {
    auto& state = detail::warning_state();
    std::lock_guard lock(state.mutex);
    if (state.sink) {
        state.sink(message);
    } else {
        std::cerr << "wkc: warning: " << message << '\n';
    }
}

/// Collects warnings for the lifetime of the object (tests, reports).
class ScopedWarningCapture {
public:
    ScopedWarningCapture()
        : previous_(set_warning_sink([this](const std::string& m) { messages_.push_back(m); })) {}
    ~ScopedWarningCapture() { set_warning_sink(std::move(previous_)); }
    ScopedWarningCapture(const ScopedWarningCapture&) = delete;
    ScopedWarningCapture& operator=(const ScopedWarningCapture&) = delete;

    const std::vector<std::string>& messages() const { return messages_; }

private:
    std::vector<std::string> messages_;
    WarningSink previous_;
};

}  // namespace wkc
