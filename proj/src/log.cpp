// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatswap/log.hpp"

#include <iostream>
#include <mutex>
#include <string>

namespace splatswap {

namespace {

std::mutex gMutex;
LogSink gSink;

void emit(std::string_view level, std::string_view message) {
    std::lock_guard lock(gMutex);
    std::string line = std::string(level) + ": " + std::string(message);
    if (gSink) {
        gSink(line);
    } else {
        std::cerr << line << '\n';
    }
}

} // namespace

void set_log_sink(LogSink sink) {
    std::lock_guard lock(gMutex);
    gSink = std::move(sink);
}

void log_warning(std::string_view message) { emit("warning", message); }
void log_info(std::string_view message) { emit("info", message); }

} // namespace splatswap
