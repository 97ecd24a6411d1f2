// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <functional>
#include <string_view>

namespace splatswap {

using LogSink = std::function<void(std::string_view)>;

/// Routes warnings to `sink`; an empty sink restores the stderr default.
void set_log_sink(LogSink sink);
void log_warning(std::string_view message);
void log_info(std::string_view message);

} // namespace splatswap
