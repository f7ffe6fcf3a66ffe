#pragma once

#include <string>

namespace prognos {

/// Reads a whole file; throws InvalidInputError when unreadable.
std::string read_text_file(const std::string& path);

/// Writes via a temp file in the same directory plus rename, so readers
/// never observe a partial file.
void atomic_write_text(const std::string& path, const std::string& content);

/// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double value);

}  // namespace prognos
