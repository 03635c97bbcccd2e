#pragma once

#include <string>

namespace umsn {

/// Writes content to a temp file in the target directory, then renames into
/// place so a crash never leaves a partial artifact at `path`.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

/// FNV-1a hex digest, used to stamp configs into checkpoints and reports.
std::string digest_hex(const std::string& content);

}  // namespace umsn
