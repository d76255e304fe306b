#pragma once

// Run manifest: enough to replay a CLI invocation and to detect that its
// inputs changed since.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gmaw::cli {

inline constexpr const char* kToolVersion = "0.1.0";

struct RunManifest {
    std::string command;
    std::vector<std::string> args;  ///< arguments after the program name
    std::uint64_t seed = 0;
    std::filesystem::path output_dir;
    std::string version = kToolVersion;
    std::vector<std::pair<std::string, std::string>> inputs;  ///< (path, sha256 hex)

    void add_input(const std::filesystem::path& path);
    [[nodiscard]] std::string to_string() const;
    void write(const std::filesystem::path& dir) const;

    static RunManifest load(const std::filesystem::path& path);
};

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace gmaw::cli
