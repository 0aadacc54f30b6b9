#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace lpcn {

// Run manifest written next to every produced artifact: the command, the
// fully resolved configuration, timestamps and artifact paths, as a JSON
// document. Re-running the recorded command reproduces the artifact.
struct RunManifest {
    std::string command;
    std::map<std::string, std::string> config;
    std::string started_at;
    std::string finished_at;
    std::map<std::string, std::string> artifacts;

    void write(const std::filesystem::path& path) const;
};

std::string timestamp_now();

}  // namespace lpcn
