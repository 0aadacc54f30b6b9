#include "lpcn/manifest.hpp"

#include <json.hpp>

#include <chrono>
#include <fstream>

#include "lpcn/errors.hpp"

namespace lpcn {

void RunManifest::write(const std::filesystem::path& path) const {
    nlohmann::json j;
    j["tool"] = "lpcn 1.0";
    j["command"] = command;
    j["config"] = config;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["artifacts"] = artifacts;
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

}  // namespace lpcn
