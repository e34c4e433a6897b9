#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "metalens/error.hpp"
#include "metalens/io.hpp"

namespace metalens {

inline std::string sha256_hex(const std::vector<unsigned char>& bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    require(ctx && EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) == 1 &&
                EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) == 1 &&
                EVP_DigestFinal_ex(ctx.get(), digest, &len) == 1,
            ErrorKind::io, "SHA-256 computation failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

inline std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(detail::read_file(path)); }

/// One artifact. Paths are relative to the manifest's directory so output trees can move.
struct ManifestRecord {
    std::string path;
    std::string sha256;
    std::string command;
    std::vector<std::string> inputs;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
};

inline nlohmann::ordered_json to_json(const ManifestRecord& r) {
    nlohmann::ordered_json j;
    j["path"] = r.path;
    j["sha256"] = r.sha256;
    j["command"] = r.command;
    j["inputs"] = r.inputs;
    j["seed"] = r.seed;
    if (!r.warnings.empty()) j["warnings"] = r.warnings;
    return j;
}

inline std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
    std::ifstream f(path);
    require(static_cast<bool>(f), ErrorKind::config, "cannot open manifest " + path.string());
    std::vector<ManifestRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            ManifestRecord r;
            r.path = j.at("path").get<std::string>();
            r.sha256 = j.at("sha256").get<std::string>();
            r.command = j.at("command").get<std::string>();
            r.inputs = j.value("inputs", std::vector<std::string>{});
            r.seed = j.value("seed", std::uint64_t{0});
            r.warnings = j.value("warnings", std::vector<std::string>{});
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::format, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

/// Replaces records for the same paths, keeps the rest in order, appends the new ones.
inline void update_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
    std::vector<ManifestRecord> kept;
    if (std::filesystem::exists(path))
        for (auto& old : read_manifest(path)) {
            bool replaced = false;
            for (const auto& r : records) replaced = replaced || r.path == old.path;
            if (!replaced) kept.push_back(std::move(old));
        }
    kept.insert(kept.end(), records.begin(), records.end());
    std::string text;
    for (const auto& r : kept) text += to_json(r).dump() + "\n";
    detail::write_file(path, std::vector<unsigned char>(text.begin(), text.end()));
}

/// Hash for `file`, recorded relative to the manifest directory.
inline ManifestRecord make_record(const std::filesystem::path& manifest_dir, const std::filesystem::path& file,
                                  std::string command, std::vector<std::string> inputs, std::uint64_t seed) {
    return {std::filesystem::relative(file, manifest_dir).generic_string(), sha256_file(file), std::move(command),
            std::move(inputs), seed, {}};
}

struct VerifyResult {
    std::size_t checked = 0;
    std::vector<std::string> mismatches;
    bool ok() const noexcept { return mismatches.empty(); }
};

inline VerifyResult verify_manifest(const std::filesystem::path& path) {
    VerifyResult v;
    const auto dir = path.parent_path();
    for (const auto& r : read_manifest(path)) {
        ++v.checked;
        const auto file = dir / r.path;
        if (!std::filesystem::exists(file))
            v.mismatches.push_back(r.path + ": missing");
        else if (sha256_file(file) != r.sha256)
            v.mismatches.push_back(r.path + ": hash mismatch");
    }
    return v;
}

}  // namespace metalens
