#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace rhythmotion::io {

using json = nlohmann::ordered_json;

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes);

// Shared artifact container: u32-LE header length, JSON header, raw payload.
// Every format built on this carries "magic" and "version" fields in the
// header; readers reject mismatches instead of reinterpreting.
struct JsonBlob {
    json header;
    std::vector<unsigned char> payload;
};

void write_json_blob(const std::filesystem::path& path, const json& header,
                     std::span<const unsigned char> payload);
JsonBlob read_json_blob(const std::filesystem::path& path, const std::string& expect_magic,
                        int expect_version);

// float32 little-endian payload helpers (all binary payloads are f32)
std::vector<unsigned char> to_f32_bytes(std::span<const double> xs);
std::vector<double> from_f32_bytes(std::span<const unsigned char> bytes);

void append_f32(std::vector<unsigned char>& out, std::span<const double> xs);

// Minimal CSV writer: header row then data rows, '%.9g' doubles.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns);
    ~CsvWriter();
    void row(std::span<const double> values);

private:
    struct Impl;
    Impl* impl_;
};

}  // namespace rhythmotion::io
