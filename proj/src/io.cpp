#include "rhythmotion/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "rhythmotion/common.hpp"

namespace rhythmotion::io {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    require_input(f.good(), "cannot open file: " + path.string());
    f.seekg(0, std::ios::end);
    const auto n = static_cast<size_t>(f.tellg());
    f.seekg(0);
    std::vector<unsigned char> bytes(n);
    if (n) f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    require_input(f.good(), "read failed: " + path.string());
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require_input(f.good(), "cannot write file: " + path.string());
    if (!bytes.empty())
        f.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
    f.flush();
    require(f.good(), "write failed: " + path.string());
}

void write_json_blob(const std::filesystem::path& path, const json& header,
                     std::span<const unsigned char> payload) {
    const std::string h = header.dump();
    std::vector<unsigned char> out;
    out.reserve(4 + h.size() + payload.size());
    const auto len = static_cast<uint32_t>(h.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((len >> (8 * i)) & 0xff));
    out.insert(out.end(), h.begin(), h.end());
    out.insert(out.end(), payload.begin(), payload.end());
    write_file(path, out);
}

JsonBlob read_json_blob(const std::filesystem::path& path, const std::string& expect_magic,
                        int expect_version) {
    const auto bytes = read_file(path);
    require_input(bytes.size() >= 4, "truncated file: " + path.string());
    uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<uint32_t>(bytes[i]) << (8 * i);
    require_input(bytes.size() >= 4 + static_cast<size_t>(len),
                  "truncated header: " + path.string());
    JsonBlob blob;
    try {
        blob.header = json::parse(bytes.begin() + 4, bytes.begin() + 4 + len);
    } catch (const std::exception& e) {
        throw InputError("bad header in " + path.string() + ": " + e.what());
    }
    require_input(blob.header.value("magic", "") == expect_magic,
                  path.string() + ": expected magic '" + expect_magic + "'");
    require_input(blob.header.value("version", -1) == expect_version,
                  path.string() + ": unsupported schema version");
    blob.payload.assign(bytes.begin() + 4 + len, bytes.end());
    return blob;
}

std::vector<unsigned char> to_f32_bytes(std::span<const double> xs) {
    std::vector<unsigned char> out;
    append_f32(out, xs);
    return out;
}

void append_f32(std::vector<unsigned char>& out, std::span<const double> xs) {
    out.reserve(out.size() + xs.size() * 4);
    for (double x : xs) {
        const float f = static_cast<float>(x);
        unsigned char b[4];
        std::memcpy(b, &f, 4);
        out.insert(out.end(), b, b + 4);
    }
}

std::vector<double> from_f32_bytes(std::span<const unsigned char> bytes) {
    require_input(bytes.size() % 4 == 0, "payload size not a multiple of 4");
    std::vector<double> xs(bytes.size() / 4);
    for (size_t i = 0; i < xs.size(); ++i) {
        float f;
        std::memcpy(&f, bytes.data() + 4 * i, 4);
        xs[i] = static_cast<double>(f);
    }
    return xs;
}

struct CsvWriter::Impl {
    std::ofstream f;
    size_t ncols = 0;
};

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns)
    : impl_(new Impl) {
    impl_->f.open(path, std::ios::trunc);
    require_input(impl_->f.good(), "cannot write csv: " + path.string());
    impl_->ncols = columns.size();
    for (size_t i = 0; i < columns.size(); ++i)
        impl_->f << columns[i] << (i + 1 < columns.size() ? "," : "\n");
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::row(std::span<const double> values) {
    require(values.size() == impl_->ncols, "csv row width mismatch");
    char buf[40];
    for (size_t i = 0; i < values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9g", values[i]);
        impl_->f << buf << (i + 1 < values.size() ? "," : "\n");
    }
    impl_->f.flush();
}

}  // namespace rhythmotion::io
