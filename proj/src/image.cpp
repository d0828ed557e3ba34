#include "rhythmotion/image.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "rhythmotion/common.hpp"
#include "rhythmotion/io.hpp"

namespace rhythmotion::img {

namespace {

unsigned char quantize(double v) {
    const double c = clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(c * 255.0 + 0.5);
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Image& im) {
    std::ostringstream head;
    head << "P5\n" << im.w << " " << im.h << "\n255\n";
    const std::string hs = head.str();
    std::vector<unsigned char> bytes(hs.begin(), hs.end());
    bytes.reserve(bytes.size() + im.px.size());
    for (double v : im.px) bytes.push_back(quantize(v));
    io::write_file(path, bytes);
}

Image read_pgm(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    std::string s(bytes.begin(), bytes.end());
    std::istringstream in(s);
    std::string magic;
    int w, h, maxv;
    in >> magic >> w >> h >> maxv;
    require_input(magic == "P5" && maxv == 255 && w > 0 && h > 0, "not an 8-bit P5 PGM: " + path.string());
    in.get();  // single whitespace after header
    const size_t off = static_cast<size_t>(in.tellg());
    require_input(bytes.size() >= off + static_cast<size_t>(w) * h, "truncated PGM: " + path.string());
    Image im(w, h);
    for (size_t i = 0; i < im.px.size(); ++i) im.px[i] = bytes[off + i] / 255.0;
    return im;
}

namespace {

void push_u32_be(std::vector<unsigned char>& v, uint32_t x) {
    v.push_back(static_cast<unsigned char>(x >> 24));
    v.push_back(static_cast<unsigned char>(x >> 16));
    v.push_back(static_cast<unsigned char>(x >> 8));
    v.push_back(static_cast<unsigned char>(x));
}

void png_chunk(std::vector<unsigned char>& out, const char type[4],
               const std::vector<unsigned char>& data) {
    push_u32_be(out, static_cast<uint32_t>(data.size()));
    std::vector<unsigned char> td(type, type + 4);
    td.insert(td.end(), data.begin(), data.end());
    out.insert(out.end(), td.begin(), td.end());
    push_u32_be(out, static_cast<uint32_t>(crc32(0, td.data(), static_cast<uInt>(td.size()))));
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& im) {
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<unsigned char> out(sig, sig + 8);

    std::vector<unsigned char> ihdr;
    push_u32_be(ihdr, static_cast<uint32_t>(im.w));
    push_u32_be(ihdr, static_cast<uint32_t>(im.h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    png_chunk(out, "IHDR", ihdr);

    // filter byte 0 per scanline
    std::vector<unsigned char> raw;
    raw.reserve(static_cast<size_t>(im.h) * (im.w + 1));
    for (int y = 0; y < im.h; ++y) {
        raw.push_back(0);
        for (int x = 0; x < im.w; ++x) raw.push_back(quantize(im.at(x, y)));
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> zdata(zlen);
    require(compress2(zdata.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) == Z_OK,
            "png deflate failed");
    zdata.resize(zlen);
    png_chunk(out, "IDAT", zdata);
    png_chunk(out, "IEND", {});
    io::write_file(path, out);
}

// ---------------------------------------------------------------------------
// GIF89a, 256-level grayscale palette, standard LZW.

struct GifWriter::Impl {
    std::ofstream f;
    int w, h, fps;
    long frames = 0;
    long emitted_cs = 0;  // total delay emitted so far, centiseconds
    bool finished = false;

    void put(unsigned char b) { f.put(static_cast<char>(b)); }
    void put16(int x) {
        put(static_cast<unsigned char>(x & 0xff));
        put(static_cast<unsigned char>((x >> 8) & 0xff));
    }
};

GifWriter::GifWriter(const std::filesystem::path& path, int w, int h, int fps) : impl_(new Impl) {
    impl_->w = w;
    impl_->h = h;
    impl_->fps = fps;
    impl_->f.open(path, std::ios::binary | std::ios::trunc);
    require_input(impl_->f.good(), "cannot write gif: " + path.string());
    impl_->f.write("GIF89a", 6);
    impl_->put16(w);
    impl_->put16(h);
    impl_->put(0xf7);  // global color table, 256 entries, 8-bit color resolution
    impl_->put(0);
    impl_->put(0);
    for (int i = 0; i < 256; ++i) {
        impl_->put(static_cast<unsigned char>(i));
        impl_->put(static_cast<unsigned char>(i));
        impl_->put(static_cast<unsigned char>(i));
    }
    // looping application extension
    static const unsigned char loop[] = {0x21, 0xff, 0x0b, 'N', 'E', 'T', 'S', 'C', 'A',
                                         'P',  'E',  '2',  '.', '0', 0x03, 0x01, 0x00,
                                         0x00, 0x00};
    impl_->f.write(reinterpret_cast<const char*>(loop), sizeof loop);
}

GifWriter::~GifWriter() {
    if (!impl_->finished) finish();
    delete impl_;
}

void GifWriter::add_frame(const Image& im) {
    require(im.w == impl_->w && im.h == impl_->h, "gif frame size mismatch");
    // delay so that cumulative centiseconds track frames/fps
    const long target_cs =
        static_cast<long>((impl_->frames + 1) * 100.0 / impl_->fps + 0.5);
    const int delay = static_cast<int>(target_cs - impl_->emitted_cs);
    impl_->emitted_cs = target_cs;
    impl_->frames++;

    impl_->put(0x21);  // graphic control extension
    impl_->put(0xf9);
    impl_->put(4);
    impl_->put(0);
    impl_->put16(delay);
    impl_->put(0);
    impl_->put(0);

    impl_->put(0x2c);  // image descriptor
    impl_->put16(0);
    impl_->put16(0);
    impl_->put16(impl_->w);
    impl_->put16(impl_->h);
    impl_->put(0);

    // LZW with 8-bit min code size
    const int min_code = 8;
    impl_->put(min_code);
    const int clear_code = 1 << min_code;
    const int end_code = clear_code + 1;

    // code table: chains keyed by (prefix code, next byte)
    std::vector<int> next_table;
    std::vector<unsigned char> block;
    uint32_t bitbuf = 0;
    int bitcnt = 0;
    int code_size = min_code + 1;
    int next_code = end_code + 1;
    // hash map: (prefix<<8)|byte -> code; fixed 5003-slot open addressing like the classic encoder
    constexpr int kHash = 1 << 16;
    std::vector<int> hash_key(kHash, -1), hash_val(kHash, -1);

    auto flush_block = [&]() {
        impl_->put(static_cast<unsigned char>(block.size()));
        impl_->f.write(reinterpret_cast<const char*>(block.data()),
                       static_cast<std::streamsize>(block.size()));
        block.clear();
    };
    auto emit = [&](int code) {
        bitbuf |= static_cast<uint32_t>(code) << bitcnt;
        bitcnt += code_size;
        while (bitcnt >= 8) {
            block.push_back(static_cast<unsigned char>(bitbuf & 0xff));
            bitbuf >>= 8;
            bitcnt -= 8;
            if (block.size() == 255) flush_block();
        }
    };
    auto reset_table = [&]() {
        std::fill(hash_key.begin(), hash_key.end(), -1);
        next_code = end_code + 1;
        code_size = min_code + 1;
    };

    emit(clear_code);
    reset_table();
    int prefix = quantize(im.px[0]);
    for (size_t i = 1; i < im.px.size(); ++i) {
        const int c = quantize(im.px[i]);
        const int key = (prefix << 8) | c;
        int slot = key % kHash;
        int found = -1;
        while (hash_key[slot] != -1) {
            if (hash_key[slot] == key) {
                found = hash_val[slot];
                break;
            }
            slot = (slot + 1) % kHash;
        }
        if (found >= 0) {
            prefix = found;
            continue;
        }
        emit(prefix);
        if (next_code < 4096) {
            hash_key[slot] = key;
            hash_val[slot] = next_code;
            if (next_code == (1 << code_size) && code_size < 12) code_size++;
            next_code++;
        } else {
            emit(clear_code);
            reset_table();
        }
        prefix = c;
    }
    emit(prefix);
    emit(end_code);
    if (bitcnt > 0) {
        block.push_back(static_cast<unsigned char>(bitbuf & 0xff));
        if (block.size() == 255) flush_block();
    }
    if (!block.empty()) flush_block();
    impl_->put(0);  // block terminator
}

void GifWriter::finish() {
    if (impl_->finished) return;
    impl_->put(0x3b);
    impl_->f.flush();
    impl_->finished = true;
}

double GifWriter::total_delay_seconds() const { return impl_->emitted_cs / 100.0; }

double gif_duration_seconds(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    require_input(bytes.size() > 13 && std::memcmp(bytes.data(), "GIF89a", 6) == 0,
                  "not a GIF89a file: " + path.string());
    long cs = 0;
    for (size_t i = 0; i + 7 < bytes.size(); ++i) {
        if (bytes[i] == 0x21 && bytes[i + 1] == 0xf9 && bytes[i + 2] == 4)
            cs += bytes[i + 4] | (bytes[i + 5] << 8);
    }
    return cs / 100.0;
}

}  // namespace rhythmotion::img
