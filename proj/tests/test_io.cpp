#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "rhythmotion/common.hpp"
#include "rhythmotion/image.hpp"
#include "rhythmotion/io.hpp"
#include "rhythmotion/rng.hpp"

using namespace rhythmotion;
namespace fs = std::filesystem;

static fs::path tmp_path(const char* name) {
    return fs::temp_directory_path() / name;
}

TEST_CASE("json blob round trip") {
    const auto p = tmp_path("blob_rt.bin");
    io::json h;
    h["magic"] = "TST1";
    h["version"] = 1;
    h["note"] = "hello";
    std::vector<unsigned char> payload = {1, 2, 3, 250};
    io::write_json_blob(p, h, payload);

    const auto blob = io::read_json_blob(p, "TST1", 1);
    CHECK(blob.header.at("note") == "hello");
    CHECK(blob.payload == payload);
    fs::remove(p);
}

TEST_CASE("json blob rejects wrong magic and version") {
    const auto p = tmp_path("blob_bad.bin");
    io::json h;
    h["magic"] = "TST1";
    h["version"] = 2;
    io::write_json_blob(p, h, {});
    CHECK_THROWS_AS(io::read_json_blob(p, "XXXX", 2), InputError);
    CHECK_THROWS_AS(io::read_json_blob(p, "TST1", 1), InputError);
    fs::remove(p);
}

TEST_CASE("json blob rejects truncated and garbage files") {
    const auto p = tmp_path("blob_trunc.bin");
    std::vector<unsigned char> junk = {0xff, 0xff, 0xff, 0x7f, 'x'};
    io::write_file(p, junk);
    CHECK_THROWS_AS(io::read_json_blob(p, "TST1", 1), InputError);
    io::write_file(p, std::vector<unsigned char>{1, 2});
    CHECK_THROWS_AS(io::read_json_blob(p, "TST1", 1), InputError);
    fs::remove(p);
    CHECK_THROWS_AS(io::read_json_blob(p, "TST1", 1), InputError);
}

TEST_CASE("f32 payload round trip") {
    std::vector<double> xs = {0.0, 1.0, -2.5, 3.14159265, 1e-7, -12345.678};
    const auto bytes = io::to_f32_bytes(xs);
    CHECK(bytes.size() == xs.size() * 4);
    const auto back = io::from_f32_bytes(bytes);
    REQUIRE(back.size() == xs.size());
    for (size_t i = 0; i < xs.size(); ++i)
        CHECK(back[i] == doctest::Approx(xs[i]).epsilon(1e-6));
}

TEST_CASE("csv writer emits header and rows") {
    const auto p = tmp_path("rows.csv");
    {
        io::CsvWriter w(p, {"a", "b"});
        w.row(std::vector<double>{1.0, 2.5});
        w.row(std::vector<double>{-3.0, 0.125});
    }
    const auto bytes = io::read_file(p);
    const std::string text(bytes.begin(), bytes.end());
    CHECK(text == "a,b\n1,2.5\n-3,0.125\n");
    fs::remove(p);
}

TEST_CASE("pgm round trip") {
    img::Image im(7, 5);
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x) im.at(x, y) = (x + y * im.w) / 40.0;
    const auto p = tmp_path("rt.pgm");
    img::write_pgm(p, im);
    const auto back = img::read_pgm(p);
    REQUIRE(back.w == im.w);
    REQUIRE(back.h == im.h);
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x)
            CHECK(back.at(x, y) == doctest::Approx(im.at(x, y)).epsilon(0.005));
    fs::remove(p);
}

TEST_CASE("png has valid signature and ihdr") {
    img::Image im(16, 9, 0.5);
    const auto p = tmp_path("sig.png");
    img::write_png(p, im);
    const auto bytes = io::read_file(p);
    REQUIRE(bytes.size() > 33);
    const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    for (int i = 0; i < 8; ++i) CHECK(bytes[static_cast<size_t>(i)] == sig[i]);
    // width/height big-endian at offsets 16 and 20
    CHECK(bytes[19] == 16);
    CHECK(bytes[23] == 9);
    fs::remove(p);
}

TEST_CASE("gif duration tracks frame count") {
    const auto p = tmp_path("clip.gif");
    const int frames = 90, fps = 60;
    {
        img::GifWriter w(p, 24, 24, fps);
        img::Image im(24, 24);
        for (int i = 0; i < frames; ++i) {
            im.at(i % 24, (i * 7) % 24) = 1.0;
            w.add_frame(im);
        }
        w.finish();
        CHECK(w.total_delay_seconds() ==
              doctest::Approx(frames / static_cast<double>(fps)).epsilon(0.02));
    }
    const double dur = img::gif_duration_seconds(p);
    CHECK(std::abs(dur - frames / static_cast<double>(fps)) <= 1.0 / fps + 1e-9);
    fs::remove(p);
}

TEST_CASE("rng streams are deterministic and well ranged") {
    Rng a(42), b(42), c(43);
    bool same = true, differ = false;
    for (int i = 0; i < 1000; ++i) {
        const uint64_t av = a.next_u64();
        same = same && (av == b.next_u64());
        differ = differ || (av != c.next_u64());
    }
    CHECK(same);
    CHECK(differ);

    Rng r(7);
    double lo = 1.0, hi = 0.0, mean = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double u = r.uniform();
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        mean += u;
    }
    mean /= 20000;
    CHECK(lo >= 0.0);
    CHECK(hi < 1.0);
    CHECK(mean == doctest::Approx(0.5).epsilon(0.02));

    double nmean = 0.0, nvar = 0.0;
    std::vector<double> ns(20000);
    for (auto& x : ns) {
        x = r.normal();
        nmean += x;
    }
    nmean /= static_cast<double>(ns.size());
    for (double x : ns) nvar += (x - nmean) * (x - nmean);
    nvar /= static_cast<double>(ns.size());
    CHECK(nmean == doctest::Approx(0.0).epsilon(0.05));
    CHECK(nvar == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("angle wrap stays in half-open interval") {
    for (double a : {0.0, 3.14159, -3.15, 10.0, -10.0, 100.0, 6.2831853}) {
        const double w = wrap_angle(a);
        CHECK(w > -3.141592653589794);
        CHECK(w <= 3.141592653589794);
        CHECK(std::abs(std::sin(w) - std::sin(a)) < 1e-9);
        CHECK(std::abs(std::cos(w) - std::cos(a)) < 1e-9);
    }
}
