#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "rhythmotion/audio.hpp"
#include "rhythmotion/common.hpp"
#include "rhythmotion/io.hpp"

using namespace rhythmotion;
using namespace rhythmotion::audio;
namespace fs = std::filesystem;

namespace {

fs::path tmp_path(const char* name) { return fs::temp_directory_path() / name; }

// byte-level WAV fixture builder, independent of write_wav
std::vector<unsigned char> wav_bytes(int sr, int channels, int bits, int format,
                                     const std::vector<unsigned char>& data) {
    std::vector<unsigned char> out;
    auto u32 = [&](uint32_t x) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(x >> (8 * i)));
    };
    auto u16 = [&](uint16_t x) {
        out.push_back(static_cast<unsigned char>(x));
        out.push_back(static_cast<unsigned char>(x >> 8));
    };
    auto tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };
    tag("RIFF");
    u32(static_cast<uint32_t>(36 + data.size()));
    tag("WAVE");
    tag("fmt ");
    u32(16);
    u16(static_cast<uint16_t>(format));
    u16(static_cast<uint16_t>(channels));
    u32(static_cast<uint32_t>(sr));
    u32(static_cast<uint32_t>(sr * channels * bits / 8));
    u16(static_cast<uint16_t>(channels * bits / 8));
    u16(static_cast<uint16_t>(bits));
    tag("data");
    u32(static_cast<uint32_t>(data.size()));
    out.insert(out.end(), data.begin(), data.end());
    return out;
}

PcmSignal sine(int sr, double hz, double seconds, double amp = 0.8) {
    PcmSignal s;
    s.sample_rate = sr;
    const size_t n = static_cast<size_t>(seconds * sr);
    s.samples.resize(n);
    for (size_t i = 0; i < n; ++i) s.samples[i] = amp * std::sin(2.0 * M_PI * hz * i / sr);
    return s;
}

PcmSignal silence(int sr, double seconds) {
    PcmSignal s;
    s.sample_rate = sr;
    s.samples.assign(static_cast<size_t>(seconds * sr), 0.0);
    return s;
}

// unit impulses at a fixed beat period
PcmSignal click_train(int sr, double bpm, double seconds) {
    PcmSignal s = silence(sr, seconds);
    const double step = 60.0 / bpm;
    for (double b = 0.0; b < seconds; b += step) {
        const size_t i = static_cast<size_t>(std::llround(b * sr));
        if (i < s.samples.size()) s.samples[i] = 1.0;
    }
    return s;
}

std::vector<int> click_frames(double bpm, double seconds) {
    std::vector<int> f;
    const double step = 60.0 / bpm;
    const int T = static_cast<int>(seconds * 60);
    for (double b = 0.0; b < seconds; b += step) {
        const int t = static_cast<int>(std::llround(b * 60.0));
        if (t < T) f.push_back(t);
    }
    return f;
}

}  // namespace

TEST_CASE("decode 16-bit mono sample value") {
    // a single 16-bit sample of 16384 should decode to 0.5
    std::vector<unsigned char> data = {0x00, 0x40};
    const auto p = tmp_path("one.wav");
    io::write_file(p, wav_bytes(22050, 1, 16, 1, data));
    const PcmSignal s = decode_wav(p);
    CHECK(s.sample_rate == 22050);
    REQUIRE(s.samples.size() == 1);
    CHECK(std::abs(s.samples[0] - 0.5) <= std::pow(2.0, -15));
    fs::remove(p);
}

TEST_CASE("decode stereo averages channels") {
    // interleaved (+0.5, -0.5): average is silence
    std::vector<unsigned char> data;
    for (int i = 0; i < 8; ++i) {
        data.push_back(0x00);
        data.push_back(0x40);
        data.push_back(0x00);
        data.push_back(0xc0);
    }
    const auto p = tmp_path("stereo.wav");
    io::write_file(p, wav_bytes(8000, 2, 16, 1, data));
    const PcmSignal s = decode_wav(p);
    REQUIRE(s.samples.size() == 8);
    for (double v : s.samples) CHECK(std::abs(v) <= std::pow(2.0, -15));
    fs::remove(p);
}

TEST_CASE("decode rejects bad input") {
    const auto p = tmp_path("bad.wav");
    io::write_file(p, wav_bytes(22050, 1, 16, 1, {}));
    CHECK_THROWS_AS(decode_wav(p), InputError);  // zero-length data

    io::write_file(p, wav_bytes(22050, 1, 16, 7, {0, 0}));
    CHECK_THROWS_AS(decode_wav(p), InputError);  // unknown codec

    io::write_file(p, std::vector<unsigned char>{'R', 'I', 'F', 'F'});
    CHECK_THROWS_AS(decode_wav(p), InputError);  // truncated

    io::write_file(p, wav_bytes(4000, 1, 16, 1, {0, 0}));
    CHECK_THROWS_AS(decode_wav(p), InputError);  // sample rate too low
    fs::remove(p);
}

TEST_CASE("decode 8 24 and float formats") {
    const auto p = tmp_path("fmts.wav");
    // 8-bit unsigned: 192 -> (192-128)/128 = 0.5
    io::write_file(p, wav_bytes(8000, 1, 8, 1, {192}));
    CHECK(decode_wav(p).samples[0] == doctest::Approx(0.5).epsilon(0.01));
    // 24-bit: 0x400000 = 4194304 -> 0.5
    io::write_file(p, wav_bytes(8000, 1, 24, 1, {0x00, 0x00, 0x40}));
    CHECK(decode_wav(p).samples[0] == doctest::Approx(0.5).epsilon(1e-6));
    // float32: 0.25
    std::vector<unsigned char> f(4);
    const float fv = 0.25f;
    std::memcpy(f.data(), &fv, 4);
    io::write_file(p, wav_bytes(8000, 1, 32, 3, f));
    CHECK(decode_wav(p).samples[0] == doctest::Approx(0.25));
    fs::remove(p);
}

TEST_CASE("wav writer round trips through decoder") {
    PcmSignal s = sine(22050, 330.0, 0.2, 0.6);
    const auto p = tmp_path("rt.wav");
    write_wav(p, s);
    const PcmSignal back = decode_wav(p);
    REQUIRE(back.samples.size() == s.samples.size());
    CHECK(back.sample_rate == s.sample_rate);
    for (size_t i = 0; i < s.samples.size(); i += 37)
        CHECK(back.samples[i] == doctest::Approx(s.samples[i]).epsilon(1e-3).scale(1.0));
    fs::remove(p);
}

TEST_CASE("frame count follows duration") {
    CHECK(frame_count(22050 * 4, 22050) == 240);
    CHECK(frame_count(22050 * 4 + 100, 22050) == 240);
    CHECK(frame_count(48000 * 10, 48000) == 600);
    const PcmSignal s = silence(22050, 5.5);
    CHECK(static_cast<int>(onset_envelope(s).size()) == 330);
}

TEST_CASE("silence produces zero envelope mfcc chroma") {
    const PcmSignal s = silence(22050, 5.0);
    const auto env = onset_envelope(s);
    for (double v : env) CHECK(v == 0.0);
    const auto mf = mfcc(s);
    for (double v : mf.data) CHECK(v == 0.0);
    const auto ch = chroma(s);
    for (double v : ch.data) CHECK(v == 0.0);
}

TEST_CASE("envelope rejects too-short signals") {
    PcmSignal s = silence(22050, 0.01);  // 220 samples, below one window
    CHECK_THROWS_AS(onset_envelope(s), InputError);
}

TEST_CASE("click train envelope peaks near click frames") {
    const PcmSignal s = click_train(22050, 120.0, 8.0);  // 2 Hz clicks
    const auto env = onset_envelope(s);
    const auto truth = click_frames(120.0, 8.0);
    for (int tf : truth) {
        if (tf < 2 || tf + 2 >= static_cast<int>(env.size())) continue;
        // local maximum of the envelope within one frame of the click
        int best = tf - 2;
        for (int t = tf - 2; t <= tf + 2; ++t)
            if (env[static_cast<size_t>(t)] > env[static_cast<size_t>(best)]) best = t;
        CHECK(std::abs(best - tf) <= 1);
    }
}

TEST_CASE("steady sine envelope decays to near zero") {
    const PcmSignal s = sine(22050, 440.0, 5.0);
    const auto env = onset_envelope(s);
    // after the attack transient the spectrum is steady, so normalized flux
    // should be tiny
    for (size_t t = 5; t < env.size(); ++t) CHECK(env[t] <= 0.05);
}

TEST_CASE("mfcc separates noise from tone") {
    Rng rng(99);
    PcmSignal noise = silence(22050, 5.0);
    for (auto& v : noise.samples) v = rng.uniform(-0.8, 0.8);
    const PcmSignal tone = sine(22050, 440.0, 5.0);
    const auto a = mfcc(noise), b = mfcc(tone);
    REQUIRE(a.shape == b.shape);
    CHECK(a.dim(1) == 20);
    double diff = 0;
    for (size_t i = 0; i < a.data.size(); ++i) diff += std::abs(a.data[i] - b.data[i]);
    diff /= static_cast<double>(a.data.size());
    CHECK(diff > 0.1);
}

TEST_CASE("features are shift equivariant by one hop") {
    // at 48 kHz one frame is exactly 800 samples, so shifting the input by a
    // hop must shift interior analysis frames by exactly one
    const int sr = 48000;
    const int hop = 800;
    Rng rng(5);
    PcmSignal a = silence(sr, 6.0);
    // periodic broadband content: 60 Hz pulse train plus a tone
    for (size_t i = 0; i < a.samples.size(); ++i) {
        const double tone = 0.3 * std::sin(2.0 * M_PI * 220.0 * static_cast<double>(i) / sr);
        const double pulse = (i % 19200 < 40) ? 0.6 : 0.0;  // four pulses per second
        a.samples[i] = tone + pulse;
    }
    PcmSignal b = a;
    b.samples.insert(b.samples.begin(), hop, 0.0);
    b.samples.resize(a.samples.size());

    const auto env_a = onset_envelope(a), env_b = onset_envelope(b);
    const auto ch_a = chroma(a), ch_b = chroma(b);
    const auto mf_a = mfcc(a, false), mf_b = mfcc(b, false);
    const auto mfn_a = mfcc(a), mfn_b = mfcc(b);
    const int T = static_cast<int>(env_a.size());
    for (int t = 5; t < T - 5; ++t) {
        CHECK(std::abs(env_b[static_cast<size_t>(t)] - env_a[static_cast<size_t>(t - 1)]) <= 1e-6);
        for (int c = 0; c < 12; ++c)
            CHECK(std::abs(ch_b.at(t, c) - ch_a.at(t - 1, c)) <= 1e-6);
        for (int j = 0; j < 20; ++j) {
            CHECK(std::abs(mf_b.at(t, j) - mf_a.at(t - 1, j)) <= 1e-6);
            // z-normalization stats see two different edge frames, so the
            // normalized rows agree to a looser tolerance
            CHECK(std::abs(mfn_b.at(t, j) - mfn_a.at(t - 1, j)) <= 1e-3);
        }
    }
}

TEST_CASE("chroma of a 440 Hz tone peaks at pitch class A across octaves") {
    for (double hz : {440.0, 880.0}) {
        const PcmSignal s = sine(22050, hz, 5.0);
        const auto ch = chroma(s);
        int voiced = 0, at_a = 0;
        for (int t = 0; t < ch.dim(0); ++t) {
            double norm = 0;
            int arg = 0;
            for (int c = 0; c < 12; ++c) {
                norm += ch.at(t, c);
                if (ch.at(t, c) > ch.at(t, arg)) arg = c;
            }
            if (norm <= 0) continue;
            ++voiced;
            at_a += arg == 9;  // A
        }
        CHECK(voiced > 250);
        CHECK(at_a == voiced);
    }
}

TEST_CASE("peak picking on hand-built series") {
    // single triangular bump
    std::vector<double> tri(21, 0.0);
    for (int i = 0; i <= 10; ++i) {
        tri[static_cast<size_t>(i)] = i / 10.0;
        tri[static_cast<size_t>(20 - i)] = i / 10.0;
    }
    auto p = detect_peaks(tri);
    REQUIRE(p.size() == 1);
    CHECK(p[0] == 10);

    // two bumps 3 frames apart, min gap 6: only the taller survives
    std::vector<double> two(30, 0.0);
    two[10] = 1.0;
    two[13] = 0.8;
    p = detect_peaks(two);
    REQUIRE(p.size() == 1);
    CHECK(p[0] == 10);

    // monotone ramp has no interior strict maximum
    std::vector<double> ramp(30);
    for (size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i);
    CHECK(detect_peaks(ramp).empty());
}

TEST_CASE("beat tracking on click trains") {
    struct Case {
        double bpm, lo, hi;
    };
    for (const Case c : {Case{120.0, 118.0, 122.0}, Case{90.0, 88.0, 92.0}}) {
        const double secs = 12.0;
        const PcmSignal s = click_train(22050, c.bpm, secs);
        const auto env = onset_envelope(s);
        const BeatResult br = detect_beats(env);
        REQUIRE(br.tempo_ok);
        CHECK(br.tempo_bpm >= c.lo);
        CHECK(br.tempo_bpm <= c.hi);
        REQUIRE(br.beats.size() >= 4);
        for (size_t i = 1; i < br.beats.size(); ++i) CHECK(br.beats[i] > br.beats[i - 1]);
        // each detected beat should sit within 2 frames of a true click
        const auto truth = click_frames(c.bpm, secs);
        for (int b : br.beats) {
            int nearest = 1 << 30;
            for (int tf : truth) nearest = std::min(nearest, std::abs(tf - b));
            CHECK(nearest <= 2);
        }
    }
}

TEST_CASE("beat tracking flags silence") {
    std::vector<double> env(600, 0.0);
    const BeatResult br = detect_beats(env);
    CHECK(br.beats.empty());
    CHECK_FALSE(br.tempo_ok);
    CHECK_THROWS_AS(detect_beats(std::vector<double>(30, 0.0)), InputError);
}

TEST_CASE("music feature track t layout and one-hots") {
    const PcmSignal s = click_train(22050, 120.0, 8.0);
    const MusicFeatureTrack tr = extract_music_features(s);
    CHECK(tr.features.dim(1) == 35);
    CHECK(tr.features.dim(0) == tr.frames);
    CHECK(tr.frames == 480);

    // beats column sums to beat count, peaks likewise
    double bsum = 0, psum = 0;
    for (int t = 0; t < tr.frames; ++t) {
        bsum += tr.features.at(t, 34);
        psum += tr.features.at(t, 33);
    }
    CHECK(bsum == static_cast<double>(tr.beats.size()));
    CHECK(psum == static_cast<double>(tr.peaks.size()));
    CHECK(tr.beats.size() >= 10);

    // column 0 is the envelope
    const auto env = onset_envelope(s);
    for (int t = 0; t < tr.frames; ++t)
        CHECK(tr.features.at(t, 0) == env[static_cast<size_t>(t)]);

    // silence: no peak or beat marks anywhere
    const MusicFeatureTrack quiet = extract_music_features(silence(22050, 5.0));
    CHECK_FALSE(quiet.tempo_ok);
    for (int t = 0; t < quiet.frames; ++t) {
        CHECK(quiet.features.at(t, 33) == 0.0);
        CHECK(quiet.features.at(t, 34) == 0.0);
    }
}

TEST_CASE("mft container round trip and validation") {
    const PcmSignal s = click_train(22050, 100.0, 6.0);
    const MusicFeatureTrack tr = extract_music_features(s);
    const auto p = tmp_path("track.mft");
    write_mft(p, tr);
    const MusicFeatureTrack back = read_mft(p);
    CHECK(back.frames == tr.frames);
    CHECK(back.beats == tr.beats);
    CHECK(back.peaks == tr.peaks);
    CHECK(back.tempo_ok == tr.tempo_ok);
    CHECK(back.tempo_bpm == doctest::Approx(tr.tempo_bpm));
    for (size_t i = 0; i < tr.features.data.size(); ++i)
        CHECK(back.features.data[i] == doctest::Approx(tr.features.data[i]).epsilon(1e-6));

    // tampering with the one-hot column must be caught on read
    MusicFeatureTrack bad = tr;
    bad.features.at(0, 34) = 0.5;
    CHECK_THROWS_AS(write_mft(p, bad), InputError);

    io::json h;
    h["magic"] = "TRJ1";
    h["version"] = 1;
    io::write_json_blob(p, h, {});
    CHECK_THROWS_AS(read_mft(p), InputError);
    fs::remove(p);
}

TEST_CASE("analysis is deterministic") {
    const PcmSignal s = click_train(22050, 132.0, 6.0);
    const MusicFeatureTrack a = extract_music_features(s);
    const MusicFeatureTrack b = extract_music_features(s);
    CHECK(a.features.data == b.features.data);
    CHECK(a.beats == b.beats);
    CHECK(a.tempo_bpm == b.tempo_bpm);
}
