#include "rhythmotion/audio.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <numeric>

#include "rhythmotion/common.hpp"
#include "rhythmotion/io.hpp"

namespace rhythmotion::audio {

namespace {

constexpr int kWin = 1024;
constexpr int kBins = kWin / 2 + 1;
constexpr double kLogEps = 1e-6;
constexpr int kMelBands = 40;
constexpr int kMfccCoeffs = 20;

// iterative radix-2 FFT, size must be a power of two
void fft_inplace(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

uint32_t read_u32le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16le(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void check_signal(const PcmSignal& sig) {
    require_input(sig.sample_rate >= 8000, "sample rate below 8000 Hz");
    require_input(!sig.samples.empty(), "empty signal");
    require(all_finite(sig.samples), "non-finite audio samples");
}

void check_window_fits(const PcmSignal& sig) {
    check_signal(sig);
    require_input(sig.samples.size() >= kWin, "signal shorter than one analysis window");
}

// log(eps + |STFT|) rows
nn::Tensor log_magnitudes(const PcmSignal& sig) {
    nn::Tensor mags = stft_magnitudes(sig);
    for (auto& v : mags.data) v = std::log(kLogEps + v);
    return mags;
}

double htk_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double htk_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

PcmSignal decode_wav(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    require_input(bytes.size() >= 44, "WAV too short: " + path.string());
    require_input(std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
                      std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
                  "not a RIFF/WAVE file: " + path.string());

    int format = -1, channels = 0, bits = 0, sr = 0;
    size_t data_off = 0, data_len = 0;
    bool have_fmt = false, have_data = false;

    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        const uint32_t len = read_u32le(bytes.data() + pos + 4);
        const size_t body = pos + 8;
        require_input(body + len <= bytes.size(), "truncated WAV chunk: " + path.string());
        if (std::memcmp(id, "fmt ", 4) == 0) {
            require_input(len >= 16, "short fmt chunk: " + path.string());
            format = read_u16le(bytes.data() + body);
            channels = read_u16le(bytes.data() + body + 2);
            sr = static_cast<int>(read_u32le(bytes.data() + body + 4));
            bits = read_u16le(bytes.data() + body + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data_off = body;
            data_len = len;
            have_data = true;
        }
        pos = body + len + (len & 1);  // chunks are word aligned
    }
    require_input(have_fmt && have_data, "missing fmt or data chunk: " + path.string());
    require_input(format == 1 || format == 3, "unsupported WAV codec: " + path.string());
    require_input(channels == 1 || channels == 2, "only mono/stereo supported: " + path.string());
    require_input(data_len > 0, "zero-length data chunk: " + path.string());

    const int bytes_per = bits / 8;
    require_input((format == 1 && (bits == 8 || bits == 16 || bits == 24)) ||
                      (format == 3 && bits == 32),
                  "unsupported sample width: " + path.string());
    const size_t stride = static_cast<size_t>(bytes_per) * channels;
    require_input(data_len % stride == 0, "data chunk not frame aligned: " + path.string());
    const size_t n = data_len / stride;
    require_input(n > 0, "zero-length data chunk: " + path.string());

    PcmSignal sig;
    sig.sample_rate = sr;
    sig.samples.resize(n);
    const unsigned char* d = bytes.data() + data_off;
    for (size_t i = 0; i < n; ++i) {
        double acc = 0;
        for (int c = 0; c < channels; ++c) {
            const unsigned char* p = d + i * stride + static_cast<size_t>(c) * bytes_per;
            double v = 0;
            if (format == 3) {
                float f;
                std::memcpy(&f, p, 4);
                v = f;
            } else if (bits == 8) {
                v = (static_cast<int>(p[0]) - 128) / 128.0;
            } else if (bits == 16) {
                const int16_t s = static_cast<int16_t>(p[0] | (p[1] << 8));
                v = s / 32768.0;
            } else {
                int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
                if (s & 0x800000) s |= ~0xffffff;  // sign extend
                v = s / 8388608.0;
            }
            acc += v;
        }
        sig.samples[i] = clamp(acc / channels, -1.0, 1.0);
    }
    check_signal(sig);
    return sig;
}

void write_wav(const std::filesystem::path& path, const PcmSignal& sig) {
    check_signal(sig);
    const size_t n = sig.samples.size();
    std::vector<unsigned char> out;
    out.reserve(44 + n * 2);
    auto u32 = [&](uint32_t x) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(x >> (8 * i)));
    };
    auto u16 = [&](uint16_t x) {
        out.push_back(static_cast<unsigned char>(x));
        out.push_back(static_cast<unsigned char>(x >> 8));
    };
    auto tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };

    tag("RIFF");
    u32(static_cast<uint32_t>(36 + n * 2));
    tag("WAVE");
    tag("fmt ");
    u32(16);
    u16(1);  // PCM
    u16(1);  // mono
    u32(static_cast<uint32_t>(sig.sample_rate));
    u32(static_cast<uint32_t>(sig.sample_rate) * 2);
    u16(2);
    u16(16);
    tag("data");
    u32(static_cast<uint32_t>(n * 2));
    for (double v : sig.samples) {
        const double c = clamp(v, -1.0, 1.0);
        const int s = static_cast<int>(std::lround(c * 32767.0));
        u16(static_cast<uint16_t>(static_cast<int16_t>(s)));
    }
    io::write_file(path, out);
}

int frame_count(size_t n_samples, int sample_rate) {
    return static_cast<int>((static_cast<uint64_t>(n_samples) * 60ull) /
                            static_cast<uint64_t>(sample_rate));
}

nn::Tensor stft_magnitudes(const PcmSignal& sig) {
    check_window_fits(sig);
    const int T = frame_count(sig.samples.size(), sig.sample_rate);
    require_input(T > 0, "signal too short for one frame");

    std::vector<double> hann(kWin);
    for (int i = 0; i < kWin; ++i)
        hann[static_cast<size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / kWin));

    const auto& x = sig.samples;
    const long long nsamp = static_cast<long long>(x.size());
    nn::Tensor mags({T, kBins});
    std::vector<std::complex<double>> buf(kWin);
    for (int t = 0; t < T; ++t) {
        const long long center = llround(static_cast<double>(t) * sig.sample_rate / 60.0);
        const long long start = center - kWin / 2;
        for (int i = 0; i < kWin; ++i) {
            const long long s = start + i;
            const double v = (s >= 0 && s < nsamp) ? x[static_cast<size_t>(s)] : 0.0;
            buf[static_cast<size_t>(i)] = v * hann[static_cast<size_t>(i)];
        }
        fft_inplace(buf);
        for (int k = 0; k < kBins; ++k) mags.at(t, k) = std::abs(buf[static_cast<size_t>(k)]);
    }
    return mags;
}

std::vector<double> onset_envelope(const PcmSignal& sig) {
    const nn::Tensor lm = log_magnitudes(sig);
    const int T = lm.dim(0);
    std::vector<double> env(static_cast<size_t>(T), 0.0);
    for (int t = 1; t < T; ++t) {
        double flux = 0;
        for (int k = 0; k < kBins; ++k) {
            const double d = lm.at(t, k) - lm.at(t - 1, k);
            if (d > 0) flux += d;
        }
        env[static_cast<size_t>(t)] = flux;
    }
    const double mx = *std::max_element(env.begin(), env.end());
    if (mx > 0)
        for (auto& v : env) v /= mx;
    return env;
}

nn::Tensor mfcc(const PcmSignal& sig, bool normalize) {
    const nn::Tensor mags = stft_magnitudes(sig);
    const int T = mags.dim(0);
    const double nyquist = sig.sample_rate / 2.0;

    // 40 triangular filters, equally spaced on the HTK mel scale
    std::vector<double> edges(kMelBands + 2);
    const double mel_hi = htk_mel(nyquist);
    for (int i = 0; i < kMelBands + 2; ++i)
        edges[static_cast<size_t>(i)] = htk_hz(mel_hi * i / (kMelBands + 1));

    std::vector<std::vector<double>> filters(kMelBands, std::vector<double>(kBins, 0.0));
    for (int b = 0; b < kMelBands; ++b) {
        const double lo = edges[static_cast<size_t>(b)];
        const double mid = edges[static_cast<size_t>(b + 1)];
        const double hi = edges[static_cast<size_t>(b + 2)];
        for (int k = 0; k < kBins; ++k) {
            const double f = static_cast<double>(k) * sig.sample_rate / kWin;
            if (f > lo && f < mid)
                filters[static_cast<size_t>(b)][static_cast<size_t>(k)] = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi)
                filters[static_cast<size_t>(b)][static_cast<size_t>(k)] = (hi - f) / (hi - mid);
        }
    }

    nn::Tensor out({T, kMfccCoeffs});
    std::vector<double> logmel(kMelBands);
    for (int t = 0; t < T; ++t) {
        for (int b = 0; b < kMelBands; ++b) {
            double e = 0;
            const auto& fl = filters[static_cast<size_t>(b)];
            for (int k = 0; k < kBins; ++k) {
                const double m = mags.at(t, k);
                e += fl[static_cast<size_t>(k)] * m * m;
            }
            logmel[static_cast<size_t>(b)] = std::log(kLogEps + e);
        }
        for (int j = 0; j < kMfccCoeffs; ++j) {
            double c = 0;
            for (int i = 0; i < kMelBands; ++i)
                c += logmel[static_cast<size_t>(i)] *
                     std::cos(M_PI * j * (2.0 * i + 1.0) / (2.0 * kMelBands));
            c *= std::sqrt(2.0 / kMelBands) * (j == 0 ? 1.0 / std::sqrt(2.0) : 1.0);
            out.at(t, j) = c;
        }
    }
    if (!normalize) return out;

    for (int j = 0; j < kMfccCoeffs; ++j) {
        double mu = 0;
        for (int t = 0; t < T; ++t) mu += out.at(t, j);
        mu /= T;
        double var = 0;
        for (int t = 0; t < T; ++t) var += (out.at(t, j) - mu) * (out.at(t, j) - mu);
        var /= T;
        const double sd = std::sqrt(var);
        for (int t = 0; t < T; ++t)
            out.at(t, j) = sd > 1e-12 ? (out.at(t, j) - mu) / sd : 0.0;
    }
    return out;
}

nn::Tensor chroma(const PcmSignal& sig) {
    const nn::Tensor mags = stft_magnitudes(sig);
    const int T = mags.dim(0);

    std::vector<int> bin_class(kBins, -1);
    for (int k = 1; k < kBins; ++k) {
        const double f = static_cast<double>(k) * sig.sample_rate / kWin;
        if (f < 55.0 || f > 4186.0) continue;
        const long pitch = std::lround(69.0 + 12.0 * std::log2(f / 440.0));
        bin_class[static_cast<size_t>(k)] = static_cast<int>(((pitch % 12) + 12) % 12);
    }

    nn::Tensor out({T, 12});
    for (int t = 0; t < T; ++t) {
        for (int k = 0; k < kBins; ++k) {
            const int pc = bin_class[static_cast<size_t>(k)];
            if (pc < 0) continue;
            const double m = mags.at(t, k);
            out.at(t, pc) += m * m;
        }
        double norm = 0;
        for (int c = 0; c < 12; ++c) norm += out.at(t, c) * out.at(t, c);
        norm = std::sqrt(norm);
        if (norm > 0)
            for (int c = 0; c < 12; ++c) out.at(t, c) /= norm;
    }
    return out;
}

std::vector<int> detect_peaks(const std::vector<double>& envelope, double k, int min_gap) {
    require(all_finite(envelope), "non-finite envelope");
    const int n = static_cast<int>(envelope.size());
    if (n < 3) return {};
    double mu = 0;
    for (double v : envelope) mu += v;
    mu /= n;
    double var = 0;
    for (double v : envelope) var += (v - mu) * (v - mu);
    const double thresh = mu + k * std::sqrt(var / n);

    std::vector<int> cand;
    for (int i = 1; i + 1 < n; ++i) {
        const double v = envelope[static_cast<size_t>(i)];
        if (v > envelope[static_cast<size_t>(i - 1)] && v > envelope[static_cast<size_t>(i + 1)] &&
            v > thresh)
            cand.push_back(i);
    }
    std::sort(cand.begin(), cand.end(), [&](int a, int b) {
        const double va = envelope[static_cast<size_t>(a)], vb = envelope[static_cast<size_t>(b)];
        return va != vb ? va > vb : a < b;
    });
    std::vector<int> taken;
    for (int i : cand) {
        bool ok = true;
        for (int j : taken)
            if (std::abs(i - j) < min_gap) {
                ok = false;
                break;
            }
        if (ok) taken.push_back(i);
    }
    std::sort(taken.begin(), taken.end());
    return taken;
}

BeatResult detect_beats(const std::vector<double>& envelope, int frame_rate) {
    require(all_finite(envelope), "non-finite envelope");
    require_input(frame_rate == kFrameRate, "beat tracking expects a 60 FPS envelope");
    const int n = static_cast<int>(envelope.size());
    require_input(n >= 4 * frame_rate, "envelope shorter than 4 seconds");

    BeatResult res;
    const double mx = *std::max_element(envelope.begin(), envelope.end());
    if (mx <= 0) return res;  // silent: no beats, tempo flagged

    double mu = 0;
    for (double v : envelope) mu += v;
    mu /= n;

    // per-lag-normalized autocorrelation of the mean-subtracted envelope
    const int lag_lo = 20, lag_hi = 60;  // 180 down to 60 BPM at 60 FPS
    const int lag_max = lag_hi + 2;
    std::vector<double> score(static_cast<size_t>(lag_max + 1), 0.0);
    for (int L = 0; L <= lag_max; ++L) {
        double acc = 0;
        for (int t = 0; t + L < n; ++t)
            acc += (envelope[static_cast<size_t>(t)] - mu) *
                   (envelope[static_cast<size_t>(t + L)] - mu);
        score[static_cast<size_t>(L)] = acc / (n - L);
    }
    if (score[0] <= 0) return res;  // constant envelope
    for (int L = lag_max; L >= 0; --L) score[static_cast<size_t>(L)] /= score[0];

    double best = -1e300;
    for (int L = lag_lo; L <= lag_hi; ++L) best = std::max(best, score[static_cast<size_t>(L)]);

    // fundamental-period preference: the smallest near-tied autocorrelation
    // local maximum is the beat period; larger octave multiples tie for
    // isochronous onsets and would otherwise halve the tempo
    int lag = -1;
    for (int L = lag_lo; L <= lag_hi; ++L) {
        const double s = score[static_cast<size_t>(L)];
        if (s >= score[static_cast<size_t>(L - 1)] && s >= score[static_cast<size_t>(L + 1)] &&
            s >= 0.85 * best) {
            lag = L;
            break;
        }
    }
    if (lag < 0) {
        for (int L = lag_lo; L <= lag_hi; ++L)
            if (score[static_cast<size_t>(L)] == best) {
                lag = L;
                break;
            }
    }

    // parabolic interpolation around the integer lag
    const double s0 = score[static_cast<size_t>(lag - 1)];
    const double s1 = score[static_cast<size_t>(lag)];
    const double s2 = score[static_cast<size_t>(lag + 1)];
    double shift = 0;
    const double denom = s0 - 2 * s1 + s2;
    if (std::abs(denom) > 1e-12) shift = clamp(0.5 * (s0 - s2) / denom, -0.5, 0.5);
    double period = static_cast<double>(lag) + shift;
    period = clamp(period, static_cast<double>(lag_lo), static_cast<double>(lag_hi));
    double bpm = 3600.0 / period;

    // dynamic-programming beat tracking on the tempo grid
    const double alpha = 10.0;
    const int dmin = std::max(1, static_cast<int>(std::lround(period / 2)));
    const int dmax = static_cast<int>(std::lround(period * 2));
    std::vector<double> cum(static_cast<size_t>(n));
    std::vector<int> prev(static_cast<size_t>(n), -1);
    for (int t = 0; t < n; ++t) {
        double bestprev = 0;  // starting a fresh chain is free
        int arg = -1;
        for (int d = dmin; d <= dmax && d <= t; ++d) {
            const double pen = alpha * std::pow(std::log(d / period), 2.0);
            const double v = cum[static_cast<size_t>(t - d)] - pen;
            if (v > bestprev) {
                bestprev = v;
                arg = t - d;
            }
        }
        cum[static_cast<size_t>(t)] = envelope[static_cast<size_t>(t)] + bestprev;
        prev[static_cast<size_t>(t)] = arg;
    }
    int end = n - 1;
    const int tail = std::max(1, static_cast<int>(std::lround(period)));
    for (int t = std::max(0, n - tail); t < n; ++t)
        if (cum[static_cast<size_t>(t)] > cum[static_cast<size_t>(end)]) end = t;
    std::vector<int> beats;
    for (int t = end; t >= 0; t = prev[static_cast<size_t>(t)]) {
        beats.push_back(t);
        if (prev[static_cast<size_t>(t)] < 0) break;
    }
    std::reverse(beats.begin(), beats.end());

    // refine tempo from the tracked span when it broadly agrees
    if (beats.size() >= 8) {
        const double span = static_cast<double>(beats.back() - beats.front());
        const double refined = 3600.0 * (static_cast<double>(beats.size()) - 1.0) / span;
        if (std::abs(refined - bpm) <= 0.15 * bpm) bpm = refined;
    }

    res.beats = std::move(beats);
    res.tempo_bpm = bpm;
    res.tempo_ok = true;
    return res;
}

MusicFeatureTrack extract_music_features(const PcmSignal& sig) {
    check_window_fits(sig);
    require_input(sig.duration() >= 4.0, "track shorter than 4 seconds");

    MusicFeatureTrack tr;
    const std::vector<double> env = onset_envelope(sig);
    const nn::Tensor mf = mfcc(sig);
    const nn::Tensor ch = chroma(sig);
    const int T = static_cast<int>(env.size());
    require(mf.dim(0) == T && ch.dim(0) == T, "feature frame counts disagree");

    tr.frames = T;
    tr.peaks = detect_peaks(env);
    BeatResult br = detect_beats(env);
    tr.beats = std::move(br.beats);
    tr.tempo_bpm = br.tempo_bpm;
    tr.tempo_ok = br.tempo_ok;

    tr.features = nn::Tensor({T, kFeatureDim});
    for (int t = 0; t < T; ++t) {
        tr.features.at(t, 0) = env[static_cast<size_t>(t)];
        for (int j = 0; j < 20; ++j) tr.features.at(t, 1 + j) = mf.at(t, j);
        for (int c = 0; c < 12; ++c) tr.features.at(t, 21 + c) = ch.at(t, c);
    }
    for (int p : tr.peaks) tr.features.at(p, 33) = 1.0;
    for (int b : tr.beats) tr.features.at(b, 34) = 1.0;
    check_finite(tr.features, "music features");
    return tr;
}

namespace {

void validate_track(const MusicFeatureTrack& tr) {
    require_input(tr.frames > 0, "feature track has no frames");
    require_input(tr.features.ndim() == 2 && tr.features.dim(0) == tr.frames &&
                      tr.features.dim(1) == kFeatureDim,
                  "feature matrix must be frames x 35");
    require_input(all_finite(tr.features.data), "non-finite feature values");
    auto check_marks = [&](const std::vector<int>& idx, int col, const char* what) {
        int last = -1;
        for (int i : idx) {
            require_input(i > last && i < tr.frames,
                          std::string(what) + " indices must be strictly increasing and in range");
            last = i;
        }
        int hot = 0;
        for (int t = 0; t < tr.frames; ++t) {
            const double v = tr.features.at(t, col);
            require_input(v == 0.0 || v == 1.0, std::string(what) + " column must be one-hot");
            hot += v == 1.0;
        }
        require_input(hot == static_cast<int>(idx.size()),
                      std::string(what) + " column disagrees with index list");
    };
    check_marks(tr.peaks, 33, "peak");
    check_marks(tr.beats, 34, "beat");
    for (int t = 0; t < tr.frames; ++t)
        require_input(tr.features.at(t, 0) >= 0.0, "envelope column must be nonnegative");
    if (tr.tempo_ok) require_input(tr.tempo_bpm > 0.0, "tempo must be positive when flagged valid");
}

}  // namespace

void write_mft(const std::filesystem::path& path, const MusicFeatureTrack& tr) {
    validate_track(tr);
    io::json h;
    h["magic"] = "MFT1";
    h["version"] = 1;
    h["frames"] = tr.frames;
    h["frame_rate"] = kFrameRate;
    h["columns"] = {{"envelope", {0, 1}},
                    {"mfcc", {1, 21}},
                    {"chroma", {21, 33}},
                    {"peaks", {33, 34}},
                    {"beats", {34, 35}}};
    h["tempo_bpm"] = tr.tempo_bpm;
    h["tempo_ok"] = tr.tempo_ok;
    h["beats"] = tr.beats;
    h["peaks"] = tr.peaks;
    io::write_json_blob(path, h, io::to_f32_bytes(tr.features.data));
}

MusicFeatureTrack read_mft(const std::filesystem::path& path) {
    const auto blob = io::read_json_blob(path, "MFT1", 1);
    MusicFeatureTrack tr;
    try {
        tr.frames = blob.header.at("frames").get<int>();
        require_input(blob.header.at("frame_rate").get<int>() == kFrameRate,
                      "unexpected frame rate in " + path.string());
        const auto& cols = blob.header.at("columns");
        require_input(cols.at("envelope") == io::json({0, 1}) &&
                          cols.at("mfcc") == io::json({1, 21}) &&
                          cols.at("chroma") == io::json({21, 33}) &&
                          cols.at("peaks") == io::json({33, 34}) &&
                          cols.at("beats") == io::json({34, 35}),
                      "unexpected column schema in " + path.string());
        tr.tempo_bpm = blob.header.at("tempo_bpm").get<double>();
        tr.tempo_ok = blob.header.at("tempo_ok").get<bool>();
        tr.beats = blob.header.at("beats").get<std::vector<int>>();
        tr.peaks = blob.header.at("peaks").get<std::vector<int>>();
    } catch (const io::json::exception& e) {
        throw InputError("malformed feature header in " + path.string() + ": " + e.what());
    }
    require_input(tr.frames > 0, "feature track has no frames: " + path.string());
    const auto vals = io::from_f32_bytes(blob.payload);
    require_input(vals.size() == static_cast<size_t>(tr.frames) * kFeatureDim,
                  "feature payload size mismatch: " + path.string());
    tr.features = nn::Tensor::from({tr.frames, kFeatureDim}, vals);
    validate_track(tr);
    return tr;
}

}  // namespace rhythmotion::audio
