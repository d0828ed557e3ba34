#pragma once

#include <filesystem>
#include <vector>

#include "rhythmotion/tensor.hpp"

namespace rhythmotion::audio {

// Mono PCM in [-1, 1].
struct PcmSignal {
    std::vector<double> samples;
    int sample_rate = 0;

    double duration() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

// 8/16/24-bit integer or 32-bit float PCM WAV, 1-2 channels (stereo averaged).
PcmSignal decode_wav(const std::filesystem::path& path);

// 16-bit PCM mono writer (fixture/synthesis output).
void write_wav(const std::filesystem::path& path, const PcmSignal& sig);

// Analysis frame count at 60 FPS: floor(duration * 60).
int frame_count(size_t n_samples, int sample_rate);

// T x 513 magnitudes of a 1024-sample Hann STFT. Frame t is centered on
// sample round(t * sr / 60) so the frame clock is exactly 60 FPS at any
// sample rate; edges are zero-padded.
nn::Tensor stft_magnitudes(const PcmSignal& sig);

// Half-wave-rectified spectral flux of the log-magnitude STFT, max-normalized
// to [0,1] when nonzero. Length T, element 0 is always 0.
std::vector<double> onset_envelope(const PcmSignal& sig);

// T x 20 mel cepstrum (40 HTK mel bands, log power, orthonormal DCT-II,
// coefficients 0-19). Normalized variant is z-scored per coefficient over the
// track; constant coefficients map to zero.
nn::Tensor mfcc(const PcmSignal& sig, bool normalize = true);

// T x 12 pitch-class energies folded from STFT bins (55-4186 Hz, A4 = 440,
// class 0 = C), each frame L2-normalized when nonzero.
nn::Tensor chroma(const PcmSignal& sig);

// Strict local maxima above mean + k*std, greedy tallest-first with a minimum
// gap. Indices strictly increasing.
std::vector<int> detect_peaks(const std::vector<double>& envelope, double k = 1.0,
                              int min_gap = 6);

struct BeatResult {
    std::vector<int> beats;   // frame indices, strictly increasing
    double tempo_bpm = 0.0;
    bool tempo_ok = false;    // false for silent/featureless envelopes
};

// Tempo via autocorrelation over 60-180 BPM (fundamental-period preference
// among near-tied octave candidates, parabolic lag interpolation), beats via
// dynamic-programming alignment of the envelope to the tempo grid, tempo
// refined from the tracked beat span when enough beats exist.
BeatResult detect_beats(const std::vector<double>& envelope, int frame_rate = 60);

// Columns: [0] envelope | [1,21) mfcc | [21,33) chroma | [33] peak one-hot |
// [34] beat one-hot.
struct MusicFeatureTrack {
    int frames = 0;
    nn::Tensor features;      // frames x 35
    std::vector<int> beats;
    std::vector<int> peaks;
    double tempo_bpm = 0.0;
    bool tempo_ok = false;
};

constexpr int kFeatureDim = 35;

MusicFeatureTrack extract_music_features(const PcmSignal& sig);

// .mft container (magic "MFT1"): JSON header with frame count, column schema,
// tempo and beat/peak lists, float32 row-major payload.
void write_mft(const std::filesystem::path& path, const MusicFeatureTrack& t);
MusicFeatureTrack read_mft(const std::filesystem::path& path);

}  // namespace rhythmotion::audio
