// audio.h — waveform IO, log-mel spectrograms, and the per-frame segmentation
// that aligns audio slices with video timesteps.
#pragma once

#include <string>
#include <vector>

namespace sonovid {

struct Waveform {
    int sample_rate = 0;
    std::vector<float> samples;  // mono, nominally in [-1, 1]

    double duration() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

struct MelSpectrogram {
    int n_mels = 0;
    int n_frames = 0;
    int hop = 0;
    int sample_rate = 0;
    std::vector<float> values;  // [n_mels, n_frames] row-major

    float& at(int mel, int frame) { return values[static_cast<std::size_t>(mel) * n_frames + frame]; }
    float at(int mel, int frame) const { return values[static_cast<std::size_t>(mel) * n_frames + frame]; }
};

// 16-bit PCM RIFF/WAVE. Stereo input is downmixed by channel averaging.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

// Filterbank energies before log compression; frame k covers samples
// [k*hop, k*hop + window). Rejects waveforms shorter than one window.
MelSpectrogram mel_filter_energies(const Waveform& w, int n_mels, int window, int hop);

// log(filterbank . |STFT|^2 + eps)
MelSpectrogram compute_mel(const Waveform& w, int n_mels, int window, int hop);

// Splits the time axis into T contiguous slices; the first n_frames % T
// slices get the extra column. Rejects T > n_frames or T < 1.
std::vector<MelSpectrogram> segment_for_video(const MelSpectrogram& m, int T);

// Column range [begin, end) of segment t under the same split rule.
std::pair<int, int> segment_bounds(int n_frames, int T, int t);

// Flat binary container (magic "MEL1").
void write_mel(const std::string& path, const MelSpectrogram& m);
MelSpectrogram read_mel(const std::string& path);

// Triangular mel filterbank on FFT bin center frequencies, peak height 1.
// Returned matrix is [n_mels, window/2 + 1] row-major.
std::vector<float> mel_filterbank(int n_mels, int window, int sample_rate);

constexpr float kMelLogEps = 1e-6f;

}  // namespace sonovid
