#include "sonovid/audio.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <utility>

#include "sonovid/binio.h"

namespace sonovid {

namespace {

constexpr double kPi = 3.14159265358979323846;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT.
void fft_pow2(std::vector<std::complex<double>>& a) {
    const int n = static_cast<int>(a.size());
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[static_cast<std::size_t>(i)], a[static_cast<std::size_t>(j)]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / len;
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (int k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[static_cast<std::size_t>(i + k)];
                const std::complex<double> v = a[static_cast<std::size_t>(i + k + len / 2)] * w;
                a[static_cast<std::size_t>(i + k)] = u + v;
                a[static_cast<std::size_t>(i + k + len / 2)] = u - v;
                w *= wl;
            }
        }
    }
}

void dft_naive(std::vector<std::complex<double>>& a) {
    const int n = static_cast<int>(a.size());
    std::vector<std::complex<double>> out(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        std::complex<double> s(0.0, 0.0);
        for (int t = 0; t < n; ++t) {
            const double ang = -2.0 * kPi * k * t / n;
            s += a[static_cast<std::size_t>(t)] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[static_cast<std::size_t>(k)] = s;
    }
    a = std::move(out);
}

}  // namespace

std::vector<float> mel_filterbank(int n_mels, int window, int sample_rate) {
    const int n_bins = window / 2 + 1;
    std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
    const double mel_lo = hz_to_mel(0.0);
    const double mel_hi = hz_to_mel(sample_rate / 2.0);
    for (int i = 0; i < n_mels + 2; ++i)
        edges[static_cast<std::size_t>(i)] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
    std::vector<float> fb(static_cast<std::size_t>(n_mels) * n_bins, 0.0f);
    for (int j = 0; j < n_mels; ++j) {
        const double lo = edges[static_cast<std::size_t>(j)];
        const double mid = edges[static_cast<std::size_t>(j) + 1];
        const double hi = edges[static_cast<std::size_t>(j) + 2];
        for (int k = 0; k < n_bins; ++k) {
            const double hz = static_cast<double>(k) * sample_rate / window;
            double w = 0.0;
            if (hz > lo && hz < hi) w = hz <= mid ? (hz - lo) / (mid - lo) : (hi - hz) / (hi - mid);
            fb[static_cast<std::size_t>(j) * n_bins + k] = static_cast<float>(w);
        }
    }
    return fb;
}

MelSpectrogram mel_filter_energies(const Waveform& w, int n_mels, int window, int hop) {
    if (hop <= 0 || window < hop) throw std::invalid_argument("mel: want window >= hop > 0");
    if (n_mels <= 0) throw std::invalid_argument("mel: n_mels must be positive");
    if (static_cast<int>(w.samples.size()) < window)
        throw std::invalid_argument("mel: waveform shorter than one analysis window");
    const int n_frames = 1 + (static_cast<int>(w.samples.size()) - window) / hop;
    const int n_bins = window / 2 + 1;

    std::vector<double> hann(static_cast<std::size_t>(window));
    for (int i = 0; i < window; ++i) hann[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / window);

    const std::vector<float> fb = mel_filterbank(n_mels, window, w.sample_rate);

    MelSpectrogram m;
    m.n_mels = n_mels;
    m.n_frames = n_frames;
    m.hop = hop;
    m.sample_rate = w.sample_rate;
    m.values.assign(static_cast<std::size_t>(n_mels) * n_frames, 0.0f);

    std::vector<std::complex<double>> buf(static_cast<std::size_t>(window));
    std::vector<double> power(static_cast<std::size_t>(n_bins));
    for (int f = 0; f < n_frames; ++f) {
        for (int i = 0; i < window; ++i)
            buf[static_cast<std::size_t>(i)] = {static_cast<double>(w.samples[static_cast<std::size_t>(f) * hop + i]) * hann[static_cast<std::size_t>(i)], 0.0};
        if (is_pow2(window))
            fft_pow2(buf);
        else
            dft_naive(buf);
        for (int k = 0; k < n_bins; ++k) power[static_cast<std::size_t>(k)] = std::norm(buf[static_cast<std::size_t>(k)]);
        for (int j = 0; j < n_mels; ++j) {
            double s = 0.0;
            const float* row = &fb[static_cast<std::size_t>(j) * n_bins];
            for (int k = 0; k < n_bins; ++k) s += row[k] * power[static_cast<std::size_t>(k)];
            m.at(j, f) = static_cast<float>(s);
        }
    }
    return m;
}

MelSpectrogram compute_mel(const Waveform& w, int n_mels, int window, int hop) {
    MelSpectrogram m = mel_filter_energies(w, n_mels, window, hop);
    for (auto& v : m.values) v = std::log(v + kMelLogEps);
    return m;
}

std::pair<int, int> segment_bounds(int n_frames, int T, int t) {
    if (T < 1 || T > n_frames) throw std::invalid_argument("segment_bounds: want 1 <= T <= n_frames");
    if (t < 0 || t >= T) throw std::invalid_argument("segment_bounds: t out of range");
    const int base = n_frames / T;
    const int rem = n_frames % T;
    const int begin = t * base + std::min(t, rem);
    const int width = base + (t < rem ? 1 : 0);
    return {begin, begin + width};
}

std::vector<MelSpectrogram> segment_for_video(const MelSpectrogram& m, int T) {
    if (T < 1) throw std::invalid_argument("segment_for_video: T must be >= 1");
    if (T > m.n_frames)
        throw std::invalid_argument("segment_for_video: more video frames than spectrogram columns");
    std::vector<MelSpectrogram> out;
    out.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        const auto [b, e] = segment_bounds(m.n_frames, T, t);
        MelSpectrogram s;
        s.n_mels = m.n_mels;
        s.n_frames = e - b;
        s.hop = m.hop;
        s.sample_rate = m.sample_rate;
        s.values.resize(static_cast<std::size_t>(m.n_mels) * (e - b));
        for (int j = 0; j < m.n_mels; ++j)
            for (int f = b; f < e; ++f) s.at(j, f - b) = m.at(j, f);
        out.push_back(std::move(s));
    }
    return out;
}

void write_mel(const std::string& path, const MelSpectrogram& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    write_tag(os, "MEL1");
    write_u32(os, static_cast<std::uint32_t>(m.n_mels));
    write_u32(os, static_cast<std::uint32_t>(m.n_frames));
    write_u32(os, static_cast<std::uint32_t>(m.hop));
    write_u32(os, static_cast<std::uint32_t>(m.sample_rate));
    for (float v : m.values) write_f32(os, v);
    if (!os) throw std::runtime_error("write failed: " + path);
}

MelSpectrogram read_mel(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    expect_tag(is, "MEL1", path);
    MelSpectrogram m;
    m.n_mels = static_cast<int>(read_u32(is));
    m.n_frames = static_cast<int>(read_u32(is));
    m.hop = static_cast<int>(read_u32(is));
    m.sample_rate = static_cast<int>(read_u32(is));
    if (m.n_mels <= 0 || m.n_frames <= 0) throw std::runtime_error("corrupt mel header: " + path);
    m.values.resize(static_cast<std::size_t>(m.n_mels) * m.n_frames);
    for (auto& v : m.values) v = read_f32(is);
    return m;
}

// ---------------------------------------------------------------------------
// RIFF / WAVE
// ---------------------------------------------------------------------------

Waveform read_wav(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    expect_tag(is, "RIFF", path);
    read_u32(is);  // chunk size
    expect_tag(is, "WAVE", path);

    int channels = 0, bits = 0, sample_rate = 0;
    std::vector<std::int16_t> pcm;
    bool have_fmt = false, have_data = false;
    while (is && !(have_fmt && have_data)) {
        char id[4];
        is.read(id, 4);
        if (!is) break;
        const std::uint32_t sz = read_u32(is);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            const std::uint32_t fmt_tag = read_u32(is);
            const std::uint16_t audio_format = static_cast<std::uint16_t>(fmt_tag & 0xffff);
            channels = static_cast<int>(fmt_tag >> 16);
            sample_rate = static_cast<int>(read_u32(is));
            read_u32(is);  // byte rate
            const std::uint32_t ba_bits = read_u32(is);
            bits = static_cast<int>(ba_bits >> 16);
            if (sz > 16) is.seekg(sz - 16, std::ios::cur);
            if (audio_format != 1) throw std::runtime_error("unsupported WAV encoding (want PCM): " + path);
            if (bits != 16) throw std::runtime_error("unsupported WAV bit depth (want 16): " + path);
            if (channels < 1 || channels > 2) throw std::runtime_error("unsupported channel count: " + path);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            pcm.resize(sz / 2);
            is.read(reinterpret_cast<char*>(pcm.data()), static_cast<std::streamsize>(sz / 2 * 2));
            if (!is) throw std::runtime_error("truncated WAV data: " + path);
            have_data = true;
        } else {
            is.seekg(sz + (sz & 1), std::ios::cur);
        }
    }
    if (!have_fmt || !have_data) throw std::runtime_error("missing fmt/data chunk: " + path);

    Waveform w;
    w.sample_rate = sample_rate;
    const std::size_t n = pcm.size() / static_cast<std::size_t>(channels);
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int c = 0; c < channels; ++c) s += pcm[i * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)];
        w.samples[i] = static_cast<float>(s / channels / 32768.0);
    }
    return w;
}

void write_wav(const std::string& path, const Waveform& w) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
    const std::uint32_t data_bytes = n * 2;
    write_tag(os, "RIFF");
    write_u32(os, 36 + data_bytes);
    write_tag(os, "WAVE");
    write_tag(os, "fmt ");
    write_u32(os, 16);
    write_u32(os, (1u << 16) | 1u);  // mono, PCM
    write_u32(os, static_cast<std::uint32_t>(w.sample_rate));
    write_u32(os, static_cast<std::uint32_t>(w.sample_rate) * 2);
    write_u32(os, (16u << 16) | 2u);  // 16 bits, block align 2
    write_tag(os, "data");
    write_u32(os, data_bytes);
    for (float v : w.samples) {
        const double c = std::clamp(static_cast<double>(v), -1.0, 1.0);
        const std::int16_t s = static_cast<std::int16_t>(std::lround(c * 32767.0));
        os.put(static_cast<char>(s & 0xff));
        os.put(static_cast<char>((s >> 8) & 0xff));
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace sonovid
