#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"

#include "cortical/dsp.hpp"

using namespace cortical;
using namespace cortical::dsp;

namespace {

std::vector<double> sine(double hz, std::size_t n, double rate, double amp = 1.0) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate);
    return x;
}

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

TEST_CASE("stft frame and bin counts follow centre padding") {
    const std::vector<double> x(22050, 0.0);
    const auto s = stft(x);
    CHECK(s.frames == 44);
    CHECK(s.bins == 1025);
    for (const auto& v : s.data) CHECK(std::abs(v) == 0.0);

    StftConfig cfg{.fft_size = 256, .hop = 64, .window = {WindowKind::hann, 256}};
    for (std::size_t len : {129u, 200u, 1000u}) {
        const auto r = stft(oracle::random_vector(len, len), cfg);
        CHECK(r.frames == 1 + len / 64);
        CHECK(r.bins == 129);
    }
}

TEST_CASE("stft frame equals a direct DFT of the reflected, windowed frame") {
    StftConfig cfg{.fft_size = 64, .hop = 16, .window = {WindowKind::hann, 64}};
    const auto x = oracle::random_vector(300, 5);
    const auto s = stft(x, cfg);
    const auto w = oracle::hann_periodic(64);
    // Reflect-pad by 32 on both sides (edge sample not repeated).
    std::vector<double> padded;
    for (int i = 32; i >= 1; --i) padded.push_back(x[static_cast<std::size_t>(i)]);
    padded.insert(padded.end(), x.begin(), x.end());
    for (int i = 1; i <= 32; ++i) padded.push_back(x[x.size() - 1 - static_cast<std::size_t>(i)]);
    for (std::size_t f : {std::size_t{0}, std::size_t{1}, std::size_t{9}, s.frames - 1}) {
        std::vector<double> frame(64);
        for (std::size_t i = 0; i < 64; ++i) frame[i] = padded[f * 16 + i] * w[i];
        const auto ref = oracle::dft(frame);
        for (std::size_t k = 0; k < ref.size(); ++k) CHECK(std::abs(s.at(f, k) - ref[k]) < 1e-9);
    }
}

TEST_CASE("1 kHz sine peaks at bin 93 in every interior frame") {
    const auto x = sine(1000.0, 22050, 22050.0);
    const auto mag = stft(x).magnitude();
    for (std::size_t f = 2; f + 2 < mag.rows; ++f) CHECK(argmax(mag.row(f)) == 93);
    // Same answer from a direct DFT of one windowed frame.
    std::vector<double> frame(2048);
    const auto w = oracle::hann_periodic(2048);
    for (std::size_t i = 0; i < 2048; ++i) frame[i] = x[4096 + i] * w[i];
    const auto ref = oracle::dft(frame);
    std::vector<double> ref_mag(ref.size());
    for (std::size_t k = 0; k < ref.size(); ++k) ref_mag[k] = std::abs(ref[k]);
    CHECK(argmax(ref_mag) == 93);
}

TEST_CASE("istft inverts stft") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto x = oracle::random_vector(5000 + 37 * seed, 100 + seed);
        const auto y = istft(stft(x), {});
        REQUIRE(y.size() == x.size());
        double err = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(x[i] - y[i]));
        CHECK(err < 1e-6);
    }
    ComplexSpectrogram zero = stft(std::vector<double>(3000, 0.0));
    for (double v : istft(zero, {})) CHECK(v == 0.0);
}

TEST_CASE("single-frame istft reproduces a windowed constant") {
    // Hand-rolled overlap-add of one frame: y = w * frame / w^2 = frame where w > 0.
    StftConfig cfg{.fft_size = 32, .hop = 8, .window = {WindowKind::hann, 32}, .center = false};
    const std::vector<double> x(32, 0.75);
    const auto s = stft(x, cfg);
    REQUIRE(s.frames == 1);  // no centre padding: 1 + (32 - 32) / 8
    ComplexSpectrogram one = s;
    one.frames = 1;
    one.data.resize(one.bins);
    const auto y = istft(one, cfg.window, 32);
    const auto w = oracle::hann_periodic(32);
    for (std::size_t i = 1; i < 32; ++i) CHECK(y[i] == doctest::Approx(0.75).epsilon(1e-9));
    CHECK(w[0] == 0.0);
    CHECK(y[0] == 0.0);  // zero window weight, nothing to normalise
}

TEST_CASE("stft argument validation") {
    CHECK_THROWS_AS(stft(std::vector<double>{}), InvalidInput);
    StftConfig bad_hop;
    bad_hop.hop = 0;
    CHECK_THROWS_AS(stft(std::vector<double>(100, 1.0), bad_hop), InvalidInput);
    StftConfig bad_size{.fft_size = 1000, .hop = 100, .window = {WindowKind::hann, 1000}};
    CHECK_THROWS_AS(stft(std::vector<double>(100, 1.0), bad_size), InvalidInput);
    const auto s = stft(std::vector<double>(3000, 0.1));
    CHECK_THROWS_AS(istft(s, {WindowKind::hann, 1024}), InvalidInput);
}

TEST_CASE("stft energy grows with signal energy") {
    const auto x = oracle::random_vector(4000, 77);
    double prev = 0.0;
    for (double gain : {0.1, 0.5, 1.0, 2.0}) {
        std::vector<double> y(x);
        for (auto& v : y) v *= gain;
        double e = 0.0;
        for (double p : stft(y).power().data) e += p;
        CHECK(e > prev);
        prev = e;
    }
}

TEST_CASE("mel scale and filterbank") {
    CHECK(hz_to_mel(700.0) == doctest::Approx(781.17).epsilon(1e-5));
    CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)).epsilon(1e-12));
    CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5).epsilon(1e-12));

    const auto fb = mel_filterbank();
    CHECK(fb.weights.rows == 128);
    CHECK(fb.weights.cols == 1025);
    const double df = 22050.0 / 2048.0;
    for (std::size_t m = 0; m < fb.n_mels; ++m) {
        const auto row = fb.weights.row(m);
        double mx = 0.0;
        for (double v : row) {
            REQUIRE(v >= 0.0);
            mx = std::max(mx, v);
        }
        CHECK(mx > 0.0);
        // unimodal: non-decreasing up to the peak, non-increasing after
        const std::size_t p = argmax(row);
        for (std::size_t k = 1; k <= p; ++k) CHECK(row[k] >= row[k - 1]);
        for (std::size_t k = p + 1; k < row.size(); ++k) CHECK(row[k] <= row[k - 1]);
    }
    // Independent construction of row 40 (HTK mel, area normalised).
    const double mlo = 0.0, mhi = 2595.0 * std::log10(1.0 + 11025.0 / 700.0);
    auto edge = [&](std::size_t i) {
        const double mel = mlo + (mhi - mlo) * static_cast<double>(i) / 129.0;
        return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
    };
    const double lo = edge(40), c = edge(41), hi = edge(42);
    for (std::size_t k = 0; k < 1025; ++k) {
        const double f = static_cast<double>(k) * df;
        const double tri = std::max(0.0, std::min((f - lo) / (c - lo), (hi - f) / (hi - c)));
        CHECK(fb.weights(40, k) == doctest::Approx(tri * 2.0 / (hi - lo)).epsilon(1e-9));
    }
    // Every bin strictly inside (f_min, f_max) is covered by some filter.
    for (std::size_t k = 1; k < 1024; ++k) {
        double s = 0.0;
        for (std::size_t m = 0; m < 128; ++m) s += fb.weights(m, k);
        CHECK(s > 0.0);
    }
    CHECK_THROWS_AS(mel_filterbank(128, 2048, 22050.0, 0.0, 12000.0), InvalidInput);
}

TEST_CASE("apply_mel projects each frame with the filterbank") {
    const auto fb = mel_filterbank();
    MatrixD p(44, 1025);
    auto out = apply_mel(p, fb);
    CHECK(out.rows == 44);
    CHECK(out.cols == 128);
    for (double v : out.data) CHECK(v == 0.0);

    p(3, 200) = 1.0;
    out = apply_mel(p, fb);
    for (std::size_t m = 0; m < 128; ++m) CHECK(out(3, m) == doctest::Approx(fb.weights(m, 200)).epsilon(1e-12));

    const auto r = oracle::random_vector(44 * 1025, 9, 0.0, 2.0);
    MatrixD rp(44, 1025);
    rp.data = r;
    const auto got = apply_mel(rp, fb);
    const auto ref = oracle::matmul(false, true, 44, 128, 1025, rp.data, fb.weights.data);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(got.data[i] == doctest::Approx(ref[i]).epsilon(1e-10));

    CHECK_THROWS_AS(apply_mel(MatrixD(4, 1024), fb), InvalidInput);
    rp(0, 0) = -1.0;
    CHECK_THROWS_AS(apply_mel(rp, fb), InvalidInput);
}

TEST_CASE("power_to_db conventions") {
    CHECK(power_to_db(2.0, 2.0, -100.0) == doctest::Approx(0.0));
    CHECK(power_to_db(0.2, 2.0, -100.0) == doctest::Approx(-10.0));
    CHECK(power_to_db(0.0, 1.0, -100.0) == -100.0);
    CHECK(power_to_db(0.0, 1.0, -80.0) == -80.0);
    for (double db : {-99.0, -37.5, 0.0, 12.25}) {
        CHECK(std::abs(power_to_db(db_to_power(db, 3.0), 3.0, -100.0) - db) < 1e-9);
    }
    MatrixD m(2, 2);
    m.data = {1.0, 0.1, 0.01, 0.0};
    const auto d = power_to_db(m, 1.0, -60.0);
    CHECK(d.data[1] == doctest::Approx(-10.0));
    CHECK(d.data[3] == -60.0);
    CHECK_THROWS_AS(power_to_db(1.0, 0.0, -100.0), InvalidInput);
    CHECK_THROWS_AS(power_to_db(1.0, 1.0, 10.0), InvalidInput);
}

TEST_CASE("griffin-lim recovers a sine and never increases its residual") {
    const auto x = sine(440.0, 22050, 22050.0, 0.5);
    const auto mag = stft(x).magnitude();
    const auto res = griffin_lim(mag, 60, {}, 22050);
    REQUIRE(res.signal.size() == 22050);
    REQUIRE(res.residual.size() == 60);
    for (std::size_t i = 1; i < res.residual.size(); ++i) CHECK(res.residual[i] <= res.residual[i - 1] + 1e-9);

    std::vector<double> seg(res.signal.begin() + 4096, res.signal.begin() + 4096 + 2048);
    const auto w = oracle::hann_periodic(2048);
    for (std::size_t i = 0; i < seg.size(); ++i) seg[i] *= w[i];
    const auto spec = oracle::dft(seg);
    std::vector<double> sm(spec.size());
    for (std::size_t k = 0; k < sm.size(); ++k) sm[k] = std::abs(spec[k]);
    CHECK(argmax(sm) == static_cast<std::size_t>(std::lround(440.0 * 2048.0 / 22050.0)));

    const MatrixD zero(10, 1025);
    const auto z = griffin_lim(zero, 5);
    for (double v : z.signal) CHECK(v == 0.0);

    MatrixD rnd(12, 1025);
    rnd.data = oracle::random_vector(rnd.size(), 4, 0.0, 1.0);
    const auto r1 = griffin_lim(rnd, 1), r60 = griffin_lim(rnd, 60);
    CHECK(r60.residual.back() <= r1.residual.back());
    CHECK_THROWS_AS(griffin_lim(rnd, 0), InvalidInput);
}

TEST_CASE("periodogram") {
    CHECK(periodogram(std::vector<double>(125, 0.3)).size() == 63);
    for (double v : periodogram(std::vector<double>(125, 0.0))) CHECK(v == 0.0);
    for (std::size_t k : {3u, 10u, 40u}) {
        const auto x = sine(static_cast<double>(k), 125, 125.0);
        const auto p = periodogram(x);
        CHECK(argmax(p) == k);
        // Direct DFT oracle on the windowed sequence.
        const auto w = oracle::hann_periodic(125);
        std::vector<double> xw(125);
        double wss = 0.0;
        for (std::size_t i = 0; i < 125; ++i) {
            xw[i] = x[i] * w[i];
            wss += w[i] * w[i];
        }
        const auto ref = oracle::dft(xw);
        for (std::size_t b = 0; b < p.size(); ++b) CHECK(p[b] == doctest::Approx(std::norm(ref[b]) / wss).epsilon(1e-9));
    }
    CHECK_THROWS_AS(periodogram(std::vector<double>{}), InvalidInput);
}
