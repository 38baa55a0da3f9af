#include <cmath>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"

#include "cortical/eeg_features.hpp"

using namespace cortical;
using namespace cortical::eeg;

namespace {

EegEpoch random_epoch(std::uint64_t seed, double scale = 20.0) {
    EegEpoch e;
    e.data = MatrixD(kChannels, 125);
    e.data.data = oracle::random_vector(e.data.size(), seed, -scale, scale);
    return e;
}

void check_unit_range(const MatrixD& m) {
    for (double v : m.data) {
        REQUIRE(std::isfinite(v));
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
}

}  // namespace

TEST_CASE("raw image normalises per epoch") {
    auto e = random_epoch(1);
    const auto img = raw_image(e);
    CHECK(img.kind == InputKind::raw);
    CHECK(img.data.rows == 125);
    CHECK(img.data.cols == 125);
    check_unit_range(img.data);

    EegEpoch c;
    c.data = MatrixD(125, 125, 3.0);
    for (double v : raw_image(c).data.data) CHECK(v == 0.5);

    EegEpoch m;
    m.data = MatrixD(2, 3);
    m.data.data = {-10.0, 30.0, 10.0, 0.0, 0.0, 0.0};
    CHECK(raw_image(m).data(0, 2) == doctest::Approx(0.5));

    e.data(4, 4) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(raw_image(e), InvalidInput);
    e.data(4, 4) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(psd_image(e), InvalidInput);
}

TEST_CASE("psd image shape, range and sine localisation") {
    const auto img = psd_image(random_epoch(2));
    CHECK(img.kind == InputKind::psd);
    CHECK(img.data.rows == 63);
    CHECK(img.data.cols == 125);
    check_unit_range(img.data);

    auto e = random_epoch(3, 1e-3);
    for (std::size_t t = 0; t < 125; ++t) e.data(7, t) = 25.0 * std::sin(2.0 * std::numbers::pi * 10.0 * t / 125.0);
    const auto p = psd_image(e);
    std::size_t best = 0;
    for (std::size_t f = 1; f < 63; ++f)
        if (p.data(f, 7) > p.data(best, 7)) best = f;
    CHECK(best == 10);
}

TEST_CASE("psd image is invariant to positive scaling") {
    const auto e = random_epoch(4);
    const auto a = psd_image(e);
    for (double c : {1e-3, 0.5, 7.0, 1e4}) {
        EegEpoch s = e;
        for (auto& v : s.data.data) v *= c;
        const auto b = psd_image(s);
        for (std::size_t i = 0; i < a.data.size(); ++i) REQUIRE(std::abs(a.data.data[i] - b.data.data[i]) < 1e-9);
    }
}

TEST_CASE("input shapes and kind parsing") {
    CHECK(input_shape(InputKind::raw) == std::pair<std::size_t, std::size_t>{125, 125});
    CHECK(input_shape(InputKind::psd) == std::pair<std::size_t, std::size_t>{63, 125});
    CHECK(parse_input_kind("psd") == InputKind::psd);
    CHECK(std::string(to_string(InputKind::raw)) == "raw");
    CHECK_THROWS_AS(parse_input_kind("fft"), InvalidInput);
}
