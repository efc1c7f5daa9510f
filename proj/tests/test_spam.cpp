#include <doctest.h>

#include <random>

#include "onehalf/error.hpp"
#include "onehalf/imgops.hpp"
#include "onehalf/spam.hpp"
#include "support.hpp"

using namespace onehalf;
using testing::random_image;
using testing::to_gray;

namespace {

RasterImage row_image(std::vector<std::uint8_t> row, int rows = 4) {
    const int w = static_cast<int>(row.size());
    std::vector<std::uint8_t> data;
    for (int r = 0; r < rows; ++r) data.insert(data.end(), row.begin(), row.end());
    return RasterImage(w, rows, 1, data);
}

// Sums of each (u,v) row of one tensor of length L^3.
std::vector<double> row_sums(std::span<const double> t, int l) {
    std::vector<double> out;
    for (int r = 0; r < l * l; ++r) {
        double s = 0.0;
        for (int w = 0; w < l; ++w) s += t[static_cast<std::size_t>(r * l + w)];
        out.push_back(s);
    }
    return out;
}

}  // namespace

TEST_SUITE("spam") {

TEST_CASE("residuals follow the walk direction") {
    const RasterImage img = row_image({10, 7, 3, 3});
    const auto right = residuals(img, Direction::Right);
    CHECK(right.at(0, 0) == 3);
    CHECK(right.at(1, 0) == 4);
    const auto left = residuals(img, Direction::Left);
    CHECK(left.at(0, 0) == -3);
    CHECK(left.at(1, 0) == -4);

    RasterImage flat(6, 6, 1);
    for (auto& s : flat.data()) s = 9;
    for (Direction d : kStraightDirections) {
        const auto f = residuals(flat, d);
        CHECK(std::all_of(f.values.begin(), f.values.end(), [](int v) { return v == 0; }));
    }
    CHECK_THROWS_AS(residuals(RasterImage(2, 8, 1), Direction::Right), InvalidArgument);
}

TEST_CASE("truncate clamps to [-T, T]") {
    ResidualField f{Direction::Right, 4, 1, {5, -9, 2, -3}};
    const auto t = truncate(f, 3);
    CHECK(t.values == std::vector<int>{3, -3, 2, -3});
    CHECK_THROWS_AS(truncate(f, 0), InvalidArgument);
}

TEST_CASE("transition tensor special cases") {
    const SpamConfig cfg;
    const int l = cfg.levels();
    auto idx = [&](int u, int v, int w) { return static_cast<std::size_t>(((u + 3) * l + (v + 3)) * l + (w + 3)); };

    RasterImage flat(8, 8, 1);
    for (auto& s : flat.data()) s = 100;
    const auto m = transition_tensor(truncate(residuals(flat, Direction::Right), 3), cfg);
    CHECK(m[idx(0, 0, 0)] == 1.0);
    CHECK(std::accumulate(m.begin(), m.end(), 0.0) == 1.0);

    // residuals alternate +1, -1
    const RasterImage zig = row_image({5, 4, 5, 4, 5, 4, 5, 4});
    const auto z = transition_tensor(truncate(residuals(zig, Direction::Right), 3), cfg);
    CHECK(z[idx(1, -1, 1)] == 1.0);
    CHECK(z[idx(-1, 1, -1)] == 1.0);
    CHECK(std::accumulate(z.begin(), z.end(), 0.0) == 2.0);
}

TEST_CASE("per-direction tensors match triple counting") {
    std::mt19937_64 rng(21);
    const SpamConfig cfg;
    const int dirs[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, -1}, {-1, 1}, {1, -1}};
    for (int rep = 0; rep < 4; ++rep) {
        const RasterImage img = random_image(rng, 8, 8, 1, 100, 108);
        for (int d = 0; d < 8; ++d) {
            const auto got = transition_tensor(truncate(residuals(img, static_cast<Direction>(d)), 3), cfg);
            const auto want = oracle::spam_direction(to_gray(img), dirs[d][0], dirs[d][1], 3, true);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-14));
        }
    }
}

TEST_CASE("spam_features matches the brute-force oracle") {
    std::mt19937_64 rng(22);
    for (int rep = 0; rep < 10; ++rep) {
        const int base = std::uniform_int_distribution<int>(5, 250)(rng);
        const RasterImage img = random_image(rng, 16, 16, 1, std::max(0, base - 6), std::min(255, base + 6));
        const auto got = spam_features(img).values;
        const auto want = oracle::spam_reference(to_gray(img));
        REQUIRE(got.size() == 686);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-12);
    }
    SpamConfig joint;
    joint.normalization = Normalization::Joint;
    const RasterImage img = random_image(rng, 12, 10, 1, 120, 126);
    const auto got = spam_features(img, joint).values;
    const auto want = oracle::spam_reference(to_gray(img), 3, false);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-12);
}

TEST_CASE("aggregate properties") {
    std::mt19937_64 rng(23);
    RasterImage flat(10, 10, 1);
    for (auto& s : flat.data()) s = 33;
    const auto f = spam_features(flat).values;
    const std::size_t centre = (3 * 7 + 3) * 7 + 3;
    CHECK(f[centre] == 1.0);
    CHECK(f[343 + centre] == 1.0);
    CHECK(std::accumulate(f.begin(), f.end(), 0.0) == 2.0);

    for (int rep = 0; rep < 5; ++rep) {
        const RasterImage img = random_image(rng, 20, 14, 1, 50, 60);
        const auto x = spam_features(img).values;
        CHECK(std::all_of(x.begin(), x.end(), [](double v) { return v >= 0.0 && v <= 1.0; }));
        // averaged rows: each direction contributes a row summing to 1 or 0
        for (int g = 0; g < 2; ++g) {
            for (double s : row_sums(std::span(x).subspan(343 * g, 343), 7)) {
                const double quarters = s * 4.0;
                CHECK(std::abs(quarters - std::round(quarters)) < 1e-12);
            }
        }

        // constant shift without clipping
        RasterImage shifted = img;
        for (auto& s : shifted.data()) s = static_cast<std::uint8_t>(s + 100);
        CHECK(spam_features(shifted).values == x);

        // 180-degree rotation
        RasterImage rot(img.width(), img.height(), 1);
        for (int y = 0; y < img.height(); ++y)
            for (int xx = 0; xx < img.width(); ++xx) rot.at(img.width() - 1 - xx, img.height() - 1 - y) = img.at(xx, y);
        const auto r = spam_features(rot).values;
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(r[i] == doctest::Approx(x[i]).epsilon(1e-14));
    }
}

TEST_CASE("colour input depends on V only") {
    std::mt19937_64 rng(24);
    const RasterImage img = testing::smooth_image(rng, 24, 24);
    auto dec = rgb_to_v(img);
    RasterImage other = img;
    // change the non-maximal channels only
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
            const int v = dec.v.at(x, y);
            for (int c = 0; c < 3; ++c)
                if (other.at(x, y, c) < v) other.at(x, y, c) = static_cast<std::uint8_t>(other.at(x, y, c) / 2);
        }
    CHECK(spam_features(other).values == spam_features(img).values);
    CHECK(spam_features(img).values == spam_features(dec.v).values);
}

TEST_CASE("incremental updates equal full extraction") {
    std::mt19937_64 rng(25);
    for (int rep = 0; rep < 5; ++rep) {
        RasterImage img = random_image(rng, 9, 7, 1, 80, 90);
        IncrementalSpam inc(img, {});
        CHECK(std::vector<double>(inc.features().begin(), inc.features().end()) == spam_features(img).values);
        std::uniform_int_distribution<int> px(0, 62), val(70, 100);
        for (int k = 0; k < 40; ++k) {
            const int i = px(rng);
            const auto v = static_cast<std::uint8_t>(val(rng));
            const auto before = std::vector<double>(inc.features().begin(), inc.features().end());
            const auto changed = inc.set_pixel(i % 9, i / 9, v);
            img.at(i % 9, i / 9) = v;
            const auto full = spam_features(img).values;
            REQUIRE(std::vector<double>(inc.features().begin(), inc.features().end()) == full);
            // untouched entries are not reported, reported ones include every change
            for (std::size_t f = 0; f < full.size(); ++f)
                if (full[f] != before[f]) CHECK(std::find(changed.begin(), changed.end(), int(f)) != changed.end());
        }
        CHECK(inc.channel() == img);
    }
}

TEST_CASE("feature CSV round trip") {
    std::mt19937_64 rng(26);
    const auto dir = testing::scratch_dir("spam-csv");
    std::vector<FeatureRecord> recs;
    for (int i = 0; i < 3; ++i) {
        recs.push_back({"img" + std::to_string(i), i % 2 ? ImageClass::Manipulated : ImageClass::Pristine,
                        spam_features(random_image(rng, 10, 10, 1)).values});
    }
    write_feature_csv(dir / "f.csv", recs, {});
    const auto back = read_feature_csv(dir / "f.csv", {});
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].source_id == recs[i].source_id);
        CHECK(back[i].label == recs[i].label);
        CHECK(back[i].values == recs[i].values);
    }
    const auto names = feature_column_names({});
    CHECK(names.size() == 686);
    CHECK(names.front() == "hv_-3_-3_-3");
    CHECK(names[343] == "dg_-3_-3_-3");
    SpamConfig t2;
    t2.truncation = 2;
    CHECK_THROWS_AS(read_feature_csv(dir / "f.csv", t2), ParseError);
}

}
