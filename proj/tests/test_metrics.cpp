#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "doctest.h"
#include "ppt/metrics.hpp"
#include "ppt/rng.hpp"

using namespace ppt;

namespace {

RawImage random_gray(int h, int w, uint64_t seed) {
    ppt::Rng rng(seed);
    RawImage img = RawImage::create(h, w, 1);
    for (uint8_t& s : img.samples) s = static_cast<uint8_t>(rng.below(256));
    return img;
}

// ---- brute-force oracles, written from the definitions -----------------------

double oracle_entropy(const RawImage& img) {
    std::array<double, 256> hist{};
    for (uint8_t v : img.samples) hist[v] += 1.0;
    double n = static_cast<double>(img.samples.size());
    double h = 0.0;
    for (double c : hist) {
        if (c > 0.0) h -= (c / n) * std::log2(c / n);
    }
    return h;
}

double oracle_sd(const RawImage& img) {
    double n = static_cast<double>(img.samples.size());
    double mean = 0.0;
    for (uint8_t v : img.samples) mean += v / n;
    double var = 0.0;
    for (uint8_t v : img.samples) var += (v - mean) * (v - mean) / n;
    return std::sqrt(var);
}

double oracle_cc(const std::vector<double>& x, const std::vector<double>& y) {
    double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> to_doubles(const RawImage& img) {
    return {img.samples.begin(), img.samples.end()};
}

double oracle_mi(const RawImage& x, const RawImage& y) {
    std::vector<double> joint(256 * 256, 0.0);
    std::array<double, 256> px{}, py{};
    double n = static_cast<double>(x.samples.size());
    for (size_t i = 0; i < x.samples.size(); ++i) {
        joint[static_cast<size_t>(x.samples[i]) * 256 + y.samples[i]] += 1.0 / n;
        px[x.samples[i]] += 1.0 / n;
        py[y.samples[i]] += 1.0 / n;
    }
    double info = 0.0;
    for (int b = 0; b < 256; ++b) {       // deliberately the other loop order
        for (int a = 0; a < 256; ++a) {
            double p = joint[static_cast<size_t>(a) * 256 + b];
            if (p > 0.0) info += p * std::log2(p / (px[a] * py[b]));
        }
    }
    return info;
}

double oracle_ssim(const RawImage& x, const RawImage& y) {
    const double c1 = 6.5025;   // (0.01·255)²
    const double c2 = 58.5225;  // (0.03·255)²
    double total = 0.0;
    int count = 0;
    for (int y0 = 0; y0 + 8 <= x.height; ++y0) {
        for (int x0 = 0; x0 + 8 <= x.width; ++x0) {
            double mx = 0.0, my = 0.0;
            for (int dy = 0; dy < 8; ++dy) {
                for (int dx = 0; dx < 8; ++dx) {
                    mx += x.at(y0 + dy, x0 + dx) / 64.0;
                    my += y.at(y0 + dy, x0 + dx) / 64.0;
                }
            }
            // centered two-pass moments, unlike the library's running sums
            double vx = 0.0, vy = 0.0, cov = 0.0;
            for (int dy = 0; dy < 8; ++dy) {
                for (int dx = 0; dx < 8; ++dx) {
                    double a = x.at(y0 + dy, x0 + dx) - mx;
                    double b = y.at(y0 + dy, x0 + dx) - my;
                    vx += a * a / 64.0;
                    vy += b * b / 64.0;
                    cov += a * b / 64.0;
                }
            }
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                     ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    }
    return total / count;
}

double oracle_scd(const RawImage& f, const RawImage& a, const RawImage& b) {
    std::vector<double> fa(f.samples.size()), fb(f.samples.size());
    for (size_t i = 0; i < f.samples.size(); ++i) {
        fa[i] = static_cast<double>(f.samples[i]) - a.samples[i];
        fb[i] = static_cast<double>(f.samples[i]) - b.samples[i];
    }
    return oracle_cc(fb, to_doubles(a)) + oracle_cc(fa, to_doubles(b));
}

}  // namespace

TEST_CASE("entropy identities") {
    CHECK(entropy(RawImage::create(4, 4, 1, 77)) == 0.0);

    RawImage half = RawImage::create(2, 2, 1, 0);
    half.at(0, 1) = 255;
    half.at(1, 1) = 255;
    CHECK(entropy(half) == doctest::Approx(1.0).epsilon(1e-12));

    RawImage all = RawImage::create(16, 16, 1);
    for (int i = 0; i < 256; ++i) all.samples[i] = static_cast<uint8_t>(i);
    CHECK(entropy(all) == doctest::Approx(8.0).epsilon(1e-12));

    CHECK_THROWS_AS(entropy(RawImage::create(2, 2, 3)), ContractError);
}

TEST_CASE("standard deviation identities") {
    CHECK(sd(RawImage::create(3, 3, 1, 42)) == 0.0);
    RawImage split = RawImage::create(2, 2, 1, 0);
    split.at(1, 0) = 255;
    split.at(1, 1) = 255;
    CHECK(sd(split) == doctest::Approx(127.5).epsilon(1e-12));
}

TEST_CASE("correlation identities") {
    RawImage x = random_gray(8, 8, 1);
    CHECK(cc(x, x) == doctest::Approx(1.0).epsilon(1e-12));

    RawImage inv = x;
    for (uint8_t& s : inv.samples) s = static_cast<uint8_t>(255 - s);
    CHECK(cc(x, inv) == doctest::Approx(-1.0).epsilon(1e-12));

    CHECK(cc(x, RawImage::create(8, 8, 1, 7)) == 0.0);

    CHECK_THROWS_AS(cc(x, random_gray(8, 9, 2)), ContractError);
    CHECK_THROWS_AS(cc(x, RawImage::create(8, 8, 3)), ContractError);
}

TEST_CASE("mutual information identities") {
    RawImage x = random_gray(16, 16, 3);
    CHECK(mi(x, x) == doctest::Approx(entropy(x)).epsilon(1e-12));
    CHECK(mi(x, RawImage::create(16, 16, 1, 100)) == doctest::Approx(0.0).epsilon(1e-12));

    RawImage y = random_gray(16, 16, 4);
    CHECK(mi(x, y) == doctest::Approx(mi(y, x)).epsilon(1e-12));
}

TEST_CASE("ssim identities") {
    RawImage x = random_gray(12, 12, 5);
    CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));

    RawImage shifted = x;
    for (uint8_t& s : shifted.samples) {
        s = static_cast<uint8_t>(std::min(255, s + 40));
    }
    CHECK(ssim(x, shifted) < 1.0);

    CHECK_THROWS_AS(ssim(RawImage::create(7, 20, 1), RawImage::create(7, 20, 1)),
                    ContractError);
    CHECK_THROWS_AS(ssim(x, random_gray(12, 13, 6)), ContractError);
}

TEST_CASE("scd identities") {
    RawImage a = random_gray(8, 8, 7);
    CHECK(scd(a, a, a) == 0.0);  // both differences are constant

    // F = 128 + a + b → F − B correlates perfectly with A and vice versa.
    ppt::Rng rng(8);
    RawImage da = RawImage::create(8, 8, 1);
    RawImage db = RawImage::create(8, 8, 1);
    RawImage f = RawImage::create(8, 8, 1);
    for (size_t i = 0; i < da.samples.size(); ++i) {
        int va = static_cast<int>(rng.below(41)) - 20;
        int vb = static_cast<int>(rng.below(41)) - 20;
        da.samples[i] = static_cast<uint8_t>(128 + va);
        db.samples[i] = static_cast<uint8_t>(128 + vb);
        f.samples[i] = static_cast<uint8_t>(128 + va + vb);
    }
    CHECK(scd(f, da, db) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("all metrics match brute-force recomputation on random pairs") {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        RawImage x = random_gray(32, 32, seed * 3);
        RawImage y = random_gray(32, 32, seed * 3 + 1);
        RawImage f = random_gray(32, 32, seed * 3 + 2);
        INFO("seed=", seed);
        CHECK(entropy(x) == doctest::Approx(oracle_entropy(x)).epsilon(1e-9));
        CHECK(sd(x) == doctest::Approx(oracle_sd(x)).epsilon(1e-9));
        CHECK(cc(x, y) ==
              doctest::Approx(oracle_cc(to_doubles(x), to_doubles(y))).epsilon(1e-9));
        CHECK(mi(x, y) == doctest::Approx(oracle_mi(x, y)).epsilon(1e-9));
        CHECK(ssim(x, y) == doctest::Approx(oracle_ssim(x, y)).epsilon(1e-9));
        CHECK(scd(f, x, y) == doctest::Approx(oracle_scd(f, x, y)).epsilon(1e-9));
    }
}

TEST_CASE("evaluate_all gathers the individual metrics") {
    RawImage a = random_gray(16, 16, 20);
    RawImage b = random_gray(16, 16, 21);
    RawImage f = random_gray(16, 16, 22);
    MetricReport r = evaluate_all(f, a, b);
    CHECK(r.en == entropy(f));
    CHECK(r.sd == sd(f));
    CHECK(r.cc_a == cc(f, a));
    CHECK(r.cc_b == cc(f, b));
    CHECK(r.mi_a == mi(f, a));
    CHECK(r.mi_b == mi(f, b));
    CHECK(r.ssim_a == ssim(f, a));
    CHECK(r.ssim_b == ssim(f, b));
    CHECK(r.scd == scd(f, a, b));
    CHECK(r.cc() == doctest::Approx((r.cc_a + r.cc_b) / 2.0));
    CHECK(r.mi() == doctest::Approx((r.mi_a + r.mi_b) / 2.0));
    CHECK(r.ssim() == doctest::Approx((r.ssim_a + r.ssim_b) / 2.0));
}

TEST_CASE("report averaging") {
    MetricReport r1;
    r1.en = 2.0;
    r1.cc_a = 0.5;
    r1.scd = 1.0;
    MetricReport r2;
    r2.en = 4.0;
    r2.cc_a = 0.7;
    r2.scd = -1.0;
    std::vector<MetricReport> rs{r1, r2};
    MetricReport avg = average_reports(rs);
    CHECK(avg.en == doctest::Approx(3.0));
    CHECK(avg.cc_a == doctest::Approx(0.6));
    CHECK(avg.scd == doctest::Approx(0.0));

    std::vector<MetricReport> empty;
    CHECK_THROWS_AS(average_reports(empty), ContractError);
}

TEST_CASE("csv report has the documented columns and parseable rows") {
    RawImage a = random_gray(16, 16, 30);
    RawImage b = random_gray(16, 16, 31);
    RawImage f = random_gray(16, 16, 32);
    MetricReport r = evaluate_all(f, a, b);
    std::vector<NamedReport> rows{{"pair-1", r}};

    std::ostringstream out;
    write_report_csv(out, rows);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "image,en,sd,cc_a,cc_b,cc,mi_a,mi_b,mi,ssim_a,ssim_b,ssim,scd");
    std::getline(in, line);
    char name[64];
    double v[12];
    REQUIRE(std::sscanf(line.c_str(),
                        "%63[^,],%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf", name,
                        &v[0], &v[1], &v[2], &v[3], &v[4], &v[5], &v[6], &v[7], &v[8],
                        &v[9], &v[10], &v[11]) == 13);
    CHECK(std::string(name) == "pair-1");
    CHECK(v[0] == doctest::Approx(r.en).epsilon(1e-6));
    CHECK(v[1] == doctest::Approx(r.sd).epsilon(1e-6));
    CHECK(v[2] == doctest::Approx(r.cc_a).epsilon(1e-6));
    CHECK(v[4] == doctest::Approx(r.cc()).epsilon(1e-6));
    CHECK(v[7] == doctest::Approx(r.mi()).epsilon(1e-6));
    CHECK(v[11] == doctest::Approx(r.scd).epsilon(1e-6));
    CHECK_FALSE(std::getline(in, line));
}

TEST_CASE("json report parses back with the same values") {
    RawImage a = random_gray(16, 16, 40);
    RawImage b = random_gray(16, 16, 41);
    RawImage f = random_gray(16, 16, 42);
    MetricReport r = evaluate_all(f, a, b);
    std::vector<NamedReport> rows{{"x", r}, {"y", r}};

    std::ostringstream out;
    write_report_json(out, rows);
    nlohmann::json doc = nlohmann::json::parse(out.str());
    REQUIRE(doc.is_array());
    REQUIRE(doc.size() == 2);
    CHECK(doc[0]["image"] == "x");
    CHECK(doc[1]["image"] == "y");
    CHECK(doc[0]["en"].get<double>() == doctest::Approx(r.en).epsilon(1e-12));
    CHECK(doc[0]["ssim"].get<double>() ==
          doctest::Approx(r.ssim()).epsilon(1e-12));
    CHECK(doc[0]["scd"].get<double>() == doctest::Approx(r.scd).epsilon(1e-12));
}
