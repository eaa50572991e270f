#include "ppt/metrics.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <vector>

#include <json.hpp>

namespace ppt {

namespace {

void check_gray(const RawImage& image, const char* what) {
    if (image.channels != 1) {
        throw ContractError(std::string(what) + ": need grayscale input");
    }
    if (image.samples.empty()) {
        throw ContractError(std::string(what) + ": empty image");
    }
}

void check_pair(const RawImage& x, const RawImage& y, const char* what) {
    check_gray(x, what);
    check_gray(y, what);
    if (x.height != y.height || x.width != y.width) {
        throw ContractError(std::string(what) + ": extents differ, " +
                            std::to_string(x.height) + "x" + std::to_string(x.width) +
                            " vs " + std::to_string(y.height) + "x" +
                            std::to_string(y.width));
    }
}

// Pearson correlation over real-valued samples; constant input → 0.
double pearson(std::span<const double> x, std::span<const double> y) {
    size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double dx = x[i] - mx;
        double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        std::cerr << "warning: correlation of a constant image is undefined, using 0\n";
        return 0.0;
    }
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> as_doubles(const RawImage& image) {
    return std::vector<double>(image.samples.begin(), image.samples.end());
}

}  // namespace

double entropy(const RawImage& image) {
    check_gray(image, "entropy");
    std::array<int64_t, 256> counts{};
    for (uint8_t v : image.samples) ++counts[v];
    double n = static_cast<double>(image.samples.size());
    double h = 0.0;
    for (int64_t c : counts) {
        if (c == 0) continue;
        double p = static_cast<double>(c) / n;
        h -= p * std::log2(p);
    }
    return h;
}

double sd(const RawImage& image) {
    check_gray(image, "sd");
    double n = static_cast<double>(image.samples.size());
    double mean = 0.0;
    for (uint8_t v : image.samples) mean += v;
    mean /= n;
    double var = 0.0;
    for (uint8_t v : image.samples) {
        double d = v - mean;
        var += d * d;
    }
    return std::sqrt(var / n);
}

double cc(const RawImage& x, const RawImage& y) {
    check_pair(x, y, "cc");
    return pearson(as_doubles(x), as_doubles(y));
}

double mi(const RawImage& x, const RawImage& y) {
    check_pair(x, y, "mi");
    std::vector<int64_t> joint(256 * 256, 0);
    std::array<int64_t, 256> hx{};
    std::array<int64_t, 256> hy{};
    for (size_t i = 0; i < x.samples.size(); ++i) {
        uint8_t a = x.samples[i];
        uint8_t b = y.samples[i];
        ++joint[static_cast<size_t>(a) * 256 + b];
        ++hx[a];
        ++hy[b];
    }
    double n = static_cast<double>(x.samples.size());
    double info = 0.0;
    for (int a = 0; a < 256; ++a) {
        if (hx[a] == 0) continue;
        for (int b = 0; b < 256; ++b) {
            int64_t c = joint[static_cast<size_t>(a) * 256 + b];
            if (c == 0) continue;
            double pxy = static_cast<double>(c) / n;
            double px = static_cast<double>(hx[a]) / n;
            double py = static_cast<double>(hy[b]) / n;
            info += pxy * std::log2(pxy / (px * py));
        }
    }
    return info;
}

double ssim(const RawImage& x, const RawImage& y) {
    check_pair(x, y, "ssim");
    constexpr int kWindow = 8;
    constexpr double kC1 = (0.01 * 255) * (0.01 * 255);
    constexpr double kC2 = (0.03 * 255) * (0.03 * 255);
    if (x.height < kWindow || x.width < kWindow) {
        throw ContractError("ssim: image smaller than the 8x8 window");
    }
    constexpr double kInvArea = 1.0 / (kWindow * kWindow);
    double total = 0.0;
    int64_t windows = 0;
    for (int wy = 0; wy + kWindow <= x.height; ++wy) {
        for (int wx = 0; wx + kWindow <= x.width; ++wx) {
            double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
            for (int dy = 0; dy < kWindow; ++dy) {
                for (int dx = 0; dx < kWindow; ++dx) {
                    double a = x.at(wy + dy, wx + dx);
                    double b = y.at(wy + dy, wx + dx);
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            }
            double mx = sx * kInvArea;
            double my = sy * kInvArea;
            double vx = sxx * kInvArea - mx * mx;
            double vy = syy * kInvArea - my * my;
            double cov = sxy * kInvArea - mx * my;
            total += ((2 * mx * my + kC1) * (2 * cov + kC2)) /
                     ((mx * mx + my * my + kC1) * (vx + vy + kC2));
            ++windows;
        }
    }
    return total / static_cast<double>(windows);
}

double scd(const RawImage& fused, const RawImage& a, const RawImage& b) {
    check_pair(fused, a, "scd");
    check_pair(fused, b, "scd");
    size_t n = fused.samples.size();
    std::vector<double> diff(n);
    std::vector<double> source(n);
    for (size_t i = 0; i < n; ++i) {
        diff[i] = static_cast<double>(fused.samples[i]) - b.samples[i];
        source[i] = a.samples[i];
    }
    double first = pearson(diff, source);
    for (size_t i = 0; i < n; ++i) {
        diff[i] = static_cast<double>(fused.samples[i]) - a.samples[i];
        source[i] = b.samples[i];
    }
    return first + pearson(diff, source);
}

MetricReport evaluate_all(const RawImage& fused, const RawImage& a,
                          const RawImage& b) {
    MetricReport r;
    r.en = entropy(fused);
    r.sd = sd(fused);
    r.cc_a = cc(fused, a);
    r.cc_b = cc(fused, b);
    r.mi_a = mi(fused, a);
    r.mi_b = mi(fused, b);
    r.ssim_a = ssim(fused, a);
    r.ssim_b = ssim(fused, b);
    r.scd = scd(fused, a, b);
    return r;
}

MetricReport average_reports(std::span<const MetricReport> reports) {
    if (reports.empty()) {
        throw ContractError("average_reports: no reports");
    }
    MetricReport avg;
    for (const MetricReport& r : reports) {
        avg.en += r.en;
        avg.sd += r.sd;
        avg.cc_a += r.cc_a;
        avg.cc_b += r.cc_b;
        avg.mi_a += r.mi_a;
        avg.mi_b += r.mi_b;
        avg.ssim_a += r.ssim_a;
        avg.ssim_b += r.ssim_b;
        avg.scd += r.scd;
    }
    double n = static_cast<double>(reports.size());
    avg.en /= n;
    avg.sd /= n;
    avg.cc_a /= n;
    avg.cc_b /= n;
    avg.mi_a /= n;
    avg.mi_b /= n;
    avg.ssim_a /= n;
    avg.ssim_b /= n;
    avg.scd /= n;
    return avg;
}

void write_report_csv(std::ostream& out, std::span<const NamedReport> rows) {
    out << "image,en,sd,cc_a,cc_b,cc,mi_a,mi_b,mi,ssim_a,ssim_b,ssim,scd\n";
    char buf[320];
    for (const auto& [name, r] : rows) {
        std::snprintf(buf, sizeof(buf),
                      ",%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                      r.en, r.sd, r.cc_a, r.cc_b, r.cc(), r.mi_a, r.mi_b, r.mi(),
                      r.ssim_a, r.ssim_b, r.ssim(), r.scd);
        out << name << buf;
    }
}

void write_report_json(std::ostream& out, std::span<const NamedReport> rows) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const auto& [name, r] : rows) {
        doc.push_back({{"image", name},
                       {"en", r.en},
                       {"sd", r.sd},
                       {"cc_a", r.cc_a},
                       {"cc_b", r.cc_b},
                       {"cc", r.cc()},
                       {"mi_a", r.mi_a},
                       {"mi_b", r.mi_b},
                       {"mi", r.mi()},
                       {"ssim_a", r.ssim_a},
                       {"ssim_b", r.ssim_b},
                       {"ssim", r.ssim()},
                       {"scd", r.scd}});
    }
    out << doc.dump(2) << "\n";
}

}  // namespace ppt
