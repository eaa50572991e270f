#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <utility>

#include "ppt/image.hpp"

namespace ppt {

// All metrics operate on 8-bit grayscale images and compute in double
// precision. Pairwise metrics require equal extents.

// Shannon entropy of the 256-bin intensity histogram, log base 2. Range [0, 8].
double entropy(const RawImage& image);

// Population standard deviation of intensities.
double sd(const RawImage& image);

// Pearson correlation. A constant input has no correlation to speak of; we
// return 0 (with a warning on stderr) instead of NaN.
double cc(const RawImage& x, const RawImage& y);

// Mutual information from the 256×256 joint histogram, log base 2.
double mi(const RawImage& x, const RawImage& y);

// Mean local SSIM over fully interior 8×8 windows at stride 1, with the
// standard constants C1 = (0.01·255)², C2 = (0.03·255)².
double ssim(const RawImage& x, const RawImage& y);

// Sum of the correlations of differences: cc(F−B, A) + cc(F−A, B).
double scd(const RawImage& fused, const RawImage& a, const RawImage& b);

// One evaluation row for a fused image against its two sources. Pairwise
// metrics are kept per source and also averaged.
struct MetricReport {
    double en = 0.0;
    double sd = 0.0;
    double cc_a = 0.0, cc_b = 0.0;
    double mi_a = 0.0, mi_b = 0.0;
    double ssim_a = 0.0, ssim_b = 0.0;
    double scd = 0.0;

    double cc() const { return (cc_a + cc_b) / 2.0; }
    double mi() const { return (mi_a + mi_b) / 2.0; }
    double ssim() const { return (ssim_a + ssim_b) / 2.0; }
};

MetricReport evaluate_all(const RawImage& fused, const RawImage& a, const RawImage& b);

MetricReport average_reports(std::span<const MetricReport> reports);

// Row-per-image emitters with a stable column order:
// image,en,sd,cc_a,cc_b,cc,mi_a,mi_b,mi,ssim_a,ssim_b,ssim,scd
using NamedReport = std::pair<std::string, MetricReport>;
void write_report_csv(std::ostream& out, std::span<const NamedReport> rows);
void write_report_json(std::ostream& out, std::span<const NamedReport> rows);

}  // namespace ppt
