#include "reference.hpp"

#include <algorithm>
#include <cmath>

namespace refop {

dvec to_dvec(const ppt::Tensor& t) {
    auto v = t.data();
    return dvec(v.begin(), v.end());
}

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

dvec matmul(const dvec& a, int64_t n, int64_t k, const dvec& b, int64_t m) {
    dvec out(static_cast<size_t>(n * m), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (int64_t l = 0; l < k; ++l) {
                acc += a[i * k + l] * b[l * m + j];
            }
            out[i * m + j] = acc;
        }
    }
    return out;
}

void softmax_row(double* row, int64_t n) {
    double peak = row[0];
    for (int64_t j = 1; j < n; ++j) peak = std::max(peak, row[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < n; ++j) {
        row[j] = std::exp(row[j] - peak);
        sum += row[j];
    }
    for (int64_t j = 0; j < n; ++j) row[j] /= sum;
}

dvec layer_norm(const dvec& x, int64_t rows, int64_t n, const dvec& gamma,
                const dvec& beta) {
    dvec out(x.size());
    for (int64_t r = 0; r < rows; ++r) {
        const double* src = x.data() + r * n;
        double* dst = out.data() + r * n;
        double mu = 0.0;
        for (int64_t j = 0; j < n; ++j) mu += src[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            double d = src[j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        double inv = 1.0 / std::sqrt(var + static_cast<double>(ppt::kLayerNormEpsilon));
        for (int64_t j = 0; j < n; ++j) {
            dst[j] = (src[j] - mu) * inv * gamma[j] + beta[j];
        }
    }
    return out;
}

dvec attention(const dvec& q, const dvec& k, const dvec& v, int64_t t, int64_t dk,
               int64_t dv) {
    double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    dvec out(static_cast<size_t>(t * dv), 0.0);
    dvec row(static_cast<size_t>(t));
    for (int64_t i = 0; i < t; ++i) {
        for (int64_t j = 0; j < t; ++j) {
            double acc = 0.0;
            for (int64_t l = 0; l < dk; ++l) {
                acc += q[i * dk + l] * k[j * dk + l];
            }
            row[j] = acc * scale;
        }
        softmax_row(row.data(), t);
        for (int64_t j = 0; j < t; ++j) {
            for (int64_t l = 0; l < dv; ++l) {
                out[i * dv + l] += row[j] * v[j * dv + l];
            }
        }
    }
    return out;
}

BlockRef BlockRef::from(const ppt::TransformerBlockWeights& w) {
    BlockRef r;
    r.ln1_g = to_dvec(w.ln1_gamma);
    r.ln1_b = to_dvec(w.ln1_beta);
    r.wq = to_dvec(w.wq);
    r.bq = to_dvec(w.bq);
    r.wk = to_dvec(w.wk);
    r.bk = to_dvec(w.bk);
    r.wv = to_dvec(w.wv);
    r.bv = to_dvec(w.bv);
    r.wo = to_dvec(w.wo);
    r.bo = to_dvec(w.bo);
    r.ln2_g = to_dvec(w.ln2_gamma);
    r.ln2_b = to_dvec(w.ln2_beta);
    r.w1 = to_dvec(w.mlp_w1);
    r.b1 = to_dvec(w.mlp_b1);
    r.w2 = to_dvec(w.mlp_w2);
    r.b2 = to_dvec(w.mlp_b2);
    return r;
}

namespace {

// x [t,c] × w [c,cols] + b, as plain loops.
dvec affine(const dvec& x, int64_t t, int64_t c, const dvec& w, const dvec& b,
            int64_t cols) {
    dvec out = matmul(x, t, c, w, cols);
    for (int64_t i = 0; i < t; ++i) {
        for (int64_t j = 0; j < cols; ++j) out[i * cols + j] += b[j];
    }
    return out;
}

}  // namespace

dvec msa(const dvec& tokens, int64_t t, int64_t c, const BlockRef& w, int heads) {
    int64_t d = c / heads;
    dvec q = affine(tokens, t, c, w.wq, w.bq, c);
    dvec k = affine(tokens, t, c, w.wk, w.bk, c);
    dvec v = affine(tokens, t, c, w.wv, w.bv, c);

    // Head h reads columns [h·d, (h+1)·d); its attention output lands in the
    // same columns of the merged matrix.
    dvec merged(static_cast<size_t>(t * c), 0.0);
    double scale = 1.0 / std::sqrt(static_cast<double>(d));
    dvec row(static_cast<size_t>(t));
    for (int h = 0; h < heads; ++h) {
        int64_t off = h * d;
        for (int64_t i = 0; i < t; ++i) {
            for (int64_t j = 0; j < t; ++j) {
                double acc = 0.0;
                for (int64_t l = 0; l < d; ++l) {
                    acc += q[i * c + off + l] * k[j * c + off + l];
                }
                row[j] = acc * scale;
            }
            softmax_row(row.data(), t);
            for (int64_t j = 0; j < t; ++j) {
                for (int64_t l = 0; l < d; ++l) {
                    merged[i * c + off + l] += row[j] * v[j * c + off + l];
                }
            }
        }
    }
    return affine(merged, t, c, w.wo, w.bo, c);
}

dvec transformer_block(const dvec& tokens, int64_t t, int64_t c, const BlockRef& w,
                       int heads) {
    dvec normed = layer_norm(tokens, t, c, w.ln1_g, w.ln1_b);
    dvec z1 = msa(normed, t, c, w, heads);
    for (size_t i = 0; i < z1.size(); ++i) z1[i] += tokens[i];

    dvec normed2 = layer_norm(z1, t, c, w.ln2_g, w.ln2_b);
    dvec hidden = affine(normed2, t, c, w.w1, w.b1, 4 * c);
    for (double& v : hidden) v = gelu(v);
    dvec out = affine(hidden, t, 4 * c, w.w2, w.b2, c);
    for (size_t i = 0; i < out.size(); ++i) out[i] += z1[i];
    return out;
}

}  // namespace refop
