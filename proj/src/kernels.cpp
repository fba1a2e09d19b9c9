#include "surfcast/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace surfcast::kern {

namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// First output index whose input coordinate ow*stride + off is >= 0.
inline int ow_lower(int off, int stride) {
    return off >= 0 ? 0 : (-off + stride - 1) / stride;
}
// One past the last output index with input coordinate < extent.
inline int ow_upper(int off, int stride, int extent, int out) {
    const int hi = (extent - 1 - off) / stride;  // off <= extent-1 checked by caller
    return std::min(out, hi + 1);
}

inline double gelu_val(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }
inline double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

}  // namespace

int conv_out_dim(int in, int k, int stride, int pad0, int pad1, int dilation) {
    const int eff = (k - 1) * dilation + 1;
    return (in + pad0 + pad1 - eff) / stride + 1;
}

ConvSpec make_conv_spec(int cin, int h, int w, int cout, int kh, int kw, int stride,
                        int pad_t, int pad_b, int pad_l, int pad_r, int dilation) {
    ConvSpec cs;
    cs.cin = cin;
    cs.h = h;
    cs.w = w;
    cs.cout = cout;
    cs.kh = kh;
    cs.kw = kw;
    cs.stride = stride;
    cs.pad_t = pad_t;
    cs.pad_l = pad_l;
    cs.dilation = dilation;
    cs.out_h = conv_out_dim(h, kh, stride, pad_t, pad_b, dilation);
    cs.out_w = conv_out_dim(w, kw, stride, pad_l, pad_r, dilation);
    return cs;
}

void conv2d_forward(const double* x, const double* w, const double* b, const ConvSpec& cs, double* y) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int co = 0; co < cs.cout; ++co) {
        for (int oh = 0; oh < cs.out_h; ++oh) {
            double* yrow = y + (static_cast<std::size_t>(co) * cs.out_h + oh) * cs.out_w;
            const double bias = b ? b[co] : 0.0;
            for (int ow = 0; ow < cs.out_w; ++ow) yrow[ow] = bias;
            for (int ci = 0; ci < cs.cin; ++ci) {
                const double* xch = x + static_cast<std::size_t>(ci) * cs.h * cs.w;
                const double* wch = w + ((static_cast<std::size_t>(co) * cs.cin + ci) * cs.kh) * cs.kw;
                for (int kh = 0; kh < cs.kh; ++kh) {
                    const int ih = oh * cs.stride - cs.pad_t + kh * cs.dilation;
                    if (ih < 0 || ih >= cs.h) continue;
                    const double* xrow = xch + static_cast<std::size_t>(ih) * cs.w;
                    const double* wrow = wch + static_cast<std::size_t>(kh) * cs.kw;
                    for (int kw = 0; kw < cs.kw; ++kw) {
                        const int off = kw * cs.dilation - cs.pad_l;
                        if (off > cs.w - 1) continue;
                        const double wv = wrow[kw];
                        const int lo = ow_lower(off, cs.stride);
                        const int hi = ow_upper(off, cs.stride, cs.w, cs.out_w);
                        for (int ow = lo; ow < hi; ++ow) {
                            yrow[ow] += wv * xrow[ow * cs.stride + off];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_input(const double* dy, const double* w, const ConvSpec& cs, double* dx) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int ci = 0; ci < cs.cin; ++ci) {
        for (int ih = 0; ih < cs.h; ++ih) {
            double* dxrow = dx + (static_cast<std::size_t>(ci) * cs.h + ih) * cs.w;
            std::memset(dxrow, 0, sizeof(double) * cs.w);
            for (int co = 0; co < cs.cout; ++co) {
                const double* dych = dy + static_cast<std::size_t>(co) * cs.out_h * cs.out_w;
                const double* wch = w + ((static_cast<std::size_t>(co) * cs.cin + ci) * cs.kh) * cs.kw;
                for (int kh = 0; kh < cs.kh; ++kh) {
                    const int t = ih + cs.pad_t - kh * cs.dilation;
                    if (t < 0 || t % cs.stride != 0) continue;
                    const int oh = t / cs.stride;
                    if (oh >= cs.out_h) continue;
                    const double* dyrow = dych + static_cast<std::size_t>(oh) * cs.out_w;
                    const double* wrow = wch + static_cast<std::size_t>(kh) * cs.kw;
                    for (int kw = 0; kw < cs.kw; ++kw) {
                        const int off = kw * cs.dilation - cs.pad_l;
                        if (off > cs.w - 1) continue;
                        const double wv = wrow[kw];
                        const int lo = ow_lower(off, cs.stride);
                        const int hi = ow_upper(off, cs.stride, cs.w, cs.out_w);
                        for (int ow = lo; ow < hi; ++ow) {
                            dxrow[ow * cs.stride + off] += dyrow[ow] * wv;
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_params(const double* dy, const double* x, const ConvSpec& cs, double* dw, double* db) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int co = 0; co < cs.cout; ++co) {
        for (int ci = 0; ci < cs.cin; ++ci) {
            const double* dych = dy + static_cast<std::size_t>(co) * cs.out_h * cs.out_w;
            const double* xch = x + static_cast<std::size_t>(ci) * cs.h * cs.w;
            double* wch = dw + ((static_cast<std::size_t>(co) * cs.cin + ci) * cs.kh) * cs.kw;
            for (int kh = 0; kh < cs.kh; ++kh) {
                for (int kw = 0; kw < cs.kw; ++kw) {
                    const int off = kw * cs.dilation - cs.pad_l;
                    double acc = 0.0;
                    if (off <= cs.w - 1) {
                        const int lo = ow_lower(off, cs.stride);
                        const int hi = ow_upper(off, cs.stride, cs.w, cs.out_w);
                        for (int oh = 0; oh < cs.out_h; ++oh) {
                            const int ih = oh * cs.stride - cs.pad_t + kh * cs.dilation;
                            if (ih < 0 || ih >= cs.h) continue;
                            const double* dyrow = dych + static_cast<std::size_t>(oh) * cs.out_w;
                            const double* xrow = xch + static_cast<std::size_t>(ih) * cs.w;
                            for (int ow = lo; ow < hi; ++ow) {
                                acc += dyrow[ow] * xrow[ow * cs.stride + off];
                            }
                        }
                    }
                    wch[static_cast<std::size_t>(kh) * cs.kw + kw] += acc;
                }
            }
        }
    }
    if (db) {
#pragma omp parallel for schedule(static)
        for (int co = 0; co < cs.cout; ++co) {
            const double* dych = dy + static_cast<std::size_t>(co) * cs.out_h * cs.out_w;
            double acc = 0.0;
            for (int i = 0; i < cs.out_h * cs.out_w; ++i) acc += dych[i];
            db[co] += acc;
        }
    }
}

void dwconv2d_forward(const double* x, const double* w, const double* b, int c, int h, int ww, int k, double* y) {
    const int p = k / 2;
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        const double* xch = x + static_cast<std::size_t>(ch) * h * ww;
        const double* wch = w + static_cast<std::size_t>(ch) * k * k;
        double* ych = y + static_cast<std::size_t>(ch) * h * ww;
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < ww; ++j) {
                double acc = b ? b[ch] : 0.0;
                for (int a = 0; a < k; ++a) {
                    const int ii = i - p + a;
                    if (ii < 0 || ii >= h) continue;
                    for (int bb = 0; bb < k; ++bb) {
                        const int jj = j - p + bb;
                        if (jj < 0 || jj >= ww) continue;
                        acc += wch[a * k + bb] * xch[static_cast<std::size_t>(ii) * ww + jj];
                    }
                }
                ych[static_cast<std::size_t>(i) * ww + j] = acc;
            }
        }
    }
}

void dwconv2d_backward_input(const double* dy, const double* w, int c, int h, int ww, int k, double* dx) {
    const int p = k / 2;
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        const double* dych = dy + static_cast<std::size_t>(ch) * h * ww;
        const double* wch = w + static_cast<std::size_t>(ch) * k * k;
        double* dxch = dx + static_cast<std::size_t>(ch) * h * ww;
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < ww; ++j) {
                double acc = 0.0;
                for (int a = 0; a < k; ++a) {
                    const int oi = i + p - a;
                    if (oi < 0 || oi >= h) continue;
                    for (int bb = 0; bb < k; ++bb) {
                        const int oj = j + p - bb;
                        if (oj < 0 || oj >= ww) continue;
                        acc += wch[a * k + bb] * dych[static_cast<std::size_t>(oi) * ww + oj];
                    }
                }
                dxch[static_cast<std::size_t>(i) * ww + j] = acc;
            }
        }
    }
}

void dwconv2d_backward_params(const double* dy, const double* x, int c, int h, int ww, int k, double* dw, double* db) {
    const int p = k / 2;
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        const double* dych = dy + static_cast<std::size_t>(ch) * h * ww;
        const double* xch = x + static_cast<std::size_t>(ch) * h * ww;
        double* wch = dw + static_cast<std::size_t>(ch) * k * k;
        for (int a = 0; a < k; ++a) {
            for (int bb = 0; bb < k; ++bb) {
                double acc = 0.0;
                for (int i = 0; i < h; ++i) {
                    const int ii = i - p + a;
                    if (ii < 0 || ii >= h) continue;
                    for (int j = 0; j < ww; ++j) {
                        const int jj = j - p + bb;
                        if (jj < 0 || jj >= ww) continue;
                        acc += dych[static_cast<std::size_t>(i) * ww + j] * xch[static_cast<std::size_t>(ii) * ww + jj];
                    }
                }
                wch[a * k + bb] += acc;
            }
        }
        if (db) {
            double acc = 0.0;
            for (int i = 0; i < h * ww; ++i) acc += dych[i];
            db[ch] += acc;
        }
    }
}

void groupnorm_forward(const double* x, const double* gamma, const double* beta, int c, int hw,
                       int groups, double eps, double* y, double* mean, double* rstd) {
    const int cpg = c / groups;
    const std::size_t gsize = static_cast<std::size_t>(cpg) * hw;
#pragma omp parallel for schedule(static)
    for (int g = 0; g < groups; ++g) {
        const double* xg = x + static_cast<std::size_t>(g) * gsize;
        double sum = 0.0;
        for (std::size_t i = 0; i < gsize; ++i) sum += xg[i];
        const double mu = sum / static_cast<double>(gsize);
        double var = 0.0;
        for (std::size_t i = 0; i < gsize; ++i) {
            const double d = xg[i] - mu;
            var += d * d;
        }
        var /= static_cast<double>(gsize);
        const double r = 1.0 / std::sqrt(var + eps);
        mean[g] = mu;
        rstd[g] = r;
        double* yg = y + static_cast<std::size_t>(g) * gsize;
        for (int cc = 0; cc < cpg; ++cc) {
            const int ch = g * cpg + cc;
            const double ga = gamma[ch], be = beta[ch];
            const double* xr = xg + static_cast<std::size_t>(cc) * hw;
            double* yr = yg + static_cast<std::size_t>(cc) * hw;
            for (int i = 0; i < hw; ++i) yr[i] = ga * (xr[i] - mu) * r + be;
        }
    }
}

void groupnorm_backward(const double* dy, const double* x, const double* gamma, int c, int hw,
                        int groups, const double* mean, const double* rstd,
                        double* dx, double* dgamma, double* dbeta) {
    const int cpg = c / groups;
    const std::size_t gsize = static_cast<std::size_t>(cpg) * hw;
    const double invn = 1.0 / static_cast<double>(gsize);
#pragma omp parallel for schedule(static)
    for (int g = 0; g < groups; ++g) {
        const double mu = mean[g], r = rstd[g];
        const double* xg = x + static_cast<std::size_t>(g) * gsize;
        const double* dyg = dy + static_cast<std::size_t>(g) * gsize;
        double sum_g = 0.0, sum_gx = 0.0;
        for (int cc = 0; cc < cpg; ++cc) {
            const int ch = g * cpg + cc;
            const double ga = gamma[ch];
            const double* xr = xg + static_cast<std::size_t>(cc) * hw;
            const double* dyr = dyg + static_cast<std::size_t>(cc) * hw;
            double dgam = 0.0, dbet = 0.0;
            for (int i = 0; i < hw; ++i) {
                const double xh = (xr[i] - mu) * r;
                const double gi = dyr[i] * ga;
                sum_g += gi;
                sum_gx += gi * xh;
                dgam += dyr[i] * xh;
                dbet += dyr[i];
            }
            dgamma[ch] += dgam;
            dbeta[ch] += dbet;
        }
        double* dxg = dx + static_cast<std::size_t>(g) * gsize;
        for (int cc = 0; cc < cpg; ++cc) {
            const int ch = g * cpg + cc;
            const double ga = gamma[ch];
            const double* xr = xg + static_cast<std::size_t>(cc) * hw;
            const double* dyr = dyg + static_cast<std::size_t>(cc) * hw;
            double* dxr = dxg + static_cast<std::size_t>(cc) * hw;
            for (int i = 0; i < hw; ++i) {
                const double xh = (xr[i] - mu) * r;
                const double gi = dyr[i] * ga;
                dxr[i] = r * (gi - invn * sum_g - xh * invn * sum_gx);
            }
        }
    }
}

void gelu_forward(const double* x, int n, double* y) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) y[i] = gelu_val(x[i]);
}

void gelu_backward(const double* dy, const double* x, int n, double* dx) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) dx[i] = dy[i] * gelu_grad(x[i]);
}

void sigmoid_forward(const double* x, int n, double* y) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

namespace {

struct Lerp {
    int i0, i1;
    double f;
};

inline Lerp up2_coord(int o, int in) {
    const double src = 0.5 * o - 0.25;
    const double fl = std::floor(src);
    Lerp l;
    l.f = src - fl;
    const int i = static_cast<int>(fl);
    l.i0 = clampi(i, 0, in - 1);
    l.i1 = clampi(i + 1, 0, in - 1);
    return l;
}

}  // namespace

void upsample2x_forward(const double* x, int c, int h, int w, double* y) {
    const int oh = 2 * h, ow = 2 * w;
#pragma omp parallel for collapse(2) schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < oh; ++i) {
            const Lerp li = up2_coord(i, h);
            const double* x0 = x + (static_cast<std::size_t>(ch) * h + li.i0) * w;
            const double* x1 = x + (static_cast<std::size_t>(ch) * h + li.i1) * w;
            double* yr = y + (static_cast<std::size_t>(ch) * oh + i) * ow;
            for (int j = 0; j < ow; ++j) {
                const Lerp lj = up2_coord(j, w);
                const double top = x0[lj.i0] * (1.0 - lj.f) + x0[lj.i1] * lj.f;
                const double bot = x1[lj.i0] * (1.0 - lj.f) + x1[lj.i1] * lj.f;
                yr[j] = top * (1.0 - li.f) + bot * li.f;
            }
        }
    }
}

void upsample2x_backward(const double* dy, int c, int h, int w, double* dx) {
    const int oh = 2 * h, ow = 2 * w;
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        double* dxch = dx + static_cast<std::size_t>(ch) * h * w;
        std::memset(dxch, 0, sizeof(double) * h * w);
        const double* dych = dy + static_cast<std::size_t>(ch) * oh * ow;
        for (int i = 0; i < oh; ++i) {
            const Lerp li = up2_coord(i, h);
            for (int j = 0; j < ow; ++j) {
                const Lerp lj = up2_coord(j, w);
                const double g = dych[static_cast<std::size_t>(i) * ow + j];
                dxch[static_cast<std::size_t>(li.i0) * w + lj.i0] += g * (1.0 - li.f) * (1.0 - lj.f);
                dxch[static_cast<std::size_t>(li.i0) * w + lj.i1] += g * (1.0 - li.f) * lj.f;
                dxch[static_cast<std::size_t>(li.i1) * w + lj.i0] += g * li.f * (1.0 - lj.f);
                dxch[static_cast<std::size_t>(li.i1) * w + lj.i1] += g * li.f * lj.f;
            }
        }
    }
}

void linear_forward(const double* x, const double* w, const double* b, int n, int nin, int nout, double* y) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const double* xr = x + static_cast<std::size_t>(i) * nin;
        double* yr = y + static_cast<std::size_t>(i) * nout;
        for (int o = 0; o < nout; ++o) {
            const double* wr = w + static_cast<std::size_t>(o) * nin;
            double acc = b ? b[o] : 0.0;
            for (int k = 0; k < nin; ++k) acc += xr[k] * wr[k];
            yr[o] = acc;
        }
    }
}

void linear_backward(const double* dy, const double* x, const double* w, int n, int nin, int nout,
                     double* dx, double* dw, double* db) {
    if (dx) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) {
            const double* dyr = dy + static_cast<std::size_t>(i) * nout;
            double* dxr = dx + static_cast<std::size_t>(i) * nin;
            for (int k = 0; k < nin; ++k) {
                double acc = 0.0;
                for (int o = 0; o < nout; ++o) acc += dyr[o] * w[static_cast<std::size_t>(o) * nin + k];
                dxr[k] = acc;
            }
        }
    }
#pragma omp parallel for schedule(static)
    for (int o = 0; o < nout; ++o) {
        double* dwr = dw + static_cast<std::size_t>(o) * nin;
        double dbo = 0.0;
        for (int i = 0; i < n; ++i) {
            const double g = dy[static_cast<std::size_t>(i) * nout + o];
            dbo += g;
            const double* xr = x + static_cast<std::size_t>(i) * nin;
            for (int k = 0; k < nin; ++k) dwr[k] += g * xr[k];
        }
        if (db) db[o] += dbo;
    }
}

namespace detail {

// Shared row body so the parallel and serial geostrophy agree bitwise.
inline void geostrophy_body(const double* ssh, const std::uint8_t* mask, const double* lat_centers,
                            int n_lat, int n_lon, double res_deg, const GeostrophyParams& p,
                            int i, double* u, double* v, std::uint8_t* out_mask) {
    const double dy_m = res_deg * p.meters_per_degree;
    const double lat = lat_centers[i];
    const double dx_m = dy_m * std::cos(lat * M_PI / 180.0);
    const double eff_lat = std::copysign(std::max(std::fabs(lat), p.lat_clamp), lat);
    const double f = 2.0 * p.omega * std::sin(eff_lat * M_PI / 180.0);
    const double gf = p.g / f;
    for (int j = 0; j < n_lon; ++j) {
        const std::size_t idx = static_cast<std::size_t>(i) * n_lon + j;
        u[idx] = 0.0;
        v[idx] = 0.0;
        out_mask[idx] = 0;
        if (!mask[idx]) continue;

        double detady;  // d(ssh)/dy
        if (i > 0 && i < n_lat - 1) {
            if (!mask[idx - n_lon] || !mask[idx + n_lon]) continue;
            detady = (ssh[idx + n_lon] - ssh[idx - n_lon]) / (2.0 * dy_m);
        } else if (p.one_sided_edges && i == 0) {
            if (n_lat < 2 || !mask[idx + n_lon]) continue;
            detady = (ssh[idx + n_lon] - ssh[idx]) / dy_m;
        } else if (p.one_sided_edges && i == n_lat - 1) {
            if (!mask[idx - n_lon]) continue;
            detady = (ssh[idx] - ssh[idx - n_lon]) / dy_m;
        } else {
            continue;
        }

        double detadx;  // d(ssh)/dx
        if (j > 0 && j < n_lon - 1) {
            if (!mask[idx - 1] || !mask[idx + 1]) continue;
            detadx = (ssh[idx + 1] - ssh[idx - 1]) / (2.0 * dx_m);
        } else if (p.one_sided_edges && j == 0) {
            if (n_lon < 2 || !mask[idx + 1]) continue;
            detadx = (ssh[idx + 1] - ssh[idx]) / dx_m;
        } else if (p.one_sided_edges && j == n_lon - 1) {
            if (!mask[idx - 1]) continue;
            detadx = (ssh[idx] - ssh[idx - 1]) / dx_m;
        } else {
            continue;
        }

        u[idx] = -gf * detady;
        v[idx] = gf * detadx;
        out_mask[idx] = 1;
    }
}

}  // namespace detail

void geostrophy_uv(const double* ssh, const std::uint8_t* mask, const double* lat_centers,
                   int n_lat, int n_lon, double res_deg, const GeostrophyParams& p,
                   double* u, double* v, std::uint8_t* out_mask) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n_lat; ++i) {
        detail::geostrophy_body(ssh, mask, lat_centers, n_lat, n_lon, res_deg, p, i, u, v, out_mask);
    }
}

void masked_gaussian_smooth(const double* x, const std::uint8_t* mask, int h, int w, double sigma,
                            double* y, std::uint8_t* out_mask) {
    if (sigma <= 0.0) {
        std::memcpy(y, x, sizeof(double) * h * w);
        std::memcpy(out_mask, mask, sizeof(std::uint8_t) * h * w);
        return;
    }
    const int rad = static_cast<int>(std::ceil(3.0 * sigma));
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * w + j;
            if (!mask[idx]) {
                y[idx] = 0.0;
                out_mask[idx] = 0;
                continue;
            }
            double num = 0.0, den = 0.0;
            for (int di = -rad; di <= rad; ++di) {
                const int ii = i + di;
                if (ii < 0 || ii >= h) continue;
                for (int dj = -rad; dj <= rad; ++dj) {
                    const int jj = j + dj;
                    if (jj < 0 || jj >= w) continue;
                    const std::size_t nidx = static_cast<std::size_t>(ii) * w + jj;
                    if (!mask[nidx]) continue;
                    const double wt = std::exp(-(di * di + dj * dj) * inv2s2);
                    num += wt * x[nidx];
                    den += wt;
                }
            }
            if (den > 0.0) {
                y[idx] = num / den;
                out_mask[idx] = 1;
            } else {
                y[idx] = 0.0;
                out_mask[idx] = 0;
            }
        }
    }
}

void gaussian_merge_accumulate(const double* patch, int ph, int pw, int row0, int col0,
                               double sigma, int gh, int gw, double* num, double* den) {
    const double cr = row0 + 0.5 * (ph - 1);
    const double cc = col0 + 0.5 * (pw - 1);
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < ph; ++i) {
        const int r = row0 + i;
        if (r < 0 || r >= gh) continue;
        const double dr = r - cr;
        for (int j = 0; j < pw; ++j) {
            const int c = col0 + j;
            if (c < 0 || c >= gw) continue;
            const double dc = c - cc;
            const double wt = std::exp(-(dr * dr + dc * dc) * inv2s2);
            const std::size_t idx = static_cast<std::size_t>(r) * gw + c;
            num[idx] += wt * patch[static_cast<std::size_t>(i) * pw + j];
            den[idx] += wt;
        }
    }
}

// ---------------------------------------------------------------------------
// Serial reference implementations.
// ---------------------------------------------------------------------------

namespace ref {

void conv2d_forward(const double* x, const double* w, const double* b, const ConvSpec& cs, double* y) {
    for (int co = 0; co < cs.cout; ++co) {
        for (int oh = 0; oh < cs.out_h; ++oh) {
            for (int ow = 0; ow < cs.out_w; ++ow) {
                double acc = b ? b[co] : 0.0;
                for (int ci = 0; ci < cs.cin; ++ci) {
                    for (int kh = 0; kh < cs.kh; ++kh) {
                        const int ih = oh * cs.stride - cs.pad_t + kh * cs.dilation;
                        if (ih < 0 || ih >= cs.h) continue;
                        for (int kw = 0; kw < cs.kw; ++kw) {
                            const int iw = ow * cs.stride - cs.pad_l + kw * cs.dilation;
                            if (iw < 0 || iw >= cs.w) continue;
                            acc += w[((static_cast<std::size_t>(co) * cs.cin + ci) * cs.kh + kh) * cs.kw + kw] *
                                   x[(static_cast<std::size_t>(ci) * cs.h + ih) * cs.w + iw];
                        }
                    }
                }
                y[(static_cast<std::size_t>(co) * cs.out_h + oh) * cs.out_w + ow] = acc;
            }
        }
    }
}

void conv2d_backward_input(const double* dy, const double* w, const ConvSpec& cs, double* dx) {
    for (int ci = 0; ci < cs.cin; ++ci) {
        for (int ih = 0; ih < cs.h; ++ih) {
            for (int iw = 0; iw < cs.w; ++iw) {
                double acc = 0.0;
                for (int co = 0; co < cs.cout; ++co) {
                    for (int kh = 0; kh < cs.kh; ++kh) {
                        const int t = ih + cs.pad_t - kh * cs.dilation;
                        if (t < 0 || t % cs.stride != 0) continue;
                        const int oh = t / cs.stride;
                        if (oh >= cs.out_h) continue;
                        for (int kw = 0; kw < cs.kw; ++kw) {
                            const int s = iw + cs.pad_l - kw * cs.dilation;
                            if (s < 0 || s % cs.stride != 0) continue;
                            const int ow = s / cs.stride;
                            if (ow >= cs.out_w) continue;
                            acc += dy[(static_cast<std::size_t>(co) * cs.out_h + oh) * cs.out_w + ow] *
                                   w[((static_cast<std::size_t>(co) * cs.cin + ci) * cs.kh + kh) * cs.kw + kw];
                        }
                    }
                }
                dx[(static_cast<std::size_t>(ci) * cs.h + ih) * cs.w + iw] = acc;
            }
        }
    }
}

void conv2d_backward_params(const double* dy, const double* x, const ConvSpec& cs, double* dw, double* db) {
    for (int co = 0; co < cs.cout; ++co) {
        for (int ci = 0; ci < cs.cin; ++ci) {
            for (int kh = 0; kh < cs.kh; ++kh) {
                for (int kw = 0; kw < cs.kw; ++kw) {
                    const int off = kw * cs.dilation - cs.pad_l;
                    double acc = 0.0;
                    if (off <= cs.w - 1) {
                        const int lo = ow_lower(off, cs.stride);
                        const int hi = ow_upper(off, cs.stride, cs.w, cs.out_w);
                        for (int oh = 0; oh < cs.out_h; ++oh) {
                            const int ih = oh * cs.stride - cs.pad_t + kh * cs.dilation;
                            if (ih < 0 || ih >= cs.h) continue;
                            for (int ow = lo; ow < hi; ++ow) {
                                acc += dy[(static_cast<std::size_t>(co) * cs.out_h + oh) * cs.out_w + ow] *
                                       x[(static_cast<std::size_t>(ci) * cs.h + ih) * cs.w + ow * cs.stride + off];
                            }
                        }
                    }
                    dw[((static_cast<std::size_t>(co) * cs.cin + ci) * cs.kh + kh) * cs.kw + kw] += acc;
                }
            }
        }
    }
    if (db) {
        for (int co = 0; co < cs.cout; ++co) {
            double acc = 0.0;
            for (int i = 0; i < cs.out_h * cs.out_w; ++i) {
                acc += dy[static_cast<std::size_t>(co) * cs.out_h * cs.out_w + i];
            }
            db[co] += acc;
        }
    }
}

void dwconv2d_forward(const double* x, const double* w, const double* b, int c, int h, int ww, int k, double* y) {
    const int p = k / 2;
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < ww; ++j) {
                double acc = b ? b[ch] : 0.0;
                for (int a = 0; a < k; ++a) {
                    const int ii = i - p + a;
                    if (ii < 0 || ii >= h) continue;
                    for (int bb = 0; bb < k; ++bb) {
                        const int jj = j - p + bb;
                        if (jj < 0 || jj >= ww) continue;
                        acc += w[(static_cast<std::size_t>(ch) * k + a) * k + bb] *
                               x[(static_cast<std::size_t>(ch) * h + ii) * ww + jj];
                    }
                }
                y[(static_cast<std::size_t>(ch) * h + i) * ww + j] = acc;
            }
        }
    }
}

void groupnorm_forward(const double* x, const double* gamma, const double* beta, int c, int hw,
                       int groups, double eps, double* y, double* mean, double* rstd) {
    const int cpg = c / groups;
    const std::size_t gsize = static_cast<std::size_t>(cpg) * hw;
    for (int g = 0; g < groups; ++g) {
        const double* xg = x + static_cast<std::size_t>(g) * gsize;
        double sum = 0.0;
        for (std::size_t i = 0; i < gsize; ++i) sum += xg[i];
        const double mu = sum / static_cast<double>(gsize);
        double var = 0.0;
        for (std::size_t i = 0; i < gsize; ++i) {
            const double d = xg[i] - mu;
            var += d * d;
        }
        var /= static_cast<double>(gsize);
        const double r = 1.0 / std::sqrt(var + eps);
        mean[g] = mu;
        rstd[g] = r;
        for (int cc = 0; cc < cpg; ++cc) {
            const int ch = g * cpg + cc;
            for (int i = 0; i < hw; ++i) {
                y[(static_cast<std::size_t>(ch)) * hw + i] =
                    gamma[ch] * (x[static_cast<std::size_t>(ch) * hw + i] - mu) * r + beta[ch];
            }
        }
    }
}

void groupnorm_backward(const double* dy, const double* x, const double* gamma, int c, int hw,
                        int groups, const double* mean, const double* rstd,
                        double* dx, double* dgamma, double* dbeta) {
    const int cpg = c / groups;
    const std::size_t gsize = static_cast<std::size_t>(cpg) * hw;
    const double invn = 1.0 / static_cast<double>(gsize);
    for (int g = 0; g < groups; ++g) {
        const double mu = mean[g], r = rstd[g];
        double sum_g = 0.0, sum_gx = 0.0;
        for (int cc = 0; cc < cpg; ++cc) {
            const int ch = g * cpg + cc;
            double dgam = 0.0, dbet = 0.0;
            for (int i = 0; i < hw; ++i) {
                const std::size_t idx = static_cast<std::size_t>(ch) * hw + i;
                const double xh = (x[idx] - mu) * r;
                const double gi = dy[idx] * gamma[ch];
                sum_g += gi;
                sum_gx += gi * xh;
                dgam += dy[idx] * xh;
                dbet += dy[idx];
            }
            dgamma[ch] += dgam;
            dbeta[ch] += dbet;
        }
        for (int cc = 0; cc < cpg; ++cc) {
            const int ch = g * cpg + cc;
            for (int i = 0; i < hw; ++i) {
                const std::size_t idx = static_cast<std::size_t>(ch) * hw + i;
                const double xh = (x[idx] - mu) * r;
                const double gi = dy[idx] * gamma[ch];
                dx[idx] = r * (gi - invn * sum_g - xh * invn * sum_gx);
            }
        }
    }
}

void upsample2x_forward(const double* x, int c, int h, int w, double* y) {
    const int oh = 2 * h, ow = 2 * w;
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < oh; ++i) {
            const Lerp li = up2_coord(i, h);
            for (int j = 0; j < ow; ++j) {
                const Lerp lj = up2_coord(j, w);
                const double* xch = x + static_cast<std::size_t>(ch) * h * w;
                const double top = xch[static_cast<std::size_t>(li.i0) * w + lj.i0] * (1.0 - lj.f) +
                                   xch[static_cast<std::size_t>(li.i0) * w + lj.i1] * lj.f;
                const double bot = xch[static_cast<std::size_t>(li.i1) * w + lj.i0] * (1.0 - lj.f) +
                                   xch[static_cast<std::size_t>(li.i1) * w + lj.i1] * lj.f;
                y[(static_cast<std::size_t>(ch) * oh + i) * ow + j] = top * (1.0 - li.f) + bot * li.f;
            }
        }
    }
}

void upsample2x_backward(const double* dy, int c, int h, int w, double* dx) {
    const int oh = 2 * h, ow = 2 * w;
    for (int ch = 0; ch < c; ++ch) {
        double* dxch = dx + static_cast<std::size_t>(ch) * h * w;
        std::memset(dxch, 0, sizeof(double) * h * w);
        const double* dych = dy + static_cast<std::size_t>(ch) * oh * ow;
        for (int i = 0; i < oh; ++i) {
            const Lerp li = up2_coord(i, h);
            for (int j = 0; j < ow; ++j) {
                const Lerp lj = up2_coord(j, w);
                const double g = dych[static_cast<std::size_t>(i) * ow + j];
                dxch[static_cast<std::size_t>(li.i0) * w + lj.i0] += g * (1.0 - li.f) * (1.0 - lj.f);
                dxch[static_cast<std::size_t>(li.i0) * w + lj.i1] += g * (1.0 - li.f) * lj.f;
                dxch[static_cast<std::size_t>(li.i1) * w + lj.i0] += g * li.f * (1.0 - lj.f);
                dxch[static_cast<std::size_t>(li.i1) * w + lj.i1] += g * li.f * lj.f;
            }
        }
    }
}

void geostrophy_uv(const double* ssh, const std::uint8_t* mask, const double* lat_centers,
                   int n_lat, int n_lon, double res_deg, const GeostrophyParams& p,
                   double* u, double* v, std::uint8_t* out_mask) {
    for (int i = 0; i < n_lat; ++i) {
        detail::geostrophy_body(ssh, mask, lat_centers, n_lat, n_lon, res_deg, p, i, u, v, out_mask);
    }
}

void masked_gaussian_smooth(const double* x, const std::uint8_t* mask, int h, int w, double sigma,
                            double* y, std::uint8_t* out_mask) {
    if (sigma <= 0.0) {
        std::memcpy(y, x, sizeof(double) * h * w);
        std::memcpy(out_mask, mask, sizeof(std::uint8_t) * h * w);
        return;
    }
    const int rad = static_cast<int>(std::ceil(3.0 * sigma));
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * w + j;
            if (!mask[idx]) {
                y[idx] = 0.0;
                out_mask[idx] = 0;
                continue;
            }
            double num = 0.0, den = 0.0;
            for (int di = -rad; di <= rad; ++di) {
                const int ii = i + di;
                if (ii < 0 || ii >= h) continue;
                for (int dj = -rad; dj <= rad; ++dj) {
                    const int jj = j + dj;
                    if (jj < 0 || jj >= w) continue;
                    const std::size_t nidx = static_cast<std::size_t>(ii) * w + jj;
                    if (!mask[nidx]) continue;
                    const double wt = std::exp(-(di * di + dj * dj) * inv2s2);
                    num += wt * x[nidx];
                    den += wt;
                }
            }
            if (den > 0.0) {
                y[idx] = num / den;
                out_mask[idx] = 1;
            } else {
                y[idx] = 0.0;
                out_mask[idx] = 0;
            }
        }
    }
}

void gaussian_merge_accumulate(const double* patch, int ph, int pw, int row0, int col0,
                               double sigma, int gh, int gw, double* num, double* den) {
    const double cr = row0 + 0.5 * (ph - 1);
    const double cc = col0 + 0.5 * (pw - 1);
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int i = 0; i < ph; ++i) {
        const int r = row0 + i;
        if (r < 0 || r >= gh) continue;
        const double dr = r - cr;
        for (int j = 0; j < pw; ++j) {
            const int c = col0 + j;
            if (c < 0 || c >= gw) continue;
            const double dc = c - cc;
            const double wt = std::exp(-(dr * dr + dc * dc) * inv2s2);
            const std::size_t idx = static_cast<std::size_t>(r) * gw + c;
            num[idx] += wt * patch[static_cast<std::size_t>(i) * pw + j];
            den[idx] += wt;
        }
    }
}

}  // namespace ref

}  // namespace surfcast::kern
