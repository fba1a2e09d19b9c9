#pragma once

#include <cstdint>
#include <vector>

// Data-parallel numeric kernels. Every kernel in surfcast::kern has an
// OpenMP-parallel body; surfcast::kern::ref holds plain serial versions of
// the heavy ones, kept as the reference for equivalence tests and the
// kernel benchmark. Parallel loops are arranged so each output element is
// produced by exactly one thread with the same accumulation order as the
// serial code, so the two namespaces agree bitwise.

namespace surfcast::kern {

struct ConvSpec {
    int cin = 0, h = 0, w = 0;
    int cout = 0, kh = 0, kw = 0;
    int stride = 1;
    int pad_t = 0, pad_l = 0;
    int dilation = 1;
    int out_h = 0, out_w = 0;
};

// Output size for one dimension given total padding pad0+pad1.
int conv_out_dim(int in, int k, int stride, int pad0, int pad1, int dilation = 1);

// Convenience builder; pad_b/pad_r only affect the output size.
ConvSpec make_conv_spec(int cin, int h, int w, int cout, int kh, int kw, int stride,
                        int pad_t, int pad_b, int pad_l, int pad_r, int dilation = 1);

// y[cout, out_h, out_w]; b may be nullptr.
void conv2d_forward(const double* x, const double* w, const double* b, const ConvSpec& cs, double* y);
// dx[cin, h, w] (overwritten).
void conv2d_backward_input(const double* dy, const double* w, const ConvSpec& cs, double* dx);
// dw/db accumulated into (caller zeroes or accumulates across samples).
void conv2d_backward_params(const double* dy, const double* x, const ConvSpec& cs, double* dw, double* db);

// Depthwise 3x3-style conv, stride 1, square kernel k (odd), same padding.
void dwconv2d_forward(const double* x, const double* w, const double* b, int c, int h, int ww, int k, double* y);
void dwconv2d_backward_input(const double* dy, const double* w, int c, int h, int ww, int k, double* dx);
void dwconv2d_backward_params(const double* dy, const double* x, int c, int h, int ww, int k, double* dw, double* db);

// GroupNorm over [c, hw]; saves per-group mean and reciprocal std.
void groupnorm_forward(const double* x, const double* gamma, const double* beta, int c, int hw,
                       int groups, double eps, double* y, double* mean, double* rstd);
void groupnorm_backward(const double* dy, const double* x, const double* gamma, int c, int hw,
                        int groups, const double* mean, const double* rstd,
                        double* dx, double* dgamma, double* dbeta);

void gelu_forward(const double* x, int n, double* y);
void gelu_backward(const double* dy, const double* x, int n, double* dx);

void sigmoid_forward(const double* x, int n, double* y);

// Bilinear x2 upsampling (half-pixel centers, edge-clamped).
void upsample2x_forward(const double* x, int c, int h, int w, double* y);
void upsample2x_backward(const double* dy, int c, int h, int w, double* dx);

// y[n, nout] = x[n, nin] * w^T + b with w[nout, nin].
void linear_forward(const double* x, const double* w, const double* b, int n, int nin, int nout, double* y);
void linear_backward(const double* dy, const double* x, const double* w, int n, int nin, int nout,
                     double* dx, double* dw, double* db);

// Geostrophic balance on a regular lat/lon grid. Central differences in the
// interior, optionally one-sided at edges; a cell is valid only when every
// stencil cell it used is valid. lat_centers has n_lat entries (degrees).
struct GeostrophyParams {
    double g = 9.81;
    double omega = 7.2921e-5;
    double lat_clamp = 20.0;
    double meters_per_degree = 111194.92664455873;
    bool one_sided_edges = true;
};
void geostrophy_uv(const double* ssh, const std::uint8_t* mask, const double* lat_centers,
                   int n_lat, int n_lon, double res_deg, const GeostrophyParams& p,
                   double* u, double* v, std::uint8_t* out_mask);

// Mask-aware Gaussian smoothing (truncated at 3 sigma); cells with zero
// accumulated weight come back masked out.
void masked_gaussian_smooth(const double* x, const std::uint8_t* mask, int h, int w, double sigma,
                            double* y, std::uint8_t* out_mask);

// Accumulates one patch into merge numerator/denominator planes with a
// Gaussian weight centered on the patch.
void gaussian_merge_accumulate(const double* patch, int ph, int pw, int row0, int col0,
                               double sigma, int gh, int gw, double* num, double* den);

namespace ref {
void conv2d_forward(const double* x, const double* w, const double* b, const ConvSpec& cs, double* y);
void conv2d_backward_input(const double* dy, const double* w, const ConvSpec& cs, double* dx);
void conv2d_backward_params(const double* dy, const double* x, const ConvSpec& cs, double* dw, double* db);
void dwconv2d_forward(const double* x, const double* w, const double* b, int c, int h, int ww, int k, double* y);
void groupnorm_forward(const double* x, const double* gamma, const double* beta, int c, int hw,
                       int groups, double eps, double* y, double* mean, double* rstd);
void groupnorm_backward(const double* dy, const double* x, const double* gamma, int c, int hw,
                        int groups, const double* mean, const double* rstd,
                        double* dx, double* dgamma, double* dbeta);
void upsample2x_forward(const double* x, int c, int h, int w, double* y);
void upsample2x_backward(const double* dy, int c, int h, int w, double* dx);
void geostrophy_uv(const double* ssh, const std::uint8_t* mask, const double* lat_centers,
                   int n_lat, int n_lon, double res_deg, const GeostrophyParams& p,
                   double* u, double* v, std::uint8_t* out_mask);
void masked_gaussian_smooth(const double* x, const std::uint8_t* mask, int h, int w, double sigma,
                            double* y, std::uint8_t* out_mask);
void gaussian_merge_accumulate(const double* patch, int ph, int pw, int row0, int col0,
                               double sigma, int gh, int gw, double* num, double* den);
}  // namespace ref

}  // namespace surfcast::kern
