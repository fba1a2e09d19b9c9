#include <doctest.h>

#include <cstring>
#include <vector>

#include "surfcast/kernels.hpp"
#include "test_util.hpp"

using namespace surfcast;
using namespace surfcast::kern;
using testutil::bitwise_equal;
using testutil::fd_max_rel_err;
using testutil::randv;

namespace {

struct ConvCase {
    ConvSpec cs;
    std::vector<double> x, w, b;
};

ConvCase make_case(Rng& rng, int cin, int h, int w, int cout, int k, int stride, int pt, int pb, int pl,
                   int pr, int dil) {
    ConvCase c;
    c.cs = make_conv_spec(cin, h, w, cout, k, k, stride, pt, pb, pl, pr, dil);
    c.x = randv(rng, static_cast<std::size_t>(cin) * h * w);
    c.w = randv(rng, static_cast<std::size_t>(cout) * cin * k * k, 0.3);
    c.b = randv(rng, cout, 0.1);
    return c;
}

}  // namespace

TEST_CASE("conv2d parallel matches the serial reference bitwise") {
    Rng rng(11);
    std::vector<ConvCase> cases;
    cases.push_back(make_case(rng, 3, 12, 14, 5, 4, 1, 1, 2, 1, 2, 1));  // 4x4 same-size
    cases.push_back(make_case(rng, 4, 16, 16, 4, 3, 2, 1, 1, 1, 1, 1));  // strided
    cases.push_back(make_case(rng, 2, 10, 10, 6, 3, 1, 2, 2, 2, 2, 2));  // dilated
    cases.push_back(make_case(rng, 5, 8, 8, 7, 1, 1, 0, 0, 0, 0, 1));    // pointwise

    for (const auto& c : cases) {
        const std::size_t yn = static_cast<std::size_t>(c.cs.cout) * c.cs.out_h * c.cs.out_w;
        std::vector<double> y1(yn), y2(yn);
        conv2d_forward(c.x.data(), c.w.data(), c.b.data(), c.cs, y1.data());
        ref::conv2d_forward(c.x.data(), c.w.data(), c.b.data(), c.cs, y2.data());
        CHECK(bitwise_equal(y1, y2));

        const auto dy = randv(rng, yn);
        std::vector<double> dx1(c.x.size()), dx2(c.x.size());
        conv2d_backward_input(dy.data(), c.w.data(), c.cs, dx1.data());
        ref::conv2d_backward_input(dy.data(), c.w.data(), c.cs, dx2.data());
        CHECK(bitwise_equal(dx1, dx2));

        std::vector<double> dw1(c.w.size(), 0.0), dw2(c.w.size(), 0.0);
        std::vector<double> db1(c.b.size(), 0.0), db2(c.b.size(), 0.0);
        conv2d_backward_params(dy.data(), c.x.data(), c.cs, dw1.data(), db1.data());
        ref::conv2d_backward_params(dy.data(), c.x.data(), c.cs, dw2.data(), db2.data());
        CHECK(bitwise_equal(dw1, dw2));
        CHECK(bitwise_equal(db1, db2));
    }
}

TEST_CASE("conv2d backward agrees with finite differences") {
    Rng rng(23);
    ConvCase c = make_case(rng, 2, 7, 9, 3, 3, 2, 1, 1, 1, 1, 1);
    const std::size_t yn = static_cast<std::size_t>(c.cs.cout) * c.cs.out_h * c.cs.out_w;
    const auto proj = randv(rng, yn);  // random projection makes the loss scalar

    auto loss_x = [&](const std::vector<double>& x) {
        std::vector<double> y(yn);
        conv2d_forward(x.data(), c.w.data(), c.b.data(), c.cs, y.data());
        double s = 0.0;
        for (std::size_t i = 0; i < yn; ++i) s += y[i] * proj[i];
        return s;
    };
    std::vector<double> dx(c.x.size());
    conv2d_backward_input(proj.data(), c.w.data(), c.cs, dx.data());
    CHECK(fd_max_rel_err(loss_x, c.x, dx, 40, rng) < 1e-4);

    auto loss_w = [&](const std::vector<double>& w) {
        std::vector<double> y(yn);
        conv2d_forward(c.x.data(), w.data(), c.b.data(), c.cs, y.data());
        double s = 0.0;
        for (std::size_t i = 0; i < yn; ++i) s += y[i] * proj[i];
        return s;
    };
    std::vector<double> dw(c.w.size(), 0.0), db(c.b.size(), 0.0);
    conv2d_backward_params(proj.data(), c.x.data(), c.cs, dw.data(), db.data());
    CHECK(fd_max_rel_err(loss_w, c.w, dw, 40, rng) < 1e-4);
}

TEST_CASE("depthwise conv matches reference and finite differences") {
    Rng rng(37);
    const int C = 5, H = 9, W = 8, K = 3;
    const auto x = randv(rng, static_cast<std::size_t>(C) * H * W);
    const auto w = randv(rng, static_cast<std::size_t>(C) * K * K, 0.3);
    const auto b = randv(rng, C, 0.1);
    const std::size_t n = x.size();

    std::vector<double> y1(n), y2(n);
    dwconv2d_forward(x.data(), w.data(), b.data(), C, H, W, K, y1.data());
    ref::dwconv2d_forward(x.data(), w.data(), b.data(), C, H, W, K, y2.data());
    CHECK(bitwise_equal(y1, y2));

    const auto proj = randv(rng, n);
    auto loss_x = [&](const std::vector<double>& xx) {
        std::vector<double> y(n);
        dwconv2d_forward(xx.data(), w.data(), b.data(), C, H, W, K, y.data());
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += y[i] * proj[i];
        return s;
    };
    std::vector<double> dx(n);
    dwconv2d_backward_input(proj.data(), w.data(), C, H, W, K, dx.data());
    CHECK(fd_max_rel_err(loss_x, x, dx, 30, rng) < 1e-4);

    auto loss_w = [&](const std::vector<double>& ww) {
        std::vector<double> y(n);
        dwconv2d_forward(x.data(), ww.data(), b.data(), C, H, W, K, y.data());
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += y[i] * proj[i];
        return s;
    };
    std::vector<double> dw(w.size(), 0.0), db(b.size(), 0.0);
    dwconv2d_backward_params(proj.data(), x.data(), C, H, W, K, dw.data(), db.data());
    CHECK(fd_max_rel_err(loss_w, w, dw, 30, rng) < 1e-4);
}

TEST_CASE("groupnorm matches reference bitwise and finite differences") {
    Rng rng(51);
    const int C = 8, HW = 30, G = 4;
    const auto x = randv(rng, static_cast<std::size_t>(C) * HW);
    const auto gamma = randv(rng, C, 0.5);
    const auto beta = randv(rng, C, 0.5);
    const double eps = 1e-5;

    std::vector<double> y1(x.size()), y2(x.size());
    std::vector<double> m1(G), r1(G), m2(G), r2(G);
    groupnorm_forward(x.data(), gamma.data(), beta.data(), C, HW, G, eps, y1.data(), m1.data(), r1.data());
    ref::groupnorm_forward(x.data(), gamma.data(), beta.data(), C, HW, G, eps, y2.data(), m2.data(),
                           r2.data());
    CHECK(bitwise_equal(y1, y2));
    CHECK(bitwise_equal(m1, m2));
    CHECK(bitwise_equal(r1, r2));

    const auto proj = randv(rng, x.size());
    std::vector<double> dx1(x.size()), dx2(x.size());
    std::vector<double> dg1(C, 0.0), dg2(C, 0.0), db1(C, 0.0), db2(C, 0.0);
    groupnorm_backward(proj.data(), x.data(), gamma.data(), C, HW, G, m1.data(), r1.data(), dx1.data(),
                       dg1.data(), db1.data());
    ref::groupnorm_backward(proj.data(), x.data(), gamma.data(), C, HW, G, m2.data(), r2.data(),
                            dx2.data(), dg2.data(), db2.data());
    CHECK(bitwise_equal(dx1, dx2));
    CHECK(bitwise_equal(dg1, dg2));

    auto loss_x = [&](const std::vector<double>& xx) {
        std::vector<double> y(xx.size()), m(G), r(G);
        groupnorm_forward(xx.data(), gamma.data(), beta.data(), C, HW, G, eps, y.data(), m.data(),
                          r.data());
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * proj[i];
        return s;
    };
    CHECK(fd_max_rel_err(loss_x, x, dx1, 40, rng) < 1e-4);

    auto loss_g = [&](const std::vector<double>& gg) {
        std::vector<double> y(x.size()), m(G), r(G);
        groupnorm_forward(x.data(), gg.data(), beta.data(), C, HW, G, eps, y.data(), m.data(), r.data());
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * proj[i];
        return s;
    };
    CHECK(fd_max_rel_err(loss_g, gamma, dg1, 8, rng) < 1e-4);
}

TEST_CASE("gelu gradient matches finite differences") {
    Rng rng(67);
    const auto x = randv(rng, 64);
    const auto proj = randv(rng, 64);
    auto loss = [&](const std::vector<double>& xx) {
        std::vector<double> y(xx.size());
        gelu_forward(xx.data(), static_cast<int>(xx.size()), y.data());
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * proj[i];
        return s;
    };
    std::vector<double> dx(x.size());
    gelu_backward(proj.data(), x.data(), static_cast<int>(x.size()), dx.data());
    CHECK(fd_max_rel_err(loss, x, dx, 30, rng) < 1e-5);
}

TEST_CASE("bilinear upsampling matches reference bitwise and its transpose") {
    Rng rng(71);
    const int C = 3, H = 6, W = 5;
    const auto x = randv(rng, static_cast<std::size_t>(C) * H * W);
    std::vector<double> y1(static_cast<std::size_t>(C) * 4 * H * W), y2(y1.size());
    upsample2x_forward(x.data(), C, H, W, y1.data());
    ref::upsample2x_forward(x.data(), C, H, W, y2.data());
    CHECK(bitwise_equal(y1, y2));

    const auto proj = randv(rng, y1.size());
    std::vector<double> dx1(x.size()), dx2(x.size());
    upsample2x_backward(proj.data(), C, H, W, dx1.data());
    ref::upsample2x_backward(proj.data(), C, H, W, dx2.data());
    CHECK(bitwise_equal(dx1, dx2));

    auto loss = [&](const std::vector<double>& xx) {
        std::vector<double> y(y1.size());
        upsample2x_forward(xx.data(), C, H, W, y.data());
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * proj[i];
        return s;
    };
    CHECK(fd_max_rel_err(loss, x, dx1, 25, rng) < 1e-6);
}

TEST_CASE("linear layer gradients match finite differences") {
    Rng rng(83);
    const int N = 7, IN = 5, OUT = 4;
    const auto x = randv(rng, static_cast<std::size_t>(N) * IN);
    const auto w = randv(rng, static_cast<std::size_t>(OUT) * IN, 0.4);
    const auto b = randv(rng, OUT, 0.1);
    const auto proj = randv(rng, static_cast<std::size_t>(N) * OUT);

    std::vector<double> dx(x.size()), dw(w.size(), 0.0), db(b.size(), 0.0);
    linear_backward(proj.data(), x.data(), w.data(), N, IN, OUT, dx.data(), dw.data(), db.data());

    auto loss_x = [&](const std::vector<double>& xx) {
        std::vector<double> y(static_cast<std::size_t>(N) * OUT);
        linear_forward(xx.data(), w.data(), b.data(), N, IN, OUT, y.data());
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * proj[i];
        return s;
    };
    CHECK(fd_max_rel_err(loss_x, x, dx, 20, rng) < 1e-6);

    auto loss_w = [&](const std::vector<double>& ww) {
        std::vector<double> y(static_cast<std::size_t>(N) * OUT);
        linear_forward(x.data(), ww.data(), b.data(), N, IN, OUT, y.data());
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * proj[i];
        return s;
    };
    CHECK(fd_max_rel_err(loss_w, w, dw, 20, rng) < 1e-6);
}

TEST_CASE("geostrophy, smoothing and merge kernels match their references bitwise") {
    Rng rng(97);
    const int H = 24, W = 31;
    const std::size_t n = static_cast<std::size_t>(H) * W;
    auto ssh = randv(rng, n, 0.1);
    std::vector<std::uint8_t> mask(n, 1);
    for (int i = 0; i < 40; ++i) mask[rng.uniform_int(n)] = 0;
    std::vector<double> lats(H);
    for (int i = 0; i < H; ++i) lats[i] = 32.0 + (i + 0.5) / 30.0;

    GeostrophyParams gp;
    for (bool one_sided : {true, false}) {
        gp.one_sided_edges = one_sided;
        std::vector<double> u1(n), v1(n), u2(n), v2(n);
        std::vector<std::uint8_t> m1(n), m2(n);
        geostrophy_uv(ssh.data(), mask.data(), lats.data(), H, W, 1.0 / 30.0, gp, u1.data(), v1.data(),
                      m1.data());
        ref::geostrophy_uv(ssh.data(), mask.data(), lats.data(), H, W, 1.0 / 30.0, gp, u2.data(),
                           v2.data(), m2.data());
        CHECK(bitwise_equal(u1, u2));
        CHECK(bitwise_equal(v1, v2));
        CHECK(std::memcmp(m1.data(), m2.data(), n) == 0);
    }

    std::vector<double> s1(n), s2(n);
    std::vector<std::uint8_t> sm1(n), sm2(n);
    masked_gaussian_smooth(ssh.data(), mask.data(), H, W, 2.0, s1.data(), sm1.data());
    ref::masked_gaussian_smooth(ssh.data(), mask.data(), H, W, 2.0, s2.data(), sm2.data());
    CHECK(bitwise_equal(s1, s2));
    CHECK(std::memcmp(sm1.data(), sm2.data(), n) == 0);

    const int ph = 8, pw = 8;
    auto patch = randv(rng, static_cast<std::size_t>(ph) * pw);
    std::vector<double> num1(n, 0.0), den1(n, 0.0), num2(n, 0.0), den2(n, 0.0);
    gaussian_merge_accumulate(patch.data(), ph, pw, 5, 7, 2.0, H, W, num1.data(), den1.data());
    ref::gaussian_merge_accumulate(patch.data(), ph, pw, 5, 7, 2.0, H, W, num2.data(), den2.data());
    CHECK(bitwise_equal(num1, num2));
    CHECK(bitwise_equal(den1, den2));
}
