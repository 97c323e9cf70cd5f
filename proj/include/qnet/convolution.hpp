#pragma once

// Truncated convolutions and power-series inversion on t = 0..n-1.
// Small sizes use the direct sums; large sizes go through FFTW.

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstddef>
#include <mutex>
#include <vector>

namespace qnet::conv {

struct Options {
    std::size_t direct_limit = 8192;  // output lengths above this use FFT
};

namespace detail {

// FFTW's planner is not thread-safe; execution of distinct plans is.
inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

class RealFft {
public:
    explicit RealFft(std::size_t n) : n_(n) {
        in_ = fftw_alloc_real(n);
        out_ = fftw_alloc_complex(n / 2 + 1);
        std::lock_guard<std::mutex> lock(planner_mutex());
        fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
        inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), out_, in_, FFTW_ESTIMATE);
    }
    ~RealFft() {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(inv_);
        fftw_free(in_);
        fftw_free(out_);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    std::vector<std::complex<double>> forward(const std::vector<double>& a, std::size_t len) {
        std::fill(in_, in_ + n_, 0.0);
        std::copy(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(std::min(len, a.size())), in_);
        fftw_execute(fwd_);
        std::vector<std::complex<double>> out(n_ / 2 + 1);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = {out_[i][0], out_[i][1]};
        return out;
    }

    std::vector<double> inverse(const std::vector<std::complex<double>>& spec, std::size_t len) {
        for (std::size_t i = 0; i < spec.size(); ++i) {
            out_[i][0] = spec[i].real();
            out_[i][1] = spec[i].imag();
        }
        fftw_execute(inv_);
        std::vector<double> out(len);
        const double scale = 1.0 / static_cast<double>(n_);
        for (std::size_t i = 0; i < len; ++i) out[i] = in_[i] * scale;
        return out;
    }

private:
    std::size_t n_;
    double* in_;
    fftw_complex* out_;
    fftw_plan fwd_;
    fftw_plan inv_;
};

inline std::vector<double> fft_multiply(const std::vector<double>& a, std::size_t la, const std::vector<double>& b,
                                        std::size_t lb, std::size_t n_out) {
    // Length la + lb - 1 avoids any circular wrap-around.
    RealFft fft(next_pow2(la + lb - 1));
    auto A = fft.forward(a, la);
    const auto B = fft.forward(b, lb);
    for (std::size_t i = 0; i < A.size(); ++i) A[i] *= B[i];
    return fft.inverse(A, n_out);
}

}  // namespace detail

/// c[t] = sum_{j=0}^{t} a[j] b[t-j] for t < n_out.
inline std::vector<double> convolve(const std::vector<double>& a, const std::vector<double>& b, std::size_t n_out,
                                    const Options& opt = {}) {
    const std::size_t la = std::min(a.size(), n_out), lb = std::min(b.size(), n_out);
    if (la == 0 || lb == 0) return std::vector<double>(n_out, 0.0);
    if (n_out <= opt.direct_limit) {
        std::vector<double> c(n_out, 0.0);
        for (std::size_t i = 0; i < la; ++i) {
            if (a[i] == 0.0) continue;
            const std::size_t jmax = std::min(lb, n_out - i);
            for (std::size_t j = 0; j < jmax; ++j) c[i + j] += a[i] * b[j];
        }
        return c;
    }
    return detail::fft_multiply(a, la, b, lb, n_out);
}

/// Renewal sequence R = 1 / (1 - F): R[0] = 1, R[t] = sum_{j=1}^{t} f[j] R[t-j].
/// f[0] must be zero.
inline std::vector<double> renewal(const std::vector<double>& f, std::size_t n_out, const Options& opt = {}) {
    std::vector<double> R(n_out, 0.0);
    if (n_out == 0) return R;
    const std::size_t lf = std::max<std::size_t>(1, std::min(f.size(), n_out));
    if (n_out <= opt.direct_limit) {
        R[0] = 1.0;
        for (std::size_t t = 1; t < n_out; ++t) {
            double s = 0.0;
            const std::size_t jmax = std::min(t, lf - 1);
            for (std::size_t j = 1; j <= jmax; ++j) s += f[j] * R[t - j];
            R[t] = s;
        }
        return R;
    }
    // Newton iteration H <- H (2 - G H) for G = 1 - F, doubling precision.
    std::vector<double> G(lf, 0.0);
    G[0] = 1.0;
    for (std::size_t j = 1; j < lf && j < f.size(); ++j) G[j] = -f[j];
    std::vector<double> H{1.0};
    std::size_t k = 1;
    while (k < n_out) {
        const std::size_t k2 = std::min(2 * k, n_out);
        auto GH = convolve(G, H, k2, opt);
        for (auto& x : GH) x = -x;
        GH[0] += 2.0;
        H = convolve(H, GH, k2, opt);
        k = k2;
    }
    return H;
}

}  // namespace qnet::conv
