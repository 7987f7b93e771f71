#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <fftw3.h>

namespace fracevol {

namespace detail {

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

/// FFTW plan (forward by default); execution on fresh aligned buffers is thread safe.
class ForwardFft {
public:
    explicit ForwardFft(std::size_t n, int sign = FFTW_FORWARD) : n_(n) {
        std::lock_guard lock(fftw_planner_mutex());
        auto* in = fftw_alloc_complex(n);
        auto* out = fftw_alloc_complex(n);
        plan_ = fftw_plan_dft_1d(int(n), in, out, sign, FFTW_ESTIMATE);
        fftw_free(in);
        fftw_free(out);
    }
    ~ForwardFft() {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan_);
    }
    ForwardFft(const ForwardFft&) = delete;
    ForwardFft& operator=(const ForwardFft&) = delete;

    void execute(fftw_complex* in, fftw_complex* out) const { fftw_execute_dft(plan_, in, out); }
    std::size_t size() const noexcept { return n_; }

private:
    std::size_t n_;
    fftw_plan plan_;
};

struct FftwBuffer {
    explicit FftwBuffer(std::size_t n) : data(fftw_alloc_complex(n)) {}
    ~FftwBuffer() { fftw_free(data); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
    fftw_complex* data;
};

} // namespace detail

/// Full linear convolution c_k = sum_j a_j b_{k-j}, k < out_len.
///
/// Short inputs are summed directly; longer ones go through a zero-padded FFT.
inline std::vector<double> linear_convolution(std::span<const double> a, std::span<const double> b,
                                              std::size_t out_len) {
    std::vector<double> c(out_len, 0.0);
    if (a.empty() || b.empty()) return c;
    if (a.size() * b.size() <= 4096) {
        for (std::size_t k = 0; k < out_len; ++k)
            for (std::size_t j = 0; j < a.size() && j <= k; ++j)
                if (k - j < b.size()) c[k] += a[j] * b[k - j];
        return c;
    }
    std::size_t m = 1;
    while (m < a.size() + b.size()) m <<= 1;
    detail::ForwardFft fwd(m), inv(m, FFTW_BACKWARD);
    detail::FftwBuffer x(m), y(m), fx(m), fy(m);
    for (std::size_t i = 0; i < m; ++i) {
        x.data[i][0] = i < a.size() ? a[i] : 0.0;
        y.data[i][0] = i < b.size() ? b[i] : 0.0;
        x.data[i][1] = y.data[i][1] = 0.0;
    }
    fwd.execute(x.data, fx.data);
    fwd.execute(y.data, fy.data);
    for (std::size_t i = 0; i < m; ++i) {
        const double re = fx.data[i][0] * fy.data[i][0] - fx.data[i][1] * fy.data[i][1];
        const double im = fx.data[i][0] * fy.data[i][1] + fx.data[i][1] * fy.data[i][0];
        fx.data[i][0] = re;
        fx.data[i][1] = im;
    }
    inv.execute(fx.data, x.data);
    for (std::size_t k = 0; k < out_len && k < m; ++k) c[k] = x.data[k][0] / double(m);
    return c;
}

/// Causal convolution against a fixed kernel: c_i = sum_{j<=i} g_{i-j} p_j for i < n.
/// The kernel spectrum is computed once so repeated application costs two FFTs.
class LagConvolver {
public:
    explicit LagConvolver(std::vector<double> kernel) : g_(std::move(kernel)) {
        const std::size_t n = g_.size();
        if (n <= direct_limit) return;
        m_ = 1;
        while (m_ < 2 * n) m_ <<= 1;
        fwd_ = std::make_shared<detail::ForwardFft>(m_);
        inv_ = std::make_shared<detail::ForwardFft>(m_, FFTW_BACKWARD);
        detail::FftwBuffer x(m_), fx(m_);
        for (std::size_t i = 0; i < m_; ++i) {
            x.data[i][0] = i < n ? g_[i] : 0.0;
            x.data[i][1] = 0.0;
        }
        fwd_->execute(x.data, fx.data);
        spectrum_.resize(2 * m_);
        for (std::size_t i = 0; i < m_; ++i) {
            spectrum_[2 * i] = fx.data[i][0];
            spectrum_[2 * i + 1] = fx.data[i][1];
        }
    }

    std::size_t size() const noexcept { return g_.size(); }
    const std::vector<double>& kernel() const noexcept { return g_; }

    std::vector<double> apply(std::span<const double> p) const {
        const std::size_t n = g_.size();
        std::vector<double> c(n, 0.0);
        if (n <= direct_limit) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j <= i && j < p.size(); ++j) c[i] += g_[i - j] * p[j];
            return c;
        }
        detail::FftwBuffer x(m_), fx(m_);
        for (std::size_t i = 0; i < m_; ++i) {
            x.data[i][0] = i < n && i < p.size() ? p[i] : 0.0;
            x.data[i][1] = 0.0;
        }
        fwd_->execute(x.data, fx.data);
        for (std::size_t i = 0; i < m_; ++i) {
            const double a = fx.data[i][0], b = fx.data[i][1];
            const double c0 = spectrum_[2 * i], d0 = spectrum_[2 * i + 1];
            fx.data[i][0] = a * c0 - b * d0;
            fx.data[i][1] = a * d0 + b * c0;
        }
        inv_->execute(fx.data, x.data);
        for (std::size_t i = 0; i < n; ++i) c[i] = x.data[i][0] / double(m_);
        return c;
    }

    static constexpr std::size_t direct_limit = 48;

private:
    std::vector<double> g_;
    std::size_t m_ = 0;
    std::shared_ptr<detail::ForwardFft> fwd_, inv_;
    std::vector<double> spectrum_;
};

} // namespace fracevol
