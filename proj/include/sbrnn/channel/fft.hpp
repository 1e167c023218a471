#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <vector>

namespace sbrnn::channel {

using Complex = std::complex<double>;

/// Process-wide cache of FFTW plans, keyed by (length, direction). Plans are
/// created unaligned so they can run on any buffer of the right length.
class FftPlans {
public:
    static FftPlans& instance()
    {
        static FftPlans plans;
        return plans;
    }

    fftw_plan get(std::size_t n, int sign)
    {
        std::lock_guard lock(mutex_);
        auto key = std::make_pair(n, sign);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second.get();
        std::vector<Complex> scratch(n);
        auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
        fftw_plan p = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (!p) throw std::runtime_error("FFTW plan creation failed");
        plans_.emplace(key, PlanPtr(p));
        return p;
    }

    FftPlans(const FftPlans&) = delete;
    FftPlans& operator=(const FftPlans&) = delete;

private:
    FftPlans() = default;

    struct Destroy {
        void operator()(fftw_plan p) const { fftw_destroy_plan(p); }
    };
    using PlanPtr = std::unique_ptr<std::remove_pointer_t<fftw_plan>, Destroy>;

    std::mutex mutex_;
    std::map<std::pair<std::size_t, int>, PlanPtr> plans_;
};

/// In-place unnormalized forward DFT: X_k = sum_t x_t exp(-j 2 pi k t / N).
inline void fft_inplace(std::span<Complex> data)
{
    if (data.empty()) return;
    fftw_plan p = FftPlans::instance().get(data.size(), FFTW_FORWARD);
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(p, buf, buf);
}

/// In-place inverse DFT including the 1/N factor.
inline void ifft_inplace(std::span<Complex> data)
{
    if (data.empty()) return;
    fftw_plan p = FftPlans::instance().get(data.size(), FFTW_BACKWARD);
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(p, buf, buf);
    const double inv = 1.0 / static_cast<double>(data.size());
    for (auto& v : data) v *= inv;
}

/// Signed frequency of DFT bin k for an N-point transform at `rate`.
inline double bin_frequency(std::size_t k, std::size_t n, double rate)
{
    const auto kk = static_cast<double>(k);
    const auto nn = static_cast<double>(n);
    return (2 * k <= n ? kk : kk - nn) * rate / nn;
}

} // namespace sbrnn::channel
