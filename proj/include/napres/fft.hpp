// Copyright NAPReS contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <napres/error.hpp>

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace napres {

/// One-sided real FFT of a fixed length, backed by FFTW. Planning uses
/// FFTW_ESTIMATE so results do not depend on machine timing. Plans are shared
/// between instances and executed with the new-array interface, which FFTW
/// documents as thread-safe; each instance owns its scratch buffers, so use one
/// instance per thread.
class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n), plan_(plan_for(n)), buf_(std::make_unique<Buffers>(n)) {}

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  /// Transforms `in` (zero-padded to size()) into size()/2+1 bins.
  void forward(std::span<const double> in, std::span<std::complex<double>> out) {
    if (in.size() > n_ || out.size() != bins()) throw Error("RealFft: bad buffer sizes");
    Buffers& buf = *buf_;
    std::copy(in.begin(), in.end(), buf.real);
    std::fill(buf.real + in.size(), buf.real + n_, 0.0);
    fftw_execute_dft_r2c(plan_->plan, buf.real, buf.cplx);
    for (std::size_t k = 0; k < bins(); ++k) out[k] = {buf.cplx[k][0], buf.cplx[k][1]};
  }

 private:
  struct Plan {
    fftw_plan plan = nullptr;
    ~Plan() {
      if (plan) fftw_destroy_plan(plan);
    }
  };

  struct Buffers {
    explicit Buffers(std::size_t n)
        : real(fftw_alloc_real(n)), cplx(fftw_alloc_complex(n / 2 + 1)) {}
    ~Buffers() {
      fftw_free(real);
      fftw_free(cplx);
    }
    Buffers(const Buffers&) = delete;
    Buffers& operator=(const Buffers&) = delete;
    double* real;
    fftw_complex* cplx;
  };

  static std::shared_ptr<Plan> plan_for(std::size_t n) {
    if (n < 2) throw Error("FFT length must be at least 2");
    static std::mutex mu;
    static std::map<std::size_t, std::shared_ptr<Plan>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    Buffers buf(n);
    auto p = std::make_shared<Plan>();
    p->plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), buf.real, buf.cplx, FFTW_ESTIMATE);
    if (!p->plan) throw Error("FFTW planning failed");
    cache.emplace(n, p);
    return p;
  }

  std::size_t n_;
  std::shared_ptr<Plan> plan_;
  std::unique_ptr<Buffers> buf_;
};

}  // namespace napres
