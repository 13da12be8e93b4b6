#include "flexo/kernels.hpp"

#ifdef FLEXO_HAVE_AVX2

#include <cassert>
#include <cmath>
#include <immintrin.h>

namespace flexo::kern::avx2 {

namespace {

// Vectorized double exp. Cody-Waite range reduction followed by a degree-13
// Taylor polynomial on |r| <= ln2/2, then exponent reassembly through the
// IEEE bit pattern. Inputs below -708 flush to 0, above 709 to +inf; NaN is
// not handled (callers only pass finite values).
inline __m256d exp4(__m256d x) {
    const __m256d log2e  = _mm256_set1_pd(1.4426950408889634074);
    const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
    const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);
    const __m256d cap_hi = _mm256_set1_pd(709.0);
    const __m256d cap_lo = _mm256_set1_pd(-708.0);

    const __m256d over  = _mm256_cmp_pd(x, cap_hi, _CMP_GT_OQ);
    const __m256d under = _mm256_cmp_pd(x, cap_lo, _CMP_LT_OQ);
    const __m256d xc = _mm256_min_pd(_mm256_max_pd(x, cap_lo), cap_hi);

    const __m256d nf = _mm256_round_pd(_mm256_mul_pd(xc, log2e),
                                       _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(nf, ln2_hi, xc);
    r = _mm256_fnmadd_pd(nf, ln2_lo, r);

    // 1/k! for k = 13 down to 2.
    __m256d p = _mm256_set1_pd(1.6059043836821613e-10);
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.0876756987868096e-09));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.5052108385441720e-08));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.7557319223985893e-07));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.7557319223985888e-06));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.4801587301587302e-05));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.9841269841269841e-04));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.3888888888888889e-03));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(8.3333333333333333e-03));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(4.1666666666666664e-02));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.6666666666666666e-01));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(5.0e-01));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

    // 2^n via the exponent field; n in [-1022, 1023] after clamping.
    const __m128i n32 = _mm256_cvtpd_epi32(nf);
    const __m256i n64 = _mm256_cvtepi32_epi64(n32);
    const __m256i bits = _mm256_slli_epi64(
        _mm256_add_epi64(n64, _mm256_set1_epi64x(1023)), 52);
    const __m256d scale = _mm256_castsi256_pd(bits);

    __m256d y = _mm256_mul_pd(p, scale);
    y = _mm256_blendv_pd(y, _mm256_set1_pd(HUGE_VAL), over);
    y = _mm256_blendv_pd(y, _mm256_setzero_pd(), under);
    return y;
}

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s2 = _mm_add_pd(lo, hi);
    const __m128d s1 = _mm_add_sd(s2, _mm_unpackhi_pd(s2, s2));
    return _mm_cvtsd_f64(s1);
}

} // namespace

double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    const std::size_t n = a.size();
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(&a[i]), _mm256_loadu_pd(&b[i]), acc);
    }
    double tail = 0.0;
    for (; i < n; ++i) tail += a[i] * b[i];
    return hsum(acc) + tail;
}

double sum(std::span<const double> a) {
    const std::size_t n = a.size();
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(&a[i]));
    double tail = 0.0;
    for (; i < n; ++i) tail += a[i];
    return hsum(acc) + tail;
}

double sumsq_diff(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    const std::size_t n = a.size();
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(&a[i]), _mm256_loadu_pd(&b[i]));
        acc = _mm256_fmadd_pd(d, d, acc);
    }
    double tail = 0.0;
    for (; i < n; ++i) {
        const double d = a[i] - b[i];
        tail += d * d;
    }
    return hsum(acc) + tail;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    const std::size_t n = x.size();
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d yi = _mm256_fmadd_pd(av, _mm256_loadu_pd(&x[i]),
                                           _mm256_loadu_pd(&y[i]));
        _mm256_storeu_pd(&y[i], yi);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void shift_clamp(std::span<double> out, std::span<const double> noise,
                 double shift, double lo, double hi) {
    assert(out.size() == noise.size());
    const std::size_t n = out.size();
    const __m256d sv = _mm256_set1_pd(shift);
    const __m256d lov = _mm256_set1_pd(lo);
    const __m256d hiv = _mm256_set1_pd(hi);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_add_pd(_mm256_loadu_pd(&noise[i]), sv);
        v = _mm256_min_pd(_mm256_max_pd(v, lov), hiv);
        _mm256_storeu_pd(&out[i], v);
    }
    for (; i < n; ++i) {
        double v = noise[i] + shift;
        if (v < lo) v = lo;
        if (v > hi) v = hi;
        out[i] = v;
    }
}

void exp_inplace(std::span<double> a) {
    const std::size_t n = a.size();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(&a[i], exp4(_mm256_loadu_pd(&a[i])));
    }
    for (; i < n; ++i) a[i] = std::exp(a[i]);
}

double exp_scaled_sum(std::span<const double> h, double scale) {
    const std::size_t n = h.size();
    const __m256d sv = _mm256_set1_pd(scale);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(acc, exp4(_mm256_mul_pd(_mm256_loadu_pd(&h[i]), sv)));
    }
    double tail = 0.0;
    for (; i < n; ++i) tail += std::exp(h[i] * scale);
    return hsum(acc) + tail;
}

void square_affine_acc(std::span<double> acc, std::span<const double> z,
                       double a, double b) {
    assert(acc.size() == z.size());
    const std::size_t n = acc.size();
    const __m256d av = _mm256_set1_pd(a);
    const __m256d bv = _mm256_set1_pd(b);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d t = _mm256_fmadd_pd(bv, _mm256_loadu_pd(&z[i]), av);
        const __m256d r = _mm256_fmadd_pd(t, t, _mm256_loadu_pd(&acc[i]));
        _mm256_storeu_pd(&acc[i], r);
    }
    for (; i < n; ++i) {
        const double t = a + b * z[i];
        acc[i] += t * t;
    }
}

} // namespace flexo::kern::avx2

#endif // FLEXO_HAVE_AVX2
