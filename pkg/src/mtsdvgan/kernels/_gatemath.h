#ifndef MTS_GATEMATH_H
#define MTS_GATEMATH_H

/* Elementwise LSTM gate math on contiguous (B, 4h)/(B, h) blocks.
 *
 * The float32 path uses a Cody-Waite range reduction plus a degree-5
 * polynomial for exp (~3e-7 relative error), written so the compiler can
 * vectorize the whole gate loop.  The float64 path calls libm: it exists
 * for gradient checking, where accuracy matters and speed does not.
 */

#include <math.h>
#include <stdint.h>
#include <string.h>

static inline float mts_expf(float x) {
    const float LOG2E = 1.44269504088896341f;
    const float LN2_HI = 0.693359375f;
    const float LN2_LO = -2.12194440e-4f;
    float r, f, p, y;
    int32_t n;
    union { float fl; uint32_t u; } bits;

    if (x > 80.0f) x = 80.0f;
    if (x < -80.0f) x = -80.0f;
    /* round-to-nearest via int conversion: immune to fast-math folding */
    n = (int32_t)(x * LOG2E + copysignf(0.5f, x));
    r = (float)n;
    f = x - r * LN2_HI;
    f -= r * LN2_LO;
    p = 1.9875691500e-4f;
    p = p * f + 1.3981999507e-3f;
    p = p * f + 8.3334519073e-3f;
    p = p * f + 4.1665795894e-2f;
    p = p * f + 1.6666665459e-1f;
    p = p * f + 5.0000001201e-1f;
    y = p * f * f + f + 1.0f;
    bits.fl = y;
    bits.u += ((uint32_t)n) << 23;
    return bits.fl;
}

static inline float mts_sigf(float x) { return 1.0f / (1.0f + mts_expf(-x)); }
static inline float mts_tanhf(float x) {
    float e = mts_expf(2.0f * x);
    return 1.0f - 2.0f / (e + 1.0f);
}

static inline double mts_sigd(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + exp(-x));
    double e = exp(x);
    return e / (1.0 + e);
}

static void mts_gate_fwd_f32(float *restrict G, float *restrict C,
                             float *restrict TC, float *restrict H,
                             const float *restrict bias,
                             const float *restrict c_prev,
                             int B, int h) {
    int b, j;
    for (b = 0; b < B; ++b) {
        float *g = G + (size_t)b * 4 * h;
        float *c = C + (size_t)b * h;
        float *tc = TC + (size_t)b * h;
        float *hh = H + (size_t)b * h;
        const float *cp = c_prev + (size_t)b * h;
        for (j = 0; j < h; ++j) {
            float f = mts_sigf(g[j] + bias[j]);
            float i = mts_sigf(g[h + j] + bias[h + j]);
            float gg = mts_tanhf(g[2 * h + j] + bias[2 * h + j]);
            float o = mts_sigf(g[3 * h + j] + bias[3 * h + j]);
            float cc = f * cp[j] + i * gg;
            float t = mts_tanhf(cc);
            g[j] = f;
            g[h + j] = i;
            g[2 * h + j] = gg;
            g[3 * h + j] = o;
            c[j] = cc;
            tc[j] = t;
            hh[j] = o * t;
        }
    }
}

static void mts_gate_fwd_f64(double *restrict G, double *restrict C,
                             double *restrict TC, double *restrict H,
                             const double *restrict bias,
                             const double *restrict c_prev,
                             int B, int h) {
    int b, j;
    for (b = 0; b < B; ++b) {
        double *g = G + (size_t)b * 4 * h;
        double *c = C + (size_t)b * h;
        double *tc = TC + (size_t)b * h;
        double *hh = H + (size_t)b * h;
        const double *cp = c_prev + (size_t)b * h;
        for (j = 0; j < h; ++j) {
            double f = mts_sigd(g[j] + bias[j]);
            double i = mts_sigd(g[h + j] + bias[h + j]);
            double gg = tanh(g[2 * h + j] + bias[2 * h + j]);
            double o = mts_sigd(g[3 * h + j] + bias[3 * h + j]);
            double cc = f * cp[j] + i * gg;
            double t = tanh(cc);
            g[j] = f;
            g[h + j] = i;
            g[2 * h + j] = gg;
            g[3 * h + j] = o;
            c[j] = cc;
            tc[j] = t;
            hh[j] = o * t;
        }
    }
}

/* Backward: pure arithmetic on cached activations, no transcendentals.
 * dh_carry is consumed (gradient arriving from step t+1), dc_carry is
 * updated in place, dZ receives preactivation gradients. */
static void mts_gate_bwd_f32(const float *restrict G, const float *restrict TC,
                             const float *restrict c_prev, const float *restrict d_ext,
                             const float *restrict dh_carry, float *restrict dc_carry,
                             float *restrict dZ, int B, int h) {
    int b, j;
    for (b = 0; b < B; ++b) {
        const float *g = G + (size_t)b * 4 * h;
        const float *tc = TC + (size_t)b * h;
        const float *cp = c_prev + (size_t)b * h;
        const float *de = d_ext + (size_t)b * h;
        const float *dhc = dh_carry + (size_t)b * h;
        float *dcc = dc_carry + (size_t)b * h;
        float *dz = dZ + (size_t)b * 4 * h;
        for (j = 0; j < h; ++j) {
            float f = g[j];
            float i = g[h + j];
            float gg = g[2 * h + j];
            float o = g[3 * h + j];
            float t = tc[j];
            float dh = de[j] + dhc[j];
            float do_ = dh * t;
            float dc = dcc[j] + dh * o * (1.0f - t * t);
            dz[j] = dc * cp[j] * f * (1.0f - f);
            dz[h + j] = dc * gg * i * (1.0f - i);
            dz[2 * h + j] = dc * i * (1.0f - gg * gg);
            dz[3 * h + j] = do_ * o * (1.0f - o);
            dcc[j] = dc * f;
        }
    }
}

static void mts_gate_bwd_f64(const double *restrict G, const double *restrict TC,
                             const double *restrict c_prev, const double *restrict d_ext,
                             const double *restrict dh_carry, double *restrict dc_carry,
                             double *restrict dZ, int B, int h) {
    int b, j;
    for (b = 0; b < B; ++b) {
        const double *g = G + (size_t)b * 4 * h;
        const double *tc = TC + (size_t)b * h;
        const double *cp = c_prev + (size_t)b * h;
        const double *de = d_ext + (size_t)b * h;
        const double *dhc = dh_carry + (size_t)b * h;
        double *dcc = dc_carry + (size_t)b * h;
        double *dz = dZ + (size_t)b * 4 * h;
        for (j = 0; j < h; ++j) {
            double f = g[j];
            double i = g[h + j];
            double gg = g[2 * h + j];
            double o = g[3 * h + j];
            double t = tc[j];
            double dh = de[j] + dhc[j];
            double do_ = dh * t;
            double dc = dcc[j] + dh * o * (1.0 - t * t);
            dz[j] = dc * cp[j] * f * (1.0 - f);
            dz[h + j] = dc * gg * i * (1.0 - i);
            dz[2 * h + j] = dc * i * (1.0 - gg * gg);
            dz[3 * h + j] = do_ * o * (1.0 - o);
            dcc[j] = dc * f;
        }
    }
}

#endif /* MTS_GATEMATH_H */
