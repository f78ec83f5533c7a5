//! Special functions and distribution tails used by the test
//! statistics: log-gamma, regularized incomplete beta/gamma, the error
//! function, Student t and F tail probabilities, and the studentized
//! range distribution evaluated by Gauss-Legendre quadrature.

use std::f64::consts::{PI, SQRT_2};

/// Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection formula
        (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = 0.99999999999980993;
        for (i, c) in COEF.iter().enumerate() {
            acc += c / (x + (i + 1) as f64);
        }
        let t = x + 7.5;
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

// Cody's rational Chebyshev approximations for erf/erfc (the netlib
// CALERF coefficients). Constant-time and accurate to ~1e-16, which the
// quadrature loops below lean on heavily.
const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
const ERF_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const ERF_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
const ERF_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const ERF_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];

fn erfc_positive(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 0.46875 {
        return 1.0 - erf(x);
    }
    if x <= 4.0 {
        let mut num = ERF_C[8] * x;
        let mut den = x;
        for i in 0..7 {
            num = (num + ERF_C[i]) * x;
            den = (den + ERF_D[i]) * x;
        }
        let ratio = (num + ERF_C[7]) / (den + ERF_D[7]);
        return (-x * x).exp() * ratio;
    }
    if x > 26.5 {
        return 0.0;
    }
    let z = 1.0 / (x * x);
    let mut num = ERF_P[5] * z;
    let mut den = z;
    for i in 0..4 {
        num = (num + ERF_P[i]) * z;
        den = (den + ERF_Q[i]) * z;
    }
    let ratio = z * (num + ERF_P[4]) / (den + ERF_Q[4]);
    (-x * x).exp() * (1.0 / PI.sqrt() - ratio) / x
}

pub fn erf(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 0.46875 {
        let z = x * x;
        let mut num = ERF_A[4] * z;
        let mut den = z;
        for i in 0..3 {
            num = (num + ERF_A[i]) * z;
            den = (den + ERF_B[i]) * z;
        }
        return x * (num + ERF_A[3]) / (den + ERF_B[3]);
    }
    let tail = erfc_positive(ax);
    if x >= 0.0 {
        1.0 - tail
    } else {
        tail - 1.0
    }
}

pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        erfc_positive(x)
    } else {
        2.0 - erfc_positive(-x)
    }
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Regularized incomplete beta I_x(a, b) via the Lentz continued
/// fraction.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return f64::NAN;
    }
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln())
        .exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

/// Two-sided p-value of a Student t statistic with `df` degrees of
/// freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    reg_inc_beta(0.5 * df, 0.5, df / (df + t * t))
}

/// Survival function of the F distribution: P(F_{d1,d2} > f).
pub fn f_sf(f: f64, d1: f64, d2: f64) -> f64 {
    if !f.is_finite() {
        return 0.0;
    }
    if f <= 0.0 {
        return 1.0;
    }
    reg_inc_beta(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f))
}

// 16-point Gauss-Legendre nodes/weights on [-1, 1].
const GL_X: [f64; 8] = [
    0.09501250983763744,
    0.2816035507792589,
    0.45801677765722737,
    0.6178762444026438,
    0.7554044083550030,
    0.8656312023878318,
    0.9445750230732326,
    0.9894009349916499,
];
const GL_W: [f64; 8] = [
    0.1894506104550685,
    0.1826034150449236,
    0.1691565193950025,
    0.1495959888165767,
    0.1246289712555339,
    0.09515851168249278,
    0.06225352393864789,
    0.02715245941175409,
];

/// Composite 16-point Gauss-Legendre integration of `f` over [a, b]
/// split into `panels` equal panels.
fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let mid = lo + 0.5 * width;
        let half = 0.5 * width;
        let mut acc = 0.0;
        for i in 0..8 {
            acc += GL_W[i] * (f(mid + half * GL_X[i]) + f(mid - half * GL_X[i]));
        }
        total += acc * half;
    }
    total
}

/// CDF of the range of `k` iid standard normals at `w`:
/// k * integral of phi(z) * [Phi(z) - Phi(z - w)]^(k-1) dz.
fn normal_range_cdf(w: f64, k: usize) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let km1 = (k - 1) as i32;
    let f = |z: f64| normal_pdf(z) * (normal_cdf(z) - normal_cdf(z - w)).powi(km1);
    // phi(z) confines the integrand to a few standard deviations.
    let v = k as f64 * integrate(f, -8.5, 8.5, 10);
    v.clamp(0.0, 1.0)
}

/// CDF of the studentized range for `k` groups and `df` within-group
/// degrees of freedom: the range CDF mixed over the chi-distributed
/// scale s = sqrt(chi2_df / df).
pub fn studentized_range_cdf(q: f64, k: usize, df: f64) -> f64 {
    assert!(k >= 2, "studentized range needs k >= 2");
    assert!(df >= 1.0, "studentized range needs df >= 1");
    if q <= 0.0 {
        return 0.0;
    }
    if !q.is_finite() {
        return 1.0;
    }
    // density of s: 2^(1-df/2) df^(df/2) s^(df-1) exp(-df s^2/2) / Gamma(df/2)
    let ln_c = (1.0 - 0.5 * df) * 2.0f64.ln() + 0.5 * df * df.ln() - ln_gamma(0.5 * df);
    let f = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        let ln_density = ln_c + (df - 1.0) * s.ln() - 0.5 * df * s * s;
        ln_density.exp() * normal_range_cdf(q * s, k)
    };
    let (lo, hi) = if df < 3.0 {
        (0.0, 10.0)
    } else {
        let spread = 12.0 / (2.0 * df).sqrt();
        ((1.0 - spread).max(0.0), 1.0 + spread)
    };
    integrate(f, lo, hi, 20).clamp(0.0, 1.0)
}

/// Survival function of the studentized range (the Tukey adjusted p).
pub fn studentized_range_sf(q: f64, k: usize, df: f64) -> f64 {
    (1.0 - studentized_range_cdf(q, k, df)).clamp(0.0, 1.0)
}

/// Upper critical value q* with P(Q > q*) = alpha, found by bisection.
pub fn studentized_range_critical(alpha: f64, k: usize, df: f64) -> f64 {
    assert!((0.0..1.0).contains(&alpha) && alpha > 0.0, "alpha in (0,1)");
    let target = 1.0 - alpha;
    let mut lo = 0.0f64;
    let mut hi = 2.0f64;
    while studentized_range_cdf(hi, k, df) < target {
        hi *= 2.0;
        if hi > 1e6 {
            break;
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if studentized_range_cdf(mid, k, df) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}
