//! Small numerical kernels shared across the crate: quadrature, root
//! finding, one-dimensional minimization, adaptive Runge-Kutta steps,
//! polynomial extrapolation, cubic Hermite interpolation, and the seed
//! mixer used for per-trial RNG streams.

/// Adaptive Simpson quadrature on [a, b] to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), fm)
    }
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (left, flm) = simpson(f, a, fa, m, fm);
        let (right, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, fa, m, fm, left, flm, 0.5 * tol, depth - 1)
                + rec(f, m, fm, b, fb, right, frm, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, fm) = simpson(f, a, fa, b, fb);
    // Deep recursion is cheap for clean integrands (only intervals
    // straddling sharp features keep splitting), but `tol` must exceed the
    // integrand's own evaluation noise: below it every interval fails the
    // acceptance test and refinement degenerates into exhaustive
    // subdivision of the whole range.
    rec(f, a, fa, b, fb, whole, fm, tol.max(1e-15), 48)
}

/// Fixed-order Gauss-Legendre quadrature (20 nodes) on [a, b].
/// Exact for polynomials up to degree 39; used where the integrand is
/// smooth and a fixed deterministic cost matters.
pub fn gauss20<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    // Nodes and weights for n = 20 on [-1, 1], positive half; mirrored below.
    const X: [f64; 10] = [
        0.076526521133497333755,
        0.227785851141645078080,
        0.373706088715419560673,
        0.510867001950827098004,
        0.636053680726515025453,
        0.746331906460150792614,
        0.839116971822218823395,
        0.912234428251325905868,
        0.963971927277913791268,
        0.993128599185094924786,
    ];
    const W: [f64; 10] = [
        0.152753387130725850698,
        0.149172986472603746788,
        0.142096109318382051329,
        0.131688638449176626898,
        0.118194531961518417312,
        0.101930119817240435037,
        0.083276741576704748725,
        0.062672048334109063570,
        0.040601429800386941331,
        0.017614007139152118312,
    ];
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for i in 0..10 {
        acc += W[i] * (f(c + h * X[i]) + f(c - h * X[i]));
    }
    acc * h
}

/// Bisection-backed secant root find on a bracketing interval [lo, hi]
/// with f(lo) and f(hi) of opposite sign. Returns the root to `tol` in x.
pub fn bracket_root<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    assert!(
        flo * fhi <= 0.0,
        "bracket_root requires a sign change: f({lo}) = {flo}, f({hi}) = {fhi}"
    );
    if flo == 0.0 {
        return lo;
    }
    if fhi == 0.0 {
        return hi;
    }
    for _ in 0..200 {
        if (hi - lo).abs() <= tol {
            break;
        }
        // Secant proposal, clamped into the central 90% of the bracket so a
        // flat side cannot stall progress; otherwise bisect.
        let mut mid = if (fhi - flo).abs() > 0.0 {
            hi - fhi * (hi - lo) / (fhi - flo)
        } else {
            0.5 * (lo + hi)
        };
        let lo_guard = lo + 0.05 * (hi - lo);
        let hi_guard = hi - 0.05 * (hi - lo);
        if !(lo_guard..=hi_guard).contains(&mid) {
            mid = 0.5 * (lo + hi);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if flo * fm < 0.0 {
            hi = mid;
            fhi = fm;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section minimization of a unimodal function on [a, b].
/// Returns (argmin, min value) once the interval shrinks below `tol`.
/// Near a smooth minimum the achievable argument accuracy is bounded by
/// sqrt(machine epsilon) times the argument scale (about 1e-8), because
/// function comparisons lose signal there; callers should not ask for
/// more than that.
pub fn golden_min<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// One classical RK4 step for y' = f(t, y) on state vectors.
pub fn rk4_step<const N: usize, F: Fn(f64, &[f64; N]) -> [f64; N]>(
    f: &F,
    t: f64,
    y: &[f64; N],
    h: f64,
) -> [f64; N] {
    let add = |y: &[f64; N], k: &[f64; N], s: f64| {
        let mut out = *y;
        for i in 0..N {
            out[i] += s * k[i];
        }
        out
    };
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &add(y, &k1, 0.5 * h));
    let k3 = f(t + 0.5 * h, &add(y, &k2, 0.5 * h));
    let k4 = f(t + h, &add(y, &k3, h));
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Adaptive RK4 with step doubling: advances y across [t0, t1] keeping the
/// per-unit-parameter local error estimate below `tol`. Calls `observe`
/// after every accepted step with (t, y).
pub fn rk4_adaptive<const N: usize, F, O>(
    f: &F,
    t0: f64,
    t1: f64,
    y0: [f64; N],
    tol: f64,
    observe: &mut O,
) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    O: FnMut(f64, &[f64; N]),
{
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let total = (t1 - t0).abs();
    if total == 0.0 {
        return y0;
    }
    let mut t = t0;
    let mut y = y0;
    let mut h = (total / 16.0).min(0.1).max(1e-12) * dir;
    let mut steps = 0u32;
    while (t - t0).abs() < total {
        steps += 1;
        if steps > 2_000_000 {
            return [f64::NAN; N];
        }
        if (t + h - t0).abs() > total {
            h = t1 - t;
        }
        let full = rk4_step(f, t, &y, h);
        let half = rk4_step(f, t, &y, 0.5 * h);
        let two = rk4_step(f, t + 0.5 * h, &half, 0.5 * h);
        let mut err: f64 = 0.0;
        for i in 0..N {
            err = err.max((two[i] - full[i]).abs() / 15.0);
        }
        if !err.is_finite() {
            // The trajectory is blowing up inside the step; shrink, and if
            // no usable step length remains, report failure as NaN state.
            h *= 0.1;
            if h.abs() < 1e-12 * total {
                return [f64::NAN; N];
            }
            continue;
        }
        let allowed = tol * h.abs().max(1e-300);
        if err <= allowed || h.abs() <= 1e-13 {
            // Local extrapolation: the two-half-step result is 5th order.
            let mut next = two;
            for i in 0..N {
                next[i] += (two[i] - full[i]) / 15.0;
            }
            if next.iter().any(|v| !v.is_finite()) {
                return [f64::NAN; N];
            }
            t += h;
            y = next;
            observe(t, &y);
            let grow = if err > 0.0 {
                (allowed / err).powf(0.2).min(2.0)
            } else {
                2.0
            };
            h *= 0.9 * grow.max(0.5);
        } else {
            h *= 0.9 * (allowed / err).powf(0.25).max(0.1);
        }
        if h.abs() < 1e-13 {
            h = 1e-13 * dir;
        }
    }
    y
}

/// Neville polynomial extrapolation of (x_i, y_i) samples to x = 0.
/// Returns the full diagonal of the tableau; the last entry is the highest
/// order extrapolant and the difference of the last two is a residual
/// estimate. Inputs need strictly decreasing positive x.
pub fn neville_to_zero(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    assert!(n >= 1 && n == ys.len());
    let mut prev: Vec<f64> = Vec::new();
    let mut diag = Vec::with_capacity(n);
    for i in 0..n {
        // cur[j] interpolates through samples i-j..=i, evaluated at x = 0.
        let mut cur = Vec::with_capacity(i + 1);
        cur.push(ys[i]);
        for j in 1..=i {
            let num = xs[i - j] * cur[j - 1] - xs[i] * prev[j - 1];
            let den = xs[i - j] - xs[i];
            cur.push(num / den);
        }
        diag.push(cur[i]);
        prev = cur;
    }
    diag
}

/// Least-squares slope of y against x.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Cubic Hermite value at x in [x0, x1] given endpoint values and slopes.
pub fn hermite(x: f64, x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> f64 {
    let h = x1 - x0;
    let s = (x - x0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    y0 * (2.0 * s3 - 3.0 * s2 + 1.0)
        + d0 * h * (s3 - 2.0 * s2 + s)
        + y1 * (-2.0 * s3 + 3.0 * s2)
        + d1 * h * (s3 - s2)
}

/// Thomas algorithm for a complex tridiagonal system. `a` is the
/// subdiagonal (len n-1), `b` the diagonal (len n), `c` the superdiagonal
/// (len n-1), `d` the right-hand side (len n, consumed).
pub fn solve_tridiag_complex(
    a: &[num_complex::Complex64],
    b: &[num_complex::Complex64],
    c: &[num_complex::Complex64],
    mut d: Vec<num_complex::Complex64>,
) -> Vec<num_complex::Complex64> {
    let n = b.len();
    let mut cp = vec![num_complex::Complex64::new(0.0, 0.0); n];
    let mut denom = b[0];
    d[0] /= denom;
    for i in 1..n {
        cp[i - 1] = c[i - 1] / denom;
        denom = b[i] - a[i - 1] * cp[i - 1];
        d[i] = (d[i] - a[i - 1] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        let next = d[i + 1];
        d[i] -= cp[i] * next;
    }
    d
}

/// splitmix64: mixes a master seed and an index into one well-spread
/// 64-bit stream seed. Documented constants from the reference sequence.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
