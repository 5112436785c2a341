//! Small 1D optimization and root-finding helpers shared by the solvers.

/// Golden-section search for the minimum of a unimodal `f` on `[a, b]`.
///
/// Shrinks the bracket until its width is at most `tol` (absolute on x) and
/// returns `(x_min, f_min)`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iters = 0usize;
    while (b - a) > tol && iters < 300 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
        iters += 1;
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Safeguarded Newton: find the root of an increasing `f` on `[lo, hi]`.
///
/// `f_df` returns `(f(x), f'(x))`. Falls back to bisection whenever a Newton
/// step leaves the bracket. Requires `f(lo) <= 0 <= f(hi)`.
pub fn newton_bracketed(f_df: impl Fn(f64) -> (f64, f64), lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    newton_bracketed_from(f_df, lo, hi, mid)
}

/// [`newton_bracketed`] with an explicit starting point, for callers with a
/// good warm guess.
pub fn newton_bracketed_from(
    f_df: impl Fn(f64) -> (f64, f64),
    mut lo: f64,
    mut hi: f64,
    x0: f64,
) -> f64 {
    let mut x = x0.clamp(lo, hi);
    for _ in 0..100 {
        let (fx, dfx) = f_df(x);
        if fx == 0.0 {
            return x;
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = if dfx > 0.0 { x - fx / dfx } else { f64::NAN };
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * (1.0 + hi.abs()) {
            break;
        }
    }
    x
}
