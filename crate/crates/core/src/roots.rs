//! Bracketed root finding for monotone scalar functions.

/// Finds the root of a strictly decreasing `f` on `[lo, hi]` given
/// `f(lo) > 0 > f(hi)`, using Newton steps that fall back to bisection when
/// they leave the bracket. `fdf` returns `(f(x), f'(x))`.
///
/// Stops when the bracket is narrower than `abs_tol + rel_tol * x`.
pub(crate) fn decreasing_root(
    mut fdf: impl FnMut(f64) -> (f64, f64),
    mut lo: f64,
    mut hi: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (f, df) = fdf(x);
        if f == 0.0 {
            return x;
        }
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= abs_tol + rel_tol * x.abs() {
            break;
        }
        let newton = if df < 0.0 { x - f / df } else { f64::NAN };
        x = if newton > lo && newton < hi {
            newton
        } else if lo > 0.0 && hi / lo > 16.0 {
            // geometric midpoint when the bracket spans decades
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
    }
    x.clamp(lo, hi)
}

/// Brackets the sign change of a non-increasing `f`: returns `(lo, hi)` with
/// `f(lo) > 0 >= f(hi)` once `hi - lo <= rel_tol * hi`.
///
/// Steps are Illinois-style false position once both ends carry a value,
/// with a bisection whenever a step fails to halve the bracket, so jumps in
/// `f` cost at most twice plain bisection. Midpoints are geometric while
/// the bracket spans decades.
pub(crate) fn bisect_decreasing(
    mut f: impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    let mut f_lo: Option<f64> = None;
    let mut f_hi: Option<f64> = None;
    let mut last_side = 0i8;
    let mut bisect_next = true;
    for _ in 0..max_iter {
        let width = hi - lo;
        if width <= rel_tol * hi {
            break;
        }
        let mid = if lo > 0.0 && hi / lo > 16.0 {
            (lo * hi).sqrt()
        } else if lo == 0.0 && hi > 1e-300 && f_lo.is_none() {
            // approach zero geometrically
            hi * 1e-3
        } else {
            match (f_lo, f_hi, bisect_next) {
                (Some(a), Some(b), false) if a > b => {
                    let x = lo + width * a / (a - b);
                    // keep the probe off the ends so the bracket moves
                    x.clamp(lo + 0.01 * width, hi - 0.01 * width)
                }
                _ => 0.5 * (lo + hi),
            }
        };
        let v = f(mid);
        if v > 0.0 {
            lo = mid;
            f_lo = Some(v);
            if last_side == 1 {
                f_hi = f_hi.map(|b| 0.5 * b);
            }
            last_side = 1;
        } else {
            hi = mid;
            f_hi = Some(v);
            if last_side == -1 {
                f_lo = f_lo.map(|a| 0.5 * a);
            }
            last_side = -1;
        }
        bisect_next = hi - lo > 0.5 * width;
    }
    (lo, hi)
}

/// Brackets the sign change of a non-increasing `f` with `f(0) > 0`,
/// stepping away from `guess` by a relative `step` that grows eightfold on
/// each miss. Returns `None` if `f` stays positive up to `limit`.
pub(crate) fn bracket_from(
    mut f: impl FnMut(f64) -> f64,
    guess: f64,
    step: f64,
    limit: f64,
) -> Option<(f64, f64)> {
    let mut step = step;
    if f(guess) > 0.0 {
        let mut lo = guess;
        loop {
            let hi = (lo * (1.0 + step)).min(limit);
            if f(hi) <= 0.0 {
                return Some((lo, hi));
            }
            if hi >= limit {
                return None;
            }
            lo = hi;
            step *= 8.0;
        }
    }
    let mut hi = guess;
    loop {
        let lo = hi / (1.0 + step);
        if lo < 1e-300 {
            return Some((0.0, hi));
        }
        if f(lo) > 0.0 {
            return Some((lo, hi));
        }
        hi = lo;
        step *= 8.0;
    }
}
