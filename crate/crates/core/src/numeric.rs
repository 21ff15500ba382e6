//! Scalar numerics shared by the evaluators and optimizers: adaptive
//! Simpson quadrature, golden-section maximization and bisection.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("adaptive quadrature on [{a}, {b}] did not reach tolerance {tol} within depth {depth}")]
pub struct QuadratureError {
    pub a: f64,
    pub b: f64,
    pub tol: f64,
    pub depth: usize,
}

/// Absolute-tolerance settings for [`adaptive_simpson`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub max_depth: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            max_depth: 48,
        }
    }
}

/// Adaptive Simpson quadrature of a vector-valued integrand, with the
/// Richardson error estimate measured in the max norm.
///
/// `breaks` are interior points where the integrand may have a kink or a
/// jump; the range is split there first and each piece gets a share of the
/// tolerance proportional to its length.
pub fn adaptive_simpson<F>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Vec<f64>, QuadratureError>
where
    F: Fn(f64) -> Vec<f64>,
{
    let mut points = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|x| *x > a && *x < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    points.extend(inner);
    points.push(b);

    let mut total: Option<Vec<f64>> = None;
    let span = (b - a).max(f64::MIN_POSITIVE);
    for w in points.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let tol = cfg.abs_tol * (hi - lo) / span;
        let piece = simpson_piece(f, lo, hi, tol, cfg)?;
        match total.as_mut() {
            None => total = Some(piece),
            Some(acc) => acc.iter_mut().zip(&piece).for_each(|(x, y)| *x += y),
        }
    }
    Ok(total.unwrap_or_else(|| vec![0.0; f(a).len()]))
}

/// Scalar convenience wrapper around [`adaptive_simpson`].
pub fn integrate<F>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<f64, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    adaptive_simpson(&|x| vec![f(x)], a, b, breaks, cfg).map(|v| v[0])
}

fn simpson_piece<F>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    cfg: &QuadratureConfig,
) -> Result<Vec<f64>, QuadratureError>
where
    F: Fn(f64) -> Vec<f64>,
{
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(&fa, &fm, &fb, b - a);
    let mut out = vec![0.0; fa.len()];
    recurse(
        f,
        Segment {
            a,
            b,
            fa,
            fm,
            fb,
            whole,
        },
        tol,
        cfg.max_depth,
        &mut out,
    )
    .map_err(|depth| QuadratureError {
        a,
        b,
        tol,
        depth,
    })?;
    Ok(out)
}

struct Segment {
    a: f64,
    b: f64,
    fa: Vec<f64>,
    fm: Vec<f64>,
    fb: Vec<f64>,
    whole: Vec<f64>,
}

fn simpson(fa: &[f64], fm: &[f64], fb: &[f64], h: f64) -> Vec<f64> {
    fa.iter()
        .zip(fm)
        .zip(fb)
        .map(|((a, m), b)| h / 6.0 * (a + 4.0 * m + b))
        .collect()
}

fn recurse<F>(f: &F, s: Segment, tol: f64, depth: usize, out: &mut [f64]) -> Result<(), usize>
where
    F: Fn(f64) -> Vec<f64>,
{
    let m = 0.5 * (s.a + s.b);
    let lm = 0.5 * (s.a + m);
    let rm = 0.5 * (m + s.b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(&s.fa, &flm, &s.fm, m - s.a);
    let right = simpson(&s.fm, &frm, &s.fb, s.b - m);
    let err = left
        .iter()
        .zip(&right)
        .zip(&s.whole)
        .map(|((l, r), w)| (l + r - w).abs())
        .fold(0.0, f64::max);
    if err <= 15.0 * tol || (s.b - s.a) < 1e-13 {
        for (k, o) in out.iter_mut().enumerate() {
            *o += left[k] + right[k] + (left[k] + right[k] - s.whole[k]) / 15.0;
        }
        return Ok(());
    }
    if depth == 0 {
        return Err(0);
    }
    let Segment { a, b, fa, fm, fb, .. } = s;
    recurse(
        f,
        Segment {
            a,
            b: m,
            fa,
            fm: flm,
            fb: fm.clone(),
            whole: left,
        },
        0.5 * tol,
        depth - 1,
        out,
    )
    .map_err(|d| d + 1)?;
    recurse(
        f,
        Segment {
            a: m,
            b,
            fa: fm,
            fm: frm,
            fb,
            whole: right,
        },
        0.5 * tol,
        depth - 1,
        out,
    )
    .map_err(|d| d + 1)
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the maximum of `f` on `[a, b]`; returns the
/// best point seen and its value. Assumes `f` is unimodal on the bracket.
pub fn golden_section_max<F>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Maximizes `f` over `[0, upper]`: a uniform grid of `points` nodes, then a
/// golden-section polish inside the cells adjacent to the best node. Ties
/// go to the smallest argument; the polished point replaces the grid node
/// only if it is strictly better.
pub fn grid_polish_max<F>(f: F, upper: f64, points: usize, polish_tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let points = points.max(2);
    let step = upper / (points - 1) as f64;
    let mut best = (0.0, f(0.0));
    for k in 1..points {
        let x = if k + 1 == points { upper } else { k as f64 * step };
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    if upper <= 0.0 {
        return best;
    }
    let lo = (best.0 - step).max(0.0);
    let hi = (best.0 + step).min(upper);
    let (x, v) = golden_section_max(&f, lo, hi, polish_tol);
    if v > best.1 {
        (x, v)
    } else {
        best
    }
}

/// Bisection for the boundary of a predicate that holds at `lo` and fails
/// at `hi`; returns the final `(lo, hi)` bracket.
pub fn bisect<P>(mut lo: f64, mut hi: f64, tol: f64, holds: P) -> (f64, f64)
where
    P: Fn(f64) -> bool,
{
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

/// Fixed-point rendering with `digits` significant digits, trailing zeros
/// trimmed.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}
