//! Golden-section minimisation over a positive bracket, in log coordinates.

use crate::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Minimum located by [`golden_section`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoldenMin {
    pub argmin: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Minimises `f` over `[lo, hi]` (both positive) until the bracket width is at
/// most `tol` times its geometric midpoint.
///
/// Fails with [`Error::BracketTooNarrow`] when the minimiser lies within
/// `2 tol` (relative) of either end.
pub fn golden_section<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<GoldenMin>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo > 0.0 && hi > lo && hi.is_finite() && tol > 0.0) {
        return Err(Error::InvalidInput(format!("invalid bracket [{lo}, {hi}] or tolerance {tol}")));
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c.exp())?;
    let mut fd = f(d.exp())?;
    let mut evaluations = 2;
    while b.exp() - a.exp() > tol * (0.5 * (a + b)).exp() {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d.exp())?;
        }
        evaluations += 1;
    }
    let (x, value) = if fc <= fd { (c.exp(), fc) } else { (d.exp(), fd) };
    if x - lo <= 2.0 * tol * x || hi - x <= 2.0 * tol * x {
        return Err(Error::BracketTooNarrow { zeta: x, lo, hi });
    }
    Ok(GoldenMin { argmin: x, value, evaluations })
}

/// [`golden_section`] that widens the bracket tenfold on the side of an
/// endpoint hit, at most `max_widenings` times.
pub fn golden_section_widening<F>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    max_widenings: usize,
) -> Result<GoldenMin>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut widenings = 0;
    loop {
        match golden_section(&mut f, lo, hi, tol) {
            Err(Error::BracketTooNarrow { zeta, .. }) if widenings < max_widenings => {
                if (zeta / lo).ln() < (hi / zeta).ln() {
                    lo /= 10.0;
                } else {
                    hi *= 10.0;
                }
                widenings += 1;
            }
            other => return other,
        }
    }
}
