//! Order-fixed reductions over Monte Carlo paths.
//!
//! Paths are split into fixed-size chunks. Each chunk is reduced
//! sequentially and chunk results are merged in chunk order, so the output
//! is bit-identical whatever the number of worker threads.

use rayon::prelude::*;

use crate::Result;

/// Paths per reduction chunk.
pub const CHUNK: usize = 256;

/// Running mean and sum of squared deviations (Welford / Chan).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(self, other: Moments) -> Moments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        let w = other.count as f64 / n;
        Moments {
            count: self.count + other.count,
            mean: self.mean + delta * w,
            m2: self.m2 + other.m2 + delta * delta * self.count as f64 * w,
        }
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.std_dev() / (self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Reduces `f(i)` for `i in 0..n` into [`Moments`] with a per-chunk scratch
/// value built by `init`.
pub fn chunked_moments<S, I, F>(n: usize, init: I, f: F) -> Result<Moments>
where
    I: Fn() -> S + Sync,
    F: Fn(&mut S, usize) -> Result<f64> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partial: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut scratch = init();
            let mut m = Moments::default();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                m.push(f(&mut scratch, i)?);
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    Ok(partial.into_iter().fold(Moments::default(), Moments::merge))
}

/// Like [`chunked_moments`] but reduces several statistics per path at once.
pub fn chunked_moments_multi<S, I, F>(n: usize, width: usize, init: I, f: F) -> Result<Vec<Moments>>
where
    I: Fn() -> S + Sync,
    F: Fn(&mut S, usize, &mut [f64]) -> Result<()> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partial: Vec<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut scratch = init();
            let mut out = vec![0.0; width];
            let mut ms = vec![Moments::default(); width];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                f(&mut scratch, i, &mut out)?;
                for (m, &x) in ms.iter_mut().zip(&out) {
                    m.push(x);
                }
            }
            Ok(ms)
        })
        .collect::<Result<_>>()?;
    Ok(partial
        .into_iter()
        .fold(vec![Moments::default(); width], |acc, ms| acc.into_iter().zip(ms).map(|(a, b)| a.merge(b)).collect()))
}
