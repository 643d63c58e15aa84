//! Karhunen–Loève coordinates of Brownian motion and product quantizers of
//! the resulting Gaussian vector.
//!
//! `W_t ≈ Σ_n ξ_n e_n(t)` with independent `ξ_n ~ N(0, λ_n)`. A quantizer
//! replaces the law of `ξ` by weighted points, turning expectations of path
//! functionals into deterministic sums.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::power_dual::PowerSumDual;
use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::stats::CHUNK;
use crate::{Error, Result};

/// Eigenfunctions `e_n(t) = √(2/T) sin(πt(n − ½)/T)` and variances
/// `λ_n = (T/(π(n − ½)))²` of Brownian motion on `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KlBasis {
    pub horizon: f64,
    pub lambdas: Vec<f64>,
}

pub fn kl_basis(horizon: f64, dim: usize) -> Result<KlBasis> {
    if !(horizon > 0.0) || dim == 0 {
        return Err(Error::InvalidInput(format!("need horizon > 0 and dim >= 1, got {horizon} and {dim}")));
    }
    let lambdas = (1..=dim).map(|n| (horizon / (std::f64::consts::PI * (n as f64 - 0.5))).powi(2)).collect();
    Ok(KlBasis { horizon, lambdas })
}

impl KlBasis {
    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    /// `e_n(t)` for 1-based `n`.
    pub fn e(&self, n: usize, t: f64) -> f64 {
        let h = self.horizon;
        (2.0 / h).sqrt() * (std::f64::consts::PI * t * (n as f64 - 0.5) / h).sin()
    }

    /// `Σ_n ξ_n e_n(t)`
    pub fn path_value(&self, xi: &[f64], t: f64) -> f64 {
        xi.iter().enumerate().map(|(i, x)| x * self.e(i + 1, t)).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum QuantizerSource {
    Loaded(PathBuf),
    Built,
}

/// Weighted points approximating `N(0, diag(λ))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quantizer {
    pub dim: usize,
    /// Row-major, `n_points × dim`.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub source: QuantizerSource,
}

fn malformed(line: usize, message: impl Into<String>) -> Error {
    Error::MalformedGridFile { line, message: message.into() }
}

impl Quantizer {
    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Multiplies every point by `factor`, e.g. `T` to move from horizon 1 to `T`.
    pub fn scaled(&self, factor: f64) -> Quantizer {
        Quantizer { points: self.points.iter().map(|p| p * factor).collect(), ..self.clone() }
    }

    pub fn load(path: &Path) -> Result<Quantizer> {
        let mut q = Self::from_reader(File::open(path)?)?;
        q.source = QuantizerSource::Loaded(path.to_path_buf());
        Ok(q)
    }

    /// Parses `n d` followed by `n` rows of `d` coordinates and a weight.
    /// Lines starting with `#` and blank lines are skipped.
    pub fn from_reader<R: Read>(reader: R) -> Result<Quantizer> {
        let mut header: Option<(usize, usize)> = None;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut last = 0;
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = idx + 1;
            last = line_no;
            let line = line?;
            let body = line.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = body.split_whitespace().collect();
            match header {
                None => {
                    let [n, d] = fields.as_slice() else {
                        return Err(malformed(line_no, "expected header `n d`"));
                    };
                    let n: usize = n.parse().map_err(|_| malformed(line_no, "bad point count"))?;
                    let d: usize = d.parse().map_err(|_| malformed(line_no, "bad dimension"))?;
                    if n == 0 || d == 0 {
                        return Err(malformed(line_no, "point count and dimension must be positive"));
                    }
                    header = Some((n, d));
                }
                Some((n, d)) => {
                    if weights.len() == n {
                        return Err(malformed(line_no, format!("more than {n} points")));
                    }
                    if fields.len() != d + 1 {
                        return Err(malformed(line_no, format!("expected {} values, found {}", d + 1, fields.len())));
                    }
                    let values: Vec<f64> = fields
                        .iter()
                        .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
                        .collect::<Option<_>>()
                        .ok_or_else(|| malformed(line_no, "non-numeric or non-finite value"))?;
                    if values[d] < 0.0 {
                        return Err(malformed(line_no, "negative weight"));
                    }
                    points.extend_from_slice(&values[..d]);
                    weights.push(values[d]);
                }
            }
        }
        let Some((n, d)) = header else {
            return Err(malformed(last.max(1), "missing header"));
        };
        if weights.len() != n {
            return Err(malformed(last, format!("expected {n} points, found {}", weights.len())));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(malformed(last, format!("weights sum to {total}, not 1")));
        }
        Ok(Quantizer { dim: d, points, weights, source: QuantizerSource::Built })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.to_writer(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Shortest round-trip formatting, so loading reproduces the values exactly.
    pub fn to_writer<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.n_points(), self.dim)?;
        for i in 0..self.n_points() {
            let mut row: Vec<String> = self.point(i).iter().map(|v| format!("{v:e}")).collect();
            row.push(format!("{:e}", self.weights[i]));
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }

    /// Product quantizer of `N(0, diag(λ_1..λ_dim))` for horizon 1 with at most
    /// `n_points` points. Each axis carries an optimal one-dimensional Lloyd
    /// quantizer; axis sizes minimise the summed distortion under the budget.
    /// Cells are products of intervals, so the weights are exact and every
    /// point is the mean of its cell.
    pub fn build(dim: usize, n_points: usize) -> Result<Quantizer> {
        if n_points == 0 {
            return Err(Error::InvalidInput("need at least one point".into()));
        }
        let basis = kl_basis(1.0, dim)?;
        let mut cache = HashMap::new();
        let sizes = allocate(&basis.lambdas, n_points, &mut cache);
        let axes: Vec<Lloyd1d> = sizes.iter().map(|&m| lloyd_standard(m)).collect();
        let total: usize = sizes.iter().product();
        let mut points = Vec::with_capacity(total * dim);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let mut w = 1.0;
            for (k, &i) in idx.iter().enumerate() {
                points.push(axes[k].points[i] * basis.lambdas[k].sqrt());
                w *= axes[k].probs[i];
            }
            weights.push(w);
            for k in (0..dim).rev() {
                idx[k] += 1;
                if idx[k] < sizes[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        Ok(Quantizer { dim, points, weights, source: QuantizerSource::Built })
    }

    /// `Σ_k p_k |ξ − x_k|²` averaged over `samples`, with `ξ` mapped to its
    /// nearest point.
    pub fn distortion(&self, samples: &[Vec<f64>]) -> f64 {
        samples
            .iter()
            .map(|s| {
                (0..self.n_points())
                    .map(|i| self.point(i).iter().zip(s).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / samples.len() as f64
    }
}

/// Optimal quantizer of `N(0, 1)` with its cell probabilities and squared error.
#[derive(Clone, Debug)]
pub struct Lloyd1d {
    pub points: Vec<f64>,
    pub probs: Vec<f64>,
    pub distortion: f64,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid parameters")
}

/// One Lloyd update: each point moves to the mean of its Voronoi interval.
pub fn lloyd_step(points: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nd = std_normal();
    let m = points.len();
    let mut next = Vec::with_capacity(m);
    let mut probs = Vec::with_capacity(m);
    for i in 0..m {
        let a = if i == 0 { f64::NEG_INFINITY } else { 0.5 * (points[i - 1] + points[i]) };
        let b = if i + 1 == m { f64::INFINITY } else { 0.5 * (points[i] + points[i + 1]) };
        let (pa, pb) = (nd.cdf(a), nd.cdf(b));
        let (da, db) = (if a.is_finite() { nd.pdf(a) } else { 0.0 }, if b.is_finite() { nd.pdf(b) } else { 0.0 });
        let p = pb - pa;
        probs.push(p);
        next.push(if p > 0.0 { (da - db) / p } else { points[i] });
    }
    (next, probs)
}

/// Stationary quantizer of `N(0, 1)` with `m` points, started from the
/// quantiles of `N(0, 3)` (the asymptotically optimal point density). The
/// fixed-point equations of Lloyd's map are solved by Newton's method, whose
/// Jacobian is tridiagonal; a plain Lloyd step is taken whenever a Newton
/// step would not reduce the residual.
pub fn lloyd_standard(m: usize) -> Lloyd1d {
    let nd = std_normal();
    let mut points: Vec<f64> = (0..m).map(|i| 3f64.sqrt() * nd.inverse_cdf((i as f64 + 0.5) / m as f64)).collect();
    let residual = |x: &[f64]| {
        let (next, _) = lloyd_step(x);
        next.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let mut res = residual(&points);
    for _ in 0..10_000 {
        if res < 1e-12 {
            break;
        }
        let candidate = newton_step(&points, &nd);
        let ordered = candidate.windows(2).all(|w| w[1] > w[0]) && candidate.iter().all(|v| v.is_finite());
        let cand_res = if ordered { residual(&candidate) } else { f64::INFINITY };
        if cand_res < res {
            points = candidate;
            res = cand_res;
        } else if res < 1e-9 {
            // rounding floor reached
            break;
        } else {
            points = lloyd_step(&points).0;
            res = residual(&points);
        }
    }
    let (points, probs) = {
        let (next, probs) = lloyd_step(&points);
        if res < 1e-12 {
            (points, probs)
        } else {
            (next, probs)
        }
    };
    // stationary: E[(X − q(X))²] = 1 − Σ p x²
    let distortion = 1.0 - probs.iter().zip(&points).map(|(p, x)| p * x * x).sum::<f64>();
    Lloyd1d { points, probs, distortion }
}

/// Newton update for `x − T(x) = 0`, `T` being the Lloyd map.
fn newton_step(x: &[f64], nd: &Normal) -> Vec<f64> {
    let m = x.len();
    let (tx, probs) = lloyd_step(x);
    let mut lower = vec![0.0; m];
    let mut diag = vec![1.0; m];
    let mut upper = vec![0.0; m];
    let mut rhs: Vec<f64> = tx.iter().zip(x).map(|(t, v)| t - v).collect();
    for i in 0..m {
        let p = probs[i];
        if !(p > 0.0) {
            continue;
        }
        if i > 0 {
            let a = 0.5 * (x[i - 1] + x[i]);
            let da = nd.pdf(a) * (tx[i] - a) / p;
            lower[i] -= 0.5 * da;
            diag[i] -= 0.5 * da;
        }
        if i + 1 < m {
            let b = 0.5 * (x[i] + x[i + 1]);
            let db = nd.pdf(b) * (b - tx[i]) / p;
            upper[i] -= 0.5 * db;
            diag[i] -= 0.5 * db;
        }
    }
    super::pde::thomas(&lower, &mut diag, &upper, &mut rhs);
    x.iter().zip(&rhs).map(|(v, d)| v + d).collect()
}

/// Exact one-dimensional distortions up to this size; beyond it the
/// asymptotic `π√3/(2m²)` is used when allocating sizes.
const EXACT_SIZES: usize = 256;

fn unit_distortion(m: usize, cache: &mut HashMap<usize, f64>) -> f64 {
    if m > EXACT_SIZES {
        return std::f64::consts::PI * 3f64.sqrt() / (2.0 * (m * m) as f64);
    }
    *cache.entry(m).or_insert_with(|| lloyd_standard(m).distortion)
}

/// Axis sizes minimising `Σ λ_k D(n_k)` subject to `Π n_k ≤ budget`.
fn allocate(lambdas: &[f64], budget: usize, cache: &mut HashMap<usize, f64>) -> Vec<usize> {
    fn best(
        k: usize,
        budget: usize,
        lambdas: &[f64],
        cache: &mut HashMap<usize, f64>,
        memo: &mut HashMap<(usize, usize), (f64, usize)>,
    ) -> f64 {
        if k == lambdas.len() {
            return 0.0;
        }
        if let Some(&(v, _)) = memo.get(&(k, budget)) {
            return v;
        }
        let mut opt = (f64::INFINITY, 1);
        for m in 1..=budget {
            let v = lambdas[k] * unit_distortion(m, cache) + best(k + 1, budget / m, lambdas, cache, memo);
            if v < opt.0 {
                opt = (v, m);
            }
        }
        memo.insert((k, budget), opt);
        opt.0
    }
    let mut memo = HashMap::new();
    best(0, budget, lambdas, cache, &mut memo);
    let mut sizes = Vec::with_capacity(lambdas.len());
    let mut b = budget;
    for k in 0..lambdas.len() {
        let m = memo[&(k, b)].1;
        sizes.push(m);
        b /= m;
    }
    sizes
}

/// `Σ_k p_k [Σ_j f(t_j, W^k_{t_j}) Δt_j + F(W^k)]` where `W^k` is the path
/// of point `k` sampled on `t_grid` and `F` receives those samples.
pub fn quantized_expectation<F, G>(q: &Quantizer, basis: &KlBasis, f: F, terminal: G, t_grid: &[f64]) -> f64
where
    F: Fn(f64, f64) -> f64 + Sync,
    G: Fn(&[f64]) -> f64 + Sync,
{
    let e: Vec<Vec<f64>> = t_grid.iter().map(|&t| (1..=q.dim).map(|n| basis.e(n, t)).collect()).collect();
    let partial: Vec<f64> = (0..q.n_points())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut path = vec![0.0; t_grid.len()];
            let mut acc = 0.0;
            for &k in chunk {
                let x = q.point(k);
                for (p, ej) in path.iter_mut().zip(&e) {
                    *p = x.iter().zip(ej).map(|(a, b)| a * b).sum();
                }
                let mut v = terminal(&path);
                for j in 0..t_grid.len().saturating_sub(1) {
                    v += f(t_grid[j], path[j]) * (t_grid[j + 1] - t_grid[j]);
                }
                acc += q.weights[k] * v;
            }
            acc
        })
        .collect();
    partial.into_iter().sum()
}

/// Value and time-zero controls obtained from a quantized dual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantizedPolicy {
    pub zeta0: f64,
    pub value: f64,
    pub consumption: f64,
    pub theta: f64,
}

/// Solves a one-stock constant-coefficient problem through the quantized
/// dual, starting at `t₀ = t_grid[0]` with wealth `w0`. With `W ≈ ξ·e` the
/// density is `ζ_s = ζ exp(−κW_{s−t₀} − (r + κ²/2)(s − t₀))`, so the dual is a
/// [`PowerSumDual`] whose coefficients are computed once; `ζ` solves
/// `g′(ζ) = −w₀` and the controls follow from `I` and `g″`.
///
/// `q` and `basis` must belong to the remaining horizon `T − t₀`.
pub fn quantized_policy(
    q: &Quantizer,
    basis: &KlBasis,
    model: &crate::market_model::MarketModel,
    utility: &crate::market_model::UtilitySpec,
    t_grid: &[f64],
    w0: f64,
) -> Result<QuantizedPolicy> {
    let state = model
        .constant_state()
        .filter(|s| s.mu.len() == 1 && s.sigma.ncols() == 1)
        .ok_or_else(|| Error::InvalidInput("quantized policy needs a constant one-stock market".into()))?;
    if !(w0 > 0.0) {
        return Err(Error::WealthDomain { wealth: w0 });
    }
    let t0 = t_grid[0];
    let horizon = t_grid[t_grid.len() - 1] - t0;
    if (basis.horizon - horizon).abs() > 1e-12 * horizon || basis.dim() != q.dim {
        return Err(Error::InvalidInput("basis does not match quantizer or time grid".into()));
    }
    let (kappa, r) = (state.kappa[0], state.r);
    let pieces: Vec<Vec<(f64, f64, f64)>> = t_grid.iter().map(|&t| utility.dual_pieces(t)).collect();
    let width = pieces[0].len();
    let last = t_grid.len() - 1;
    let e: Vec<Vec<f64>> = t_grid.iter().map(|&t| (1..=q.dim).map(|n| basis.e(n, t - t0)).collect()).collect();
    let partial: Vec<Vec<f64>> = (0..q.n_points())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut coef = vec![0.0; width];
            for &k in chunk {
                let x = q.point(k);
                for (j, &t) in t_grid.iter().enumerate() {
                    let w: f64 = x.iter().zip(&e[j]).map(|(a, b)| a * b).sum();
                    let log_offset = -kappa * w - (r + 0.5 * kappa * kappa) * (t - t0);
                    let weight = if j < last { t_grid[j + 1] - t } else { 1.0 };
                    for (c, &(run, term, p)) in coef.iter_mut().zip(&pieces[j]) {
                        let piece = if j < last { run } else { term };
                        *c += q.weights[k] * piece * weight * (p * log_offset).exp();
                    }
                }
            }
            coef
        })
        .collect();
    let mut coef = vec![0.0; width];
    for part in partial {
        for (c, v) in coef.iter_mut().zip(part) {
            *c += v;
        }
    }
    let dual = PowerSumDual { coefficients: coef, powers: pieces[0].iter().map(|p| p.2).collect() };
    let zeta0 = dual.density_at_wealth(w0)?;
    Ok(QuantizedPolicy {
        zeta0,
        value: dual.value(zeta0) + w0 * zeta0,
        consumption: utility.inverse_marginal(t0, zeta0),
        theta: state.mean_variance[0] * zeta0 * dual.deriv2(zeta0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn basis_values() {
        let b = kl_basis(1.0, 50).unwrap();
        assert!((b.lambdas[0] - 4.0 / std::f64::consts::PI.powi(2)).abs() < 1e-15);
        for n in 1..=50 {
            assert_eq!(b.e(n, 0.0), 0.0);
        }
        let cov: f64 = (1..=50).map(|n| b.lambdas[n - 1] * b.e(n, 0.5).powi(2)).sum();
        assert!((cov - 0.5).abs() < 0.01);
    }

    #[test]
    fn single_point_is_the_mean() {
        let q = Quantizer::build(1, 1).unwrap();
        assert!(q.points[0].abs() < 1e-3);
        assert_eq!(q.weights, vec![1.0]);
    }

    #[test]
    fn second_moment_close_to_variance() {
        let q = Quantizer::build(1, 100).unwrap();
        let lambda = kl_basis(1.0, 1).unwrap().lambdas[0];
        let m2: f64 = q.points.iter().zip(&q.weights).map(|(x, p)| p * x * x).sum();
        assert!((m2 / lambda - 1.0).abs() < 0.01);
        assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lloyd_points_are_stationary() {
        for m in [2, 7, 40] {
            let l = lloyd_standard(m);
            let (next, _) = lloyd_step(&l.points);
            let moved = next.iter().zip(&l.points).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(moved < 1e-6);
        }
    }

    #[test]
    fn product_cells_are_voronoi_cells() {
        let q = Quantizer::build(3, 60).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lambdas = kl_basis(1.0, 3).unwrap().lambdas;
        for _ in 0..200 {
            let s: Vec<f64> =
                lambdas.iter().map(|l| l.sqrt() * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
            let nearest = (0..q.n_points())
                .min_by(|&i, &j| {
                    let di: f64 = q.point(i).iter().zip(&s).map(|(a, b)| (a - b).powi(2)).sum();
                    let dj: f64 = q.point(j).iter().zip(&s).map(|(a, b)| (a - b).powi(2)).sum();
                    di.total_cmp(&dj)
                })
                .unwrap();
            for (k, &sk) in s.iter().enumerate() {
                let axis: Vec<f64> = (0..q.n_points()).map(|i| q.point(i)[k]).collect();
                let closest = axis.iter().map(|a| (a - sk).abs()).fold(f64::INFINITY, f64::min);
                assert!(((q.point(nearest)[k] - sk).abs() - closest).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn distortion_decreases_with_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lambdas = kl_basis(1.0, 2).unwrap().lambdas;
        let samples: Vec<Vec<f64>> = (0..2000)
            .map(|_| {
                lambdas.iter().map(|l| l.sqrt() * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect()
            })
            .collect();
        let ds: Vec<f64> =
            [1, 4, 16, 64].iter().map(|&n| Quantizer::build(2, n).unwrap().distortion(&samples)).collect();
        assert!(ds.windows(2).all(|w| w[1] < w[0]), "{ds:?}");
    }

    #[test]
    fn round_trip_is_exact() {
        let q = Quantizer::build(2, 30).unwrap();
        let mut buf = Vec::new();
        q.to_writer(&mut buf).unwrap();
        let back = Quantizer::from_reader(buf.as_slice()).unwrap();
        assert_eq!(back.points, q.points);
        assert_eq!(back.weights, q.weights);
    }

    #[test]
    fn malformed_files_report_line() {
        let text = "# comment\n2 1\n0.5 0.5\n0.5 x\n";
        match Quantizer::from_reader(text.as_bytes()) {
            Err(Error::MalformedGridFile { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let short = "2 1\n0.0 1.0\n";
        assert!(matches!(Quantizer::from_reader(short.as_bytes()), Err(Error::MalformedGridFile { .. })));
    }

    #[test]
    fn quantized_policy_matches_merton() {
        use crate::benchmarks::MertonSolution;
        use crate::market_model::{MarketModel, UtilitySpec};
        let m = MarketModel::black_scholes(0.05, 0.10, 0.20).unwrap();
        let u = UtilitySpec::crra(3.0, 0.03, 1.0, 1.0).unwrap();
        let q = Quantizer::build(6, 2000).unwrap();
        let b = kl_basis(1.0, 6).unwrap();
        let t: Vec<f64> = (0..=400).map(|j| j as f64 / 400.0).collect();
        let p = quantized_policy(&q, &b, &m, &u, &t, 2.0).unwrap();
        let ms = MertonSolution::new(&m, &u, 1.0).unwrap();
        assert!((p.zeta0 / ms.zeta0(2.0) - 1.0).abs() < 0.01);
        assert!((p.consumption / (ms.gamma(0.0) * 2.0) - 1.0).abs() < 0.01);
        assert!((p.theta / (ms.pi_m[0] * 2.0) - 1.0).abs() < 0.01);
        assert!((p.value / ms.value(0.0, 2.0) - 1.0).abs() < 0.01);

        let late: Vec<f64> = (0..=160).map(|j| 0.6 + j as f64 / 400.0).collect();
        let p = quantized_policy(&q.scaled(0.4), &kl_basis(0.4, 6).unwrap(), &m, &u, &late, 3.0).unwrap();
        assert!((p.consumption / (ms.gamma(0.6) * 3.0) - 1.0).abs() < 0.01);
        assert!((p.value / ms.value(0.6, 3.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn trivial_expectations() {
        let q = Quantizer::build(4, 200).unwrap();
        let b = kl_basis(1.0, 4).unwrap();
        let t: Vec<f64> = (0..=10).map(|j| j as f64 / 10.0).collect();
        assert!((quantized_expectation(&q, &b, |_, _| 0.0, |_| 1.0, &t) - 1.0).abs() < 1e-12);
        assert!(quantized_expectation(&q, &b, |_, _| 0.0, |p| p[p.len() - 1], &t).abs() < 1e-2);
    }
}
