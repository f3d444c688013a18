//! Local variations of the objective: row averaging, the sign of pairwise
//! transfers, the stationary-point calculus behind the singly stochastic
//! bounds, region-restricted ascent with multistart certification, and the
//! Hessian at the barycentre.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, param, Error, Result};
use crate::matrix::{
    classify_region, energy_arg, f_raw, f_value, gradient_raw, special_matrix, ConstantsProfile,
    ModelParams, OverlapMatrix, SpecialKind,
};
use crate::rng;
use crate::thresholds;

/// Replaces the entries of row `i` on the column set `cols` by their mean.
pub fn average_rows(rho: &OverlapMatrix, i: usize, cols: &[usize]) -> Result<OverlapMatrix> {
    let k = rho.k();
    if cols.is_empty() {
        return param("column set must be nonempty");
    }
    if i >= k || cols.iter().any(|&j| j >= k) {
        return param("row or column index out of range");
    }
    let mut cols = cols.to_vec();
    cols.sort_unstable();
    cols.dedup();
    let mean = cols.iter().map(|&j| rho.get(i, j)).sum::<f64>() / cols.len() as f64;
    let mut e = rho.entries().to_vec();
    for &j in &cols {
        e[i * k + j] = mean;
    }
    Ok(OverlapMatrix::from_flat_unchecked(k, e))
}

/// Checks the row-averaging hypotheses `|J| >= k^lambda` and
/// `max_J rho_ij < lambda/2 - ln ln k / ln k` for some admissible lambda.
/// With `strict_lambda` the lower limit `lambda >= 3 ln ln k / ln k` is enforced too.
pub fn averaging_hypotheses(k: usize, j_size: usize, max_entry: f64, strict_lambda: bool) -> bool {
    let lk = (k as f64).ln();
    let llk = lk.ln();
    // Largest lambda allowed by the size condition.
    let lambda = ((j_size as f64).ln() / lk).min(1.0);
    if strict_lambda && lambda < 3.0 * llk / lk {
        return false;
    }
    max_entry < lambda / 2.0 - llk / lk
}

fn kq(rho: &OverlapMatrix) -> f64 {
    let kf = rho.k() as f64;
    kf - 2.0 + rho.norm_sq() / kf
}

/// Sign of `1 + delta/rho_ij - exp(d delta / (k - 2 + |rho|^2/k))` with
/// `delta = rho_il - rho_ij`, which is the sign of `df/drho_ij - df/drho_il`.
pub fn variation_sign(rho: &OverlapMatrix, i: usize, j: usize, l: usize, params: &ModelParams) -> Result<i8> {
    let k = rho.k();
    if i >= k || j >= k || l >= k {
        return param("index out of range");
    }
    let (a, b) = (rho.get(i, j), rho.get(i, l));
    if !(a > 0.0 && b > 0.0) {
        return domain("variation sign needs positive entries");
    }
    let delta = b - a;
    if delta == 0.0 {
        return Ok(0);
    }
    // Same sign as the exponential form; the logarithm avoids overflow.
    let v = (delta / a).ln_1p() - params.d * delta / kq(rho);
    Ok(if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    })
}

/// The positive root of `1 + delta/rho_ij = exp(d delta / (k - 2 + |rho|^2/k))`,
/// if one exists.
pub fn delta_star(rho: &OverlapMatrix, i: usize, j: usize, params: &ModelParams) -> Result<Option<f64>> {
    let k = rho.k();
    if i >= k || j >= k {
        return param("index out of range");
    }
    let x = rho.get(i, j);
    if !(x > 0.0) {
        return domain("delta_star needs a positive entry");
    }
    let a = 1.0 / x;
    let b = params.d / kq(rho);
    if a <= b {
        return Ok(None);
    }
    // g is concave with g(0) = 0 and g'(0) > 0; its maximum sits at (a - b)/(ab).
    let g = |t: f64| (a * t).ln_1p() - b * t;
    let mut lo = (a - b) / (a * b);
    let mut hi = 2.0 * lo;
    let mut guard = 0;
    while g(hi) >= 0.0 {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::NoConvergence("could not bracket delta_star".into()));
        }
    }
    for _ in 0..400 {
        if hi - lo <= 1e-12 {
            return Ok(Some(0.5 * (lo + hi)));
        }
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence("bisection cap reached".into()))
}

/// `xi(b) = k^{2b/k} (1/b - 1/k)` and its minimiser `mu`.
#[derive(Clone, Debug, Serialize)]
pub struct XiProfile {
    pub k: usize,
    pub mu: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct XiGridCheck {
    pub points: usize,
    pub sign_changes: usize,
    pub sign_change_near: Option<f64>,
    pub decreasing_below_mu: bool,
    pub increasing_above_mu: bool,
}

impl XiProfile {
    pub fn new(k: usize) -> Result<Self> {
        if k < 8 {
            return param(format!("mu is real only for k >= 8, got {k}"));
        }
        let kf = k as f64;
        Ok(Self { k, mu: kf / 2.0 * (1.0 - (1.0 - 2.0 / kf.ln()).sqrt()) })
    }

    pub fn xi(&self, b: f64) -> f64 {
        let kf = self.k as f64;
        (2.0 * b / kf * kf.ln()).exp() * (1.0 / b - 1.0 / kf)
    }

    pub fn xi_prime(&self, b: f64) -> f64 {
        let kf = self.k as f64;
        let lk = kf.ln();
        (2.0 * b / kf * lk).exp() * (2.0 * lk / kf * (1.0 / b - 1.0 / kf) - 1.0 / (b * b))
    }

    /// Scans `xi'` on an open grid of `(0, k/2)`.
    pub fn grid_check(&self, points: usize) -> XiGridCheck {
        let half = self.k as f64 / 2.0;
        let grid: Vec<f64> = (1..=points).map(|i| half * i as f64 / (points + 1) as f64).collect();
        let mut changes = 0;
        let mut near = None;
        let mut dec = true;
        let mut inc = true;
        for w in grid.windows(2) {
            let (p0, p1) = (self.xi_prime(w[0]), self.xi_prime(w[1]));
            if (p0 < 0.0) != (p1 < 0.0) {
                changes += 1;
                near = Some(0.5 * (w[0] + w[1]));
            }
        }
        for &b in &grid {
            let p = self.xi_prime(b);
            if b < self.mu && p >= 0.0 {
                dec = false;
            }
            if b > self.mu && p <= 0.0 {
                inc = false;
            }
        }
        XiGridCheck {
            points,
            sign_changes: changes,
            sign_change_near: near,
            decreasing_below_mu: dec,
            increasing_above_mu: inc,
        }
    }

    /// Range of `xi'` over a grid of `[lo, hi]`.
    pub fn derivative_range(&self, lo: f64, hi: f64, points: usize) -> (f64, f64) {
        (0..=points)
            .map(|i| self.xi_prime(lo + (hi - lo) * i as f64 / points as f64))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AscentConfig {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub multistart_count: usize,
    pub seed: u64,
    /// Restrict to separable matrices with exactly this many stable entries.
    pub region: Option<usize>,
    pub floor: f64,
    pub profile: ConstantsProfile,
}

impl AscentConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            max_iterations: 5_000,
            step_tolerance: 1e-13,
            multistart_count: 1_000,
            seed,
            region: None,
            floor: 1e-12,
            profile: ConstantsProfile::paper(k),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || !(self.step_tolerance > 0.0) {
            return param("max_iterations and step_tolerance must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AscentOutcome {
    pub matrix: OverlapMatrix,
    pub value: f64,
    pub start_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted move (starts with the start value).
    pub trace: Vec<f64>,
}

pub fn in_region(rho: &OverlapMatrix, region: Option<usize>, profile: &ConstantsProfile) -> bool {
    if !rho.is_doubly_stochastic(1e-9) {
        return false;
    }
    match region {
        None => true,
        Some(s) => {
            let r = classify_region(rho, profile);
            r.separable && r.s == s
        }
    }
}

struct Engine<'a> {
    k: usize,
    d: f64,
    cfg: &'a AscentConfig,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(k: usize, d: f64, cfg: &'a AscentConfig) -> Self {
        Self { k, d, cfg, lower: vec![0.0; k * k], upper: vec![f64::INFINITY; k * k] }
    }

    /// Per-entry box for the current iterate: stable entries stay at or above
    /// `1 - kappa`, the others at or below `overlap_high`.
    fn set_bounds(&mut self, x: &[f64]) {
        if self.cfg.region.is_none() {
            return;
        }
        let hi = self.cfg.profile.overlap_high;
        let top = 1.0 - self.cfg.profile.kappa;
        for (idx, &v) in x.iter().enumerate() {
            if v > hi {
                self.lower[idx] = top;
                self.upper[idx] = 1.0;
            } else {
                self.lower[idx] = 0.0;
                self.upper[idx] = hi;
            }
        }
    }

    fn f(&self, x: &[f64]) -> f64 {
        f_raw(self.k, x, self.d)
    }

    fn feasible(&self, x: &[f64]) -> bool {
        if x.iter().zip(&self.lower).zip(&self.upper).any(|((v, l), u)| v < l || v > u) {
            return false;
        }
        match self.cfg.region {
            None => true,
            Some(s) => {
                let m = OverlapMatrix::from_flat_unchecked(self.k, x.to_vec());
                let r = classify_region(&m, &self.cfg.profile);
                r.separable && r.s == s
            }
        }
    }

    /// Projects `g` onto `{row sums 0, column sums 0, fixed entries 0}` by
    /// solving for row and column multipliers with Gauss-Seidel sweeps.
    fn project(&self, g: &[f64], fixed: &[bool]) -> Vec<f64> {
        let k = self.k;
        let mut u = vec![0.0; k];
        let mut v = vec![0.0; k];
        let any_fixed = fixed.iter().any(|f| *f);
        let sweeps = if any_fixed { 2_000 } else { 1 };
        if !any_fixed {
            let total: f64 = g.iter().sum::<f64>() / (k * k) as f64;
            for i in 0..k {
                u[i] = g[i * k..(i + 1) * k].iter().sum::<f64>() / k as f64 - total;
            }
            for j in 0..k {
                v[j] = (0..k).map(|i| g[i * k + j]).sum::<f64>() / k as f64;
            }
        } else {
            for _ in 0..sweeps {
                let mut delta: f64 = 0.0;
                for i in 0..k {
                    let (mut s, mut c) = (0.0, 0usize);
                    for j in 0..k {
                        if !fixed[i * k + j] {
                            s += g[i * k + j] - v[j];
                            c += 1;
                        }
                    }
                    if c > 0 {
                        let nu = s / c as f64;
                        delta = delta.max((nu - u[i]).abs());
                        u[i] = nu;
                    }
                }
                for j in 0..k {
                    let (mut s, mut c) = (0.0, 0usize);
                    for i in 0..k {
                        if !fixed[i * k + j] {
                            s += g[i * k + j] - u[i];
                            c += 1;
                        }
                    }
                    if c > 0 {
                        let nv = s / c as f64;
                        delta = delta.max((nv - v[j]).abs());
                        v[j] = nv;
                    }
                }
                if delta < 1e-15 {
                    break;
                }
            }
        }
        let mut p = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                if !fixed[i * k + j] {
                    p[i * k + j] = g[i * k + j] - u[i] - v[j];
                }
            }
        }
        p
    }

    /// Largest t with `x + t p` inside the box.
    fn max_step(&self, x: &[f64], p: &[f64]) -> f64 {
        let mut t = f64::INFINITY;
        for idx in 0..x.len() {
            if p[idx] < 0.0 {
                t = t.min((x[idx] - self.lower[idx]).max(0.0) / -p[idx]);
            } else if p[idx] > 0.0 && self.upper[idx].is_finite() {
                t = t.min((self.upper[idx] - x[idx]).max(0.0) / p[idx]);
            }
        }
        t
    }

    fn direction(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        let n = x.len();
        let act = 1e-10;
        let mut fixed = vec![false; n];
        let mut p = self.project(g, &fixed);
        for _ in 0..n {
            let mut changed = false;
            for idx in 0..n {
                if fixed[idx] {
                    continue;
                }
                let at_low = x[idx] - self.lower[idx] <= act && p[idx] < 0.0;
                let at_high = self.upper[idx] - x[idx] <= act && p[idx] > 0.0;
                if at_low || at_high {
                    fixed[idx] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            p = self.project(g, &fixed);
        }
        p
    }

    fn try_step(&self, x: &[f64], fx: f64, p: &[f64], t0: f64, y: &mut Vec<f64>) -> Option<(f64, f64)> {
        let pn = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(pn > 0.0) {
            return None;
        }
        let tmax = self.max_step(x, p);
        let mut t = t0.min(tmax);
        while t * pn > self.cfg.step_tolerance {
            y.clear();
            y.extend(x.iter().zip(p).map(|(a, b)| a + t * b));
            for (idx, v) in y.iter_mut().enumerate() {
                *v = v.clamp(self.lower[idx], self.upper[idx]);
            }
            if self.feasible(y) {
                let fy = self.f(y);
                if fy > fx {
                    return Some((fy, t));
                }
            }
            t *= 0.5;
        }
        None
    }

    /// Best 2x2 cycle transfer `+e_ij + e_ab - e_ib - e_aj` by first-order gain.
    fn cycle_move(&self, x: &[f64], fx: f64, g: &[f64], y: &mut Vec<f64>) -> Option<f64> {
        let k = self.k;
        let mut cands: Vec<(f64, usize, usize, usize, usize)> = Vec::new();
        for i in 0..k {
            for a in 0..k {
                if a == i {
                    continue;
                }
                for j in 0..k {
                    for b in 0..k {
                        if b == j {
                            continue;
                        }
                        let gain = g[i * k + j] + g[a * k + b] - g[i * k + b] - g[a * k + j];
                        if gain > 0.0 {
                            cands.push((gain, i, a, j, b));
                        }
                    }
                }
            }
        }
        cands.sort_by(|p, q| q.0.total_cmp(&p.0));
        for &(_, i, a, j, b) in cands.iter().take(8) {
            let mut p = vec![0.0; k * k];
            p[i * k + j] = 1.0;
            p[a * k + b] = 1.0;
            p[i * k + b] = -1.0;
            p[a * k + j] = -1.0;
            let tmax = self.max_step(x, &p);
            if let Some((fy, _)) = self.try_step(x, fx, &p, tmax.min(1.0), y) {
                return Some(fy);
            }
        }
        None
    }

    /// Averages two rows (or two columns); both operations keep the matrix
    /// doubly stochastic and never lower the entropy.
    fn averaging_move(&self, x: &[f64], fx: f64, y: &mut Vec<f64>) -> Option<f64> {
        let k = self.k;
        let mut best: Option<(f64, Vec<f64>)> = None;
        for a in 0..k {
            for b in a + 1..k {
                for by_rows in [true, false] {
                    let mut z = x.to_vec();
                    for t in 0..k {
                        let (p, q) = if by_rows { (a * k + t, b * k + t) } else { (t * k + a, t * k + b) };
                        let m = 0.5 * (x[p] + x[q]);
                        z[p] = m;
                        z[q] = m;
                    }
                    if z == x || !self.feasible(&z) {
                        continue;
                    }
                    let fz = self.f(&z);
                    if fz > fx && best.as_ref().map_or(true, |(bf, _)| fz > *bf) {
                        best = Some((fz, z));
                    }
                }
            }
        }
        best.map(|(fz, z)| {
            *y = z;
            fz
        })
    }
}

/// Monotone ascent of f inside the configured region of the Birkhoff polytope.
pub fn ascend_region(start: &OverlapMatrix, params: &ModelParams, config: &AscentConfig) -> Result<AscentOutcome> {
    config.validate()?;
    let k = start.k();
    if k != params.k {
        return param("matrix size and k disagree");
    }
    if !in_region(start, config.region, &config.profile) {
        return param("start matrix is not in the configured region");
    }
    let mut eng = Engine::new(k, params.d, config);
    let mut x = start.entries().to_vec();
    eng.set_bounds(&x);
    let start_value = eng.f(&x);
    let mut fx = start_value;
    let mut trace = vec![fx];
    let mut g = vec![0.0; k * k];
    let mut y = Vec::with_capacity(k * k);
    let mut t_prev: f64 = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        gradient_raw(k, &x, params.d, config.floor, &mut g);
        let p = eng.direction(&x, &g);
        let accepted = if let Some((fy, t)) = eng.try_step(&x, fx, &p, (t_prev * 4.0).max(1e-8), &mut y) {
            t_prev = t;
            Some(fy)
        } else if let Some(fy) = eng.cycle_move(&x, fx, &g, &mut y) {
            Some(fy)
        } else {
            eng.averaging_move(&x, fx, &mut y)
        };
        match accepted {
            Some(fy) => {
                std::mem::swap(&mut x, &mut y);
                fx = fy;
                trace.push(fx);
            }
            None => {
                converged = true;
                break;
            }
        }
    }
    Ok(AscentOutcome {
        matrix: OverlapMatrix::from_flat_unchecked(k, x),
        value: fx,
        start_value,
        iterations,
        converged,
        trace,
    })
}

/// Sinkhorn balancing of a positive matrix.
pub fn sinkhorn(k: usize, mut w: Vec<f64>, tol: f64, max_sweeps: usize) -> Vec<f64> {
    for _ in 0..max_sweeps {
        for row in w.chunks_mut(k) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        let mut dev: f64 = 0.0;
        for j in 0..k {
            let s: f64 = (0..k).map(|i| w[i * k + j]).sum();
            for i in 0..k {
                w[i * k + j] /= s;
            }
            dev = dev.max((s - 1.0).abs());
        }
        if dev < tol {
            break;
        }
    }
    w
}

/// Centre of the s-stable region used for seeded starts. For `s = k - 1` the
/// face barycentre collapses to the identity, which is k-stable, so the last
/// row and column are spread instead.
pub fn region_center(k: usize, s: usize) -> Result<OverlapMatrix> {
    if s + 1 < k {
        return special_matrix(SpecialKind::SStable, k, Some(s));
    }
    if s + 1 == k {
        let kf = k as f64;
        let mut e = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                e[i * k + j] = if i == k - 1 || j == k - 1 {
                    1.0 / kf
                } else if i == j {
                    1.0 - 1.0 / kf
                } else {
                    0.0
                };
            }
        }
        return OverlapMatrix::from_flat(k, e);
    }
    param("k-stable matrices are outside every good region")
}

fn random_birkhoff(k: usize, spread: f64, rng: &mut rng::Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..k * k).map(|_| (spread * rng.sample::<f64, _>(StandardNormal)).exp()).collect();
    sinkhorn(k, w, 1e-15, 10_000)
}

fn random_permutation(k: usize, rng: &mut rng::Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        let j = rng.gen_range(0..=i);
        p.swap(i, j);
    }
    p
}

/// Draws a random doubly stochastic start inside the separable s-stable region.
pub fn random_region_start(k: usize, s: usize, profile: &ConstantsProfile, rng: &mut rng::Rng) -> Result<OverlapMatrix> {
    for attempt in 0..1_000 {
        let damp = 1.0 / (1.0 + attempt as f64 / 50.0);
        let e = if s == 0 {
            let spread = rng.gen_range(0.0..2.5) * damp;
            random_birkhoff(k, spread, rng)
        } else {
            let c = region_center(k, s)?;
            let r = random_birkhoff(k, rng.gen_range(0.0..2.0), rng);
            let lam = rng.gen_range(0.0..0.35) * damp;
            let rp = random_permutation(k, rng);
            let cp = random_permutation(k, rng);
            let mut e = vec![0.0; k * k];
            for i in 0..k {
                for j in 0..k {
                    e[i * k + j] = (1.0 - lam) * c.get(rp[i], cp[j]) + lam * r[i * k + j];
                }
            }
            e
        };
        let m = OverlapMatrix::from_flat_unchecked(k, e);
        if in_region(&m, Some(s), profile) {
            return Ok(m);
        }
    }
    Err(Error::NoConvergence(format!("could not sample a start in region s={s}")))
}

/// Region indices used when none are given: 0, 1, 2, k/2, floor(k^0.999),
/// k-2 and k-1, clamped to `0..k` and deduplicated.
pub fn default_regions(k: usize) -> Vec<usize> {
    let mut v = vec![0, 1, 2, k / 2, (k as f64).powf(0.999).floor() as usize, k.saturating_sub(2), k - 1];
    v.retain(|&s| s < k);
    v.sort_unstable();
    v.dedup();
    v
}

#[derive(Clone, Debug, Serialize)]
pub struct RegionResult {
    pub s: usize,
    pub starts: usize,
    pub best_value: f64,
    pub best_matrix: OverlapMatrix,
    pub best_start_index: u64,
    pub all_converged: bool,
    pub distance_to_barycenter: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SinglyPoint {
    pub s: usize,
    pub alpha: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificationReport {
    pub k: usize,
    pub d: f64,
    pub best_matrix: OverlapMatrix,
    pub best_value: f64,
    pub best_region: usize,
    pub reference_value: f64,
    pub margin: f64,
    pub starts_run: usize,
    pub converged_to_barycenter: bool,
    pub barycenter_threshold: f64,
    pub regions: Vec<RegionResult>,
    pub singly_family: Vec<SinglyPoint>,
    pub seed: u64,
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub profile: ConstantsProfile,
}

/// Row `i < s`: `1 - alpha` on the diagonal and `alpha/(k-1)` elsewhere; other rows uniform.
pub fn singly_family(k: usize, s: usize, alpha: f64) -> Result<OverlapMatrix> {
    if s > k || !(0.0..=1.0).contains(&alpha) {
        return param("need s <= k and alpha in [0,1]");
    }
    let kf = k as f64;
    let mut e = vec![1.0 / kf; k * k];
    for i in 0..s {
        for j in 0..k {
            e[i * k + j] = if i == j { 1.0 - alpha } else { alpha / (kf - 1.0) };
        }
    }
    OverlapMatrix::from_flat(k, e)
}

/// Maximises f over alpha in (0, 0.49] for each s, by grid then golden section.
pub fn scan_singly_family(params: &ModelParams) -> Result<Vec<SinglyPoint>> {
    let k = params.k;
    let mut out = Vec::with_capacity(k + 1);
    for s in 0..=k {
        let eval = |a: f64| f_value(&singly_family(k, s, a).expect("valid"), params).expect("in domain");
        let grid = 400;
        let (mut ba, mut bv) = (0.49, f64::NEG_INFINITY);
        for i in 1..=grid {
            let a = 0.49 * i as f64 / grid as f64;
            let v = eval(a);
            if v > bv {
                bv = v;
                ba = a;
            }
        }
        let step = 0.49 / grid as f64;
        let (mut lo, mut hi) = ((ba - step).max(1e-12), (ba + step).min(0.49));
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let x1 = hi - phi * (hi - lo);
            let x2 = lo + phi * (hi - lo);
            if eval(x1) < eval(x2) {
                lo = x1;
            } else {
                hi = x2;
            }
        }
        let a = 0.5 * (lo + hi);
        let v = eval(a);
        if v > bv {
            bv = v;
            ba = a;
        }
        out.push(SinglyPoint { s, alpha: ba, value: bv });
    }
    Ok(out)
}

/// Multistart ascent over the given regions (default: [`default_regions`]).
/// Start `t` uses random stream `t` of `config.seed`, so the report does not
/// depend on the number of worker threads.
pub fn certify_barycenter_max(params: &ModelParams, config: &AscentConfig, regions: Option<&[usize]>) -> Result<CertificationReport> {
    config.validate()?;
    let k = params.k;
    let regions: Vec<usize> = match regions {
        Some(r) => r.to_vec(),
        None => default_regions(k),
    };
    if regions.is_empty() || regions.iter().any(|&s| s >= k) {
        return param("regions must be a nonempty subset of 0..k");
    }
    let per = config.multistart_count.div_ceil(regions.len()).max(1);
    let jobs: Vec<(usize, u64)> = regions
        .iter()
        .enumerate()
        .flat_map(|(ri, &s)| (0..per).map(move |t| (s, (ri * per + t) as u64)))
        .collect();
    let bar = special_matrix(SpecialKind::Barycenter, k, None)?;
    let results: Vec<Result<(usize, u64, AscentOutcome)>> = jobs
        .par_iter()
        .map(|&(s, idx)| {
            let mut cfg = config.clone();
            cfg.region = Some(s);
            // The first start of every region is its centre.
            let start = if idx % per as u64 == 0 {
                region_center(k, s)?
            } else {
                let mut r = rng::stream(config.seed, idx);
                random_region_start(k, s, &config.profile, &mut r)?
            };
            Ok((s, idx, ascend_region(&start, params, &cfg)?))
        })
        .collect();
    let mut by_region: Vec<RegionResult> = Vec::new();
    for r in results {
        let (s, idx, out) = r?;
        let dist = out.matrix.distance(&bar);
        match by_region.iter_mut().find(|x| x.s == s) {
            Some(entry) => {
                entry.starts += 1;
                entry.all_converged &= out.converged;
                if out.value > entry.best_value {
                    entry.best_value = out.value;
                    entry.best_matrix = out.matrix;
                    entry.best_start_index = idx;
                    entry.distance_to_barycenter = dist;
                }
            }
            None => by_region.push(RegionResult {
                s,
                starts: 1,
                best_value: out.value,
                best_matrix: out.matrix,
                best_start_index: idx,
                all_converged: out.converged,
                distance_to_barycenter: dist,
            }),
        }
    }
    let reference_value = f_value(&bar, params)?;
    let best = by_region
        .iter()
        .max_by(|a, b| a.best_value.total_cmp(&b.best_value))
        .expect("at least one region");
    let threshold = 1e-6;
    let zero = by_region.iter().find(|r| r.s == 0);
    Ok(CertificationReport {
        k,
        d: params.d,
        best_matrix: best.best_matrix.clone(),
        best_value: best.best_value,
        best_region: best.s,
        reference_value,
        margin: reference_value - best.best_value,
        starts_run: jobs.len(),
        converged_to_barycenter: zero.is_some_and(|z| z.distance_to_barycenter < threshold),
        barycenter_threshold: threshold,
        regions: by_region,
        singly_family: scan_singly_family(params)?,
        seed: config.seed,
        max_iterations: config.max_iterations,
        step_tolerance: config.step_tolerance,
        profile: config.profile.clone(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StableCrossover {
    pub k: usize,
    /// `g(d) = f(rho_stable) - f(rho_bar) = intercept + slope * d`.
    pub slope: f64,
    pub intercept: f64,
    pub d_star: f64,
    pub d_star_closed_form: f64,
    pub bisection_steps: usize,
    pub d_first: f64,
}

pub fn stable_crossover(k: usize, tol: f64) -> Result<StableCrossover> {
    if k < 2 {
        return param("need k >= 2");
    }
    let st = special_matrix(SpecialKind::Stable, k, None)?;
    let bar = special_matrix(SpecialKind::Barycenter, k, None)?;
    let g = |d: f64| -> f64 {
        let p = ModelParams { k, d, n: None, m: None };
        f_value(&st, &p).expect("stable in domain") - f_value(&bar, &p).expect("barycentre in domain")
    };
    let slope = 0.5 * energy_arg(k, st.norm_sq()).ln() - energy_arg(k, bar.norm_sq()).ln() * 0.5;
    let intercept = crate::matrix::entropy_of_matrix(&st) - crate::matrix::entropy_of_matrix(&bar);
    let (mut lo, mut hi) = (1e-12, 1.0);
    if g(lo) >= 0.0 {
        return domain("stable matrix already beats the barycentre at d -> 0");
    }
    while g(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NoConvergence("no crossover below d = 1e12".into()));
        }
    }
    let mut steps = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
        if steps > 500 {
            return Err(Error::NoConvergence("crossover bisection cap".into()));
        }
    }
    Ok(StableCrossover {
        k,
        slope,
        intercept,
        d_star: 0.5 * (lo + hi),
        d_star_closed_form: -intercept / slope,
        bisection_steps: steps,
        d_first: thresholds::d_first(k as f64),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct HessianReport {
    pub k: usize,
    pub d: f64,
    pub closed_form_c: f64,
    /// `(eigenvalue, multiplicity)` from the closed form.
    pub spectrum: Vec<(f64, usize)>,
    /// Eigenvalues of the closed-form matrix from a symmetric eigensolver, ascending.
    pub numeric_eigenvalues: Vec<f64>,
    pub max_eigen_error: f64,
    pub negative_definite: bool,
    #[serde(skip)]
    pub matrix: DMatrix<f64>,
}

/// `f` in the chart that drops the `(k,k)` entry and restores it from the mass constraint.
pub fn chart_f(k: usize, d: f64, xhat: &[f64]) -> f64 {
    let mut e = Vec::with_capacity(k * k);
    e.extend_from_slice(xhat);
    e.push(k as f64 - xhat.iter().sum::<f64>());
    f_raw(k, &e, d)
}

pub fn hessian_at_barycenter(params: &ModelParams) -> Result<HessianReport> {
    let k = params.k;
    let kf = k as f64;
    let dim = k * k - 1;
    let c = 1.0 - params.d / (kf * kf * (1.0 - 1.0 / kf).powi(2));
    let matrix = DMatrix::from_fn(dim, dim, |a, b| -c * (if a == b { 2.0 } else { 1.0 }));
    let mut numeric: Vec<f64> = SymmetricEigen::new(matrix.clone()).eigenvalues.iter().copied().collect();
    numeric.sort_by(f64::total_cmp);
    let mut expected = vec![-c; dim - 1];
    expected.push(-c * kf * kf);
    expected.sort_by(f64::total_cmp);
    let err = numeric.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(HessianReport {
        k,
        d: params.d,
        closed_form_c: c,
        spectrum: vec![(-c, dim - 1), (-c * kf * kf, 1)],
        numeric_eigenvalues: numeric,
        max_eigen_error: err,
        negative_definite: c > 0.0,
        matrix,
    })
}

/// Central-difference Hessian of `f` in the chart at the barycentre, with one
/// Richardson extrapolation step.
pub fn finite_difference_hessian(params: &ModelParams, h: f64) -> DMatrix<f64> {
    let k = params.k;
    let dim = k * k - 1;
    let base = vec![1.0 / k as f64; dim];
    let at = |h: f64| {
        let mut m = DMatrix::zeros(dim, dim);
        let mut x = base.clone();
        for a in 0..dim {
            for b in a..dim {
                let mut ev = |sa: f64, sb: f64| {
                    x[a] += sa;
                    x[b] += sb;
                    let v = chart_f(k, params.d, &x);
                    x[a] -= sa;
                    x[b] -= sb;
                    v
                };
                let v = (ev(h, h) - ev(h, -h) - ev(-h, h) + ev(-h, -h)) / (4.0 * h * h);
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
        }
        m
    };
    let coarse = at(h);
    let fine = at(h / 2.0);
    (fine * 4.0 - coarse) / 3.0
}

/// Central-difference gradient of `f` in the chart at the barycentre.
pub fn chart_gradient_at_barycenter(params: &ModelParams, h: f64) -> Vec<f64> {
    let k = params.k;
    let dim = k * k - 1;
    let mut x = vec![1.0 / k as f64; dim];
    (0..dim)
        .map(|a| {
            x[a] += h;
            let up = chart_f(k, params.d, &x);
            x[a] -= 2.0 * h;
            let dn = chart_f(k, params.d, &x);
            x[a] += h;
            (up - dn) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{entropy_of_matrix, f_gradient};
    use proptest::prelude::*;

    fn bar(k: usize) -> OverlapMatrix {
        special_matrix(SpecialKind::Barycenter, k, None).unwrap()
    }

    #[test]
    fn averaging_examples() {
        let b = bar(4);
        assert_eq!(average_rows(&b, 1, &[0, 2]).unwrap(), b);
        let st = special_matrix(SpecialKind::Stable, 4, None).unwrap();
        let avg = average_rows(&st, 0, &[0, 1, 2, 3]).unwrap();
        assert!(avg.row(0).iter().all(|x| (x - 0.25).abs() < 1e-15));
        assert_eq!(avg.row(1), st.row(1));
        assert!(average_rows(&st, 0, &[]).is_err());
    }

    #[test]
    fn delta_star_example() {
        let k = 10;
        let d = 2.0 * 10.0 * 10f64.ln();
        let p = ModelParams::new(k, d).unwrap();
        let ds = delta_star(&bar(k), 0, 0, &p).unwrap().unwrap();
        // Independent bisection on the exponential form.
        let b = d / (k as f64 - 2.0 + 0.1);
        let g = |t: f64| 1.0 + 10.0 * t - (b * t).exp();
        let (mut lo, mut hi) = (0.05, 1.0);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if g(m) > 0.0 { lo = m } else { hi = m }
        }
        assert!((ds - lo).abs() < 1e-10);
        assert!((ds - 0.185).abs() < 5e-3, "{ds}");
        assert!(g(ds).abs() < 1e-10);
        assert!(g(ds / 2.0) > 0.0);
    }

    #[test]
    fn delta_star_absent_when_condition_fails() {
        let k = 4;
        let p = ModelParams::new(k, 100.0).unwrap();
        assert_eq!(delta_star(&bar(k), 0, 0, &p).unwrap(), None);
    }

    #[test]
    fn xi_examples() {
        let xp = XiProfile::new(100).unwrap();
        assert!((xp.mu - 12.393).abs() < 1e-3, "{}", xp.mu);
        let kf = 100f64;
        assert!((xp.xi(1.0) - kf.powf(2.0 / kf) * (1.0 - 1.0 / kf)).abs() < 1e-14);
        let chk = xp.grid_check(10_000);
        assert_eq!(chk.sign_changes, 1);
        assert!((chk.sign_change_near.unwrap() - xp.mu).abs() < 0.01);
        assert!(chk.decreasing_below_mu && chk.increasing_above_mu);
        let (lo, hi) = xp.derivative_range(0.99, 1.01, 100);
        assert!(hi < 0.0 && lo.is_finite());
        assert!(XiProfile::new(7).is_err());
    }

    #[test]
    fn xi_derivative_matches_difference() {
        let xp = XiProfile::new(40).unwrap();
        for b in [0.5, 1.0, 3.0, 7.0, 15.0] {
            let h = 1e-6;
            let fd = (xp.xi(b + h) - xp.xi(b - h)) / (2.0 * h);
            assert!((fd - xp.xi_prime(b)).abs() < 1e-6 * xp.xi_prime(b).abs().max(1.0));
        }
    }

    #[test]
    fn ascent_from_barycenter_is_stationary() {
        let k = 6;
        let p = ModelParams::new(k, 10.0).unwrap();
        let mut cfg = AscentConfig::new(k, 1);
        cfg.region = Some(0);
        let out = ascend_region(&bar(k), &p, &cfg).unwrap();
        assert!(out.converged);
        assert!(out.matrix.distance(&bar(k)) < 1e-12);
    }

    #[test]
    fn ascent_is_monotone_feasible_and_finds_barycenter() {
        let k = 8;
        let d = thresholds::d_cond(8.0) - 0.1;
        let p = ModelParams::new(k, d).unwrap();
        let mut cfg = AscentConfig::new(k, 5);
        cfg.region = Some(0);
        for t in 0..5 {
            let mut r = rng::stream(5, t);
            let start = random_region_start(k, 0, &cfg.profile, &mut r).unwrap();
            let out = ascend_region(&start, &p, &cfg).unwrap();
            assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
            assert!(in_region(&out.matrix, Some(0), &cfg.profile));
            assert!(out.value >= out.start_value);
            assert!(out.matrix.distance(&bar(k)) < 1e-6, "{}", out.matrix.distance(&bar(k)));
        }
    }

    #[test]
    fn stable_region_ascent_stays_in_region() {
        let k = 8;
        let p = ModelParams::new(k, thresholds::d_cond(8.0) - 0.5).unwrap();
        let mut cfg = AscentConfig::new(k, 9);
        for s in [1, 3, 7] {
            cfg.region = Some(s);
            let mut r = rng::stream(9, s as u64);
            let start = random_region_start(k, s, &cfg.profile, &mut r).unwrap();
            let out = ascend_region(&start, &p, &cfg).unwrap();
            assert!(in_region(&out.matrix, Some(s), &cfg.profile), "s={s}");
            assert!(out.value >= out.start_value);
        }
    }

    #[test]
    fn region_center_membership() {
        let prof = ConstantsProfile::paper(20);
        for s in default_regions(20) {
            assert!(in_region(&region_center(20, s).unwrap(), Some(s), &prof), "s={s}");
        }
        assert_eq!(default_regions(20), vec![0, 1, 2, 10, 18, 19]);
        assert!(region_center(5, 5).is_err());
    }

    #[test]
    fn crossover_is_affine_and_below_first_moment() {
        let c = stable_crossover(20, 1e-10).unwrap();
        assert!(c.slope > 0.0);
        assert!((c.d_star - c.d_star_closed_form).abs() < 1e-9);
        assert!(c.d_star < c.d_first);
    }

    #[test]
    fn hessian_example() {
        let p = ModelParams::new(3, 2.0).unwrap();
        let h = hessian_at_barycenter(&p).unwrap();
        assert!((h.closed_form_c - 0.5).abs() < 1e-15);
        let neg_half = h.numeric_eigenvalues.iter().filter(|x| (**x + 0.5).abs() < 1e-10).count();
        assert_eq!(neg_half, 7);
        assert!(h.numeric_eigenvalues.iter().any(|x| (x + 4.5).abs() < 1e-10));
        assert!(h.max_eigen_error < 1e-8);
        let fd = finite_difference_hessian(&p, 1e-3);
        let err = (&fd - &h.matrix).abs().max() / h.matrix.abs().max();
        assert!(err < 1e-5, "{err}");
        let g = chart_gradient_at_barycenter(&p, 1e-5);
        assert!(g.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn hessian_definiteness_boundary() {
        for k in 3..7usize {
            let edge = ((k - 1) * (k - 1)) as f64;
            assert!(hessian_at_barycenter(&ModelParams::new(k, edge * 0.99).unwrap()).unwrap().negative_definite);
            assert!(!hessian_at_barycenter(&ModelParams::new(k, edge * 1.01).unwrap()).unwrap().negative_definite);
        }
    }

    #[test]
    fn singly_family_contains_barycenter() {
        let k = 6;
        let m = singly_family(k, 0, 0.3).unwrap();
        assert_eq!(m, bar(k));
        let m = singly_family(k, 3, 0.2).unwrap();
        assert!(m.is_singly_stochastic(1e-14));
    }

    #[test]
    fn small_certification_run() {
        let k = 6;
        let p = ModelParams::new(k, thresholds::d_cond(6.0) - 0.5).unwrap();
        let mut cfg = AscentConfig::new(k, 11);
        cfg.multistart_count = 24;
        let rep = certify_barycenter_max(&p, &cfg, None).unwrap();
        assert_eq!(rep.starts_run, 24);
        assert!(rep.best_value <= rep.reference_value + 1e-9);
        assert!(rep.converged_to_barycenter);
    }

    fn interior(k: usize) -> impl Strategy<Value = OverlapMatrix> {
        prop::collection::vec(0.05f64..1.0, k * k).prop_map(move |v| {
            let s: f64 = v.iter().sum();
            OverlapMatrix::from_flat(k, v.iter().map(|x| x * k as f64 / s).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn averaging_raises_entropy(rho in (2usize..7).prop_flat_map(interior), i in 0usize..7, mask in prop::collection::vec(any::<bool>(), 7)) {
            let k = rho.k();
            let i = i % k;
            let mut cols: Vec<usize> = (0..k).filter(|j| mask[*j]).collect();
            if cols.is_empty() { cols.push(0); }
            let out = average_rows(&rho, i, &cols).unwrap();
            let (h0, h1) = (entropy_of_matrix(&rho), entropy_of_matrix(&out));
            prop_assert!(h1 >= h0 - 1e-15);
            if out.distance(&rho) > 1e-9 {
                prop_assert!(h1 > h0);
            }
        }

        #[test]
        fn sign_matches_gradient(rho in (2usize..7).prop_flat_map(interior), d in 0.5f64..30.0, i in 0usize..7, j in 0usize..7, l in 0usize..7) {
            let k = rho.k();
            let (i, j, l) = (i % k, j % k, l % k);
            let p = ModelParams::new(k, d).unwrap();
            let g = f_gradient(&rho, &p).unwrap();
            let diff = g[i][j] - g[i][l];
            let s = variation_sign(&rho, i, j, l, &p).unwrap();
            if j == l {
                prop_assert_eq!(s, 0);
            } else if diff.abs() > 1e-12 {
                prop_assert_eq!(s as f64, diff.signum());
            }
        }

        #[test]
        fn delta_star_solves_its_equation(rho in (2usize..7).prop_flat_map(interior), d in 0.1f64..10.0, i in 0usize..7, j in 0usize..7) {
            let k = rho.k();
            let (i, j) = (i % k, j % k);
            let p = ModelParams::new(k, d).unwrap();
            if let Some(ds) = delta_star(&rho, i, j, &p).unwrap() {
                let x = rho.get(i, j);
                let b = d / (k as f64 - 2.0 + rho.norm_sq() / k as f64);
                let lhs = 1.0 + ds / x;
                prop_assert!((lhs - (b * ds).exp()).abs() <= 1e-10 * lhs.max(1.0));
                prop_assert!(1.0 + ds / (2.0 * x) - (b * ds / 2.0).exp() > 0.0);
            }
        }
    }
}
