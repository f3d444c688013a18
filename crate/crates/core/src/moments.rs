//! Exact and Monte Carlo moments of the number of colourings, the overlap
//! decomposition of the second moment, and tail-bound utilities.

use num_bigint::{BigInt, BigUint};
use num_integer::{binomial, Integer};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, param, Error, Result};
use crate::graph::{self, balanced_range, forbidden_from_counts, sample_graph, size_balanced, CountMode, Graph, Model};
use crate::matrix::{default_edges, f_raw, ConstantsProfile, ModelParams, OverlapMatrix, classify_region};
use crate::rng;

pub fn binom(n: u64, r: u64) -> BigUint {
    if r > n {
        return BigUint::zero();
    }
    binomial(BigUint::from(n), BigUint::from(r))
}

fn pairs(n: usize) -> u64 {
    (n * n.saturating_sub(1) / 2) as u64
}

/// `ln x` for an arbitrarily large integer.
pub fn ln_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().expect("fits").ln();
    }
    let shift = bits - 60;
    (x >> shift).to_f64().expect("60 bits").ln() + shift as f64 * std::f64::consts::LN_2
}

/// `ln q` for a positive rational; `-inf` at zero.
pub fn ln_rational(q: &BigRational) -> f64 {
    if q.is_zero() {
        return f64::NEG_INFINITY;
    }
    ln_big(q.numer().magnitude()) - ln_big(q.denom().magnitude())
}

pub fn rational_to_f64(q: &BigRational) -> f64 {
    let l = ln_rational(&q.abs());
    if l.is_finite() && l.abs() < 700.0 {
        q.to_f64().unwrap_or_else(|| l.exp() * if q.is_negative() { -1.0 } else { 1.0 })
    } else if q.is_zero() {
        0.0
    } else {
        let s = if q.is_negative() { -1.0 } else { 1.0 };
        s * l.exp()
    }
}

/// Exact decimal expansion, rounded half away from zero to `digits` places,
/// trailing zeros removed. Integers print without a point.
pub fn decimal_string(q: &BigRational, digits: u32) -> String {
    if q.is_integer() {
        return q.numer().to_string();
    }
    let neg = q.is_negative();
    let a = q.abs();
    let scale = BigInt::from(10u32).pow(digits);
    let scaled = a * BigRational::from_integer(scale.clone());
    let rounded = (scaled + BigRational::new(BigInt::one(), BigInt::from(2))).floor().to_integer();
    let (ip, fp) = rounded.div_rem(&scale);
    let mut frac = format!("{:0>width$}", fp.to_string(), width = digits as usize);
    while frac.ends_with('0') {
        frac.pop();
    }
    let sign = if neg { "-" } else { "" };
    if frac.is_empty() {
        format!("{sign}{ip}")
    } else {
        format!("{sign}{ip}.{frac}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactValue {
    pub decimal: String,
    pub numerator: String,
    pub denominator: String,
}

impl From<&BigRational> for ExactValue {
    fn from(q: &BigRational) -> Self {
        Self { decimal: decimal_string(q, 30), numerator: q.numer().to_string(), denominator: q.denom().to_string() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMode {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum MomentValue {
    Exact(ExactValue),
    Real(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub order: u8,
    pub mode: MomentMode,
    pub balanced_only: bool,
    pub value: MomentValue,
    pub value_f64: f64,
    pub std_error: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    #[serde(skip)]
    pub exact: Option<BigRational>,
}

impl MomentReport {
    fn exact(n: usize, m: usize, k: usize, order: u8, balanced_only: bool, q: BigRational) -> Self {
        Self {
            n,
            m,
            k,
            order,
            mode: MomentMode::Exact,
            balanced_only,
            value: MomentValue::Exact((&q).into()),
            value_f64: rational_to_f64(&q),
            std_error: None,
            trials: None,
            seed: None,
            exact: Some(q),
        }
    }

    /// The value as plain text: the exact decimal, or the shortest round-trip float.
    pub fn value_string(&self) -> String {
        match &self.value {
            MomentValue::Exact(e) => e.decimal.clone(),
            MomentValue::Real(x) => format!("{x}"),
        }
    }
}

/// `hist[F]`: number of maps (order 1) or pairs of maps (order 2) whose
/// forbidden-pair count is `F`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForbiddenHistogram {
    pub n: usize,
    pub k: usize,
    pub order: u8,
    pub balanced_only: bool,
    pub counts: Vec<u128>,
}

fn check_budget(k: usize, n: usize, order: u8, budget: u64) -> Result<()> {
    let work = (k as f64).powi((n * order as usize) as i32);
    if work > budget as f64 {
        return Err(Error::Budget(format!("{k}^{} maps exceed the budget of {budget}", n * order as usize)));
    }
    Ok(())
}

fn size_ok(size: usize, n: usize, k: usize, balanced: bool) -> bool {
    !balanced || size_balanced(size, n, k)
}

fn first_order_histogram(n: usize, k: usize, balanced: bool) -> Vec<u128> {
    // Class-size compositions weighted by the multinomial coefficient.
    let mut counts = vec![0u128; pairs(n) as usize + 1];
    fn rec(n: usize, k: usize, left: usize, i: usize, sizes: &mut Vec<usize>, balanced: bool, out: &mut [u128]) {
        if i == k - 1 {
            if !size_ok(left, n, k, balanced) {
                return;
            }
            sizes.push(left);
            let f: usize = sizes.iter().map(|&s| s * s.saturating_sub(1) / 2).sum();
            let mut w: u128 = 1;
            let mut used = 0u128;
            for &s in sizes.iter() {
                for t in 1..=s as u128 {
                    used += 1;
                    w = w * used / t;
                }
            }
            out[f] += w;
            sizes.pop();
            return;
        }
        for s in 0..=left {
            if size_ok(s, n, k, balanced) {
                sizes.push(s);
                rec(n, k, left - s, i + 1, sizes, balanced, out);
                sizes.pop();
            }
        }
    }
    if k >= 1 {
        rec(n, k, n, 0, &mut Vec::new(), balanced, &mut counts);
    }
    counts
}

/// Depth-first over vertices, each taking a colour pair `(a, b)`. Adding a
/// vertex raises `F` by `r_a + c_b - o_ab`.
fn second_order_histogram(n: usize, k: usize, balanced: bool) -> Vec<u128> {
    struct St {
        n: usize,
        k: usize,
        lo: usize,
        hi: usize,
        balanced: bool,
        r: Vec<usize>,
        c: Vec<usize>,
        o: Vec<usize>,
        out: Vec<u128>,
    }
    fn feasible(sizes: &[usize], lo: usize, hi: usize, remaining: usize) -> bool {
        let need: usize = sizes.iter().map(|&s| lo.saturating_sub(s)).sum();
        sizes.iter().all(|&s| s <= hi) && need <= remaining
    }
    fn rec(st: &mut St, v: usize, f: usize) {
        if v == st.n {
            st.out[f] += 1;
            return;
        }
        let k = st.k;
        for a in 0..k {
            for b in 0..k {
                let df = st.r[a] + st.c[b] - st.o[a * k + b];
                st.r[a] += 1;
                st.c[b] += 1;
                st.o[a * k + b] += 1;
                let rem = st.n - v - 1;
                if !st.balanced || (feasible(&st.r, st.lo, st.hi, rem) && feasible(&st.c, st.lo, st.hi, rem)) {
                    rec(st, v + 1, f + df);
                }
                st.r[a] -= 1;
                st.c[b] -= 1;
                st.o[a * k + b] -= 1;
            }
        }
    }
    let (lo, hi) = if balanced && n > 0 { balanced_range(n, k) } else { (0, n) };
    let mut st = St { n, k, lo, hi, balanced, r: vec![0; k], c: vec![0; k], o: vec![0; k * k], out: vec![0; pairs(n) as usize + 1] };
    if k >= 1 {
        rec(&mut st, 0, 0);
    }
    st.out
}

pub fn forbidden_histogram(n: usize, k: usize, order: u8, balanced_only: bool, budget: u64) -> Result<ForbiddenHistogram> {
    if k == 0 {
        return param("k must be at least 1");
    }
    let counts = match order {
        1 => {
            check_budget(k, n, 1, budget)?;
            first_order_histogram(n, k, balanced_only)
        }
        2 => {
            check_budget(k, n, 2, budget)?;
            second_order_histogram(n, k, balanced_only)
        }
        _ => return param(format!("order must be 1 or 2, got {order}")),
    };
    Ok(ForbiddenHistogram { n, k, order, balanced_only, counts })
}

/// `sum_F hist[F] C(N - F, m) / C(N, m)`.
pub fn moment_from_histogram(h: &ForbiddenHistogram, m: usize) -> Result<BigRational> {
    let total = pairs(h.n);
    if m as u64 > total {
        return param(format!("m = {m} exceeds the {total} vertex pairs"));
    }
    let mut num = BigUint::zero();
    for (f, &c) in h.counts.iter().enumerate() {
        if c != 0 {
            num += BigUint::from(c) * binom(total - f as u64, m as u64);
        }
    }
    Ok(BigRational::new(num.into(), binom(total, m as u64).into()))
}

pub fn exact_moment(n: usize, m: usize, k: usize, order: u8, balanced_only: bool, budget: u64) -> Result<MomentReport> {
    if m as u64 > pairs(n) {
        return param(format!("m = {m} exceeds the {} vertex pairs", pairs(n)));
    }
    let h = forbidden_histogram(n, k, order, balanced_only, budget)?;
    Ok(MomentReport::exact(n, m, k, order, balanced_only, moment_from_histogram(&h, m)?))
}

/// Every `m` from 0 to `C(n, 2)` from one enumeration.
pub fn exact_moment_all_m(n: usize, k: usize, order: u8, balanced_only: bool, budget: u64) -> Result<Vec<MomentReport>> {
    let h = forbidden_histogram(n, k, order, balanced_only, budget)?;
    (0..=pairs(n) as usize)
        .map(|m| Ok(MomentReport::exact(n, m, k, order, balanced_only, moment_from_histogram(&h, m)?)))
        .collect()
}

fn factorial(n: u64) -> BigUint {
    (1..=n).fold(BigUint::one(), |a, i| a * i)
}

/// Checks that `counts` is a `k x k` table of a balanced pair.
pub fn check_realizable(n: usize, counts: &[Vec<u64>]) -> Result<()> {
    let k = counts.len();
    if k == 0 || counts.iter().any(|r| r.len() != k) {
        return param("count matrix must be square and nonempty");
    }
    let total: u64 = counts.iter().flatten().sum();
    if total != n as u64 {
        return domain(format!("counts sum to {total}, not n = {n}"));
    }
    for i in 0..k {
        let r: u64 = counts[i].iter().sum();
        let c: u64 = counts.iter().map(|row| row[i]).sum();
        if !size_balanced(r as usize, n, k) || !size_balanced(c as usize, n, k) {
            return domain(format!("marginal {i} ({r}, {c}) is not balanced"));
        }
    }
    Ok(())
}

/// Integer overlap counts `n rho_ij / k`; errors unless every one is an integer.
pub fn counts_from_matrix(n: usize, rho: &OverlapMatrix) -> Result<Vec<Vec<u64>>> {
    let k = rho.k();
    let mut out = vec![vec![0u64; k]; k];
    for i in 0..k {
        for j in 0..k {
            let x = n as f64 * rho.get(i, j) / k as f64;
            let r = x.round();
            if (x - r).abs() > 1e-9 {
                return domain(format!("entry ({i},{j}) gives {x} vertices, not an integer"));
            }
            out[i][j] = r as u64;
        }
    }
    check_realizable(n, &out)?;
    Ok(out)
}

pub fn matrix_from_counts(n: usize, counts: &[Vec<u64>]) -> Vec<f64> {
    let k = counts.len();
    counts.iter().flatten().map(|&c| k as f64 * c as f64 / n as f64).collect()
}

/// `n! / prod o_ij! * C(N - F, m) / C(N, m)`.
pub fn exact_overlap_moment_counts(n: usize, m: usize, counts: &[Vec<u64>]) -> Result<BigRational> {
    check_realizable(n, counts)?;
    let total = pairs(n);
    if m as u64 > total {
        return param(format!("m = {m} exceeds the {total} vertex pairs"));
    }
    let denom = counts.iter().flatten().fold(BigUint::one(), |a, &c| a * factorial(c));
    let ways = factorial(n as u64) / denom;
    let f = forbidden_from_counts(counts);
    Ok(BigRational::new((ways * binom(total - f, m as u64)).into(), binom(total, m as u64).into()))
}

pub fn exact_overlap_moment(n: usize, m: usize, rho: &OverlapMatrix) -> Result<MomentReport> {
    let counts = counts_from_matrix(n, rho)?;
    let q = exact_overlap_moment_counts(n, m, &counts)?;
    Ok(MomentReport::exact(n, m, rho.k(), 2, true, q))
}

/// All `k x k` nonnegative integer tables with balanced row and column sums.
pub fn balanced_count_matrices(n: usize, k: usize) -> Vec<Vec<Vec<u64>>> {
    let margins: Vec<Vec<usize>> = {
        let mut out = Vec::new();
        fn rec(n: usize, k: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k - 1 {
                if size_balanced(left, n, k) {
                    cur.push(left);
                    out.push(cur.clone());
                    cur.pop();
                }
                return;
            }
            for s in 0..=left {
                if size_balanced(s, n, k) {
                    cur.push(s);
                    rec(n, k, left - s, cur, out);
                    cur.pop();
                }
            }
        }
        rec(n, k, n, &mut Vec::new(), &mut out);
        out
    };
    let mut tables = Vec::new();
    for rows in &margins {
        for cols in &margins {
            fill(k, rows, cols, &mut vec![vec![0; k]; k], 0, &mut cols.clone(), &mut tables);
        }
    }
    tables
}

fn fill(k: usize, rows: &[usize], cols: &[usize], t: &mut Vec<Vec<u64>>, i: usize, col_left: &mut Vec<usize>, out: &mut Vec<Vec<Vec<u64>>>) {
    if i == k {
        if col_left.iter().all(|&c| c == 0) {
            out.push(t.clone());
        }
        return;
    }
    fn row(k: usize, j: usize, left: usize, i: usize, rows: &[usize], cols: &[usize], t: &mut Vec<Vec<u64>>, col_left: &mut Vec<usize>, out: &mut Vec<Vec<Vec<u64>>>) {
        if j == k - 1 {
            if left <= col_left[j] {
                t[i][j] = left as u64;
                col_left[j] -= left;
                fill(k, rows, cols, t, i + 1, col_left, out);
                col_left[j] += left;
            }
            return;
        }
        for x in 0..=left.min(col_left[j]) {
            t[i][j] = x as u64;
            col_left[j] -= x;
            row(k, j + 1, left - x, i, rows, cols, t, col_left, out);
            col_left[j] += x;
        }
    }
    row(k, 0, rows[i], i, rows, cols, t, col_left, out);
}

/// Largest-remainder rounding of `n rho / k` to a realizable table, keeping the
/// rounded row and column sums balanced where possible.
pub fn nearest_realizable(n: usize, rho: &OverlapMatrix) -> Result<Vec<Vec<u64>>> {
    let k = rho.k();
    // Exact when possible.
    if let Ok(c) = counts_from_matrix(n, rho) {
        return Ok(c);
    }
    let target: Vec<f64> = rho.entries().iter().map(|x| n as f64 * x / k as f64).collect();
    let best = balanced_count_matrices(n, k)
        .into_iter()
        .map(|t| {
            let dist: f64 = t.iter().flatten().zip(&target).map(|(&c, x)| (c as f64 - x).powi(2)).sum();
            // Ties go to the table with the most even class sizes.
            let nk = n as f64 / k as f64;
            let spread: f64 = (0..k)
                .map(|i| {
                    let r: u64 = t[i].iter().sum();
                    let c: u64 = t.iter().map(|row| row[i]).sum();
                    (r as f64 - nk).powi(2) + (c as f64 - nk).powi(2)
                })
                .sum();
            (dist, spread, t)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then_with(|| a.2.cmp(&b.2)));
    best.map(|b| b.2).ok_or_else(|| Error::Domain(format!("no balanced table at n = {n}, k = {k}")))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapReport {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub d: f64,
    pub counts: Vec<Vec<u64>>,
    pub realized: Vec<f64>,
    pub exact_realized: bool,
    pub moment: ExactValue,
    /// `(1/n) ln E[Z_rho,bal]`; `-inf` when the moment vanishes.
    pub log_rate: f64,
    pub f_realized: f64,
    pub f_target: f64,
    /// `|log_rate - f_realized|`; `+inf` when the moment vanishes.
    pub gap: f64,
}

pub fn logscale_gap(n: usize, k: usize, d: f64, rho: &OverlapMatrix) -> Result<GapReport> {
    if rho.k() != k {
        return param("matrix size and k differ");
    }
    let m = default_edges(d, n);
    let exact_realized = counts_from_matrix(n, rho).is_ok();
    let counts = nearest_realizable(n, rho)?;
    let e = exact_overlap_moment_counts(n, m, &counts)?;
    let realized = matrix_from_counts(n, &counts);
    let log_rate = ln_rational(&e) / n as f64;
    let f_realized = f_raw(k, &realized, d);
    let f_target = f_raw(k, rho.entries(), d);
    let gap = if log_rate.is_finite() { (log_rate - f_realized).abs() } else { f64::INFINITY };
    Ok(GapReport { n, m, k, d, counts, realized, exact_realized, moment: (&e).into(), log_rate, f_realized, f_target, gap })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapFit {
    /// Least-squares slope of `gap` against `ln n / n` over the finite points.
    pub c_fit: f64,
    /// Smallest `C` with `gap <= C ln n / n` at every finite point.
    pub c_bound: f64,
    pub finite_points: usize,
}

pub fn fit_gap_constant(points: &[GapReport]) -> GapFit {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.gap.is_finite() && p.n > 1)
        .map(|p| ((p.n as f64).ln() / p.n as f64, p.gap))
        .collect();
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
    GapFit {
        c_fit: if sxx > 0.0 { sxy / sxx } else { f64::NAN },
        c_bound: pts.iter().map(|(x, y)| y / x).fold(f64::NAN, f64::max),
        finite_points: pts.len(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColorableEstimate {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub trials: usize,
    pub successes: usize,
    pub fraction: f64,
    /// Half-width of the 95% interval (Wald); for Wilson, half its length.
    pub ci95: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub interval: String,
    pub seed: u64,
}

const Z95: f64 = 1.959963984540054;

/// Wald interval, or Wilson's when fewer than 30 successes or failures.
pub fn binomial_ci(successes: usize, trials: usize) -> (f64, f64, &'static str) {
    let t = trials as f64;
    let p = successes as f64 / t;
    if successes < 30 || trials - successes < 30 {
        let z2 = Z95 * Z95;
        let centre = (p + z2 / (2.0 * t)) / (1.0 + z2 / t);
        let half = Z95 * (p * (1.0 - p) / t + z2 / (4.0 * t * t)).sqrt() / (1.0 + z2 / t);
        ((centre - half).max(0.0), (centre + half).min(1.0), "wilson")
    } else {
        let half = Z95 * (p * (1.0 - p) / t).sqrt();
        ((p - half).max(0.0), (p + half).min(1.0), "wald")
    }
}

fn gnm(n: usize, m: usize, seed: u64, trial: u64) -> Result<Graph> {
    let s = rng::stream(seed, trial).next_u64();
    let p = ModelParams::new(2, 1.0)?;
    sample_graph(Model::Gnm, &ModelParams { n: Some(n), m: Some(m), ..p }, None, s)
}

/// Fraction of sampled `G(n, m)` admitting a proper `k`-colouring. Trial `t`
/// uses RNG stream `t`, so the result does not depend on the thread count.
pub fn mc_colorable(n: usize, m: usize, k: usize, trials: usize, seed: u64, budget: u64) -> Result<ColorableEstimate> {
    if trials == 0 {
        return param("trials must be at least 1");
    }
    if m as u64 > pairs(n) {
        return param(format!("m = {m} exceeds the {} vertex pairs", pairs(n)));
    }
    let hits: Vec<bool> = (0..trials as u64)
        .into_par_iter()
        .map(|t| graph::is_colorable(&gnm(n, m, seed, t)?, k, budget))
        .collect::<Result<_>>()?;
    let successes = hits.iter().filter(|&&h| h).count();
    let (lo, hi, kind) = binomial_ci(successes, trials);
    let fraction = successes as f64 / trials as f64;
    let ci95 = if kind == "wald" { hi - fraction } else { (hi - lo) / 2.0 };
    Ok(ColorableEstimate { n, m, k, trials, successes, fraction, ci95, ci_low: lo, ci_high: hi, interval: kind.into(), seed })
}

/// Monte Carlo `E[Z^order]` over `G(n, m)` with its standard error.
pub fn mc_moment(n: usize, m: usize, k: usize, order: u8, balanced_only: bool, trials: usize, seed: u64, budget: u64) -> Result<MomentReport> {
    if trials == 0 {
        return param("trials must be at least 1");
    }
    if !(1..=2).contains(&order) {
        return param(format!("order must be 1 or 2, got {order}"));
    }
    if m as u64 > pairs(n) {
        return param(format!("m = {m} exceeds the {} vertex pairs", pairs(n)));
    }
    let mode = if balanced_only { CountMode::Balanced } else { CountMode::All };
    let xs: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let z = graph::count_colorings(&gnm(n, m, seed, t)?, k, mode, budget)?.to_f64().unwrap_or(f64::INFINITY);
            Ok(z.powi(order as i32))
        })
        .collect::<Result<_>>()?;
    let t = trials as f64;
    let mean = xs.iter().sum::<f64>() / t;
    let var = if trials > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1.0) } else { 0.0 };
    Ok(MomentReport {
        n,
        m,
        k,
        order,
        mode: MomentMode::MonteCarlo,
        balanced_only,
        value: MomentValue::Real(mean),
        value_f64: mean,
        std_error: Some((var / t).sqrt()),
        trials: Some(trials),
        seed: Some(seed),
        exact: None,
    })
}

pub fn paley_zygmund(ez: f64, ez2: f64) -> Result<f64> {
    if !(ez > 0.0) || !(ez2 > 0.0) {
        return domain(format!("moments must be positive, got {ez} and {ez2}"));
    }
    Ok(ez * ez / ez2)
}

pub fn paley_zygmund_exact(ez: &BigRational, ez2: &BigRational) -> Result<BigRational> {
    if !ez.is_positive() || !ez2.is_positive() {
        return domain("moments must be positive");
    }
    Ok(ez * ez / ez2)
}

fn pair_index(n: usize) -> Vec<Vec<usize>> {
    let mut idx = vec![vec![usize::MAX; n]; n];
    let mut t = 0;
    for u in 0..n {
        for v in u + 1..n {
            idx[u][v] = t;
            idx[v][u] = t;
            t += 1;
        }
    }
    idx
}

/// Exact `P[Z > 0]` in `G(n, m)` for every `m`, where `Z` counts the proper
/// `k`-colourings of the given kind. Marks the bichromatic edge set of every
/// map and closes downward over subsets.
pub fn colorable_distribution(n: usize, k: usize, mode: CountMode) -> Result<Vec<BigRational>> {
    let np = pairs(n) as usize;
    if n > 7 {
        return Err(Error::Budget(format!("down-closure over 2^{np} edge sets is limited to n <= 7")));
    }
    if k == 0 {
        return param("k must be at least 1");
    }
    let idx = pair_index(n);
    let full = 1usize << np;
    let mut ok = vec![false; full];
    let mut sigma = vec![0usize; n];
    let maps = k.pow(n as u32);
    for code in 0..maps {
        let mut c = code;
        let mut sizes = vec![0usize; k];
        for s in sigma.iter_mut() {
            *s = c % k;
            sizes[*s] += 1;
            c /= k;
        }
        if mode == CountMode::Balanced && !sizes.iter().all(|&s| size_balanced(s, n, k)) {
            continue;
        }
        let mut mask = 0usize;
        for u in 0..n {
            for v in u + 1..n {
                if sigma[u] != sigma[v] {
                    mask |= 1 << idx[u][v];
                }
            }
        }
        ok[mask] = true;
    }
    for b in 0..np {
        let bit = 1usize << b;
        for mask in 0..full {
            if mask & bit == 0 && ok[mask | bit] {
                ok[mask] = true;
            }
        }
    }
    let mut by_size = vec![0u64; np + 1];
    for (mask, &good) in ok.iter().enumerate() {
        if good {
            by_size[mask.count_ones() as usize] += 1;
        }
    }
    Ok(by_size
        .iter()
        .enumerate()
        .map(|(m, &c)| BigRational::new(BigInt::from(c), binom(np as u64, m as u64).into()))
        .collect())
}

/// `P[G(n, m) is k-colourable]` by visiting every `m`-edge graph.
pub fn exact_colorable_probability(n: usize, m: usize, k: usize, budget: u64) -> Result<BigRational> {
    let np = pairs(n) as usize;
    let total = binom(np as u64, m as u64);
    if total > BigUint::from(budget) {
        return Err(Error::Budget(format!("C({np}, {m}) graphs exceed the budget")));
    }
    let all: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    let mut hits = 0u64;
    let mut cur: Vec<usize> = (0..m).collect();
    loop {
        let g = Graph::new(n, cur.iter().map(|&i| all[i]))?;
        if graph::is_colorable(&g, k, budget)? {
            hits += 1;
        }
        // Next combination in lexicographic order.
        let mut i = m;
        loop {
            if i == 0 {
                return Ok(BigRational::new(BigInt::from(hits), total.into()));
            }
            i -= 1;
            if cur[i] < np - m + i {
                break;
            }
        }
        cur[i] += 1;
        for j in i + 1..m {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Region {
    R0,
    R1,
    R2,
    R3,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionLabel {
    pub label: Region,
    pub eta: f64,
    pub distance_to_barycenter: f64,
    pub profile: ConstantsProfile,
}

/// First match among: near the barycentre, not separable, every row has a
/// large entry, anything else.
pub fn laplace_partition(rho: &OverlapMatrix, eta: f64, profile: &ConstantsProfile) -> Result<PartitionLabel> {
    if !(eta > 0.0) {
        return param(format!("eta must be positive, got {eta}"));
    }
    let k = rho.k();
    let dist = rho.entries().iter().map(|x| (x - 1.0 / k as f64).powi(2)).sum::<f64>().sqrt();
    let r = classify_region(rho, profile);
    let label = if dist < eta {
        Region::R0
    } else if !r.separable {
        Region::R1
    } else if r.k_stable {
        Region::R2
    } else {
        Region::R3
    };
    Ok(PartitionLabel { label, eta, distance_to_barycenter: dist, profile: profile.clone() })
}

const BALANCE_SKIP: f64 = 1e-14;

/// Row transfers (each taken proportionally across a row, so column sums stay
/// fixed), then column transfers within rows.
pub fn round_to_birkhoff(rho: &OverlapMatrix) -> OverlapMatrix {
    let k = rho.k();
    let mut e = rho.entries().to_vec();
    for pass in 0..2 {
        let at = |e: &[f64], line: usize, t: usize| if pass == 0 { e[line * k + t] } else { e[t * k + line] };
        let sums: Vec<f64> = (0..k).map(|l| (0..k).map(|t| at(&e, l, t)).sum()).collect();
        if sums.iter().all(|s| (s - 1.0).abs() <= BALANCE_SKIP) {
            continue;
        }
        let deficit: f64 = sums.iter().map(|s| (1.0 - s).max(0.0)).sum();
        let mut next = e.clone();
        for src in 0..k {
            let excess = sums[src] - 1.0;
            if excess <= 0.0 {
                continue;
            }
            for dst in 0..k {
                let need = 1.0 - sums[dst];
                if need <= 0.0 {
                    continue;
                }
                let amount = excess * need / deficit;
                for t in 0..k {
                    let share = amount * at(&e, src, t) / sums[src];
                    let (a, b) = if pass == 0 { (src * k + t, dst * k + t) } else { (t * k + src, t * k + dst) };
                    next[a] -= share;
                    next[b] += share;
                }
            }
        }
        for x in next.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        e = next;
    }
    OverlapMatrix::from_flat_unchecked(k, e)
}

/// Largest deviation of a row or column sum from 1.
pub fn marginal_deviation(rho: &OverlapMatrix) -> f64 {
    rho.row_sums().into_iter().chain(rho.col_sums()).map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
}

/// `(1 + x) ln(1 + x) - x` for `x >= -1`.
pub fn phi(x: f64) -> Result<f64> {
    if !(x >= -1.0) {
        return domain(format!("phi needs x >= -1, got {x}"));
    }
    if x == -1.0 {
        return Ok(1.0);
    }
    Ok((1.0 + x) * x.ln_1p() - x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Upper,
    Lower,
}

impl std::str::FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" => Ok(Side::Upper),
            "lower" => Ok(Side::Lower),
            o => param(format!("unknown side `{o}`")),
        }
    }
}

/// `exp(-mu phi(+-t/mu))`, bounding `P[X >= mu + t]` or `P[X <= mu - t]`.
pub fn chernoff_tail(mu: f64, t: f64, side: Side) -> Result<f64> {
    if !(mu > 0.0) || !(t > 0.0) {
        return domain(format!("need mu > 0 and t > 0, got {mu}, {t}"));
    }
    match side {
        Side::Upper => Ok((-mu * phi(t / mu)?).exp()),
        Side::Lower => {
            if t >= mu {
                return domain(format!("lower tail needs t < mu, got t = {t}, mu = {mu}"));
            }
            Ok((-mu * phi(-t / mu)?).exp())
        }
    }
}

fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    if p <= 0.0 || p >= 1.0 {
        let mut v = vec![0.0; n as usize + 1];
        v[if p <= 0.0 { 0 } else { n as usize }] = 1.0;
        return v;
    }
    let mut ln_c = 0.0;
    (0..=n)
        .map(|j| {
            if j > 0 {
                ln_c += ((n - j + 1) as f64).ln() - (j as f64).ln();
            }
            (ln_c + j as f64 * p.ln() + (n - j) as f64 * (-p).ln_1p()).exp()
        })
        .collect()
}

/// `P[Bin(n, p) >= x]`.
pub fn binomial_upper_tail(n: u64, p: f64, x: u64) -> f64 {
    binomial_pmf(n, p).iter().skip(x as usize).sum::<f64>().min(1.0)
}

/// `P[Bin(n, p) <= x]`.
pub fn binomial_lower_tail(n: u64, p: f64, x: u64) -> f64 {
    binomial_pmf(n, p).iter().take(x as usize + 1).sum::<f64>().min(1.0)
}

/// Exact `P[X >= mu + t]` or `P[X <= mu - t]` for `X ~ Bin(n, p)`.
pub fn binomial_tail(n: u64, p: f64, t: f64, side: Side) -> f64 {
    let mu = n as f64 * p;
    match side {
        Side::Upper => {
            let x = (mu + t - 1e-12).ceil();
            if x > n as f64 { 0.0 } else { binomial_upper_tail(n, p, x.max(0.0) as u64) }
        }
        Side::Lower => {
            let x = (mu - t + 1e-12).floor();
            if x < 0.0 { 0.0 } else { binomial_lower_tail(n, p, x as u64) }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlantedEvent {
    pub name: String,
    pub planted_m: f64,
    pub planted_p: f64,
    /// `P_p[A] / P[Bin(N_b, p) = m]`, the bound the comparison argument gives.
    pub structural_bound: f64,
    pub structural_ok: bool,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlantedEquivalence {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub bichromatic_pairs: usize,
    pub p: ExactValue,
    /// `N_b p`, which equals `m`.
    pub expected_edges: f64,
    pub prob_exactly_m: f64,
    pub events: Vec<PlantedEvent>,
    /// `max_A P_m[A] / (sqrt(n) P_p[A])` over events with `P_p[A] > 0`.
    pub c_fit: f64,
    /// `1 / (sqrt(n) P[Bin(N_b, p) = m])`.
    pub c_structural: f64,
}

/// Monotone increasing properties of a graph given as adjacency bitmasks.
pub const MONOTONE_EVENTS: [&str; 5] = ["has_triangle", "no_isolated_vertex", "connected", "max_degree_ge_3", "not_bipartite"];

fn event_holds(name: &str, adj: &[u32]) -> bool {
    let n = adj.len();
    match name {
        "has_triangle" => (0..n).any(|u| {
            (u + 1..n).any(|v| adj[u] >> v & 1 == 1 && adj[u] & adj[v] != 0)
        }),
        "no_isolated_vertex" => adj.iter().all(|&a| a != 0),
        "connected" => {
            let mut seen = 1u32;
            let mut frontier = 1u32;
            while frontier != 0 {
                let mut nxt = 0;
                for v in 0..n {
                    if frontier >> v & 1 == 1 {
                        nxt |= adj[v];
                    }
                }
                frontier = nxt & !seen;
                seen |= nxt;
            }
            seen.count_ones() as usize == n
        }
        "max_degree_ge_3" => adj.iter().any(|a| a.count_ones() >= 3),
        "not_bipartite" => {
            let mut side = vec![u8::MAX; n];
            for s in 0..n {
                if side[s] != u8::MAX {
                    continue;
                }
                side[s] = 0;
                let mut stack = vec![s];
                while let Some(v) = stack.pop() {
                    for u in 0..n {
                        if adj[v] >> u & 1 == 1 {
                            if side[u] == u8::MAX {
                                side[u] = 1 - side[v];
                                stack.push(u);
                            } else if side[u] == side[v] {
                                return true;
                            }
                        }
                    }
                }
            }
            false
        }
        _ => unreachable!("unknown event"),
    }
}

/// Exact planted-m versus planted-p probabilities of the monotone events, with
/// the colouring `v mod k` on `n <= 7` vertices.
pub fn planted_equivalence(n: usize, k: usize, m: usize) -> Result<PlantedEquivalence> {
    if n > 7 || k < 2 || n < k {
        return param(format!("planted comparison needs 2 <= k <= n <= 7, got n = {n}, k = {k}"));
    }
    let sigma = graph::Coloring::new(k, (0..n).map(|v| v % k).collect())?;
    let bp = graph::bichromatic_pairs(&sigma);
    let nb = bp.len();
    if m == 0 || m >= nb {
        return param(format!("need 0 < m < {nb}"));
    }
    let p = graph::planted_p(&sigma, m)?;
    let mut hits = vec![vec![0u64; nb + 1]; MONOTONE_EVENTS.len()];
    for mask in 0u32..1 << nb {
        let mut adj = vec![0u32; n];
        for (i, &(u, v)) in bp.iter().enumerate() {
            if mask >> i & 1 == 1 {
                adj[u] |= 1 << v;
                adj[v] |= 1 << u;
            }
        }
        let e = mask.count_ones() as usize;
        for (a, name) in MONOTONE_EVENTS.iter().enumerate() {
            if event_holds(name, &adj) {
                hits[a][e] += 1;
            }
        }
    }
    let q = BigRational::one() - &p;
    let pow = |x: &BigRational, e: usize| (0..e).fold(BigRational::one(), |a, _| a * x);
    let weight: Vec<BigRational> = (0..=nb).map(|j| pow(&p, j) * pow(&q, nb - j)).collect();
    let prob_m = BigRational::from_integer(binom(nb as u64, m as u64).into()) * &weight[m];
    let sqrt_n = (n as f64).sqrt();
    let mut events = Vec::new();
    let mut c_fit = 0.0f64;
    for (a, name) in MONOTONE_EVENTS.iter().enumerate() {
        let pm = BigRational::new(BigInt::from(hits[a][m]), binom(nb as u64, m as u64).into());
        let pp: BigRational = (0..=nb)
            .map(|j| BigRational::from_integer(BigInt::from(hits[a][j])) * &weight[j])
            .fold(BigRational::zero(), |s, x| s + x);
        let bound = &pp / &prob_m;
        let ratio = if pp.is_zero() { f64::NAN } else { rational_to_f64(&(&pm / &pp)) };
        if ratio.is_finite() {
            c_fit = c_fit.max(ratio / sqrt_n);
        }
        events.push(PlantedEvent {
            name: name.to_string(),
            planted_m: rational_to_f64(&pm),
            planted_p: rational_to_f64(&pp),
            structural_bound: rational_to_f64(&bound),
            structural_ok: pm <= bound,
            ratio,
        });
    }
    let pf = rational_to_f64(&prob_m);
    Ok(PlantedEquivalence {
        n,
        k,
        m,
        bichromatic_pairs: nb,
        p: (&p).into(),
        expected_edges: rational_to_f64(&(BigRational::from_integer(BigInt::from(nb)) * &p)),
        prob_exactly_m: pf,
        events,
        c_fit,
        c_structural: 1.0 / (sqrt_n * pf),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandPoint {
    pub n: usize,
    pub m: usize,
    /// `E[Z_bal] / (k^n (1 - 1/k)^m)`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FirstMomentBand {
    pub k: usize,
    pub d: f64,
    pub points: Vec<BandPoint>,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// Balanced first moment over `k^n (1 - 1/k)^m` at `m = ceil(d n / 2)`.
pub fn first_moment_band(k: usize, d: f64, ns: &[usize], budget: u64) -> Result<FirstMomentBand> {
    let mut points = Vec::new();
    for &n in ns {
        let m = default_edges(d, n);
        let e = exact_moment(n, m, k, 1, true, budget)?;
        let ln_ref = n as f64 * (k as f64).ln() + m as f64 * (1.0 - 1.0 / k as f64).ln();
        let ratio = (ln_rational(e.exact.as_ref().expect("exact")) - ln_ref).exp();
        points.push(BandPoint { n, m, ratio });
    }
    let min_ratio = points.iter().map(|p| p.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = points.iter().map(|p| p.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(FirstMomentBand { k, d, points, min_ratio, max_ratio })
}

pub const MOMENTS_CSV_HEADER: [&str; 8] = ["n", "m", "k", "order", "mode", "value", "stderr", "seed"];

pub fn moments_csv(reports: &[MomentReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(MOMENTS_CSV_HEADER).map_err(fmt)?;
    for r in reports {
        let mode = match r.mode {
            MomentMode::Exact => "exact",
            MomentMode::MonteCarlo => "monte_carlo",
        };
        w.write_record([
            r.n.to_string(),
            r.m.to_string(),
            r.k.to_string(),
            r.order.to_string(),
            mode.to_string(),
            r.value_string(),
            r.std_error.map(|x| x.to_string()).unwrap_or_default(),
            r.seed.map(|x| x.to_string()).unwrap_or_default(),
        ])
        .map_err(fmt)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}
