//! Overlap matrices and the objective `f = H + E`.
//!
//! An overlap matrix is a k×k nonnegative matrix with total mass k. Entries are
//! stored row-major in a flat vector; the `*_raw` functions work on such slices
//! directly so that optimisers and finite-difference checks can skip validation.

use serde::{Deserialize, Serialize};

use crate::error::{domain, param, Error, Result};

/// Tolerance used when validating mass and marginals.
pub const VALIDITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct OverlapMatrix {
    k: usize,
    entries: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MatrixLiteral {
    k: usize,
    entries: Vec<Vec<f64>>,
}

impl OverlapMatrix {
    /// Builds a matrix from rows, checking nonnegativity and total mass k.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return param("overlap matrix needs k >= 1");
        }
        let mut entries = Vec::with_capacity(k * k);
        for row in &rows {
            if row.len() != k {
                return param(format!("row of length {} in a {k}x{k} matrix", row.len()));
            }
            entries.extend_from_slice(row);
        }
        Self::from_flat(k, entries)
    }

    pub fn from_flat(k: usize, entries: Vec<f64>) -> Result<Self> {
        Self::from_flat_tol(k, entries, VALIDITY_TOL)
    }

    pub fn from_flat_tol(k: usize, entries: Vec<f64>, tol: f64) -> Result<Self> {
        if k == 0 || entries.len() != k * k {
            return param(format!("expected {} entries for k={k}", k * k));
        }
        if let Some(x) = entries.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return domain(format!("overlap entry {x} is negative or not finite"));
        }
        let mass: f64 = entries.iter().sum();
        if (mass - k as f64).abs() > tol * k as f64 {
            return domain(format!("total mass {mass} differs from k={k}"));
        }
        Ok(Self { k, entries })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.k).map(|r| r.to_vec()).collect()
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.chunks(self.k).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.k];
        for (idx, x) in self.entries.iter().enumerate() {
            c[idx % self.k] += x;
        }
        c
    }

    pub fn is_singly_stochastic(&self, tol: f64) -> bool {
        self.row_sums().iter().all(|s| (s - 1.0).abs() <= tol)
    }

    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        self.is_singly_stochastic(tol) && self.col_sums().iter().all(|s| (s - 1.0).abs() <= tol)
    }

    /// Euclidean (Frobenius) distance.
    pub fn distance(&self, other: &OverlapMatrix) -> f64 {
        self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn transpose(&self) -> OverlapMatrix {
        let k = self.k;
        let mut e = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                e[j * k + i] = self.entries[i * k + j];
            }
        }
        OverlapMatrix { k, entries: e }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&MatrixLiteral { k: self.k, entries: self.rows() })
            .expect("matrix literal serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let lit: MatrixLiteral =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let m = Self::new(lit.entries)?;
        if m.k != lit.k {
            return Err(Error::Format(format!("declared k={} but {} rows", lit.k, m.k)));
        }
        Ok(m)
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(MatrixLiteral { k: self.k, entries: self.rows() })
            .expect("matrix literal serialises")
    }

    pub(crate) fn from_flat_unchecked(k: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), k * k);
        Self { k, entries }
    }
}

impl Serialize for OverlapMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixLiteral { k: self.k, entries: self.rows() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for OverlapMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let lit = MatrixLiteral::deserialize(d)?;
        OverlapMatrix::new(lit.entries).map_err(serde::de::Error::custom)
    }
}

/// Number of colours `k`, average degree `d`, and optionally `n` and `m`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    pub k: usize,
    pub d: f64,
    pub n: Option<usize>,
    pub m: Option<usize>,
}

impl ModelParams {
    pub fn new(k: usize, d: f64) -> Result<Self> {
        if k < 2 {
            return param(format!("k must be at least 2, got {k}"));
        }
        if !(d > 0.0) || !d.is_finite() {
            return param(format!("average degree must be positive, got {d}"));
        }
        Ok(Self { k, d, n: None, m: None })
    }

    /// Sets `n` and the default edge count `m = ceil(d n / 2)`.
    pub fn with_n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self.m = Some(default_edges(self.d, n));
        self
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = Some(m);
        self
    }
}

pub fn default_edges(d: f64, n: usize) -> usize {
    (d * n as f64 / 2.0 - 1e-12).ceil().max(0.0) as usize
}

/// Named constants controlling separability, the core and the P-properties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsProfile {
    pub name: String,
    pub overlap_high: f64,
    pub overlap_low: f64,
    pub singly_cut: f64,
    pub kappa: f64,
    /// ln^20 k / k before capping; kept so reports show what was replaced.
    pub kappa_raw: f64,
    pub core_degree: usize,
    pub w_degree: usize,
    pub p2_degree: usize,
    pub density_factor: usize,
    /// `|F_1| <= (n/k)(1 + p4_free1_slack)`.
    pub p4_free1_slack: f64,
    /// `|F_2| <= p4_free2_fraction * n`.
    pub p4_free2_fraction: f64,
}

pub const KAPPA_CAP: f64 = 0.4;

impl ConstantsProfile {
    pub fn paper(k: usize) -> Self {
        Self::base("paper", k, 100, 300, 15)
    }

    /// Small thresholds reachable on graphs with a few dozen vertices. The
    /// W-threshold is kept at `3c - 1` so that the CR-set guarantee still holds.
    pub fn desk(k: usize) -> Self {
        Self::base("desk", k, 3, 8, 2)
    }

    pub fn by_name(name: &str, k: usize) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper(k)),
            "desk" => Ok(Self::desk(k)),
            other => param(format!("unknown profile `{other}` (expected paper or desk)")),
        }
    }

    fn base(name: &str, k: usize, core: usize, w: usize, p2: usize) -> Self {
        let kf = k.max(2) as f64;
        let lk = kf.ln();
        let kappa_raw = lk.powi(20) / kf;
        Self {
            name: name.to_string(),
            overlap_high: 0.51,
            overlap_low: 0.49,
            singly_cut: 0.15,
            kappa: kappa_raw.min(KAPPA_CAP),
            kappa_raw,
            core_degree: core,
            w_degree: w,
            p2_degree: p2,
            density_factor: 5,
            p4_free1_slack: lk * lk / kf,
            p4_free2_fraction: lk * lk / (kf * kf),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.overlap_low && self.overlap_low <= self.overlap_high && self.overlap_high < 1.0) {
            return param("need 0 < overlap_low <= overlap_high < 1");
        }
        if !(0.0 < self.kappa && self.kappa < 1.0) {
            return param(format!("kappa = {} must lie in (0, 1)", self.kappa));
        }
        Ok(())
    }
}

/// `x ln x` with `0 ln 0 = 0`.
#[inline]
pub fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

pub fn entropy_h(z: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&z) {
        return domain(format!("h(z) needs z in [0,1], got {z}"));
    }
    Ok(-xlnx(z) - xlnx(1.0 - z))
}

/// Shannon entropy (natural log) of a probability vector.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if p.iter().any(|x| !(*x >= 0.0)) {
        return domain("probability vector has a negative entry");
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > VALIDITY_TOL * (p.len().max(1) as f64) {
        return domain(format!("probability vector sums to {s}"));
    }
    Ok(-p.iter().map(|x| xlnx(*x)).sum::<f64>())
}

/// `H(k^{-1} rho) = ln k - (1/k) sum rho ln rho`.
pub fn entropy_of_matrix(rho: &OverlapMatrix) -> f64 {
    entropy_raw(rho.k, &rho.entries)
}

pub fn entropy_raw(k: usize, e: &[f64]) -> f64 {
    let kf = k as f64;
    kf.ln() - e.iter().map(|x| xlnx(*x)).sum::<f64>() / kf
}

pub fn energy_arg(k: usize, norm_sq: f64) -> f64 {
    let kf = k as f64;
    1.0 - 2.0 / kf + norm_sq / (kf * kf)
}

pub fn energy(rho: &OverlapMatrix, params: &ModelParams) -> Result<f64> {
    let q = energy_arg(rho.k, rho.norm_sq());
    if !(q > 0.0) {
        return domain(format!("energy log argument {q} is not positive"));
    }
    Ok(params.d / 2.0 * q.ln())
}

pub fn f_value(rho: &OverlapMatrix, params: &ModelParams) -> Result<f64> {
    Ok(entropy_of_matrix(rho) + energy(rho, params)?)
}

/// Objective on a raw row-major slice. Returns NaN outside the domain rather
/// than erroring, which is what finite differences and line searches want.
pub fn f_raw(k: usize, e: &[f64], d: f64) -> f64 {
    let kf = k as f64;
    let mut ent = 0.0;
    let mut nsq = 0.0;
    for &x in e {
        if x < 0.0 {
            return f64::NAN;
        }
        ent += xlnx(x);
        nsq += x * x;
    }
    let q = energy_arg(k, nsq);
    if q <= 0.0 {
        return f64::NAN;
    }
    kf.ln() - ent / kf + d / 2.0 * q.ln()
}

/// Gradient on a raw slice; `out` must have length k². Entries are clamped
/// below by `floor` before the logarithm is taken.
pub fn gradient_raw(k: usize, e: &[f64], d: f64, floor: f64, out: &mut [f64]) {
    let kf = k as f64;
    let nsq: f64 = e.iter().map(|x| x * x).sum();
    let scale = d / (kf * kf * energy_arg(k, nsq));
    for (o, &x) in out.iter_mut().zip(e) {
        let xc = x.max(floor);
        *o = -(1.0 + xc.ln()) / kf + scale * x;
    }
}

pub fn f_gradient(rho: &OverlapMatrix, params: &ModelParams) -> Result<Vec<Vec<f64>>> {
    if rho.entries.iter().any(|x| *x <= 0.0) {
        return domain("gradient of f diverges at zero entries");
    }
    energy(rho, params)?;
    let k = rho.k;
    let mut g = vec![0.0; k * k];
    gradient_raw(k, &rho.entries, params.d, 0.0, &mut g);
    Ok(g.chunks(k).map(|r| r.to_vec()).collect())
}

/// Second-order expansion of the energy term, accurate as k grows.
pub fn energy_approx(rho: &OverlapMatrix, params: &ModelParams) -> f64 {
    let kf = rho.k as f64;
    let x = rho.norm_sq();
    let t = 1.0 - x / (2.0 * kf);
    params.d / (2.0 * kf * kf) * (-2.0 * kf + x - 2.0 * t * t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecialKind {
    Barycenter,
    Identity,
    Stable,
    Half,
    SStable,
}

impl std::str::FromStr for SpecialKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "barycenter" => Self::Barycenter,
            "identity" | "id" => Self::Identity,
            "stable" => Self::Stable,
            "half" => Self::Half,
            "s_stable" | "s-stable" => Self::SStable,
            other => return param(format!("unknown special matrix `{other}`")),
        })
    }
}

pub fn special_matrix(kind: SpecialKind, k: usize, s: Option<usize>) -> Result<OverlapMatrix> {
    if k < 2 {
        return param("special matrices need k >= 2");
    }
    let kf = k as f64;
    let mut e = vec![0.0; k * k];
    match kind {
        SpecialKind::Barycenter => e.iter_mut().for_each(|x| *x = 1.0 / kf),
        SpecialKind::Identity => (0..k).for_each(|i| e[i * k + i] = 1.0),
        SpecialKind::Stable => {
            for i in 0..k {
                for j in 0..k {
                    e[i * k + j] = if i == j { 1.0 - 1.0 / kf } else { 0.0 } + 1.0 / (kf * kf);
                }
            }
        }
        SpecialKind::Half => {
            if k % 2 != 0 {
                return param("the half matrix needs even k");
            }
            for i in 0..k {
                for j in 0..k {
                    e[i * k + j] = if i < k / 2 {
                        if i == j { 1.0 } else { 0.0 }
                    } else {
                        1.0 / kf
                    };
                }
            }
        }
        SpecialKind::SStable => {
            let s = s.ok_or_else(|| Error::Param("s_stable needs s".into()))?;
            if s > k {
                return param(format!("s = {s} exceeds k = {k}"));
            }
            let rest = (k - s) as f64;
            for i in 0..k {
                for j in 0..k {
                    e[i * k + j] = if i < s || j < s {
                        if i == j { 1.0 } else { 0.0 }
                    } else {
                        1.0 / rest
                    };
                }
            }
        }
    }
    OverlapMatrix::from_flat(k, e)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionReport {
    /// Number of entries strictly above `overlap_high`.
    pub s: usize,
    pub separable: bool,
    pub k_stable: bool,
    pub in_d_good: bool,
    /// For each row, the column of its entry above `overlap_high`, if any.
    pub row_stable: Vec<Option<usize>>,
    pub kappa: f64,
}

pub fn classify_region(rho: &OverlapMatrix, profile: &ConstantsProfile) -> RegionReport {
    let k = rho.k;
    let hi = profile.overlap_high;
    let band_top = 1.0 - profile.kappa;
    let mut s = 0;
    let mut separable = true;
    let mut row_stable = vec![None; k];
    for i in 0..k {
        for j in 0..k {
            let x = rho.get(i, j);
            if x > hi {
                s += 1;
                row_stable[i] = Some(j);
                if x < band_top {
                    separable = false;
                }
            }
        }
    }
    RegionReport {
        s,
        separable,
        k_stable: s == k,
        in_d_good: separable && s < k,
        row_stable,
        kappa: profile.kappa,
    }
}

fn check_perm(p: &[usize], k: usize) -> Result<()> {
    let mut seen = vec![false; k];
    if p.len() != k {
        return param(format!("permutation of length {} for k = {k}", p.len()));
    }
    for &x in p {
        if x >= k || seen[x] {
            return param(format!("{p:?} is not a permutation of 0..{k}"));
        }
        seen[x] = true;
    }
    Ok(())
}

/// Returns `rho'` with `rho'[i][j] = rho[row_perm[i]][col_perm[j]]`.
pub fn permute(rho: &OverlapMatrix, row_perm: &[usize], col_perm: &[usize]) -> Result<OverlapMatrix> {
    let k = rho.k;
    check_perm(row_perm, k)?;
    check_perm(col_perm, k)?;
    let mut e = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            e[i * k + j] = rho.get(row_perm[i], col_perm[j]);
        }
    }
    Ok(OverlapMatrix { k, entries: e })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn entropy_h_examples() {
        assert_eq!(entropy_h(0.0).unwrap(), 0.0);
        assert!(close(entropy_h(0.5).unwrap(), std::f64::consts::LN_2, 1e-15));
        let oracle = -0.1f64 * 0.1f64.ln() - 0.9 * 0.9f64.ln();
        assert!(close(entropy_h(0.1).unwrap(), oracle, 1e-15));
        assert!(close(oracle, 0.3250830, 1e-7));
        assert!(entropy_h(1.5).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert!(close(entropy(&[0.25; 4]).unwrap(), 4f64.ln(), 1e-15));
        assert_eq!(entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!(close(entropy(&[0.5, 0.25, 0.25]).unwrap(), 1.5 * std::f64::consts::LN_2, 1e-15));
        assert!(entropy(&[0.5, 0.6]).is_err());
        assert!(entropy(&[-0.1, 1.1]).is_err());
    }

    #[test]
    fn energy_examples() {
        let p = ModelParams::new(3, 4.0).unwrap();
        let id = special_matrix(SpecialKind::Identity, 3, None).unwrap();
        assert!(close(energy(&id, &p).unwrap(), 2.0 * (2.0f64 / 3.0).ln(), 1e-14));
        for k in 2..9 {
            let p = ModelParams::new(k, 2.5).unwrap();
            let bar = special_matrix(SpecialKind::Barycenter, k, None).unwrap();
            assert!(close(energy(&bar, &p).unwrap(), 2.5 * (1.0 - 1.0 / k as f64).ln(), 1e-14));
        }
        let s2 = special_matrix(SpecialKind::SStable, 4, Some(2)).unwrap();
        let p = ModelParams::new(4, 7.0).unwrap();
        assert!(close(energy(&s2, &p).unwrap(), 3.5 * (1.0 - 0.5 + 3.0 / 16.0f64).ln(), 1e-14));
    }

    #[test]
    fn f_examples() {
        let p = ModelParams::new(3, 4.0).unwrap();
        let bar = special_matrix(SpecialKind::Barycenter, 3, None).unwrap();
        let id = special_matrix(SpecialKind::Identity, 3, None).unwrap();
        assert!(close(f_value(&bar, &p).unwrap(), 0.5753641449035618, 1e-12));
        assert!(close(f_value(&id, &p).unwrap(), 0.2876820724517809, 1e-12));
        let p = ModelParams::new(2, 1.0).unwrap();
        let bar = special_matrix(SpecialKind::Barycenter, 2, None).unwrap();
        assert!(close(f_value(&bar, &p).unwrap(), std::f64::consts::LN_2, 1e-15));
    }

    #[test]
    fn special_matrices() {
        let b = special_matrix(SpecialKind::Barycenter, 3, None).unwrap();
        assert!(close(b.norm_sq(), 1.0, 1e-15));
        for (k, s) in [(5, 2), (6, 0), (6, 6), (7, 3)] {
            let m = special_matrix(SpecialKind::SStable, k, Some(s)).unwrap();
            assert!(close(m.norm_sq(), (s + 1).min(k) as f64, 1e-12), "k={k} s={s}");
            assert!(m.is_doubly_stochastic(1e-12));
        }
        let st = special_matrix(SpecialKind::Stable, 4, None).unwrap();
        assert!(st.is_doubly_stochastic(1e-14));
        let h = special_matrix(SpecialKind::Half, 4, None).unwrap();
        assert!(h.is_singly_stochastic(1e-14));
        assert!(special_matrix(SpecialKind::Half, 5, None).is_err());
        assert!(special_matrix(SpecialKind::SStable, 4, Some(5)).is_err());
        assert!(special_matrix(SpecialKind::SStable, 4, None).is_err());
    }

    #[test]
    fn classification_examples() {
        let prof = ConstantsProfile::desk(4);
        let bar = special_matrix(SpecialKind::Barycenter, 4, None).unwrap();
        let r = classify_region(&bar, &prof);
        assert_eq!((r.s, r.separable, r.in_d_good), (0, true, true));
        let id = special_matrix(SpecialKind::Identity, 4, None).unwrap();
        let r = classify_region(&id, &prof);
        assert!(r.k_stable && !r.in_d_good && r.s == 4);
        let mut p = prof.clone();
        p.kappa = 0.1;
        let m = OverlapMatrix::new(vec![vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
        assert!(!classify_region(&m, &p).separable);
        // Strict inequality at the band edge: exactly 1 - kappa is separable.
        let m = OverlapMatrix::new(vec![vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        assert!(classify_region(&m, &p).separable);
    }

    #[test]
    fn profile_kappa_is_capped() {
        let p = ConstantsProfile::paper(20);
        assert!(p.kappa_raw > 1.0);
        assert_eq!(p.kappa, KAPPA_CAP);
        p.validate().unwrap();
        assert_eq!(ConstantsProfile::desk(3).core_degree, 3);
        assert!(ConstantsProfile::by_name("other", 3).is_err());
    }

    #[test]
    fn validation_rejects_bad_matrices() {
        assert!(OverlapMatrix::new(vec![vec![1.0, 0.5], vec![0.5, 1.0]]).is_err());
        assert!(OverlapMatrix::new(vec![vec![-0.5, 1.5], vec![0.5, 0.5]]).is_err());
        assert!(OverlapMatrix::new(vec![vec![1.0], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = special_matrix(SpecialKind::Stable, 3, None).unwrap();
        let back = OverlapMatrix::from_json(&m.to_json()).unwrap();
        assert_eq!(m, back);
        assert!(OverlapMatrix::from_json(r#"{"k":3,"entries":[[1,0],[0,1]]}"#).is_err());
    }

    #[test]
    fn gradient_domain() {
        let p = ModelParams::new(3, 2.0).unwrap();
        let id = special_matrix(SpecialKind::Identity, 3, None).unwrap();
        assert!(f_gradient(&id, &p).is_err());
        let bar = special_matrix(SpecialKind::Barycenter, 3, None).unwrap();
        let g = f_gradient(&bar, &p).unwrap();
        let first = g[0][0];
        assert!(g.iter().flatten().all(|x| close(*x, first, 1e-15)));
    }

    #[test]
    fn max_of_h_minus_z_ln_k() {
        for k in [2usize, 3, 5, 10, 50, 200] {
            let lk = (k as f64).ln();
            let best = (1..100_000)
                .map(|i| i as f64 / 100_000.0)
                .map(|z| entropy_h(z).unwrap() - z * lk)
                .fold(f64::MIN, f64::max);
            assert!(best <= 1.0 / k as f64 + 1e-12, "k={k}: {best}");
        }
    }

    #[test]
    fn energy_expansion_improves_with_k() {
        // Fixed family: the s=1 stable barycentre.
        let errs: Vec<f64> = [10usize, 20, 40, 80]
            .iter()
            .map(|&k| {
                let p = ModelParams::new(k, 2.0 * k as f64 * (k as f64).ln()).unwrap();
                let m = special_matrix(SpecialKind::SStable, k, Some(1)).unwrap();
                (energy(&m, &p).unwrap() - energy_approx(&m, &p)).abs()
            })
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    fn random_matrix(k: usize) -> impl Strategy<Value = OverlapMatrix> {
        prop::collection::vec(0.001f64..1.0, k * k).prop_map(move |v| {
            let s: f64 = v.iter().sum();
            OverlapMatrix::from_flat(k, v.iter().map(|x| x * k as f64 / s).collect()).unwrap()
        })
    }

    fn sinkhorn_rows(v: Vec<f64>, k: usize) -> OverlapMatrix {
        let mut v = v;
        for row in v.chunks_mut(k) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        OverlapMatrix::from_flat(k, v).unwrap()
    }

    proptest! {
        #[test]
        fn decomposition_holds(k in 2usize..7, d in 0.1f64..40.0, seed in prop::collection::vec(0.001f64..1.0, 36)) {
            let v: Vec<f64> = seed[..k * k].to_vec();
            let s: f64 = v.iter().sum();
            let rho = OverlapMatrix::from_flat(k, v.iter().map(|x| x * k as f64 / s).collect()).unwrap();
            let p = ModelParams::new(k, d).unwrap();
            let scaled: Vec<f64> = rho.entries().iter().map(|x| x / k as f64).collect();
            let lhs = f_value(&rho, &p).unwrap();
            let rhs = entropy(&scaled).unwrap() + energy(&rho, &p).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn row_entropy_decomposition(k in 2usize..7, v in prop::collection::vec(0.0f64..1.0, 36)) {
            let mut v = v[..k * k].to_vec();
            v[0] += 0.01;
            for i in 0..k { v[i * k] += 1e-3; }
            let rho = sinkhorn_rows(v, k);
            let rows: f64 = (0..k).map(|i| entropy(rho.row(i)).unwrap()).sum();
            let lhs = entropy_of_matrix(&rho);
            prop_assert!((lhs - ((k as f64).ln() + rows / k as f64)).abs() < 1e-12);
        }

        #[test]
        fn chain_rule(p in prop::collection::vec(0.0f64..1.0, 2..9), mask in prop::collection::vec(any::<bool>(), 9)) {
            let s: f64 = p.iter().sum::<f64>() + 1e-3;
            let p: Vec<f64> = p.iter().enumerate().map(|(i, x)| (x + if i == 0 { 1e-3 } else { 0.0 }) / s).collect();
            let inside: Vec<f64> = p.iter().zip(&mask).filter(|(_, m)| **m).map(|(x, _)| *x).collect();
            let outside: Vec<f64> = p.iter().zip(&mask).filter(|(_, m)| !**m).map(|(x, _)| *x).collect();
            let q: f64 = inside.iter().sum();
            prop_assume!(q > 1e-9 && q < 1.0 - 1e-9);
            let hi = entropy(&inside.iter().map(|x| x / q).collect::<Vec<_>>()).unwrap();
            let ho = entropy(&outside.iter().map(|x| x / (1.0 - q)).collect::<Vec<_>>()).unwrap();
            let rhs = entropy_h(q).unwrap() + q * hi + (1.0 - q) * ho;
            prop_assert!((entropy(&p).unwrap() - rhs).abs() < 1e-10);
        }

        #[test]
        fn barycenter_minimises_norm(rho in (2usize..8).prop_flat_map(random_matrix)) {
            let k = rho.k();
            let nsq = rho.norm_sq();
            prop_assert!(nsq >= 1.0 - 1e-12);
            let dev = rho.entries().iter().map(|x| (x - 1.0 / k as f64).abs()).fold(0.0, f64::max);
            if (nsq - 1.0).abs() < 1e-12 {
                prop_assert!(dev < 1e-6);
            }
        }

        #[test]
        fn permutation_invariance(rho in (2usize..7).prop_flat_map(random_matrix), d in 0.1f64..30.0, shift in 0usize..7) {
            let k = rho.k();
            let rp: Vec<usize> = (0..k).map(|i| (i + shift) % k).collect();
            let cp: Vec<usize> = (0..k).rev().collect();
            let q = permute(&rho, &rp, &cp).unwrap();
            let p = ModelParams::new(k, d).unwrap();
            prop_assert!((f_value(&rho, &p).unwrap() - f_value(&q, &p).unwrap()).abs() < 1e-12);
            let prof = ConstantsProfile::desk(k);
            prop_assert_eq!(classify_region(&rho, &prof).s, classify_region(&q, &prof).s);
        }

        #[test]
        fn stable_gap_is_affine_increasing(k in 2usize..30, d1 in 0.1f64..50.0, d2 in 0.1f64..50.0) {
            let bar = special_matrix(SpecialKind::Barycenter, k, None).unwrap();
            let st = special_matrix(SpecialKind::Stable, k, None).unwrap();
            let g = |d: f64| {
                let p = ModelParams::new(k, d).unwrap();
                f_value(&st, &p).unwrap() - f_value(&bar, &p).unwrap()
            };
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            prop_assume!(hi - lo > 1e-3);
            prop_assert!(g(hi) > g(lo));
        }
    }

    #[test]
    fn permute_identity_and_stable_count() {
        let m = special_matrix(SpecialKind::SStable, 5, Some(2)).unwrap();
        let idp: Vec<usize> = (0..5).collect();
        assert_eq!(permute(&m, &idp, &idp).unwrap(), m);
        let cyc: Vec<usize> = (0..5).map(|i| (i + 2) % 5).collect();
        let q = permute(&m, &cyc, &cyc).unwrap();
        assert_eq!(classify_region(&q, &ConstantsProfile::desk(5)).s, 2);
        assert!(permute(&m, &[0, 0, 1, 2, 3], &idp).is_err());
    }
}
