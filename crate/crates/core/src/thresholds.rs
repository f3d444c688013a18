//! Closed-form degree thresholds and the chromatic windows `S_k`.

use serde::Serialize;

use crate::error::{param, Result};

/// The refined first-moment threshold carries an unspecified `o_k(1)` term;
/// only its explicit part is computed.
pub const REFINED_OMITS_LOWER_ORDER: bool = true;

pub const WINDOW_LEFT_SHIFT: f64 = 0.99;
pub const WINDOW_RIGHT_SHIFT: f64 = 1.38;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdTable {
    pub k: usize,
    #[serde(rename = "d_AN")]
    pub d_an: f64,
    pub d_cond: f64,
    pub d_first_refined: f64,
    pub d_first: f64,
    pub window_lo: f64,
    pub window_hi: f64,
}

impl ThresholdTable {
    pub fn ordered(&self) -> bool {
        self.d_an < self.d_cond && self.d_cond < self.d_first_refined && self.d_first_refined < self.d_first
    }
}

/// `2k ln k - ln k`.
pub fn d_first(k: f64) -> f64 {
    2.0 * k * k.ln() - k.ln()
}

pub fn d_cond(k: f64) -> f64 {
    d_first(k) - 2.0 * std::f64::consts::LN_2
}

pub fn d_an(k: f64) -> f64 {
    2.0 * (k - 1.0) * (k - 1.0).ln()
}

/// Open interval `S_k`.
pub fn window(k: usize) -> (f64, f64) {
    let kf = k as f64;
    (d_first(kf - 1.0) - WINDOW_LEFT_SHIFT, d_first(kf) - WINDOW_RIGHT_SHIFT)
}

pub fn thresholds(k: usize) -> Result<ThresholdTable> {
    if k < 3 {
        return param(format!("thresholds need k >= 3, got {k}"));
    }
    let kf = k as f64;
    let (lo, hi) = window(k);
    Ok(ThresholdTable {
        k,
        d_an: d_an(kf),
        d_cond: d_cond(kf),
        d_first_refined: d_first(kf) - 1.0,
        d_first: d_first(kf),
        window_lo: lo,
        window_hi: hi,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowHit {
    pub k: usize,
    /// True when `d` also lies in a window with larger index.
    pub overlapping: bool,
}

/// Smallest `k >= k_min` with `d` in `S_k`.
pub fn chromatic_window(d: f64, k_min: usize) -> Option<WindowHit> {
    let k_min = k_min.max(3);
    let mut found: Option<usize> = None;
    let mut k = k_min;
    loop {
        let (lo, hi) = window(k);
        if lo >= d {
            break;
        }
        if d < hi {
            if let Some(first) = found {
                return Some(WindowHit { k: first, overlapping: true });
            }
            found = Some(k);
        }
        k += 1;
    }
    found.map(|k| WindowHit { k, overlapping: false })
}

/// `(1/z) |S ∩ (0, z]|` where `S` is the union of the windows with index `>= k_min`.
/// Overlapping windows are merged so no length is counted twice.
pub fn density_s(z: f64, k_min: usize) -> f64 {
    if !(z > 0.0) {
        return 0.0;
    }
    let mut covered = 0.0;
    let mut reach = f64::NEG_INFINITY;
    let mut k = k_min.max(3);
    loop {
        let (lo, hi) = window(k);
        if lo >= z {
            break;
        }
        let a = lo.max(reach).max(0.0);
        let b = hi.min(z);
        if b > a {
            covered += b - a;
        }
        reach = reach.max(hi);
        k += 1;
    }
    covered / z
}

/// True when the windows `S_k` and `S_{k+1}` are nonempty and disjoint.
pub fn windows_consistent(k: usize) -> bool {
    let (lo, hi) = window(k);
    let (lo2, _) = window(k + 1);
    lo < hi && hi <= lo2
}

/// Smallest `k0 >= 3` such that every `k` in `[k0, k_max]` has ordered
/// thresholds and a consistent window.
pub fn find_k0(k_max: usize) -> usize {
    let mut k0 = k_max;
    for k in (3..=k_max).rev() {
        let t = thresholds(k).expect("k >= 3");
        if t.ordered() && windows_consistent(k) {
            k0 = k;
        } else {
            break;
        }
    }
    k0
}

pub fn thresholds_csv(ks: impl IntoIterator<Item = usize>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "d_AN", "d_cond", "d_first_refined", "d_first", "window_lo", "window_hi"])
        .map_err(|e| crate::Error::Format(e.to_string()))?;
    for k in ks {
        let t = thresholds(k)?;
        w.write_record([
            t.k.to_string(),
            t.d_an.to_string(),
            t.d_cond.to_string(),
            t.d_first_refined.to_string(),
            t.d_first.to_string(),
            t.window_lo.to_string(),
            t.window_hi.to_string(),
        ])
        .map_err(|e| crate::Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn k3_values() {
        let t = thresholds(3).unwrap();
        assert!((t.d_an - 4.0 * LN_2).abs() < 1e-14);
        assert!((t.d_cond - (5.0 * 3f64.ln() - 2.0 * LN_2)).abs() < 1e-14);
        assert!((t.d_an - 2.7725887).abs() < 1e-7);
        assert!((t.d_cond - 4.1067671).abs() < 1e-7);
        assert!(thresholds(2).is_err());
    }

    #[test]
    fn k10_values() {
        let t = thresholds(10).unwrap();
        assert!((t.d_cond - 42.3628).abs() < 5e-5);
        assert!((t.window_lo - 36.363).abs() < 1e-3);
        assert!((t.window_hi - 42.369).abs() < 1e-3);
        assert_eq!(chromatic_window(40.0, 3).map(|h| h.k), Some(10));
    }

    #[test]
    fn window_edges_are_open() {
        let (lo, hi) = window(10);
        assert!(chromatic_window(hi, 10).map_or(true, |h| h.k != 10));
        assert!(chromatic_window(lo, 10).is_none());
        assert!(chromatic_window(0.5, 3).is_none());
        assert_eq!(density_s(0.5, 3), 0.0);
    }

    #[test]
    fn density_at_right_endpoint() {
        let (lo, hi) = window(5);
        assert!((density_s(hi, 5) - (hi - lo) / hi).abs() < 1e-15);
    }

    #[test]
    fn gap_is_constant() {
        for k in [5usize, 50, 5000] {
            let (_, hi) = window(k);
            let (lo2, _) = window(k + 1);
            assert!((lo2 - hi - 0.39).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_header() {
        let s = thresholds_csv([3, 4]).unwrap();
        assert!(s.starts_with("k,d_AN,d_cond,d_first_refined,d_first,window_lo,window_hi\n"));
        assert_eq!(s.lines().count(), 3);
    }
}
