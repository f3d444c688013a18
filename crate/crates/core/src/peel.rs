//! The core of a coloured graph, the W/U/Z peeling sets, free and complete
//! vertices, the P1-P4 expansion predicates, and the cluster-size bound.

use std::collections::VecDeque;

use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::graph::{Coloring, Graph};
use crate::matrix::ConstantsProfile;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeelStep {
    pub vertex: usize,
    /// A colour class in which the vertex had too few in-core neighbours.
    pub lacking_color: usize,
    pub neighbors_in_class: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoreResult {
    pub core_vertices: Vec<usize>,
    pub peel_trace: Vec<PeelStep>,
    pub profile: ConstantsProfile,
}

fn check_shape(g: &Graph, sigma: &Coloring) -> Result<()> {
    if g.n() != sigma.n() {
        return param("graph and colouring sizes differ");
    }
    Ok(())
}

/// `cnt[v][i]`: neighbours of `v` of colour `i` inside `alive`.
fn class_counts(g: &Graph, sigma: &Coloring, alive: &[bool]) -> Vec<Vec<usize>> {
    let k = sigma.k();
    (0..g.n())
        .map(|v| {
            let mut c = vec![0; k];
            for &u in g.neighbors(v) {
                if alive[u] {
                    c[sigma.color(u)] += 1;
                }
            }
            c
        })
        .collect()
}

fn deficit(cnt: &[usize], own: usize, threshold: usize) -> Option<(usize, usize)> {
    cnt.iter().enumerate().find(|&(i, &c)| i != own && c < threshold).map(|(i, &c)| (i, c))
}

/// Largest set in which every vertex has at least `threshold` in-set
/// neighbours in every colour class other than its own.
fn peel(g: &Graph, sigma: &Coloring, threshold: usize, mut order: Option<&mut rng::Rng>) -> (Vec<bool>, Vec<PeelStep>) {
    let n = g.n();
    let mut alive = vec![true; n];
    let mut cnt = class_counts(g, sigma, &alive);
    let mut trace = Vec::new();
    let mut queued = vec![false; n];
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut pool: Vec<usize> = Vec::new();
    for v in 0..n {
        if deficit(&cnt[v], sigma.color(v), threshold).is_some() {
            queued[v] = true;
            queue.push_back(v);
            pool.push(v);
        }
    }
    loop {
        let v = match order.as_deref_mut() {
            Some(r) => {
                if pool.is_empty() {
                    break;
                }
                let i = r.gen_range(0..pool.len());
                pool.swap_remove(i)
            }
            None => match queue.pop_front() {
                Some(v) => v,
                None => break,
            },
        };
        let (lack, have) = deficit(&cnt[v], sigma.color(v), threshold).expect("queued vertices stay deficient");
        alive[v] = false;
        trace.push(PeelStep { vertex: v, lacking_color: lack, neighbors_in_class: have });
        let c = sigma.color(v);
        for &u in g.neighbors(v) {
            cnt[u][c] -= 1;
            if alive[u] && !queued[u] && deficit(&cnt[u], sigma.color(u), threshold).is_some() {
                queued[u] = true;
                queue.push_back(u);
                pool.push(u);
            }
        }
    }
    (alive, trace)
}

pub fn core(g: &Graph, sigma: &Coloring, profile: &ConstantsProfile) -> Result<CoreResult> {
    check_shape(g, sigma)?;
    let (alive, trace) = peel(g, sigma, profile.core_degree, None);
    Ok(CoreResult {
        core_vertices: (0..g.n()).filter(|&v| alive[v]).collect(),
        peel_trace: trace,
        profile: profile.clone(),
    })
}

/// Same fixed point, removing deficient vertices in a seeded random order.
pub fn core_random_order(g: &Graph, sigma: &Coloring, profile: &ConstantsProfile, seed: u64) -> Result<CoreResult> {
    check_shape(g, sigma)?;
    let mut r = rng::seeded(seed);
    let (alive, trace) = peel(g, sigma, profile.core_degree, Some(&mut r));
    Ok(CoreResult {
        core_vertices: (0..g.n()).filter(|&v| alive[v]).collect(),
        peel_trace: trace,
        profile: profile.clone(),
    })
}

/// True when every vertex of `set` has `threshold` neighbours of every other colour inside `set`.
pub fn satisfies_core_condition(g: &Graph, sigma: &Coloring, set: &[usize], threshold: usize) -> bool {
    let mut alive = vec![false; g.n()];
    set.iter().for_each(|&v| alive[v] = true);
    let k = sigma.k();
    set.iter().all(|&v| {
        let mut c = vec![0; k];
        for &u in g.neighbors(v) {
            if alive[u] {
                c[sigma.color(u)] += 1;
            }
        }
        deficit(&c, sigma.color(v), threshold).is_none()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrSets {
    /// `w[i][j]`: vertices of class `i` with fewer than `w_degree` neighbours in class `j`.
    pub w: Vec<Vec<Vec<usize>>>,
    pub w_union: Vec<usize>,
    pub u: Vec<usize>,
    pub z: Vec<usize>,
    /// Order in which vertices were added to Z beyond U.
    pub z_additions: Vec<usize>,
    pub profile: ConstantsProfile,
}

impl CrSets {
    /// `V \ (W ∪ Z)`, which lies inside the core whenever `w_degree >= 3 core_degree - 1`.
    pub fn remainder(&self, n: usize) -> Vec<usize> {
        let mut out = vec![true; n];
        self.w_union.iter().chain(&self.z).for_each(|&v| out[v] = false);
        (0..n).filter(|&v| out[v]).collect()
    }
}

pub fn cr_sets(g: &Graph, sigma: &Coloring, profile: &ConstantsProfile) -> Result<CrSets> {
    check_shape(g, sigma)?;
    let (n, k) = (g.n(), sigma.k());
    let all = vec![true; n];
    let cnt = class_counts(g, sigma, &all);
    let mut w = vec![vec![Vec::new(); k]; k];
    let mut in_wj = vec![vec![false; n]; k];
    for v in 0..n {
        let i = sigma.color(v);
        for j in 0..k {
            if j != i && cnt[v][j] < profile.w_degree {
                w[i][j].push(v);
                in_wj[i][v] = true;
            }
        }
    }
    let mut in_w = vec![false; n];
    for v in 0..n {
        in_w[v] = in_wj[sigma.color(v)][v];
    }
    let w_union: Vec<usize> = (0..n).filter(|&v| in_w[v]).collect();
    // U: vertices of class i with more than core_degree neighbours in W_j for some j != i.
    let mut in_z = vec![false; n];
    for v in 0..n {
        let i = sigma.color(v);
        let hit = (0..k).filter(|&j| j != i).any(|j| {
            g.neighbors(v).iter().filter(|&&x| in_wj[j][x]).count() > profile.core_degree
        });
        if hit {
            in_z[v] = true;
        }
    }
    let u: Vec<usize> = (0..n).filter(|&v| in_z[v]).collect();
    // Z: close U under "has at least core_degree neighbours in Z"; stop when nothing qualifies.
    let mut zdeg: Vec<usize> = (0..n).map(|v| g.neighbors(v).iter().filter(|&&x| in_z[x]).count()).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| !in_z[v] && zdeg[v] >= profile.core_degree).collect();
    let mut additions = Vec::new();
    while let Some(v) = queue.pop_front() {
        if in_z[v] {
            continue;
        }
        in_z[v] = true;
        additions.push(v);
        for &x in g.neighbors(v) {
            zdeg[x] += 1;
            if !in_z[x] && zdeg[x] == profile.core_degree {
                queue.push_back(x);
            }
        }
    }
    Ok(CrSets {
        w,
        w_union,
        u,
        z: (0..n).filter(|&v| in_z[v]).collect(),
        z_additions: additions,
        profile: profile.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VertexCensus {
    /// Colours `i` (own colour included) with no core neighbour of colour `i`.
    pub free_degree: Vec<usize>,
    /// The same count with the vertex's own colour left out.
    pub free_degree_excluding_own: Vec<usize>,
    pub f1: Vec<usize>,
    pub f2: Vec<usize>,
    pub sigma_complete: Vec<usize>,
    pub profile: ConstantsProfile,
}

pub fn vertex_census(g: &Graph, sigma: &Coloring, core_vertices: &[usize], profile: &ConstantsProfile) -> Result<VertexCensus> {
    check_shape(g, sigma)?;
    if core_vertices.iter().any(|&v| v >= g.n()) {
        return param("core vertex outside the graph");
    }
    let (n, k) = (g.n(), sigma.k());
    let mut in_core = vec![false; n];
    core_vertices.iter().for_each(|&v| in_core[v] = true);
    let cnt = class_counts(g, sigma, &in_core);
    let free: Vec<usize> = cnt.iter().map(|c| c.iter().filter(|&&x| x == 0).count()).collect();
    let free_ex: Vec<usize> = (0..n)
        .map(|v| cnt[v].iter().enumerate().filter(|&(i, &x)| i != sigma.color(v) && x == 0).count())
        .collect();
    let complete = (0..n)
        .filter(|&v| (0..k).all(|i| i == sigma.color(v) || cnt[v][i] > 0))
        .collect();
    Ok(VertexCensus {
        f1: (0..n).filter(|&v| free[v] >= 2).collect(),
        f2: (0..n).filter(|&v| free[v] >= 3).collect(),
        free_degree: free,
        free_degree_excluding_own: free_ex,
        sigma_complete: complete,
        profile: profile.clone(),
    })
}

/// `2^{|F1 \ F2|} k^{|F2|}`.
pub fn cluster_bound(census: &VertexCensus, k: usize) -> BigUint {
    let two = census.f1.len() - census.f2.len();
    BigUint::from(2u32).pow(two as u32) * BigUint::from(k).pow(census.f2.len() as u32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Property {
    P1,
    P2,
    P3,
    P4,
}

impl std::str::FromStr for Property {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "P1" => Property::P1,
            "P2" => Property::P2,
            "P3" => Property::P3,
            "P4" => Property::P4,
            other => return param(format!("unknown property `{other}`")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum CheckMode {
    /// Scan every relevant subset; fail if more than `budget` subsets are needed.
    Exact { budget: u64 },
    /// Random and greedy search for violating subsets.
    Randomized { trials: usize, seed: u64 },
    /// Exact when within budget, otherwise randomized.
    Auto { budget: u64, trials: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub vertices: Vec<usize>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PropertyOutcome {
    Holds,
    Violated { witness: Witness },
    /// Randomized search ended without a counterexample; this is not a proof.
    NoWitnessFound { trials: usize },
}

impl PropertyOutcome {
    pub fn holds(&self) -> Option<bool> {
        match self {
            PropertyOutcome::Holds => Some(true),
            PropertyOutcome::Violated { .. } => Some(false),
            PropertyOutcome::NoWitnessFound { .. } => None,
        }
    }
}

fn binom_f(n: usize, r: usize) -> f64 {
    if r > n {
        return 0.0;
    }
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Calls `f` on every `r`-subset of `items`; stops early when `f` returns `false`.
fn for_each_subset(items: &[usize], r: usize, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    fn rec(items: &[usize], r: usize, start: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        if cur.len() == r {
            return f(cur);
        }
        let need = r - cur.len();
        for i in start..=items.len().saturating_sub(need) {
            if items.len() < need {
                break;
            }
            cur.push(items[i]);
            let go = rec(items, r, i + 1, cur, f);
            cur.pop();
            if !go {
                return false;
            }
        }
        true
    }
    rec(items, r, 0, &mut Vec::with_capacity(r), f)
}

fn edges_within(g: &Graph, set: &[usize]) -> usize {
    let mut mark = vec![false; g.n()];
    set.iter().for_each(|&v| mark[v] = true);
    set.iter().map(|&v| g.neighbors(v).iter().filter(|&&u| mark[u]).count()).sum::<usize>() / 2
}

/// Vertices outside class `i` with no neighbour in `s`.
fn uncovered(g: &Graph, sigma: &Coloring, i: usize, s: &[usize]) -> usize {
    let mut mark = vec![false; g.n()];
    s.iter().for_each(|&v| mark[v] = true);
    (0..g.n())
        .filter(|&v| sigma.color(v) != i && !g.neighbors(v).iter().any(|&u| mark[u]))
        .count()
}

/// Admissible sizes for the P1 subsets of a class.
fn p1_sizes(n: usize, k: usize) -> (usize, usize) {
    let nk = n as f64 / k as f64;
    let lo = (0.509 * nk).ceil() as usize;
    let hi = ((1.0 - (k as f64).powf(-0.499)) * nk).floor() as usize;
    (lo, hi)
}

fn p1_bound(n: usize, k: usize, s: usize) -> f64 {
    n as f64 / k as f64 - s as f64 - (n as f64).powf(2.0 / 3.0)
}

pub fn check_property(g: &Graph, sigma: Option<&Coloring>, which: Property, profile: &ConstantsProfile, mode: CheckMode) -> Result<PropertyOutcome> {
    let need_sigma = || sigma.ok_or_else(|| Error::Param(format!("{which:?} needs a colouring")));
    if let Some(s) = sigma {
        check_shape(g, s)?;
    }
    let n = g.n();
    match which {
        Property::P2 => {
            let sigma = need_sigma()?;
            let k = sigma.k();
            let cap = profile.kappa * n as f64 / (3.0 * k as f64);
            for i in 0..k {
                let low: Vec<usize> = (0..n)
                    .filter(|&v| sigma.color(v) != i)
                    .filter(|&v| g.neighbors(v).iter().filter(|&&u| sigma.color(u) == i).count() < profile.p2_degree)
                    .collect();
                if low.len() as f64 > cap {
                    return Ok(PropertyOutcome::Violated {
                        witness: Witness {
                            detail: format!("{} vertices outside class {i} have fewer than {} neighbours in it (cap {cap})", low.len(), profile.p2_degree),
                            vertices: low,
                        },
                    });
                }
            }
            Ok(PropertyOutcome::Holds)
        }
        Property::P4 => {
            let sigma = need_sigma()?;
            let k = sigma.k();
            let c = core(g, sigma, profile)?;
            let census = vertex_census(g, sigma, &c.core_vertices, profile)?;
            let cap1 = n as f64 / k as f64 * (1.0 + profile.p4_free1_slack);
            let cap2 = profile.p4_free2_fraction * n as f64;
            if census.f1.len() as f64 > cap1 {
                return Ok(PropertyOutcome::Violated {
                    witness: Witness { detail: format!("|F1| = {} > {cap1}", census.f1.len()), vertices: census.f1 },
                });
            }
            if census.f2.len() as f64 > cap2 {
                return Ok(PropertyOutcome::Violated {
                    witness: Witness { detail: format!("|F2| = {} > {cap2}", census.f2.len()), vertices: census.f2 },
                });
            }
            Ok(PropertyOutcome::Holds)
        }
        Property::P1 => {
            let sigma = need_sigma()?;
            let k = sigma.k();
            let (lo, hi) = p1_sizes(n, k);
            let classes: Vec<Vec<usize>> = (0..k).map(|i| sigma.class(i)).collect();
            let work: f64 = classes.iter().map(|c| (lo..=hi.min(c.len())).map(|s| binom_f(c.len(), s)).sum::<f64>()).sum();
            let exact = match mode {
                CheckMode::Exact { budget } => {
                    if work > budget as f64 {
                        return Err(Error::Budget(format!("P1 needs {work} subsets")));
                    }
                    true
                }
                CheckMode::Auto { budget, .. } => work <= budget as f64,
                CheckMode::Randomized { .. } => false,
            };
            let mut bad: Option<Witness> = None;
            let test = |i: usize, s: &[usize]| -> Option<Witness> {
                let u = uncovered(g, sigma, i, s);
                (u as f64 >= p1_bound(n, k, s.len()))
                    .then(|| Witness { vertices: s.to_vec(), detail: format!("{u} uncovered vertices outside class {i}") })
            };
            if exact {
                for (i, c) in classes.iter().enumerate() {
                    for s in lo..=hi.min(c.len()) {
                        if !for_each_subset(c, s, &mut |sub| {
                            bad = test(i, sub);
                            bad.is_none()
                        }) {
                            break;
                        }
                    }
                    if bad.is_some() {
                        break;
                    }
                }
                return Ok(bad.map_or(PropertyOutcome::Holds, |w| PropertyOutcome::Violated { witness: w }));
            }
            let (trials, seed) = random_params(mode);
            let mut r = rng::seeded(seed);
            for t in 0..trials {
                let i = t % k;
                let c = &classes[i];
                if lo > hi.min(c.len()) {
                    continue;
                }
                let s = r.gen_range(lo..=hi.min(c.len()));
                let mut pick = c.clone();
                pick.shuffle(&mut r);
                pick.truncate(s);
                pick.sort_unstable();
                bad = test(i, &pick);
                if bad.is_some() {
                    break;
                }
            }
            Ok(bad.map_or(PropertyOutcome::NoWitnessFound { trials }, |w| PropertyOutcome::Violated { witness: w }))
        }
        Property::P3 => {
            let k = sigma.map(|s| s.k()).unwrap_or(2);
            let max_size = ((k as f64).powf(-4.0 / 3.0) * n as f64).floor() as usize;
            let f = profile.density_factor;
            // Sizes where more than f*s edges are possible at all.
            let sizes: Vec<usize> = (1..=max_size.min(n)).filter(|&s| s * (s - 1) / 2 > f * s).collect();
            let work: f64 = sizes.iter().map(|&s| binom_f(n, s)).sum();
            let exact = match mode {
                CheckMode::Exact { budget } => {
                    if work > budget as f64 {
                        return Err(Error::Budget(format!("P3 needs {work} subsets")));
                    }
                    true
                }
                CheckMode::Auto { budget, .. } => work <= budget as f64,
                CheckMode::Randomized { .. } => false,
            };
            let all: Vec<usize> = (0..n).collect();
            let mut bad: Option<Witness> = None;
            let test = |s: &[usize]| -> Option<Witness> {
                let e = edges_within(g, s);
                (e > f * s.len())
                    .then(|| Witness { vertices: s.to_vec(), detail: format!("{} vertices span {e} > {} edges", s.len(), f * s.len()) })
            };
            if exact {
                for &s in &sizes {
                    if !for_each_subset(&all, s, &mut |sub| {
                        bad = test(sub);
                        bad.is_none()
                    }) {
                        break;
                    }
                }
                return Ok(bad.map_or(PropertyOutcome::Holds, |w| PropertyOutcome::Violated { witness: w }));
            }
            if sizes.is_empty() {
                return Ok(PropertyOutcome::Holds);
            }
            // Greedy min-degree peeling visits one candidate of every size.
            let mut alive: Vec<usize> = all.clone();
            while !alive.is_empty() {
                if alive.len() <= max_size {
                    bad = test(&alive);
                    if bad.is_some() {
                        break;
                    }
                }
                let mark: Vec<bool> = (0..n).map(|v| alive.contains(&v)).collect();
                let (idx, _) = alive
                    .iter()
                    .enumerate()
                    .min_by_key(|(_, &v)| g.neighbors(v).iter().filter(|&&u| mark[u]).count())
                    .expect("nonempty");
                alive.remove(idx);
            }
            let (trials, seed) = random_params(mode);
            let mut r = rng::seeded(seed);
            for _ in 0..trials {
                if bad.is_some() {
                    break;
                }
                let s = sizes[r.gen_range(0..sizes.len())];
                let mut pick = all.clone();
                pick.shuffle(&mut r);
                pick.truncate(s);
                pick.sort_unstable();
                bad = test(&pick);
            }
            Ok(bad.map_or(PropertyOutcome::NoWitnessFound { trials }, |w| PropertyOutcome::Violated { witness: w }))
        }
    }
}

fn random_params(mode: CheckMode) -> (usize, u64) {
    match mode {
        CheckMode::Randomized { trials, seed } | CheckMode::Auto { trials, seed, .. } => (trials, seed),
        CheckMode::Exact { .. } => (0, 0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{random_balanced, sample_graph, Model};
    use crate::matrix::ModelParams;
    use proptest::prelude::*;

    fn planted(n: usize, k: usize, d: f64, seed: u64) -> (Graph, Coloring) {
        let sigma = random_balanced(n, k, seed).unwrap();
        let pairs = crate::graph::bichromatic_pairs(&sigma).len();
        let p = ModelParams::new(k, d).unwrap().with_n(n);
        let m = p.m.unwrap().min(pairs);
        let p = p.with_m(m);
        (sample_graph(Model::PlantedM, &p, Some(&sigma), seed + 1).unwrap(), sigma)
    }

    fn complete_multipartite(k: usize, size: usize) -> (Graph, Coloring) {
        let n = k * size;
        let sigma = Coloring::new(k, (0..n).map(|v| v % k).collect()).unwrap();
        let e = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).filter(|&(u, v)| u % k != v % k);
        (Graph::new(n, e).unwrap(), sigma)
    }

    #[test]
    fn core_examples() {
        let prof = ConstantsProfile::desk(3);
        let (g, s) = complete_multipartite(3, 4);
        assert_eq!(core(&g, &s, &prof).unwrap().core_vertices.len(), 12);
        let s = random_balanced(9, 3, 0).unwrap();
        assert!(core(&Graph::empty(9), &s, &prof).unwrap().core_vertices.is_empty());
    }

    #[test]
    fn cr_examples() {
        let prof = ConstantsProfile::desk(3);
        let (g, s) = complete_multipartite(3, 9);
        let cr = cr_sets(&g, &s, &prof).unwrap();
        assert!(cr.w_union.is_empty() && cr.u.is_empty() && cr.z.is_empty());
        for i in 0..3 {
            assert!(cr.w[i][i].is_empty());
        }
    }

    #[test]
    fn census_examples() {
        let prof = ConstantsProfile::desk(3);
        let (g, s) = planted(30, 3, 8.0, 4);
        let c = core(&g, &s, &prof).unwrap();
        let cen = vertex_census(&g, &s, &c.core_vertices, &prof).unwrap();
        assert!(cen.free_degree.iter().all(|&f| f >= 1));
        for &v in &cen.sigma_complete {
            assert_eq!(cen.free_degree[v], 1);
            assert!(!cen.f1.contains(&v));
        }
        assert!(cen.f2.iter().all(|v| cen.f1.contains(v)));
        for v in 0..30 {
            assert_eq!(cen.free_degree[v], cen.free_degree_excluding_own[v] + 1);
        }
    }

    #[test]
    fn bound_examples() {
        let prof = ConstantsProfile::desk(3);
        let base = VertexCensus { free_degree: vec![], free_degree_excluding_own: vec![], f1: vec![], f2: vec![], sigma_complete: vec![], profile: prof };
        assert_eq!(cluster_bound(&base, 3), BigUint::from(1u32));
        let c = VertexCensus { f1: vec![0, 1, 2, 3], f2: vec![3], ..base };
        assert_eq!(cluster_bound(&c, 3), BigUint::from(24u32));
    }

    #[test]
    fn p2_vacuous_at_zero() {
        let mut prof = ConstantsProfile::desk(3);
        prof.p2_degree = 0;
        let (g, s) = planted(12, 3, 2.0, 1);
        assert_eq!(check_property(&g, Some(&s), Property::P2, &prof, CheckMode::Exact { budget: 10 }).unwrap(), PropertyOutcome::Holds);
    }

    #[test]
    fn p3_clique_witness() {
        let prof = ConstantsProfile::desk(2);
        // 12 <= 2^{-4/3} n needs n >= 31.
        let n = 40;
        let e = (0..12).flat_map(|u| (u + 1..12).map(move |v| (u, v)));
        let g = Graph::new(n, e).unwrap();
        let s = random_balanced(n, 2, 0).unwrap();
        let out = check_property(&g, Some(&s), Property::P3, &prof, CheckMode::Randomized { trials: 10, seed: 1 }).unwrap();
        match out {
            PropertyOutcome::Violated { witness } => {
                assert!(edges_within(&g, &witness.vertices) > 5 * witness.vertices.len());
                assert!((0..12).all(|v| witness.vertices.contains(&v)));
            }
            other => panic!("expected a violation, got {other:?}"),
        }
        assert_eq!(66, edges_within(&g, &(0..12).collect::<Vec<_>>()));
    }

    #[test]
    fn p3_exhaustive_small() {
        let prof = ConstantsProfile::desk(2);
        // At n = 14, 2^{-4/3} * 14 < 12, so no size can exceed 5|S| and P3 holds.
        let g = Graph::complete(14);
        let s = random_balanced(14, 2, 0).unwrap();
        assert_eq!(check_property(&g, Some(&s), Property::P3, &prof, CheckMode::Exact { budget: 1_000_000 }).unwrap(), PropertyOutcome::Holds);
    }

    #[test]
    fn p1_and_p4_run() {
        let prof = ConstantsProfile::desk(3);
        let (g, s) = planted(30, 3, 8.0, 2);
        let p1 = check_property(&g, Some(&s), Property::P1, &prof, CheckMode::Auto { budget: 100_000, trials: 200, seed: 3 }).unwrap();
        assert!(p1.holds().is_some());
        let p4 = check_property(&g, Some(&s), Property::P4, &prof, CheckMode::Exact { budget: 0 }).unwrap();
        assert!(p4.holds().is_some());
        assert!(check_property(&g, None, Property::P2, &prof, CheckMode::Exact { budget: 0 }).is_err());
    }

    fn brute_max_core(g: &Graph, s: &Coloring, c: usize) -> usize {
        let n = g.n();
        (0u32..1 << n)
            .filter_map(|mask| {
                let set: Vec<usize> = (0..n).filter(|v| mask >> v & 1 == 1).collect();
                satisfies_core_condition(g, s, &set, c).then_some(set.len())
            })
            .max()
            .unwrap_or(0)
    }

    #[test]
    fn core_is_maximal_small() {
        let mut prof = ConstantsProfile::desk(2);
        prof.core_degree = 2;
        for seed in 0..4 {
            let (g, s) = planted(10, 2, 5.0, seed);
            let c = core(&g, &s, &prof).unwrap();
            assert_eq!(c.core_vertices.len(), brute_max_core(&g, &s, 2));
        }
    }

    proptest! {
        #[test]
        fn core_order_independent_and_fixed(seed in 0u64..300, n in 10usize..40, k in 2usize..5) {
            let prof = ConstantsProfile::desk(k);
            let (g, s) = planted(n, k, 9.0, seed);
            let a = core(&g, &s, &prof).unwrap();
            let b = core_random_order(&g, &s, &prof, seed ^ 0xabc).unwrap();
            prop_assert_eq!(&a.core_vertices, &b.core_vertices);
            prop_assert!(satisfies_core_condition(&g, &s, &a.core_vertices, prof.core_degree));
            let sub = g.induced(&a.core_vertices);
            let sub_sigma = Coloring::new(k, a.core_vertices.iter().map(|&v| s.color(v)).collect()).unwrap();
            prop_assert_eq!(core(&sub, &sub_sigma, &prof).unwrap().core_vertices.len(), a.core_vertices.len());
            let mut p2 = prof.clone();
            p2.core_degree += 1;
            let tighter = core(&g, &s, &p2).unwrap();
            prop_assert!(tighter.core_vertices.iter().all(|v| a.core_vertices.contains(v)));
        }

        #[test]
        fn remainder_inside_core(seed in 0u64..300, n in 10usize..60, k in 2usize..5, d in 4.0f64..14.0) {
            let prof = ConstantsProfile::desk(k);
            let (g, s) = planted(n, k, d, seed);
            let c = core(&g, &s, &prof).unwrap();
            let cr = cr_sets(&g, &s, &prof).unwrap();
            prop_assert!(cr.u.iter().all(|v| cr.z.contains(v)));
            prop_assert!(cr.remainder(n).iter().all(|v| c.core_vertices.contains(v)));
        }
    }
}
