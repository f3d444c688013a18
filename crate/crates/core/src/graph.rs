//! Graphs, colourings, random and planted sampling, exact enumeration of
//! colourings and clusters, and the separable/good predicates.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::matrix::{ConstantsProfile, ModelParams, OverlapMatrix};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl Graph {
    /// Builds a simple graph; pairs are normalised to `u < v`, sorted and checked.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut e: Vec<(usize, usize)> = Vec::new();
        for (u, v) in edges {
            if u == v {
                return param(format!("self-loop at {u}"));
            }
            if u >= n || v >= n {
                return param(format!("edge ({u},{v}) outside 0..{n}"));
            }
            e.push((u.min(v), u.max(v)));
        }
        e.sort_unstable();
        if e.windows(2).any(|w| w[0] == w[1]) {
            return param("duplicate edge");
        }
        Ok(Self::from_sorted(n, e))
    }

    fn from_sorted(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj.iter_mut().for_each(|a| a.sort_unstable());
        Self { n, edges, adj }
    }

    pub fn empty(n: usize) -> Self {
        Self::from_sorted(n, Vec::new())
    }

    pub fn complete(n: usize) -> Self {
        let e = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        Self::from_sorted(n, e)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    /// Relabels vertex `v` as `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Graph> {
        Graph::new(self.n, self.edges.iter().map(|&(u, v)| (perm[u], perm[v])))
    }

    /// Subgraph induced by `keep`; vertices are renumbered in the order given.
    pub fn induced(&self, keep: &[usize]) -> Graph {
        let mut pos = vec![usize::MAX; self.n];
        for (i, &v) in keep.iter().enumerate() {
            pos[v] = i;
        }
        let e = self
            .edges
            .iter()
            .filter(|(u, v)| pos[*u] != usize::MAX && pos[*v] != usize::MAX)
            .map(|&(u, v)| (pos[u], pos[v]));
        Graph::new(keep.len(), e).expect("induced subgraph is simple")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("graph serialises")
    }

    fn to_file(&self) -> GraphFile {
        GraphFile { n: self.n, edges: self.edges.iter().map(|&(u, v)| [u, v]).collect() }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self.to_file()).expect("graph serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: GraphFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        Graph::new(f.n, f.edges.into_iter().map(|[u, v]| (u, v)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coloring {
    n: usize,
    k: usize,
    assignment: Vec<usize>,
}

impl Coloring {
    pub fn new(k: usize, assignment: Vec<usize>) -> Result<Self> {
        if k == 0 {
            return param("need at least one colour");
        }
        if let Some(c) = assignment.iter().find(|c| **c >= k) {
            return param(format!("colour {c} outside 0..{k}"));
        }
        Ok(Self { n: assignment.len(), k, assignment })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn color(&self, v: usize) -> usize {
        self.assignment[v]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &c in &self.assignment {
            s[c] += 1;
        }
        s
    }

    pub fn class(&self, c: usize) -> Vec<usize> {
        (0..self.n).filter(|&v| self.assignment[v] == c).collect()
    }

    pub fn is_balanced(&self) -> bool {
        self.class_sizes().iter().all(|&s| size_balanced(s, self.n, self.k))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("colouring serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Coloring = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if c.n != c.assignment.len() {
            return Err(Error::Format(format!("n = {} but {} colours given", c.n, c.assignment.len())));
        }
        Coloring::new(c.k, c.assignment)
    }
}

/// `| size - n/k | <= sqrt(n)`, evaluated exactly as `(k size - n)^2 <= k^2 n`.
pub fn size_balanced(size: usize, n: usize, k: usize) -> bool {
    let diff = (k * size) as i128 - n as i128;
    diff * diff <= (k * k * n) as i128
}

/// Inclusive range of balanced class sizes.
pub fn balanced_range(n: usize, k: usize) -> (usize, usize) {
    let ok: Vec<usize> = (0..=n).filter(|&s| size_balanced(s, n, k)).collect();
    (ok[0], *ok.last().expect("n/k rounded is balanced"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Gnm,
    Gnp,
    PlantedM,
    PlantedP,
}

impl std::str::FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gnm" => Model::Gnm,
            "gnp" => Model::Gnp,
            "planted_m" | "planted-m" => Model::PlantedM,
            "planted_p" | "planted-p" => Model::PlantedP,
            other => return param(format!("unknown model `{other}`")),
        })
    }
}

/// Pairs `{u, v}` with `sigma(u) != sigma(v)`, in lexicographic order.
pub fn bichromatic_pairs(sigma: &Coloring) -> Vec<(usize, usize)> {
    let n = sigma.n;
    (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .filter(|&(u, v)| sigma.color(u) != sigma.color(v))
        .collect()
}

/// Edge probability of the Bernoulli planted model: expected edge count equals `m`.
pub fn planted_p(sigma: &Coloring, m: usize) -> Result<BigRational> {
    let nb = bichromatic_pairs(sigma).len();
    if nb == 0 || m > nb {
        return param(format!("m = {m} exceeds the {nb} bichromatic pairs"));
    }
    Ok(BigRational::new(m.into(), nb.into()))
}

fn pair_from_index(n: usize, mut idx: usize) -> (usize, usize) {
    let mut u = 0;
    loop {
        let row = n - 1 - u;
        if idx < row {
            return (u, u + 1 + idx);
        }
        idx -= row;
        u += 1;
    }
}

pub fn sample_graph(model: Model, params: &ModelParams, sigma: Option<&Coloring>, seed: u64) -> Result<Graph> {
    let n = params.n.ok_or_else(|| Error::Param("sampling needs n".into()))?;
    let mut r = rng::seeded(seed);
    let total = n * n.saturating_sub(1) / 2;
    let m = params.m.unwrap_or_else(|| crate::matrix::default_edges(params.d, n));
    match model {
        Model::Gnm => {
            if m > total {
                return param(format!("m = {m} exceeds the {total} vertex pairs"));
            }
            let mut e: Vec<(usize, usize)> =
                index::sample(&mut r, total, m).into_iter().map(|i| pair_from_index(n, i)).collect();
            e.sort_unstable();
            Ok(Graph::from_sorted(n, e))
        }
        Model::Gnp => {
            let p = (params.d / n as f64).min(1.0);
            let e = (0..n)
                .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
                .filter(|_| r.gen::<f64>() < p)
                .collect();
            Ok(Graph::from_sorted(n, e))
        }
        Model::PlantedM | Model::PlantedP => {
            let sigma = sigma.ok_or_else(|| Error::Param("planted models need sigma".into()))?;
            if sigma.n != n {
                return param("sigma and n disagree");
            }
            let pairs = bichromatic_pairs(sigma);
            if m > pairs.len() {
                return param(format!("m = {m} exceeds the {} bichromatic pairs", pairs.len()));
            }
            if model == Model::PlantedM {
                let mut e: Vec<(usize, usize)> =
                    index::sample(&mut r, pairs.len(), m).into_iter().map(|i| pairs[i]).collect();
                e.sort_unstable();
                Ok(Graph::from_sorted(n, e))
            } else {
                let p = m as f64 / pairs.len() as f64;
                let e = pairs.into_iter().filter(|_| r.gen::<f64>() < p).collect();
                Ok(Graph::from_sorted(n, e))
            }
        }
    }
}

/// Class sizes `floor(n/k)` or `ceil(n/k)`, the larger ones on random classes,
/// then a uniformly shuffled assignment.
pub fn random_balanced(n: usize, k: usize, seed: u64) -> Result<Coloring> {
    if k == 0 || n < k {
        return param(format!("need n >= k >= 1, got n = {n}, k = {k}"));
    }
    let mut r = rng::seeded(seed);
    let mut classes: Vec<usize> = (0..k).collect();
    classes.shuffle(&mut r);
    let mut a = Vec::with_capacity(n);
    for (rank, &c) in classes.iter().enumerate() {
        let size = n / k + usize::from(rank < n % k);
        a.extend(std::iter::repeat(c).take(size));
    }
    a.shuffle(&mut r);
    Coloring::new(k, a)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Validation {
    pub proper: bool,
    pub balanced: bool,
}

pub fn validate_coloring(g: &Graph, sigma: &Coloring) -> Result<Validation> {
    if g.n != sigma.n {
        return param("graph and colouring sizes differ");
    }
    Ok(Validation {
        proper: g.edges.iter().all(|&(u, v)| sigma.color(u) != sigma.color(v)),
        balanced: sigma.is_balanced(),
    })
}

fn c2(x: u64) -> u64 {
    x * x.saturating_sub(1) / 2
}

/// Intersection counts `o_ij = |sigma^{-1}(i) ∩ tau^{-1}(j)|`.
pub fn overlap_counts(sigma: &Coloring, tau: &Coloring) -> Result<Vec<Vec<u64>>> {
    if sigma.n != tau.n || sigma.k != tau.k {
        return param("colourings differ in n or k");
    }
    let mut o = vec![vec![0u64; sigma.k]; sigma.k];
    for v in 0..sigma.n {
        o[sigma.color(v)][tau.color(v)] += 1;
    }
    Ok(o)
}

/// Forbidden pairs: monochromatic under `sigma`, or under `sigma` or `tau`.
pub fn forbidden_count(sigma: &Coloring, tau: Option<&Coloring>) -> Result<u64> {
    match tau {
        None => Ok(sigma.class_sizes().iter().map(|&s| c2(s as u64)).sum()),
        Some(t) => Ok(forbidden_from_counts(&overlap_counts(sigma, t)?)),
    }
}

/// `sum C(r_i,2) + sum C(c_j,2) - sum C(o_ij,2)`.
pub fn forbidden_from_counts(o: &[Vec<u64>]) -> u64 {
    let k = o.len();
    let rows: u64 = o.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: u64 = (0..k).map(|j| c2(o.iter().map(|r| r[j]).sum())).sum();
    let both: u64 = o.iter().flatten().map(|&x| c2(x)).sum();
    rows + cols - both
}

/// Overlap as exact counts, convertible to rationals or to an [`OverlapMatrix`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Overlap {
    pub n: usize,
    pub k: usize,
    pub counts: Vec<Vec<u64>>,
}

impl Overlap {
    /// `(k/n) o_ij` as an exact rational.
    pub fn rational(&self, i: usize, j: usize) -> BigRational {
        BigRational::new((self.k as u64 * self.counts[i][j]).into(), (self.n as u64).into())
    }

    pub fn matrix(&self) -> OverlapMatrix {
        let s = self.k as f64 / self.n as f64;
        let e = self.counts.iter().flatten().map(|&c| c as f64 * s).collect();
        OverlapMatrix::from_flat(self.k, e).expect("overlap has mass k")
    }

    pub fn transpose(&self) -> Overlap {
        let k = self.k;
        let counts = (0..k).map(|j| (0..k).map(|i| self.counts[i][j]).collect()).collect();
        Overlap { n: self.n, k, counts }
    }
}

pub fn overlap(sigma: &Coloring, tau: &Coloring) -> Result<Overlap> {
    if sigma.n == 0 {
        return param("overlap needs n >= 1");
    }
    Ok(Overlap { n: sigma.n, k: sigma.k, counts: overlap_counts(sigma, tau)? })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    All,
    Balanced,
}

pub const DEFAULT_BUDGET: u64 = 50_000_000;

/// Backtracking search over colourings with forward checking.
struct Search<'a> {
    g: &'a Graph,
    k: usize,
    balanced: Option<(usize, usize)>,
    budget: u64,
    nodes: u64,
    color: Vec<usize>,
    sizes: Vec<usize>,
}

const UNSET: usize = usize::MAX;

impl<'a> Search<'a> {
    fn new(g: &'a Graph, k: usize, mode: CountMode, budget: u64) -> Self {
        let balanced = (mode == CountMode::Balanced && g.n > 0).then(|| balanced_range(g.n, k));
        Self { g, k, balanced, budget, nodes: 0, color: vec![UNSET; g.n], sizes: vec![0; k] }
    }

    fn tick(&mut self) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::Budget(format!("search exceeded {} nodes", self.budget)));
        }
        Ok(())
    }

    fn allowed(&self, v: usize, c: usize) -> bool {
        self.g.adj[v].iter().all(|&u| self.color[u] != c)
    }

    /// Remaining vertices can still bring every class into the balanced range.
    fn sizes_feasible(&self, remaining: usize) -> bool {
        match self.balanced {
            None => true,
            Some((lo, hi)) => {
                let need: usize = self.sizes.iter().map(|&s| lo.saturating_sub(s)).sum();
                self.sizes.iter().all(|&s| s <= hi) && need <= remaining
            }
        }
    }

    /// Every unassigned neighbour of `v` keeps at least one allowed colour.
    fn forward_ok(&self, v: usize) -> bool {
        self.g.adj[v].iter().filter(|&&u| self.color[u] == UNSET).all(|&u| (0..self.k).any(|c| self.allowed(u, c)))
    }

    /// Visits every complete colouring satisfying the constraints; the callback
    /// returns `false` to stop early.
    fn run(&mut self, v: usize, visit: &mut dyn FnMut(&[usize]) -> bool, extra: &dyn Fn(usize, usize, &[usize]) -> bool) -> Result<bool> {
        self.tick()?;
        if v == self.g.n {
            return Ok(visit(&self.color));
        }
        for c in 0..self.k {
            if !self.allowed(v, c) || !extra(v, c, &self.color) {
                continue;
            }
            self.color[v] = c;
            self.sizes[c] += 1;
            let ok = self.sizes_feasible(self.g.n - v - 1) && self.forward_ok(v);
            let cont = if ok { self.run(v + 1, visit, extra)? } else { true };
            self.sizes[c] -= 1;
            self.color[v] = UNSET;
            if !cont {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn no_extra(_: usize, _: usize, _: &[usize]) -> bool {
    true
}

pub fn count_colorings(g: &Graph, k: usize, mode: CountMode, budget: u64) -> Result<BigUint> {
    if k == 0 {
        return Ok(if g.n == 0 { BigUint::one() } else { BigUint::zero() });
    }
    let mut count = BigUint::zero();
    let mut s = Search::new(g, k, mode, budget);
    s.run(0, &mut |_| {
        count += 1u32;
        true
    }, &no_extra)?;
    Ok(count)
}

pub fn is_colorable(g: &Graph, k: usize, budget: u64) -> Result<bool> {
    if k == 0 {
        return Ok(g.n == 0);
    }
    let mut found = false;
    let mut s = Search::new(g, k, CountMode::All, budget);
    s.run(0, &mut |_| {
        found = true;
        false
    }, &no_extra)?;
    Ok(found)
}

/// All balanced proper colourings.
pub fn balanced_proper_colorings(g: &Graph, k: usize, budget: u64) -> Result<Vec<Coloring>> {
    let mut out = Vec::new();
    let mut s = Search::new(g, k, CountMode::Balanced, budget);
    s.run(0, &mut |c| {
        out.push(Coloring { n: c.len(), k, assignment: c.to_vec() });
        true
    }, &no_extra)?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterSet {
    pub center: Coloring,
    pub members: Vec<Coloring>,
}

impl ClusterSet {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Class `i` is retained by `tau` when `(k/n) |V_i ∩ tau^{-1}(i)| > overlap_high`.
pub fn retains_classes(sigma: &Coloring, tau: &Coloring, profile: &ConstantsProfile) -> bool {
    let o = overlap_counts(sigma, tau).expect("same shape");
    let (n, k) = (sigma.n as f64, sigma.k as f64);
    (0..sigma.k).all(|i| k * o[i][i] as f64 / n > profile.overlap_high)
}

/// Balanced proper colourings whose diagonal overlaps with `sigma` all
/// exceed `overlap_high`.
pub fn cluster(g: &Graph, sigma: &Coloring, profile: &ConstantsProfile, budget: u64) -> Result<ClusterSet> {
    let v = validate_coloring(g, sigma)?;
    if !v.proper || !v.balanced {
        return param("the cluster is defined here only for a proper balanced centre");
    }
    let (n, k) = (sigma.n, sigma.k);
    // Class i needs more than high * n / k retained vertices.
    let need: Vec<usize> = (0..k)
        .map(|_| ((0..=n).find(|&c| k as f64 * c as f64 / n as f64 > profile.overlap_high)).unwrap_or(n + 1))
        .collect();
    // suffix[v][i]: vertices of class i among v..n.
    let mut suffix = vec![vec![0usize; k]; n + 1];
    for v in (0..n).rev() {
        suffix[v] = suffix[v + 1].clone();
        suffix[v][sigma.color(v)] += 1;
    }
    let sig = sigma.assignment.clone();
    let extra = move |v: usize, c: usize, col: &[usize]| -> bool {
        // Retained count so far in each class plus what could still be retained.
        let mut kept = vec![0usize; k];
        for u in 0..v {
            if col[u] == sig[u] {
                kept[sig[u]] += 1;
            }
        }
        if c == sig[v] {
            kept[c] += 1;
        }
        (0..k).all(|i| kept[i] + suffix[v + 1][i] >= need[i])
    };
    let mut members = Vec::new();
    let mut s = Search::new(g, k, CountMode::Balanced, budget);
    s.run(0, &mut |c| {
        members.push(Coloring { n, k, assignment: c.to_vec() });
        true
    }, &extra)?;
    Ok(ClusterSet { center: sigma.clone(), members })
}

/// Every balanced proper `tau` avoids the band `(overlap_high, 1 - kappa)`.
pub fn coloring_separable(g: &Graph, sigma: &Coloring, profile: &ConstantsProfile, budget: u64) -> Result<bool> {
    if g.n != sigma.n {
        return param("graph and colouring sizes differ");
    }
    let k = sigma.k;
    let (nf, kf) = (sigma.n as f64, k as f64);
    let top = 1.0 - profile.kappa;
    let mut sep = true;
    let mut s = Search::new(g, k, CountMode::Balanced, budget);
    s.run(0, &mut |c| {
        let tau = Coloring { n: c.len(), k, assignment: c.to_vec() };
        let o = overlap_counts(sigma, &tau).expect("same shape");
        let bad = o.iter().flatten().any(|&x| {
            let r = kf * x as f64 / nf;
            r > profile.overlap_high && r < top
        });
        if bad {
            sep = false;
        }
        !bad
    }, &no_extra)?;
    Ok(sep)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoodReport {
    pub t1: bool,
    pub t2: bool,
    pub t3: bool,
    pub cluster_size: usize,
    pub good: bool,
}

pub fn is_good(g: &Graph, sigma: &Coloring, ez_reference: &BigRational, profile: &ConstantsProfile, budget: u64) -> Result<GoodReport> {
    let v = validate_coloring(g, sigma)?;
    let t1 = v.balanced;
    let t2 = coloring_separable(g, sigma, profile, budget)?;
    let size = if v.proper && v.balanced { cluster(g, sigma, profile, budget)?.size() } else { 0 };
    let t3 = BigRational::from_integer(size.into()) <= *ez_reference;
    Ok(GoodReport { t1, t2, t3, cluster_size: size, good: t1 && t2 && t3 })
}
