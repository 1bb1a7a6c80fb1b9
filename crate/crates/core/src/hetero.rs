//! Heterogeneity correction: pairwise p-value similarities between the case
//! and all controls, average-linkage clustering, and the "case joins last"
//! approval rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adfamily::{self, AdError};
use crate::flr::{ControlPool, FittedSample, FlrConfig, FlrError};
use crate::seed::{derive_seed, tags};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeteroError {
    #[error("similarity matrix needs at least two subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("similarity matrix is not square at row {0}")]
    NotSquare(usize),
    #[error("similarity ({i}, {j}) = {value} is not in [0, 1]")]
    OutOfRange { i: usize, j: usize, value: f64 },
    #[error("similarity matrix is not symmetric at ({0}, {1})")]
    Asymmetric(usize, usize),
    #[error("diagonal entry {0} is not 1")]
    Diagonal(usize),
    #[error("leaf {leaf} is not in 1..={n}")]
    UnknownLeaf { leaf: usize, n: usize },
    #[error("cut height {0} is not in [0, 1]")]
    InvalidHeight(f64),
    #[error("newick: {0}")]
    Newick(String),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Flr(#[from] FlrError),
}

pub type Result<T> = std::result::Result<T, HeteroError>;

/// Symmetric matrix of pairwise p-values in `[0, 1]` with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(HeteroError::TooFewSubjects(n));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != n {
                return Err(HeteroError::NotSquare(i));
            }
            if row[i] != 1.0 {
                return Err(HeteroError::Diagonal(i));
            }
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(HeteroError::OutOfRange { i, j, value: v });
                }
                if (v - values[j][i]).abs() > 1e-12 {
                    return Err(HeteroError::Asymmetric(i, j));
                }
            }
        }
        Ok(Self { values })
    }

    /// Case in front of an existing control block: row/column 0 is the case.
    pub fn with_case(case_row: &[f64], controls: &[Vec<f64>]) -> Result<Self> {
        let k = controls.len();
        if case_row.len() != k {
            return Err(HeteroError::NotSquare(0));
        }
        let mut values = vec![vec![1.0; k + 1]; k + 1];
        for i in 0..k {
            values[0][i + 1] = case_row[i];
            values[i + 1][0] = case_row[i];
            values[i + 1][1..].copy_from_slice(&controls[i]);
        }
        Self::new(values)
    }

    pub fn size(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }
}

/// Two-sample test used for the similarity entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PairTest {
    /// Anderson-Darling permutation p-value.
    Ad { n_perm: usize },
    /// `min(1, exp(l))` from the FLR pair statistic.
    Flr(FlrConfig),
}

/// Pairwise similarities between all subjects, each unordered pair tested once.
pub fn similarity_matrix(subjects: &[Vec<f64>], test: &PairTest, seed: u64) -> Result<SimilarityMatrix> {
    if subjects.len() < 2 {
        return Err(HeteroError::TooFewSubjects(subjects.len()));
    }
    let values = match test {
        PairTest::Ad { n_perm } => {
            adfamily::pairwise_pvalues(subjects, *n_perm, derive_seed(seed, &[tags::SIMILARITY]))?
        }
        PairTest::Flr(cfg) => ControlPool::fit(subjects, cfg)?.pairwise_pvalues(cfg)?,
    };
    SimilarityMatrix::new(values)
}

/// Similarities of one case against already fitted FLR controls.
pub fn flr_case_row(case: &[f64], pool: &ControlPool, config: &FlrConfig) -> Result<Vec<f64>> {
    let case = FittedSample::fit(case.to_vec(), config)?;
    Ok(pool
        .controls()
        .par_iter()
        .map(|c| crate::flr::pair_statistic(&case, c, config).map(|s| s.pair_pvalue()))
        .collect::<std::result::Result<Vec<_>, _>>()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Node ids: leaves are `1..=n`, merge `i` (0-based) creates node `n + 1 + i`.
    pub left: usize,
    pub right: usize,
    pub similarity: f64,
    /// `1 - similarity`
    pub height: f64,
    /// Leaves under the new node.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
}

const TIE_TOL: f64 = 1e-12;

/// Agglomerative clustering that repeatedly joins the two clusters with the
/// largest average cross-pair similarity. Ties go to the lexicographically
/// smallest pair of node ids.
pub fn average_linkage(sim: &SimilarityMatrix) -> Dendrogram {
    let n = sim.size();
    // active clusters: (node id, size, average similarity to every other slot)
    let mut ids: Vec<usize> = (1..=n).collect();
    let mut sizes: Vec<usize> = vec![1; n];
    let mut avg: Vec<Vec<f64>> = sim.values().to_vec();
    let mut merges = Vec::with_capacity(n - 1);
    let mut ceiling = 1.0f64;
    for step in 0..n - 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..ids.len() {
            for b in a + 1..ids.len() {
                let s = avg[a][b];
                let key = |x: usize, y: usize| (ids[x].min(ids[y]), ids[x].max(ids[y]));
                let better = match best {
                    None => true,
                    Some((ba, bb, bs)) => s > bs + TIE_TOL || ((s - bs).abs() <= TIE_TOL && key(a, b) < key(ba, bb)),
                };
                if better {
                    best = Some((a, b, s));
                }
            }
        }
        let (a, b, s) = best.expect("two or more active clusters");
        // weighted averages can overshoot their inputs by one ulp
        let s = s.min(ceiling);
        ceiling = s;
        let (left, right) = (ids[a].min(ids[b]), ids[a].max(ids[b]));
        let (na, nb) = (sizes[a] as f64, sizes[b] as f64);
        let merged: Vec<f64> = (0..ids.len()).map(|c| (na * avg[a][c] + nb * avg[b][c]) / (na + nb)).collect();
        let size = sizes[a] + sizes[b];
        merges.push(Merge { left, right, similarity: s, height: 1.0 - s, size });
        // slot a becomes the new cluster, slot b is removed
        for c in 0..ids.len() {
            avg[a][c] = merged[c];
            avg[c][a] = merged[c];
        }
        avg[a][a] = 1.0;
        ids[a] = n + 1 + step;
        sizes[a] = size;
        avg.remove(b);
        for row in &mut avg {
            row.remove(b);
        }
        ids.remove(b);
        sizes.remove(b);
    }
    Dendrogram { n_leaves: n, merges }
}

impl Dendrogram {
    fn check_leaf(&self, leaf: usize) -> Result<()> {
        if (1..=self.n_leaves).contains(&leaf) {
            Ok(())
        } else {
            Err(HeteroError::UnknownLeaf { leaf, n: self.n_leaves })
        }
    }

    /// Leaves under node `id`, ascending.
    pub fn leaves_of(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(node) = stack.pop() {
            if node <= self.n_leaves {
                out.push(node);
            } else {
                let m = &self.merges[node - self.n_leaves - 1];
                stack.push(m.left);
                stack.push(m.right);
            }
        }
        out.sort_unstable();
        out
    }

    /// Height of node `id`; leaves sit at 0.
    pub fn node_height(&self, id: usize) -> f64 {
        if id <= self.n_leaves {
            0.0
        } else {
            self.merges[id - self.n_leaves - 1].height
        }
    }
}

/// True iff `case_leaf` takes part only in the final merge.
pub fn hc_approved(dendro: &Dendrogram, case_leaf: usize) -> Result<bool> {
    dendro.check_leaf(case_leaf)?;
    let last = dendro.merges.last().expect("at least one merge");
    Ok(last.left == case_leaf || last.right == case_leaf)
}

/// Clusters left after undoing every merge higher than `height`, each sorted
/// and ordered by smallest leaf.
pub fn cut(dendro: &Dendrogram, height: f64) -> Result<Vec<Vec<usize>>> {
    if !(0.0..=1.0).contains(&height) {
        return Err(HeteroError::InvalidHeight(height));
    }
    let n = dendro.n_leaves;
    let mut parent: Vec<usize> = (0..=n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for m in &dendro.merges {
        if m.height > height {
            continue;
        }
        let a = dendro.leaves_of(m.left)[0];
        let b = dendro.leaves_of(m.right)[0];
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra.max(rb)] = ra.min(rb);
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for leaf in 1..=n {
        let r = find(&mut parent, leaf);
        groups.entry(r).or_default().push(leaf);
    }
    Ok(groups.into_values().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HcRule {
    /// Approve when the case joins the tree in the final merge.
    #[default]
    LastMerge,
    /// Approve when no case-control similarity exceeds the mean similarity
    /// among controls.
    AverageSimilarity,
}

/// Approval under `rule` with the case at row 0 of `sim`.
pub fn approve(sim: &SimilarityMatrix, rule: HcRule) -> (bool, Dendrogram) {
    let dendro = average_linkage(sim);
    let ok = match rule {
        HcRule::LastMerge => hc_approved(&dendro, 1).expect("leaf 1 exists"),
        HcRule::AverageSimilarity => {
            let k = sim.size() - 1;
            let case_max = (1..=k).map(|j| sim.get(0, j)).fold(0.0, f64::max);
            if k < 2 {
                true
            } else {
                let mut sum = 0.0;
                for i in 1..=k {
                    for j in i + 1..=k {
                        sum += sim.get(i, j);
                    }
                }
                case_max <= sum / (k * (k - 1) / 2) as f64
            }
        }
    };
    (ok, dendro)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HcConfig {
    pub test: PairTest,
    pub rule: HcRule,
    /// BH-adjusted level a region must reach before it is checked.
    pub alpha: f64,
}

impl Default for HcConfig {
    fn default() -> Self {
        Self { test: PairTest::Ad { n_perm: 999 }, rule: HcRule::LastMerge, alpha: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HcVerdict {
    pub region: usize,
    pub approved: bool,
    pub dendrogram: Dendrogram,
}

/// Check every region with adjusted p-value at most `alpha`; `subjects(region)`
/// returns the case sample followed by the controls for that region.
pub fn apply_hc_filter<F>(
    region_results: &[(usize, f64)],
    subjects: F,
    config: &HcConfig,
    seed: u64,
) -> Result<Vec<HcVerdict>>
where
    F: Fn(usize) -> Vec<Vec<f64>>,
{
    region_results
        .iter()
        .filter(|(_, p)| *p <= config.alpha)
        .map(|&(region, _)| {
            let sim =
                similarity_matrix(&subjects(region), &config.test, derive_seed(seed, &[tags::REGION, region as u64]))?;
            let (approved, dendrogram) = approve(&sim, config.rule);
            Ok(HcVerdict { region, approved, dendrogram })
        })
        .collect()
}

fn fmt_len(x: f64) -> String {
    format!("{}", x.max(0.0))
}

/// Newick text with leaf labels `1..=n` and branch lengths equal to the
/// difference between parent and child heights.
pub fn export_newick(dendro: &Dendrogram) -> String {
    fn node(d: &Dendrogram, id: usize, parent_height: f64, out: &mut String) {
        if id > d.n_leaves {
            let m = &d.merges[id - d.n_leaves - 1];
            out.push('(');
            node(d, m.left, m.height, out);
            out.push(',');
            node(d, m.right, m.height, out);
            out.push(')');
        } else {
            out.push_str(&id.to_string());
        }
        if parent_height.is_finite() {
            out.push(':');
            out.push_str(&fmt_len(parent_height - d.node_height(id)));
        }
    }
    let mut out = String::new();
    let root = dendro.n_leaves + dendro.merges.len();
    node(dendro, root, f64::NAN, &mut out);
    out.push(';');
    out
}

enum Tree {
    Leaf(usize, f64),
    Inner(Box<Tree>, Box<Tree>, f64),
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err<T>(&self, msg: &str) -> Result<T> {
        Err(HeteroError::Newick(format!("{msg} at byte {}", self.pos)))
    }

    // whitespace and [bracketed comments]
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() {
            match self.s[self.pos] {
                b'[' => {
                    while self.pos < self.s.len() && self.s[self.pos] != b']' {
                        self.pos += 1;
                    }
                    self.pos += 1;
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(&format!("expected '{}'", c as char))
        }
    }

    fn token(&mut self) -> &str {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len()
            && !b"(),:;[".contains(&self.s[self.pos])
            && !self.s[self.pos].is_ascii_whitespace()
        {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("")
    }

    fn length(&mut self) -> Result<f64> {
        if self.peek() == Some(b':') {
            self.pos += 1;
            let t = self.token().to_string();
            t.parse().or_else(|_| self.err(&format!("bad branch length '{t}'")))
        } else {
            Ok(0.0)
        }
    }

    fn node(&mut self) -> Result<Tree> {
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let left = self.node()?;
            self.expect(b',')?;
            let right = self.node()?;
            if self.peek() == Some(b',') {
                return self.err("only binary trees are supported");
            }
            self.expect(b')')?;
            let _label = self.token();
            let len = self.length()?;
            Ok(Tree::Inner(Box::new(left), Box::new(right), len))
        } else {
            let t = self.token().to_string();
            let leaf: usize = match t.parse() {
                Ok(v) => v,
                Err(_) => return self.err(&format!("bad leaf label '{t}'")),
            };
            let len = self.length()?;
            Ok(Tree::Leaf(leaf, len))
        }
    }
}

/// Parse text written by [`export_newick`]. Merges are renumbered in order
/// of increasing height, ties by smallest leaf under the node.
pub fn parse_newick(text: &str) -> Result<Dendrogram> {
    let mut p = Parser { s: text.as_bytes(), pos: 0 };
    let tree = p.node()?;
    p.expect(b';')?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }

    // (height, min leaf, left child, right child, leaf set) per inner node
    struct Inner {
        height: f64,
        min_leaf: usize,
        left: Child,
        right: Child,
        size: usize,
    }
    #[derive(Clone, Copy)]
    enum Child {
        Leaf(usize),
        Inner(usize),
    }
    fn walk(t: &Tree, inner: &mut Vec<Inner>, leaves: &mut Vec<usize>) -> (Child, f64, f64, usize, usize) {
        // returns (child ref, height, branch length, min leaf, size)
        match t {
            Tree::Leaf(l, len) => {
                leaves.push(*l);
                (Child::Leaf(*l), 0.0, *len, *l, 1)
            }
            Tree::Inner(a, b, len) => {
                let (ca, ha, la, ma, sa) = walk(a, inner, leaves);
                let (cb, hb, lb, mb, sb) = walk(b, inner, leaves);
                let height = 0.5 * ((ha + la) + (hb + lb));
                inner.push(Inner { height, min_leaf: ma.min(mb), left: ca, right: cb, size: sa + sb });
                (Child::Inner(inner.len() - 1), height, *len, ma.min(mb), sa + sb)
            }
        }
    }
    let mut inner = Vec::new();
    let mut leaves = Vec::new();
    walk(&tree, &mut inner, &mut leaves);
    let n = leaves.len();
    let mut sorted = leaves.clone();
    sorted.sort_unstable();
    if sorted.iter().copied().ne(1..=n) {
        return Err(HeteroError::Newick(format!("leaves must be exactly 1..={n}")));
    }
    let mut order: Vec<usize> = (0..inner.len()).collect();
    order.sort_by(|&a, &b| inner[a].height.total_cmp(&inner[b].height).then(inner[a].min_leaf.cmp(&inner[b].min_leaf)));
    let mut new_id = vec![0; inner.len()];
    for (rank, &i) in order.iter().enumerate() {
        new_id[i] = n + 1 + rank;
    }
    let resolve = |c: Child| match c {
        Child::Leaf(l) => l,
        Child::Inner(i) => new_id[i],
    };
    let merges = order
        .iter()
        .map(|&i| {
            let (a, b) = (resolve(inner[i].left), resolve(inner[i].right));
            let h = inner[i].height;
            Merge { left: a.min(b), right: a.max(b), similarity: 1.0 - h, height: h, size: inner[i].size }
        })
        .collect();
    Ok(Dendrogram { n_leaves: n, merges })
}
