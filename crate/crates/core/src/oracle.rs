//! Monte-Carlo ground truth: sample depth-truncated edge-weighted trees and solve
//! each game exactly by round-bounded backward induction.
//!
//! A root verdict after `n` rounds of induction says whether the mover wins, loses
//! or is undecided within fewer than `n + 1` moves; averaged over trees these give
//! unbiased estimates of the `n`-th analytic iterates.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixpoint::{EdgeWeightLaw, GameSpec, ProbMatrix};
use crate::offspring::{OffspringDistribution, OffspringSampler};
use rand::distr::Distribution;

/// Default node cap per sampled tree.
pub const DEFAULT_NODE_CAP: usize = 10_000_000;
/// Attempts per sample before giving up on trees that keep exceeding the cap.
pub const MAX_RESAMPLES: usize = 1_000;
/// Fixed number of work chunks; keeps estimates independent of the thread count.
const CHUNKS: u64 = 256;

/// Finite rooted tree in breadth-first order with weights on parent edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedTree {
    first_child: Vec<usize>,
    child_count: Vec<usize>,
    weight: Vec<i8>,
    generation: Vec<u32>,
    depth: u32,
}

impl WeightedTree {
    /// Builds a tree from parent links; `parents[0]` must be `None` and every
    /// other node must come after its parent. Nodes are renumbered breadth-first.
    /// `depth` is the number of retained generations below the root; nodes at that
    /// generation have unknown children.
    pub fn from_parents(parents: &[(Option<usize>, i8)], depth: u32) -> Result<Self> {
        if parents.is_empty() || parents[0].0.is_some() {
            return Err(Error::Precondition("node 0 must be the only root".into()));
        }
        let n = parents.len();
        let mut kids: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (v, &(p, w)) in parents.iter().enumerate().skip(1) {
            let p = p.ok_or_else(|| Error::Precondition(format!("node {v} has no parent")))?;
            if p >= v {
                return Err(Error::Precondition(format!(
                    "node {v} precedes its parent {p}"
                )));
            }
            if !(-1..=1).contains(&w) {
                return Err(Error::Precondition(format!(
                    "weight {w} is not in {{-1, 0, 1}}"
                )));
            }
            kids[p].push(v);
        }
        let mut t = Self::empty(depth);
        t.push(0, 0);
        let mut order = vec![0usize];
        let mut head = 0;
        while head < order.len() {
            let old = order[head];
            let g = t.generation[head];
            t.first_child[head] = t.weight.len();
            t.child_count[head] = kids[old].len();
            for &c in &kids[old] {
                if g + 1 > depth {
                    return Err(Error::Precondition("tree is deeper than `depth`".into()));
                }
                t.push(parents[c].1, g + 1);
                order.push(c);
            }
            head += 1;
        }
        Ok(t)
    }

    fn empty(depth: u32) -> Self {
        Self {
            first_child: Vec::new(),
            child_count: Vec::new(),
            weight: Vec::new(),
            generation: Vec::new(),
            depth,
        }
    }

    fn push(&mut self, w: i8, g: u32) {
        self.first_child.push(0);
        self.child_count.push(0);
        self.weight.push(w);
        self.generation.push(g);
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.weight.len()
    }

    /// True for a tree without nodes (never produced by the constructors).
    pub fn is_empty(&self) -> bool {
        self.weight.is_empty()
    }

    /// Retained generations below the root.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Children of `u` as an index range.
    pub fn children(&self, u: usize) -> Range<usize> {
        self.first_child[u]..self.first_child[u] + self.child_count[u]
    }

    /// Weight of the edge from the parent of `v` to `v` (zero for the root).
    pub fn weight(&self, v: usize) -> i8 {
        self.weight[v]
    }

    /// Generation of `u`, the root being generation 0.
    pub fn generation(&self, u: usize) -> u32 {
        self.generation[u]
    }
}

fn sample_weight<R: Rng + ?Sized>(law: &EdgeWeightLaw, rng: &mut R) -> i8 {
    let u: f64 = rng.random();
    if u < law.p_minus1 {
        -1
    } else if u < law.p_minus1 + law.p_0 {
        0
    } else {
        1
    }
}

fn sample_with<R: Rng + ?Sized>(
    sampler: &OffspringSampler,
    law: &EdgeWeightLaw,
    depth: u32,
    node_cap: usize,
    rng: &mut R,
) -> Result<WeightedTree> {
    let mut t = WeightedTree::empty(depth);
    t.push(0, 0);
    let mut head = 0;
    while head < t.len() {
        let g = t.generation[head];
        t.first_child[head] = t.len();
        if g < depth {
            let k = sampler.sample(rng) as usize;
            if t.len() + k > node_cap {
                return Err(Error::NodeCapExceeded { cap: node_cap });
            }
            t.child_count[head] = k;
            for _ in 0..k {
                let w = sample_weight(law, rng);
                t.push(w, g + 1);
            }
        }
        head += 1;
    }
    Ok(t)
}

/// Samples a tree breadth-first, keeping generations `0..=depth`.
pub fn sample_tree<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    law: &EdgeWeightLaw,
    depth: u32,
    node_cap: usize,
    rng: &mut R,
) -> Result<WeightedTree> {
    dist.validate()?;
    law.validate()?;
    sample_with(&dist.sampler(), law, depth, node_cap, rng)
}

/// Verdict for the player about to move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GameVerdict {
    Win,
    Lose,
    Undecided,
}

const WIN: u8 = 1;
const LOSE: u8 = 2;

/// Verdicts for every node and interior capital pair after `horizon` rounds.
///
/// Only nodes at generation `depth - horizon` or above carry a meaningful verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameTable {
    kappa: u32,
    horizon: u32,
    flags: Vec<u8>,
}

impl GameTable {
    /// Round horizon of the table.
    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    /// Verdict at node `u` for mover capital `i` and opponent capital `j`, both in `1..kappa`.
    pub fn verdict(&self, u: usize, i: u32, j: u32) -> GameVerdict {
        let m = (self.kappa - 1) as usize;
        let f = self.flags[u * m * m + (i as usize - 1) * m + (j as usize - 1)];
        if f & WIN != 0 {
            GameVerdict::Win
        } else if f & LOSE != 0 {
            GameVerdict::Lose
        } else {
            GameVerdict::Undecided
        }
    }
}

/// Runs `rounds` steps of induction and calls `visit(r, flags)` after each round `r`
/// (round 0 included) with the root's flags.
fn induct(
    tree: &WeightedTree,
    kappa: u32,
    rounds: u32,
    mut visit: impl FnMut(u32, &[u8]),
) -> Vec<u8> {
    let k = kappa as i64;
    let m = (kappa - 1) as usize;
    let mm = m * m;
    let n = tree.len();
    let mut cur = vec![0u8; n * mm];
    let mut next = vec![0u8; n * mm];
    visit(0, &cur[..mm]);
    for r in 0..rounds {
        // Nodes with generation + r + 1 <= depth have all the information they need.
        let limit = tree.depth.checked_sub(r + 1);
        for u in 0..n {
            let out = &mut next[u * mm..(u + 1) * mm];
            let valid = limit.is_some_and(|lim| tree.generation[u] <= lim);
            if !valid {
                out.fill(0);
                continue;
            }
            let kids = tree.children(u);
            for i in 1..kappa as i64 {
                for j in 1..kappa as i64 {
                    let mut all_lose = true;
                    let mut any_win = false;
                    for v in kids.clone() {
                        let ni = i + i64::from(tree.weight[v]);
                        if ni == 0 {
                            continue;
                        }
                        if ni == k {
                            all_lose = false;
                            any_win = true;
                            break;
                        }
                        let f = cur[v * mm + (j as usize - 1) * m + (ni as usize - 1)];
                        if f & WIN == 0 {
                            all_lose = false;
                        }
                        if f & LOSE != 0 {
                            any_win = true;
                            break;
                        }
                    }
                    let idx = (i as usize - 1) * m + (j as usize - 1);
                    out[idx] = if any_win {
                        WIN
                    } else if all_lose {
                        LOSE
                    } else {
                        0
                    };
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        visit(r + 1, &cur[..mm]);
    }
    cur
}

/// Solves every game on `tree` up to `horizon` rounds.
pub fn solve_game_exact(tree: &WeightedTree, kappa: u32, horizon: u32) -> Result<GameTable> {
    if kappa < 2 {
        return Err(Error::Precondition("kappa must be at least 2".into()));
    }
    if horizon > tree.depth {
        return Err(Error::Precondition(format!(
            "horizon {horizon} exceeds tree depth {}",
            tree.depth
        )));
    }
    let flags = induct(tree, kappa, horizon, |_, _| {});
    Ok(GameTable {
        kappa,
        horizon,
        flags,
    })
}

/// Monte-Carlo estimates at one horizon, indexed like the analytic matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbEstimates {
    pub horizon: u32,
    pub samples: u64,
    /// Trees discarded for exceeding the node cap.
    pub resampled: u64,
    #[serde(rename = "L")]
    pub l: ProbMatrix,
    pub l_stderr: ProbMatrix,
    #[serde(rename = "W")]
    pub w: ProbMatrix,
    pub w_stderr: ProbMatrix,
}

/// Sampling knobs of the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub samples: u64,
    pub seed: u64,
    pub node_cap: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            samples: 100_000,
            seed: 0,
            node_cap: DEFAULT_NODE_CAP,
        }
    }
}

struct Counts {
    win: Vec<u64>,
    lose: Vec<u64>,
    resampled: u64,
}

/// Estimates `l^(n)` and `w^(n)` for every `n` in `0..=max_horizon` from a single
/// set of trees of depth `max_horizon`.
pub fn estimate_probs_all(
    spec: &GameSpec,
    max_horizon: u32,
    opts: &OracleOptions,
) -> Result<Vec<ProbEstimates>> {
    spec.validate()?;
    if opts.samples == 0 {
        return Err(Error::Precondition("samples must be at least 1".into()));
    }
    let m = spec.dim();
    let cells = (max_horizon as usize + 1) * m * m;
    let sampler = spec.dist.sampler();
    let per = opts.samples / CHUNKS;
    let extra = opts.samples % CHUNKS;
    let chunks: Vec<Result<Counts>> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(c);
            let count = per + u64::from(c < extra);
            let mut acc = Counts {
                win: vec![0; cells],
                lose: vec![0; cells],
                resampled: 0,
            };
            for _ in 0..count {
                let mut attempts = 0;
                let tree = loop {
                    match sample_with(&sampler, &spec.law, max_horizon, opts.node_cap, &mut rng) {
                        Ok(t) => break t,
                        Err(e @ Error::NodeCapExceeded { .. }) => {
                            attempts += 1;
                            acc.resampled += 1;
                            if attempts >= MAX_RESAMPLES {
                                return Err(e);
                            }
                        }
                        Err(e) => return Err(e),
                    }
                };
                induct(&tree, spec.kappa, max_horizon, |r, root| {
                    let base = r as usize * m * m;
                    for (idx, f) in root.iter().enumerate() {
                        if f & WIN != 0 {
                            acc.win[base + idx] += 1;
                        }
                        if f & LOSE != 0 {
                            acc.lose[base + idx] += 1;
                        }
                    }
                });
            }
            Ok(acc)
        })
        .collect();
    let mut total = Counts {
        win: vec![0; cells],
        lose: vec![0; cells],
        resampled: 0,
    };
    for c in chunks {
        let c = c?;
        for (a, b) in total.win.iter_mut().zip(&c.win) {
            *a += b;
        }
        for (a, b) in total.lose.iter_mut().zip(&c.lose) {
            *a += b;
        }
        total.resampled += c.resampled;
    }
    let ns = opts.samples as f64;
    let mat = |counts: &[u64], base: usize, stderr: bool| -> ProbMatrix {
        let mut out = ProbMatrix::zeros(m);
        for i in 0..m {
            for j in 0..m {
                let p = counts[base + i * m + j] as f64 / ns;
                out.set(
                    i,
                    j,
                    if stderr {
                        (p * (1.0 - p) / ns).sqrt()
                    } else {
                        p
                    },
                );
            }
        }
        out
    };
    Ok((0..=max_horizon)
        .map(|r| {
            let base = r as usize * m * m;
            ProbEstimates {
                horizon: r,
                samples: opts.samples,
                resampled: total.resampled,
                l: mat(&total.lose, base, false),
                l_stderr: mat(&total.lose, base, true),
                w: mat(&total.win, base, false),
                w_stderr: mat(&total.win, base, true),
            }
        })
        .collect())
}

/// Estimates `l^(horizon)` and `w^(horizon)` with binomial standard errors.
pub fn estimate_probs(
    spec: &GameSpec,
    horizon: u32,
    opts: &OracleOptions,
) -> Result<ProbEstimates> {
    let mut all = estimate_probs_all(spec, horizon, opts)?;
    Ok(all.pop().expect("at least one horizon"))
}
