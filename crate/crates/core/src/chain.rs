//! A splitting Gibbs measure viewed as a tree-indexed Markov chain: a root
//! law on Ψ and the kernels `P`, `Q`, `R` applied cyclically going outward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundaryLaw, Level, ModelParams, Spin};
use crate::spectral::{build_transitions, TransitionSet};

/// Identifier of the generator written into every sample output.
pub const RNG_ALGORITHM: &str = "chacha20";
/// Largest tree, in vertices, the sampler will allocate.
pub const MAX_VERTICES: u128 = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootLaw {
    pub p_minus: f64,
    pub p_plus: f64,
}

impl RootLaw {
    pub fn as_array(&self) -> [f64; 2] {
        [self.p_minus, self.p_plus]
    }
}

/// `(1, X) / (1 + X)`: the one-vertex marginal of the finite-volume measure.
pub fn root_law(law: &BoundaryLaw) -> Result<RootLaw> {
    law.validate()?;
    let x = law.x;
    let (p_minus, p_plus) = (1.0 / (1.0 + x), 1.0 / (1.0 + 1.0 / x));
    Ok(RootLaw { p_minus, p_plus })
}

/// Root law plus kernels for one boundary law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeChain {
    pub k: u32,
    pub root: RootLaw,
    pub transitions: TransitionSet,
}

impl TreeChain {
    pub fn new(law: &BoundaryLaw, params: &ModelParams) -> Result<Self> {
        Ok(TreeChain {
            k: params.k(),
            root: root_law(law)?,
            transitions: build_transitions(law, params)?,
        })
    }

    /// Row of the kernel leaving a vertex of `level` holding its `i`-th spin.
    pub fn row(&self, level: Level, i: usize) -> &[f64] {
        match level {
            Level::Psi => &self.transitions.p[i],
            Level::Phi => &self.transitions.q[i],
            Level::Upsilon => &self.transitions.r[i],
        }
    }

    /// Push a distribution on `level` one generation outward.
    pub fn step(&self, level: Level, dist: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; level.next().size()];
        for (i, &w) in dist.iter().enumerate() {
            for (o, &p) in out.iter_mut().zip(self.row(level, i)) {
                *o += w * p;
            }
        }
        out
    }

    /// One-vertex marginals at distances `0..=depth`.
    pub fn exact_marginals(&self, depth: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(depth + 1);
        out.push(self.root.as_array().to_vec());
        for d in 0..depth {
            let next = self.step(Level::of_distance(d), &out[d]);
            out.push(next);
        }
        out
    }

    /// `max |ν·H - ν|`.
    pub fn stationarity_defect(&self) -> f64 {
        let nu = self.root.as_array();
        let h = &self.transitions.h;
        (0..2)
            .map(|j| ((nu[0] * h[0][j] + nu[1] * h[1][j]) - nu[j]).abs())
            .fold(0.0, f64::max)
    }

    pub fn sample(&self, depth: usize, seed: u64) -> Result<SampledTree> {
        self.sample_stream(depth, seed, 0)
    }

    /// Sample one tree from the substream `stream` of `seed`.
    pub fn sample_stream(&self, depth: usize, seed: u64, stream: u64) -> Result<SampledTree> {
        let layout = TreeLayout::new(self.k, depth)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let idx = self.draw_indices(&layout, &mut rng);
        let spins = idx
            .iter()
            .enumerate()
            .map(|(v, &i)| Level::of_distance(layout.distance(v)).alphabet()[i as usize].doubled())
            .collect();
        Ok(SampledTree {
            k: self.k,
            depth,
            seed,
            stream,
            rng: RNG_ALGORITHM.to_string(),
            spins,
        })
    }

    /// Alphabet indices of every vertex in breadth-first order.
    fn draw_indices(&self, layout: &TreeLayout, rng: &mut ChaCha20Rng) -> Vec<u8> {
        let mut idx = vec![0u8; layout.len()];
        idx[0] = draw(&self.root.as_array(), rng.random::<f64>());
        let k = self.k as usize;
        for d in 0..layout.depth {
            let level = Level::of_distance(d);
            for v in layout.level_range(d) {
                let row = self.row(level, idx[v] as usize);
                for child in &mut idx[v * k + 1..=v * k + k] {
                    *child = draw(row, rng.random::<f64>());
                }
            }
        }
        idx
    }
}

/// Inverse-CDF draw from a probability row.
fn draw(row: &[f64], u: f64) -> u8 {
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u8;
        }
    }
    (row.len() - 1) as u8
}

/// Breadth-first layout of a complete `k`-ary tree: the children of vertex
/// `v` are `v·k + 1 ..= v·k + k`.
#[derive(Clone, Debug)]
pub struct TreeLayout {
    k: usize,
    depth: usize,
    offsets: Vec<usize>,
}

impl TreeLayout {
    pub fn new(k: u32, depth: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("k must be at least 1".into()));
        }
        let mut offsets = vec![0usize];
        let mut width: u128 = 1;
        let mut total: u128 = 0;
        for _ in 0..=depth {
            total += width;
            if total > MAX_VERTICES {
                return Err(Error::Capacity {
                    count: vertex_count(k, depth),
                    cap: MAX_VERTICES,
                });
            }
            offsets.push(total as usize);
            width *= u128::from(k);
        }
        Ok(TreeLayout {
            k: k as usize,
            depth,
            offsets,
        })
    }

    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn level_range(&self, d: usize) -> std::ops::Range<usize> {
        self.offsets[d]..self.offsets[d + 1]
    }

    pub fn distance(&self, v: usize) -> usize {
        self.offsets.partition_point(|&o| o <= v) - 1
    }
}

/// Vertices in a ball of radius `depth`, saturating rather than overflowing.
pub fn vertex_count(k: u32, depth: usize) -> u128 {
    let mut total: u128 = 0;
    let mut width: u128 = 1;
    for _ in 0..=depth {
        total = total.saturating_add(width);
        width = width.saturating_mul(u128::from(k));
    }
    total
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledTree {
    pub k: u32,
    pub depth: usize,
    pub seed: u64,
    pub stream: u64,
    pub rng: String,
    /// Doubled spin values in breadth-first order.
    pub spins: Vec<i8>,
}

impl SampledTree {
    pub fn spin(&self, v: usize) -> Spin {
        Spin(self.spins[v])
    }

    /// Check the vertex count and that every spin lies in its level's alphabet.
    pub fn validate(&self) -> Result<()> {
        let layout = TreeLayout::new(self.k, self.depth)?;
        if layout.len() != self.spins.len() {
            return Err(Error::ContractViolation(format!(
                "expected {} vertices, found {}",
                layout.len(),
                self.spins.len()
            )));
        }
        for d in 0..=self.depth {
            let level = Level::of_distance(d);
            for v in layout.level_range(d) {
                if level.position(Spin(self.spins[v])).is_none() {
                    return Err(Error::ContractViolation(format!(
                        "vertex {v} at distance {d} holds {} outside {}",
                        Spin(self.spins[v]),
                        level.name()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-level counts and per-tree frequencies over many sampled trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelHistogram {
    pub distance: usize,
    pub level: Level,
    /// Doubled spin values, ascending.
    pub spins: Vec<i8>,
    pub counts: Vec<u64>,
    /// Mean over trees of the fraction of the level holding each spin.
    pub fraction_mean: Vec<f64>,
    /// Standard error of `fraction_mean`, trees being independent.
    pub fraction_se: Vec<f64>,
}

/// Mean spin over the vertices of each level class inside the ball.
/// A class that the ball does not reach is `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationEstimate {
    pub m: [Option<f64>; 3],
    pub se: [Option<f64>; 3],
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub k: u32,
    pub depth: usize,
    pub trees: usize,
    pub seed: u64,
    pub rng: String,
    pub levels: Vec<LevelHistogram>,
    pub magnetization: MagnetizationEstimate,
}

struct TreeStats {
    counts: Vec<Vec<u32>>,
    class_means: [f64; 3],
}

fn mean_se(xs: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = xs.clone().sum::<f64>() / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

impl TreeChain {
    /// Sample `trees` independent trees (tree `i` uses substream `i` of
    /// `seed`) and summarize. Output does not depend on the thread count.
    pub fn summarize(&self, depth: usize, trees: usize, seed: u64) -> Result<SampleSummary> {
        if trees == 0 {
            return Err(Error::Domain("at least one tree is required".into()));
        }
        let layout = TreeLayout::new(self.k, depth)?;
        let stats: Vec<TreeStats> = (0..trees as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(i);
                let idx = self.draw_indices(&layout, &mut rng);
                let mut counts: Vec<Vec<u32>> = (0..=depth)
                    .map(|d| vec![0; Level::of_distance(d).size()])
                    .collect();
                let mut sums = [0.0f64; 3];
                let mut sizes = [0usize; 3];
                for (d, level_counts) in counts.iter_mut().enumerate() {
                    let level = Level::of_distance(d);
                    for v in layout.level_range(d) {
                        let i = idx[v] as usize;
                        level_counts[i] += 1;
                        sums[level.index()] += level.alphabet()[i].value();
                        sizes[level.index()] += 1;
                    }
                }
                let class_means = std::array::from_fn(|c| {
                    if sizes[c] > 0 {
                        sums[c] / sizes[c] as f64
                    } else {
                        0.0
                    }
                });
                TreeStats {
                    counts,
                    class_means,
                }
            })
            .collect();

        let levels = (0..=depth)
            .map(|d| {
                let level = Level::of_distance(d);
                let width = layout.level_range(d).len() as f64;
                let size = level.size();
                let counts: Vec<u64> = (0..size)
                    .map(|i| stats.iter().map(|s| u64::from(s.counts[d][i])).sum())
                    .collect();
                let (mean, se): (Vec<f64>, Vec<f64>) = (0..size)
                    .map(|i| {
                        mean_se(
                            stats.iter().map(move |s| f64::from(s.counts[d][i]) / width),
                            trees,
                        )
                    })
                    .unzip();
                LevelHistogram {
                    distance: d,
                    level,
                    spins: level.alphabet().iter().map(|s| s.doubled()).collect(),
                    counts,
                    fraction_mean: mean,
                    fraction_se: se,
                }
            })
            .collect();

        let mut m = [None; 3];
        let mut se = [None; 3];
        for c in 0..3 {
            if c <= depth {
                let (a, b) = mean_se(stats.iter().map(|s| s.class_means[c]), trees);
                m[c] = Some(a);
                se[c] = Some(b);
            }
        }
        Ok(SampleSummary {
            k: self.k,
            depth,
            trees,
            seed,
            rng: RNG_ALGORITHM.to_string(),
            levels,
            magnetization: MagnetizationEstimate {
                m,
                se,
                samples: trees,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_params;
    use crate::recursion::ScalarMap;

    fn chain(theta: f64, k: u32, x: f64) -> TreeChain {
        let map = ScalarMap::new(make_params(theta, k).unwrap());
        TreeChain::new(&map.law_from_x(x), map.params()).unwrap()
    }

    #[test]
    fn root_law_examples() {
        let mut law = BoundaryLaw::ones();
        assert_eq!(
            root_law(&law).unwrap(),
            RootLaw {
                p_minus: 0.5,
                p_plus: 0.5
            }
        );
        law.x = 3.0;
        let r = root_law(&law).unwrap();
        assert!((r.p_minus - 0.25).abs() < 1e-15 && (r.p_plus - 0.75).abs() < 1e-15);
        law.x = 1e300;
        let r = root_law(&law).unwrap();
        assert!(r.p_plus == 1.0 && r.p_minus > 0.0);
    }

    #[test]
    fn layout_indices() {
        let l = TreeLayout::new(2, 3).unwrap();
        assert_eq!(l.len(), 15);
        assert_eq!(l.level_range(2), 3..7);
        assert_eq!(l.distance(0), 0);
        assert_eq!(l.distance(6), 2);
        assert_eq!(l.distance(7), 3);
        assert!(matches!(
            TreeLayout::new(2, 30),
            Err(Error::Capacity { .. })
        ));
        assert_eq!(vertex_count(3, 2), 13);
    }

    #[test]
    fn marginals_uniform_at_theta_one() {
        let c = chain(1.0, 2, 1.0);
        for (d, m) in c.exact_marginals(4).iter().enumerate() {
            let n = Level::of_distance(d).size() as f64;
            assert!(m.iter().all(|&p| (p - 1.0 / n).abs() < 1e-15));
        }
    }

    #[test]
    fn disordered_is_stationary() {
        for th in [1.2, 1.6, 2.0, 3.5] {
            assert!(chain(th, 2, 1.0).stationarity_defect() < 1e-12);
        }
    }

    #[test]
    fn samples_are_reproducible_and_valid() {
        let c = chain(1.6, 2, 1.734_515_690_643_492);
        let a = c.sample(5, 42).unwrap();
        let b = c.sample(5, 42).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(a.spins.len(), 63);
        assert_ne!(a, c.sample(5, 43).unwrap());
        let root_only = c.sample(0, 1).unwrap();
        assert_eq!(root_only.spins.len(), 1);
    }

    #[test]
    fn summary_matches_exact_marginals() {
        let c = chain(1.6, 2, 0.576_529_809_095_591_2);
        let s = c.summarize(3, 20_000, 7).unwrap();
        let exact = c.exact_marginals(3);
        for lh in &s.levels {
            for (i, p) in exact[lh.distance].iter().enumerate() {
                let z = (lh.fraction_mean[i] - p) / lh.fraction_se[i];
                assert!(
                    z.abs() < 4.0,
                    "level {} spin {}: z = {z}",
                    lh.distance,
                    lh.spins[i]
                );
            }
        }
        assert_eq!(s, c.summarize(3, 20_000, 7).unwrap());
    }

    #[test]
    fn magnetization_classes() {
        let c = chain(1.6, 2, 1.0);
        let s = c.summarize(1, 10, 0).unwrap();
        assert!(s.magnetization.m[0].is_some() && s.magnetization.m[1].is_some());
        assert!(s.magnetization.m[2].is_none());
        assert!(c.summarize(1, 0, 0).is_err());
    }
}
