//! Dyadic cube hierarchy over the support of a measure, built from a
//! randomly translated dyadic grid, with the martingale differences
//! `Δ_Q f` and the energy identity they satisfy.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::index::{sq_dist, BallIndex};
use crate::measure::DiscreteMeasure;
use crate::numeric::{exact_sum, ExactSum};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DyadicCube {
    pub id: usize,
    /// Generation `j`; the side is `2^{−j}·base_scale`.
    pub j: i32,
    pub side: f64,
    /// Lattice coordinates: the cube is `origin + side·[anchor, anchor + 1)`.
    pub anchor: Vec<i64>,
    #[serde(skip)]
    pub members: Vec<usize>,
    pub mass: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub neighbors: Vec<usize>,
    /// Diagonal of the members' bounding box.
    pub spread: f64,
    /// `μ(Q)/ℓ(Q)ⁿ`.
    pub ad_ratio: f64,
}

impl DyadicCube {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DyadicLattice {
    pub j_min: i32,
    pub j_max: i32,
    pub base_scale: f64,
    pub origin: Vec<f64>,
    pub seed: u64,
    pub cubes: Vec<DyadicCube>,
    /// Cube ids per generation, `generations[j − j_min]`.
    pub generations: Vec<Vec<usize>>,
    #[serde(skip)]
    weights: Vec<f64>,
    #[serde(skip)]
    total_mass: f64,
}

fn anchor_of(u: &[f64], side: f64) -> Vec<i64> {
    u.iter().map(|c| (c / side).floor() as i64).collect()
}

fn bbox_diag(mu: &DiscreteMeasure, ids: &[usize]) -> f64 {
    let d = mu.ambient_dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for &i in ids {
        for (a, &c) in mu.point(i).iter().enumerate() {
            lo[a] = lo[a].min(c);
            hi[a] = hi[a].max(c);
        }
    }
    sq_dist(&lo, &hi).sqrt()
}

impl DyadicLattice {
    /// Builds generations `j_min..=j_max` of a dyadic grid translated by a
    /// seeded random offset. Empty cubes are never created.
    pub fn build(mu: &DiscreteMeasure, j_min: i32, j_max: i32, seed: u64) -> Result<Self> {
        if j_max < j_min {
            return Err(Error::validation(format!("j_max = {j_max} is below j_min = {j_min}")));
        }
        if mu.is_empty() {
            return Err(Error::validation("cannot build a lattice on an empty measure"));
        }
        let n = mu.intrinsic_dim() as i32;
        let h = mu.resolution();
        let diam = mu.diameter().max(h);
        let base_scale = 2f64.powi(diam.log2().ceil() as i32);
        let finest = base_scale * 2f64.powi(-j_max);
        if finest < h {
            return Err(Error::Precondition(format!(
                "finest cube side {finest:e} is below the resolution h = {h:e}"
            )));
        }
        let (lo, _) = mu.bounding_box().expect("nonempty");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let origin: Vec<f64> = lo.iter().map(|c| c - rng.gen_range(0.0..base_scale)).collect();
        let shifted: Vec<Vec<f64>> = mu
            .points()
            .map(|p| p.iter().zip(&origin).map(|(c, o)| c - o).collect())
            .collect();

        let mut cubes: Vec<DyadicCube> = Vec::new();
        let mut generations: Vec<Vec<usize>> = Vec::new();
        let make = |cubes: &mut Vec<DyadicCube>, j: i32, side: f64, anchor: Vec<i64>, members: Vec<usize>, parent| {
            let id = cubes.len();
            let mass = exact_sum(members.iter().map(|&i| mu.weight(i)));
            cubes.push(DyadicCube {
                id,
                j,
                side,
                anchor,
                spread: bbox_diag(mu, &members),
                ad_ratio: mass / side.powi(n),
                members,
                mass,
                parent,
                children: Vec::new(),
                neighbors: Vec::new(),
            });
            id
        };

        let side0 = base_scale * 2f64.powi(-j_min);
        let mut groups: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
        for (i, u) in shifted.iter().enumerate() {
            groups.entry(anchor_of(u, side0)).or_default().push(i);
        }
        let top: Vec<usize> = groups
            .into_iter()
            .map(|(a, m)| make(&mut cubes, j_min, side0, a, m, None))
            .collect();
        generations.push(top);

        for j in j_min + 1..=j_max {
            let side = base_scale * 2f64.powi(-j);
            let mut this_gen = Vec::new();
            for &pid in generations.last().unwrap().clone().iter() {
                let mut groups: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
                for &i in &cubes[pid].members {
                    groups.entry(anchor_of(&shifted[i], side)).or_default().push(i);
                }
                for (a, m) in groups {
                    let id = make(&mut cubes, j, side, a, m, Some(pid));
                    cubes[pid].children.push(id);
                    this_gen.push(id);
                }
            }
            generations.push(this_gen);
        }

        let mut lattice = Self {
            j_min,
            j_max,
            base_scale,
            origin,
            seed,
            cubes,
            generations,
            weights: mu.weights().to_vec(),
            total_mass: mu.total_mass(),
        };
        lattice.link_neighbors(mu);
        Ok(lattice)
    }

    fn link_neighbors(&mut self, mu: &DiscreteMeasure) {
        let d = mu.ambient_dim();
        for gen in &self.generations {
            let by_anchor: HashMap<&[i64], usize> =
                gen.iter().map(|&id| (self.cubes[id].anchor.as_slice(), id)).collect();
            let indexes: HashMap<usize, BallIndex> = gen
                .par_iter()
                .map(|&id| {
                    let m = &self.cubes[id].members;
                    let coords: Vec<f64> = m.iter().flat_map(|&i| mu.point(i).iter().copied()).collect();
                    (id, BallIndex::build(&coords, &vec![1.0; m.len()], d))
                })
                .collect();
            let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
                .map(|mut c| {
                    (0..d)
                        .map(|_| {
                            let o = (c % 3) as i64 - 1;
                            c /= 3;
                            o
                        })
                        .collect()
                })
                .collect();
            let cubes = &self.cubes;
            let lists: Vec<Vec<usize>> = gen
                .par_iter()
                .map(|&id| {
                    let q = &cubes[id];
                    let mut out = Vec::new();
                    for off in &offsets {
                        let a: Vec<i64> = q.anchor.iter().zip(off).map(|(x, o)| x + o).collect();
                        let Some(&other) = by_anchor.get(a.as_slice()) else {
                            continue;
                        };
                        if other == id {
                            out.push(id);
                            continue;
                        }
                        // Scan the smaller cube against the larger one's index.
                        let (small, big) = if cubes[other].members.len() < q.members.len() {
                            (other, id)
                        } else {
                            (id, other)
                        };
                        let idx = &indexes[&big];
                        if cubes[small].members.iter().any(|&i| idx.any_in_ball(mu.point(i), q.side)) {
                            out.push(other);
                        }
                    }
                    out.sort_unstable();
                    out
                })
                .collect();
            for (&id, list) in gen.iter().zip(lists) {
                self.cubes[id].neighbors = list;
            }
        }
    }

    pub fn cube(&self, id: usize) -> &DyadicCube {
        &self.cubes[id]
    }

    pub fn generation(&self, j: i32) -> &[usize] {
        &self.generations[(j - self.j_min) as usize]
    }

    pub fn top(&self) -> &[usize] {
        &self.generations[0]
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// `Q` and all its descendants, parents before children.
    pub fn descendants(&self, root: usize) -> Vec<usize> {
        let mut out = vec![root];
        let mut k = 0;
        while k < out.len() {
            out.extend_from_slice(&self.cubes[out[k]].children);
            k += 1;
        }
        out
    }

    /// Cube ids whose `μ(Q)/ℓ(Q)ⁿ` falls outside `[1/c, c]`.
    pub fn ad_violations(&self, c: f64) -> Vec<usize> {
        self.cubes
            .iter()
            .filter(|q| !(q.ad_ratio >= 1.0 / c && q.ad_ratio <= c))
            .map(|q| q.id)
            .collect()
    }

    fn check_f(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: f.len(),
            });
        }
        Ok(())
    }

    /// `m_Q f = μ(Q)^{−1} ∫_Q f dμ`.
    pub fn cube_mean(&self, f: &[f64], q: usize) -> Result<f64> {
        self.check_f(f)?;
        let cube = &self.cubes[q];
        if !(cube.mass > 0.0) {
            return Err(Error::validation(format!("cube {q} has zero mass")));
        }
        let num: ExactSum = cube.members.iter().map(|&i| self.weights[i] * f[i]).collect();
        Ok(num.value() / cube.mass)
    }

    /// Values of `Δ_Q f = Σ_{P ∈ Ch(Q)} χ_P (m_P f − m_Q f)` on the members
    /// of `Q`, in member order.
    pub fn martingale_delta(&self, f: &[f64], q: usize) -> Result<Vec<f64>> {
        let cube = &self.cubes[q];
        if cube.is_leaf() {
            return Err(Error::validation(format!("cube {q} is a leaf and has no martingale difference")));
        }
        let mq = self.cube_mean(f, q)?;
        let mut by_point: HashMap<usize, f64> = HashMap::with_capacity(cube.members.len());
        for &p in &cube.children {
            let v = self.cube_mean(f, p)? - mq;
            for &i in &self.cubes[p].members {
                by_point.insert(i, v);
            }
        }
        Ok(cube.members.iter().map(|i| by_point[i]).collect())
    }

    /// `‖Δ_Q f‖²_{L²(μ)}`.
    pub fn delta_energy(&self, f: &[f64], q: usize) -> Result<f64> {
        let mq = self.cube_mean(f, q)?;
        let cube = &self.cubes[q];
        if cube.is_leaf() {
            return Err(Error::validation(format!("cube {q} is a leaf")));
        }
        let mut acc = 0.0;
        for &p in &cube.children {
            let v = self.cube_mean(f, p)? - mq;
            acc += self.cubes[p].mass * v * v;
        }
        Ok(acc)
    }

    /// `⟨Δ_Q f, Δ_{Q′} f⟩_μ`.
    pub fn inner(&self, f: &[f64], q1: usize, q2: usize) -> Result<f64> {
        let a = self.martingale_delta(f, q1)?;
        let b = self.martingale_delta(f, q2)?;
        let vb: HashMap<usize, f64> = self.cubes[q2].members.iter().copied().zip(b).collect();
        let mut acc = 0.0;
        for (&i, va) in self.cubes[q1].members.iter().zip(a) {
            if let Some(v) = vb.get(&i) {
                acc += self.weights[i] * va * v;
            }
        }
        Ok(acc)
    }

    /// Both sides of `∫_R f² dμ = μ(R)(m_R f)² + Σ_{Q ∈ 𝒟(R), non-leaf}
    /// ‖Δ_Q f‖² + Σ_{leaves} Σ w_i (f_i − m_leaf f)²`.
    pub fn energy_identity(&self, f: &[f64], root: usize) -> Result<EnergyIdentity> {
        self.check_f(f)?;
        let cube = &self.cubes[root];
        let lhs: ExactSum = cube.members.iter().map(|&i| self.weights[i] * f[i] * f[i]).collect();
        let mr = self.cube_mean(f, root)?;
        let mut rhs = ExactSum::new();
        rhs.add(cube.mass * mr * mr);
        let mut remainder = ExactSum::new();
        for q in self.descendants(root) {
            if self.cubes[q].is_leaf() {
                let m = self.cube_mean(f, q)?;
                for &i in &self.cubes[q].members {
                    let t = f[i] - m;
                    remainder.add(self.weights[i] * t * t);
                }
            } else {
                rhs.add(self.delta_energy(f, q)?);
            }
        }
        Ok(EnergyIdentity {
            lhs: lhs.value(),
            rhs: rhs.value(),
            remainder: remainder.value(),
        })
    }

    /// Energy identity summed over the top generation, i.e. over the whole
    /// support.
    pub fn total_energy_identity(&self, f: &[f64]) -> Result<EnergyIdentity> {
        let parts: Vec<EnergyIdentity> = self
            .top()
            .iter()
            .map(|&q| self.energy_identity(f, q))
            .collect::<Result<_>>()?;
        Ok(EnergyIdentity {
            lhs: exact_sum(parts.iter().map(|p| p.lhs)),
            rhs: exact_sum(parts.iter().map(|p| p.rhs)),
            remainder: exact_sum(parts.iter().map(|p| p.remainder)),
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "j_min": self.j_min,
            "j_max": self.j_max,
            "base_scale": self.base_scale,
            "origin": self.origin,
            "seed": self.seed,
            "cubes": self.cubes.iter().map(|q| serde_json::json!({
                "id": q.id,
                "j": q.j,
                "anchor": q.anchor,
                "mass": q.mass,
                "parent": q.parent,
                "children": q.children,
                "neighbors": q.neighbors,
            })).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub remainder: f64,
}

impl EnergyIdentity {
    /// `|lhs − rhs − remainder| / max(|lhs|, tiny)`.
    pub fn relative_error(&self) -> f64 {
        (self.lhs - self.rhs - self.remainder).abs() / self.lhs.abs().max(f64::MIN_POSITIVE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators;

    #[test]
    fn cantor_depth_one_singletons() {
        let g = generators::cantor4(1, 100).unwrap();
        // diam ≈ 1.06, so base 2; j = 1, 2 give sides 1 and 1/2.
        let lat = DyadicLattice::build(&g.measure, 1, 2, 7).unwrap();
        assert_eq!(lat.base_scale, 2.0);
        let fine = lat.generation(2);
        assert_eq!(fine.len(), 4);
        for &q in fine {
            assert_eq!(lat.cube(q).members.len(), 1);
            assert_eq!(lat.cube(q).mass, 0.25);
            assert_eq!(lat.cube(q).side, 0.5);
        }
    }

    #[test]
    fn generations_partition_support() {
        let g = generators::cantor4(3, 1000).unwrap();
        let lat = DyadicLattice::build(&g.measure, 0, 4, 3).unwrap();
        for j in 0..=4 {
            let mut seen = vec![0u8; g.measure.len()];
            for &q in lat.generation(j) {
                for &i in &lat.cube(q).members {
                    seen[i] += 1;
                }
            }
            assert!(seen.iter().all(|&s| s == 1));
            let mass = exact_sum(lat.generation(j).iter().map(|&q| lat.cube(q).mass));
            assert_eq!(mass, g.measure.total_mass());
        }
    }

    #[test]
    fn resolution_precondition() {
        let g = generators::plane(1, 2, 1.0, 0.01).unwrap();
        assert!(matches!(DyadicLattice::build(&g.measure, 0, 12, 1), Err(Error::Precondition(_))));
        assert!(DyadicLattice::build(&g.measure, 3, 2, 1).unwrap_err().is_validation());
    }

    #[test]
    fn hand_computed_delta() {
        // Two children: masses 1 and 3, means 4 and 0.
        let pts = vec![vec![0.1, 0.1], vec![0.9, 0.9], vec![0.95, 0.9]];
        let mu = DiscreteMeasure::from_points(&pts, vec![1.0, 1.5, 1.5], 1, 2, 0.01).unwrap();
        let f = [4.0, 0.0, 0.0];
        // Find a seed where the two clusters split at the second generation.
        for seed in 0..50 {
            let lat = DyadicLattice::build(&mu, 0, 1, seed).unwrap();
            let Some(&root) = lat.top().iter().find(|&&q| lat.cube(q).members.len() == 3) else {
                continue;
            };
            if lat.cube(root).children.len() != 2 {
                continue;
            }
            assert_eq!(lat.cube_mean(&f, root).unwrap(), 1.0);
            let vals = lat.martingale_delta(&f, root).unwrap();
            let by: HashMap<usize, f64> = lat.cube(root).members.iter().copied().zip(vals).collect();
            assert_eq!(by[&0], 3.0);
            assert_eq!(by[&1], -1.0);
            assert_eq!(by[&2], -1.0);
            return;
        }
        panic!("no seed produced the two-child split");
    }

    #[test]
    fn constant_function_energy() {
        let g = generators::cantor4(3, 1000).unwrap();
        let lat = DyadicLattice::build(&g.measure, 0, 3, 11).unwrap();
        let f = vec![2.5; g.measure.len()];
        let e = lat.total_energy_identity(&f).unwrap();
        assert_eq!(e.remainder, 0.0);
        assert!((e.rhs - 6.25).abs() < 1e-14);
        for &q in lat.generation(1) {
            if !lat.cube(q).is_leaf() {
                assert!(lat.martingale_delta(&f, q).unwrap().iter().all(|v| *v == 0.0));
            }
        }
        let leaf = lat.generation(3)[0];
        assert!(lat.martingale_delta(&f, leaf).is_err());
    }

    #[test]
    fn neighbors_contain_self_and_are_symmetric() {
        let g = generators::plane(1, 2, 1.0, 0.01).unwrap();
        let lat = DyadicLattice::build(&g.measure, 0, 5, 5).unwrap();
        for q in &lat.cubes {
            assert!(q.neighbors.contains(&q.id));
            for &p in &q.neighbors {
                assert!(lat.cube(p).neighbors.contains(&q.id));
            }
        }
    }
}
