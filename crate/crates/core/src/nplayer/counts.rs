//! Count-compressed joint states `(x1, n)`: the tagged player's state and the
//! occupancy vector of the other `N - 1` players.

use crate::error::{MfgError, Result};
use crate::simplex::Simplex;

/// Default cap on the number of joint states.
pub const DEFAULT_STATE_CAP: usize = 2_000_000;

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of occupancy vectors of `others` players over `d` states.
pub fn count_states(d: usize, others: usize) -> u128 {
    binomial((others + d - 1) as u64, (d - 1) as u64)
}

/// Enumeration of `(x1, n)` in colexicographic order of `n`, then `x1`.
#[derive(Debug, Clone)]
pub struct JointStateIndex {
    d: usize,
    n_players: usize,
    /// Occupancy vectors, row `r` holding the counts of rank `r`.
    counts: Vec<u32>,
    /// `neighbors[r * d * d + z * d + y]` is the rank of `n - e_z + e_y`, or
    /// `usize::MAX` when `n_z = 0`.
    neighbors: Vec<usize>,
}

impl JointStateIndex {
    pub fn new(d: usize, n_players: usize) -> Result<Self> {
        Self::with_cap(d, n_players, DEFAULT_STATE_CAP)
    }

    pub fn with_cap(d: usize, n_players: usize, cap: usize) -> Result<Self> {
        if d < 2 {
            return Err(MfgError::InvalidParameter("need at least two states".into()));
        }
        if n_players < 2 {
            return Err(MfgError::InvalidParameter(format!(
                "need at least two players, got {n_players}"
            )));
        }
        let n_counts = count_states(d, n_players - 1);
        let joint = n_counts * d as u128;
        if joint > cap as u128 {
            return Err(MfgError::StateSpaceTooLarge { states: joint, cap });
        }
        let n_counts = n_counts as usize;
        let mut index = JointStateIndex {
            d,
            n_players,
            counts: vec![0; n_counts * d],
            neighbors: Vec::new(),
        };
        let mut n = vec![0u32; d];
        let mut filled = 0;
        index.fill(&mut n, d - 1, (n_players - 1) as u32, &mut filled);
        debug_assert_eq!(filled, n_counts);
        let mut neighbors = vec![usize::MAX; n_counts * d * d];
        let mut buf = vec![0u32; d];
        for r in 0..n_counts {
            buf.copy_from_slice(index.count(r));
            for z in 0..d {
                if buf[z] == 0 {
                    continue;
                }
                for y in (0..d).filter(|&y| y != z) {
                    buf[z] -= 1;
                    buf[y] += 1;
                    neighbors[(r * d + z) * d + y] = index.rank(&buf);
                    buf[z] += 1;
                    buf[y] -= 1;
                }
            }
        }
        index.neighbors = neighbors;
        Ok(index)
    }

    fn fill(&mut self, n: &mut [u32], pos: usize, remaining: u32, filled: &mut usize) {
        if pos == 0 {
            n[0] = remaining;
            let r = self.rank(n);
            self.counts[r * self.d..(r + 1) * self.d].copy_from_slice(n);
            *filled += 1;
            return;
        }
        for v in 0..=remaining {
            n[pos] = v;
            self.fill(n, pos - 1, remaining - v, filled);
        }
        n[pos] = 0;
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn n_counts(&self) -> usize {
        self.counts.len() / self.d
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Colexicographic rank of an occupancy vector.
    pub fn rank(&self, n: &[u32]) -> usize {
        let d = self.d;
        let mut remaining = n.iter().map(|&v| v as u64).sum::<u64>();
        let mut r: u128 = 0;
        for j in (1..d).rev() {
            let nj = n[j] as u64;
            let jj = j as u64;
            r += binomial(remaining + jj, jj) - binomial(remaining - nj + jj, jj);
            remaining -= nj;
        }
        r as usize
    }

    /// Occupancy vector of rank `r`.
    pub fn count(&self, r: usize) -> &[u32] {
        &self.counts[r * self.d..(r + 1) * self.d]
    }

    /// Joint index of `(x1, count rank r)`.
    pub fn joint(&self, x1: usize, r: usize) -> usize {
        r * self.d + x1
    }

    /// `(x1, count rank)` of a joint index.
    pub fn split(&self, s: usize) -> (usize, usize) {
        (s % self.d, s / self.d)
    }

    /// Rank of `n - e_z + e_y`, if `n_z > 0`.
    pub fn neighbor(&self, r: usize, z: usize, y: usize) -> Option<usize> {
        let v = self.neighbors[(r * self.d + z) * self.d + y];
        (v != usize::MAX).then_some(v)
    }

    /// Empirical law `(e_{x1} + n) / N` of all players.
    pub fn empirical(&self, s: usize) -> Simplex {
        let (x1, r) = self.split(s);
        let mut all: Vec<usize> = self.count(r).iter().map(|&v| v as usize).collect();
        all[x1] += 1;
        Simplex::from_counts(&all)
    }

    /// Probability of each joint state when all players start i.i.d. from `m0`.
    pub fn initial_law(&self, m0: &Simplex) -> Vec<f64> {
        let others = self.n_players - 1;
        let ln_fact: Vec<f64> = {
            let mut v = vec![0.0; others + 1];
            for i in 1..=others {
                v[i] = v[i - 1] + (i as f64).ln();
            }
            v
        };
        let mut law = vec![0.0; self.len()];
        for r in 0..self.n_counts() {
            let n = self.count(r);
            let mut ln_p = ln_fact[others];
            let mut possible = true;
            for (z, &nz) in n.iter().enumerate() {
                if nz == 0 {
                    continue;
                }
                if m0[z] == 0.0 {
                    possible = false;
                    break;
                }
                ln_p += nz as f64 * m0[z].ln() - ln_fact[nz as usize];
            }
            if !possible {
                continue;
            }
            let pn = ln_p.exp();
            for x1 in 0..self.d {
                law[self.joint(x1, r)] = m0[x1] * pn;
            }
        }
        law
    }
}

/// All occupancy vectors of the other players, in rank order.
pub fn enumerate_count_states(d: usize, n_players: usize) -> Result<JointStateIndex> {
    JointStateIndex::new(d, n_players)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_enumerations() {
        let idx = enumerate_count_states(2, 3).unwrap();
        let counts: Vec<Vec<u32>> = (0..idx.n_counts()).map(|r| idx.count(r).to_vec()).collect();
        assert_eq!(counts, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(idx.len(), 6);
        let idx = enumerate_count_states(3, 21).unwrap();
        assert_eq!(idx.n_counts(), 231);
        assert_eq!(idx.len(), 693);
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            JointStateIndex::new(6, 200),
            Err(MfgError::StateSpaceTooLarge { .. })
        ));
        assert!(matches!(
            JointStateIndex::with_cap(2, 10, 10),
            Err(MfgError::StateSpaceTooLarge { states: 20, cap: 10 })
        ));
        assert!(JointStateIndex::new(2, 1).is_err());
    }

    #[test]
    fn initial_law_is_a_probability() {
        let idx = JointStateIndex::new(3, 7).unwrap();
        let m0 = Simplex::new(vec![0.5, 0.3, 0.2]).unwrap();
        let law = idx.initial_law(&m0);
        assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        let m0 = Simplex::new(vec![1.0, 0.0, 0.0]).unwrap();
        let law = idx.initial_law(&m0);
        assert_eq!(law[idx.joint(0, 0)], 1.0);
        assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn rank_is_a_bijection(d in 2usize..5, n in 2usize..12) {
            let idx = JointStateIndex::new(d, n).unwrap();
            prop_assert_eq!(idx.n_counts() as u128, count_states(d, n - 1));
            let mut seen = std::collections::HashSet::new();
            for r in 0..idx.n_counts() {
                let c = idx.count(r);
                prop_assert_eq!(c.iter().sum::<u32>() as usize, n - 1);
                prop_assert_eq!(idx.rank(c), r);
                prop_assert!(seen.insert(c.to_vec()));
                for s in [idx.joint(0, r), idx.joint(d - 1, r)] {
                    let (x1, rr) = idx.split(s);
                    prop_assert_eq!(idx.joint(x1, rr), s);
                }
                for z in 0..d {
                    for y in (0..d).filter(|&y| y != z) {
                        match idx.neighbor(r, z, y) {
                            None => prop_assert_eq!(c[z], 0),
                            Some(t) => {
                                let m = idx.count(t);
                                prop_assert_eq!(m[z] + 1, c[z]);
                                prop_assert_eq!(m[y], c[y] + 1);
                            }
                        }
                    }
                }
            }
            // Colexicographic: compare from the last coordinate.
            for r in 1..idx.n_counts() {
                let a: Vec<u32> = idx.count(r - 1).iter().rev().copied().collect();
                let b: Vec<u32> = idx.count(r).iter().rev().copied().collect();
                prop_assert!(a < b);
            }
        }
    }
}
