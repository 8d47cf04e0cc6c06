//! Weakened non-overlap constraints between polymers.
//!
//! Each pair of polymers gets a parameter `S_ij`; every coinciding box pair
//! that is not external on both sides contributes a factor
//! `1 + S_ij (1_{Δ≠Δ'} − 1) = 1 − S_ij`. External/external coincidences are
//! never weakened and are rejected up front.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::bkar::bkar2_sum;
use crate::forest::{Kind, ObjectSet};
use crate::poly::Poly;
use crate::ClusterError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polymer {
    pub boxes: BTreeSet<u64>,
    pub external: BTreeSet<u64>,
}

impl Polymer {
    pub fn new(boxes: impl IntoIterator<Item = u64>, external: impl IntoIterator<Item = u64>) -> Self {
        let boxes: BTreeSet<u64> = boxes.into_iter().collect();
        let external: BTreeSet<u64> = external.into_iter().filter(|b| boxes.contains(b)).collect();
        Self { boxes, external }
    }
}

#[derive(Clone, Debug)]
pub struct MayerSystem {
    polymers: Vec<Polymer>,
    pairs: ObjectSet,
    /// Overlapping weakened box pairs, per polymer pair (indexed like `pairs.links()`).
    overlaps: Vec<Vec<u64>>,
}

impl MayerSystem {
    pub fn new(polymers: Vec<Polymer>) -> Result<Self, ClusterError> {
        let pairs = ObjectSet::complete(polymers.len());
        let mut overlaps = Vec::with_capacity(pairs.links().len());
        for &(i, j) in pairs.links() {
            let (p, q) = (&polymers[i], &polymers[j]);
            let mut shared = Vec::new();
            for b in p.boxes.intersection(&q.boxes) {
                if p.external.contains(b) && q.external.contains(b) {
                    return Err(ClusterError::ExternalOverlap(i, j, *b));
                }
                shared.push(*b);
            }
            overlaps.push(shared);
        }
        Ok(Self { polymers, pairs, overlaps })
    }

    pub fn polymers(&self) -> &[Polymer] {
        &self.polymers
    }

    /// Complete object set over polymers; link order matches the variables of
    /// [`MayerSystem::nonoverlap_poly`].
    pub fn pairs(&self) -> &ObjectSet {
        &self.pairs
    }

    /// Boxes shared by polymers `i` and `j` (each one a possible Mayer link).
    pub fn overlapping_boxes(&self, i: usize, j: usize) -> &[u64] {
        let k = self.pairs.link_index(i, j).expect("distinct polymers");
        &self.overlaps[k]
    }

    /// `NonOverlap(S) = ∏_{i<j} (1 − S_ij)^{m_ij}` as a polynomial in `S`.
    pub fn nonoverlap_poly(&self) -> Poly {
        let m = self.pairs.links().len();
        let mut p = Poly::constant(m, 1.0);
        for (k, shared) in self.overlaps.iter().enumerate() {
            if shared.is_empty() {
                continue;
            }
            let factor = Poly::constant(m, 1.0).add(&Poly::var(m, k).scale(-1.0));
            p = p.mul(&factor.pow(shared.len() as u32));
        }
        p
    }

    pub fn nonoverlap(&self, s: &[f64]) -> f64 {
        self.overlaps.iter().zip(s).map(|(o, &x)| (1.0 - x).powi(o.len() as i32)).product()
    }

    /// Direct indicator that no two polymers share a box.
    pub fn direct_indicator(&self) -> f64 {
        if self.overlaps.iter().all(Vec::is_empty) {
            1.0
        } else {
            0.0
        }
    }

    /// `NonOverlap(1)` rebuilt from the two-type forest formula. `kinds`
    /// labels polymers; `None` means every polymer is type 1.
    pub fn reconstruct(&self, kinds: Option<Vec<Kind>>) -> Result<f64, ClusterError> {
        let objects = match kinds {
            Some(k) => self.pairs.clone().with_kinds(k)?,
            None => self.pairs.clone(),
        };
        bkar2_sum(&self.nonoverlap_poly(), &objects)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_shared_box_gives_minus_one() {
        let sys = MayerSystem::new(vec![Polymer::new([1, 2], [1]), Polymer::new([2, 3], [3])]).unwrap();
        let d = sys.nonoverlap_poly().derivative(0);
        assert_eq!(d.eval(&[0.4]), -1.0);
        assert_eq!(sys.reconstruct(None).unwrap(), 0.0);
    }

    #[test]
    fn external_overlap_is_rejected() {
        let err = MayerSystem::new(vec![Polymer::new([5], [5]), Polymer::new([5], [5])]).unwrap_err();
        assert_eq!(err, ClusterError::ExternalOverlap(0, 1, 5));
    }
}
