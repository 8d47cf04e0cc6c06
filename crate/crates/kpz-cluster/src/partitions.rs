//! Set partitions and the coefficients of `D_n … D_1 log w`.
//!
//! `D_I log w = Σ_π (−1)^{m−1} (m−1)! ∏_{B∈π} (D_B w) / w^m`, where `π` ranges
//! over partitions of `I` and `m` is the number of blocks.

use serde::Serialize;

use crate::ClusterError;

pub const MAX_PARTITION_N: usize = 8;

/// Blocks of a set partition of `{0, …, n−1}`, each block increasing and
/// blocks ordered by their smallest element.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Partition {
    pub blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Restricted-growth string: `rgs[i]` is the block containing `i`.
    pub fn from_rgs(rgs: &[usize]) -> Self {
        let m = rgs.iter().copied().max().map_or(0, |x| x + 1);
        let mut blocks = vec![Vec::new(); m];
        for (i, &b) in rgs.iter().enumerate() {
            blocks[b].push(i);
        }
        Self { blocks }
    }
}

/// All partitions of `{0, …, n−1}` in restricted-growth-string order.
pub fn set_partitions(n: usize) -> Result<Vec<Partition>, ClusterError> {
    if n > MAX_PARTITION_N {
        return Err(ClusterError::PartitionTooLarge(n));
    }
    fn rec(i: usize, n: usize, rgs: &mut Vec<usize>, max: usize, out: &mut Vec<Partition>) {
        if i == n {
            out.push(Partition::from_rgs(rgs));
            return;
        }
        let lim = if i == 0 { 0 } else { max + 1 };
        for b in 0..=lim {
            rgs.push(b);
            rec(i + 1, n, rgs, max.max(b), out);
            rgs.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        out.push(Partition { blocks: Vec::new() });
        return Ok(out);
    }
    rec(0, n, &mut Vec::with_capacity(n), 0, &mut out);
    Ok(out)
}

/// `(−1)^{m−1} (m−1)!` for `m` blocks.
pub fn block_coefficient(m: usize) -> i64 {
    let f: i64 = (1..m as i64).product();
    if m % 2 == 1 {
        f
    } else {
        -f
    }
}

/// Coefficients of the single-log expansion, in RGS order.
pub fn log_derivative_coeffs(n: usize) -> Result<Vec<(Partition, i64)>, ClusterError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    Ok(set_partitions(n)?
        .into_iter()
        .map(|p| {
            let c = block_coefficient(p.num_blocks());
            (p, c)
        })
        .collect())
}

/// Leibniz rule for `D_I ∏_f log w_f` with `factors` log factors: every way of
/// handing each derivative in `{0, …, n−1}` to one factor. Entry `[f]` of a
/// split is the (possibly empty) derivative set acting on factor `f`.
/// Composing each split with [`log_derivative_coeffs`] per factor gives the
/// coefficients for products of logs.
pub fn leibniz_splits(n: usize, factors: usize) -> Vec<Vec<Vec<usize>>> {
    if factors == 0 {
        return if n == 0 { vec![Vec::new()] } else { Vec::new() };
    }
    let total = factors.pow(n as u32);
    (0..total)
        .map(|mut code| {
            let mut split = vec![Vec::new(); factors];
            for i in 0..n {
                split[code % factors].push(i);
                code /= factors;
            }
            split
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bell_numbers() {
        let bell = [1usize, 1, 2, 5, 15, 52, 203, 877, 4140];
        for (n, &b) in bell.iter().enumerate() {
            assert_eq!(set_partitions(n).unwrap().len(), b);
        }
    }

    #[test]
    fn two_element_coefficients() {
        let c = log_derivative_coeffs(2).unwrap();
        assert_eq!(c[0].0.blocks, vec![vec![0, 1]]);
        assert_eq!(c[0].1, 1);
        assert_eq!(c[1].0.blocks, vec![vec![0], vec![1]]);
        assert_eq!(c[1].1, -1);
    }
}
