//! Forest formulas with exact weight integration.
//!
//! On each ordering simplex `w_{σ1} < … < w_{σk}` every path minimum is a
//! single coordinate, so the differentiated functional becomes a polynomial
//! in `w` and integrates in closed form:
//! `∫ ∏ w_{σr}^{b_r} = ∏_r 1 / Σ_{i≤r} (b_i + 1)`.

use crate::forest::{acyclic_subsets, forest_path, Kind, ObjectSet};
use crate::poly::Poly;
use crate::{ClusterError, MAX_DEGREE};

/// How a polynomial variable is evaluated on a forest.
#[derive(Clone, Copy, Debug)]
enum Role {
    /// Edge between two vertices of the (possibly merged) graph.
    Edge(usize, usize),
    /// Held at 1 and never differentiated.
    Fixed,
}

/// `Σ_F ∫ dw (∏_{ℓ∈F} ∂_ℓ) F (s(w))`, which equals `F(1, …, 1)`.
pub fn bkar_sum(f: &Poly, objects: &ObjectSet) -> Result<f64, ClusterError> {
    objects.check_size()?;
    check_poly(f, objects)?;
    let roles: Vec<Role> = objects.links().iter().map(|&(a, b)| Role::Edge(a, b)).collect();
    Ok(forest_sum(f, objects.n(), &roles))
}

/// Two-type variant: forests in which every component holds at most one
/// type-2 object. Implemented by merging all type-2 objects into one root
/// vertex; links between two type-2 objects stay at 1.
pub fn bkar2_sum(f: &Poly, objects: &ObjectSet) -> Result<f64, ClusterError> {
    objects.check_size()?;
    check_poly(f, objects)?;
    let n = objects.n();
    let n1 = (0..n).filter(|&i| objects.kind(i) == Kind::One).count();
    if n1 == 0 {
        return Err(ClusterError::BadKinds("at least one type-1 object is required".into()));
    }
    let mut image = vec![0usize; n];
    let mut next = 0;
    for (i, im) in image.iter_mut().enumerate() {
        if objects.kind(i) == Kind::One {
            *im = next;
            next += 1;
        }
    }
    let root = n1;
    let has_root = n1 < n;
    for (i, im) in image.iter_mut().enumerate() {
        if objects.kind(i) == Kind::Two {
            *im = root;
        }
    }
    let roles: Vec<Role> = objects
        .links()
        .iter()
        .map(|&(a, b)| {
            let (u, v) = (image[a], image[b]);
            if u == v {
                Role::Fixed
            } else {
                Role::Edge(u, v)
            }
        })
        .collect();
    Ok(forest_sum(f, n1 + usize::from(has_root), &roles))
}

fn check_poly(f: &Poly, objects: &ObjectSet) -> Result<(), ClusterError> {
    let m = objects.links().len();
    if f.nvars() != m {
        return Err(ClusterError::ArityMismatch { expected: m, got: f.nvars() });
    }
    for var in 0..m {
        let degree = f.degree_in(var);
        if degree > MAX_DEGREE {
            return Err(ClusterError::DegreeTooHigh { var, degree, max: MAX_DEGREE });
        }
    }
    Ok(())
}

fn forest_sum(f: &Poly, nverts: usize, roles: &[Role]) -> f64 {
    // Fixed variables get a self-loop so the enumerator skips them.
    let edges: Vec<(usize, usize)> = roles
        .iter()
        .map(|r| match *r {
            Role::Edge(u, v) => (u, v),
            Role::Fixed => (0, 0),
        })
        .collect();
    let mut total = 0.0;
    for forest in acyclic_subsets(nverts, &edges) {
        let mut g = f.clone();
        for &e in &forest {
            g = g.derivative(e);
            if g.is_zero() {
                break;
            }
        }
        if g.is_zero() {
            continue;
        }
        total += integrate_forest(&g, nverts, &edges, roles, &forest);
    }
    total
}

/// Exact `∫_{[0,1]^k} g(s(w)) dw` for one forest with `k` links.
fn integrate_forest(g: &Poly, nverts: usize, edges: &[(usize, usize)], roles: &[Role], forest: &[usize]) -> f64 {
    let k = forest.len();
    // For each variable: None = identically 0, Some(path) = positions (in
    // `forest`) of the links whose minimum it equals. Fixed -> empty path.
    let paths: Vec<Option<Vec<usize>>> = roles
        .iter()
        .map(|r| match *r {
            Role::Fixed => Some(Vec::new()),
            Role::Edge(u, v) => forest_path(nverts, edges, forest, u, v)
                .map(|p| p.iter().map(|e| forest.iter().position(|x| x == e).expect("forest link")).collect()),
        })
        .collect();

    let terms: Vec<(&[u32], f64)> = g.terms().collect();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut rank = vec![0usize; k];
    let mut b = vec![0u32; k];
    let mut total = 0.0;
    loop {
        for (r, &pos) in perm.iter().enumerate() {
            rank[pos] = r;
        }
        // variable -> forest position carrying its value on this simplex
        let subst: Vec<Option<Option<usize>>> =
            paths.iter().map(|p| p.as_ref().map(|path| path.iter().copied().min_by_key(|&pos| rank[pos]))).collect();
        'terms: for &(exps, c) in &terms {
            b.iter_mut().for_each(|x| *x = 0);
            for (var, &e) in exps.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                match subst[var] {
                    None => continue 'terms,
                    Some(None) => {}
                    Some(Some(pos)) => b[pos] += e,
                }
            }
            let mut val = c;
            let mut cum = 0u32;
            for &pos in &perm {
                cum += b[pos] + 1;
                val /= cum as f64;
            }
            total += val;
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    total
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutations_are_exhaustive() {
        let mut p = vec![0, 1, 2, 3];
        let mut count = 1;
        while next_permutation(&mut p) {
            count += 1;
        }
        assert_eq!(count, 24);
    }

    #[test]
    fn two_link_product_on_three_objects() {
        let o = ObjectSet::complete(3);
        let i12 = o.link_index(0, 1).unwrap();
        let i13 = o.link_index(0, 2).unwrap();
        let f = Poly::var(3, i12).mul(&Poly::var(3, i13));
        assert!((bkar_sum(&f, &o).unwrap() - 1.0).abs() < 1e-15);
    }
}
