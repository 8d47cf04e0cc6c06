//! Object sets, forests and the min-over-path interpolation matrix.

use serde::{Deserialize, Serialize};

use crate::{ClusterError, MAX_OBJECTS};

/// Object type for the two-type (rooted) forest formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kind {
    One,
    Two,
}

/// `n` objects together with the unordered pairs that may be linked.
///
/// Links are stored as `(i, j)` with `i < j`; the position of a link in
/// [`ObjectSet::links`] is the index of the matching polynomial variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSet {
    n: usize,
    links: Vec<(usize, usize)>,
    kinds: Option<Vec<Kind>>,
}

impl ObjectSet {
    pub fn new(n: usize, links: &[(usize, usize)]) -> Result<Self, ClusterError> {
        let mut out = Vec::with_capacity(links.len());
        for &(a, b) in links {
            if a == b || a >= n || b >= n {
                return Err(ClusterError::BadLink(a, b));
            }
            let l = (a.min(b), a.max(b));
            if out.contains(&l) {
                return Err(ClusterError::DuplicateLink(l.0, l.1));
            }
            out.push(l);
        }
        Ok(Self { n, links: out, kinds: None })
    }

    /// All `n(n-1)/2` pairs, in lexicographic order.
    pub fn complete(n: usize) -> Self {
        let mut links = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                links.push((i, j));
            }
        }
        Self { n, links, kinds: None }
    }

    pub fn with_kinds(mut self, kinds: Vec<Kind>) -> Result<Self, ClusterError> {
        if kinds.len() != self.n {
            return Err(ClusterError::BadKinds(format!("{} labels for {} objects", kinds.len(), self.n)));
        }
        self.kinds = Some(kinds);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn links(&self) -> &[(usize, usize)] {
        &self.links
    }

    pub fn kinds(&self) -> Option<&[Kind]> {
        self.kinds.as_deref()
    }

    pub fn kind(&self, i: usize) -> Kind {
        self.kinds.as_ref().map_or(Kind::One, |k| k[i])
    }

    pub fn allows(&self, a: usize, b: usize) -> bool {
        self.link_index(a, b).is_some()
    }

    pub fn link_index(&self, a: usize, b: usize) -> Option<usize> {
        let l = (a.min(b), a.max(b));
        self.links.iter().position(|&x| x == l)
    }

    pub(crate) fn check_size(&self) -> Result<(), ClusterError> {
        if self.n > MAX_OBJECTS {
            let m = self.links.len() as u32;
            let estimate = if m >= 128 { u128::MAX } else { 1u128 << m };
            return Err(ClusterError::TooManyObjects { n: self.n, max: MAX_OBJECTS, estimate });
        }
        Ok(())
    }
}

/// A loop-free subset of the allowed links, as indices into [`ObjectSet::links`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Forest {
    pub links: Vec<usize>,
}

impl Forest {
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }
}

/// Lists every acyclic subset of the allowed links, the empty forest first.
pub fn enumerate_forests(objects: &ObjectSet) -> Result<Vec<Forest>, ClusterError> {
    objects.check_size()?;
    Ok(acyclic_subsets(objects.n, objects.links()).into_iter().map(|links| Forest { links }).collect())
}

/// Acyclic edge subsets of a multigraph (parallel edges allowed, self-loops
/// never selected). Each subset is returned as increasing edge indices.
pub(crate) fn acyclic_subsets(nverts: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    fn find(parent: &[usize], mut x: usize) -> usize {
        while parent[x] != x {
            x = parent[x];
        }
        x
    }
    fn rec(
        start: usize,
        edges: &[(usize, usize)],
        parent: &mut Vec<usize>,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        out.push(cur.clone());
        for e in start..edges.len() {
            let (u, v) = edges[e];
            if u == v {
                continue;
            }
            let (ru, rv) = (find(parent, u), find(parent, v));
            if ru == rv {
                continue;
            }
            parent[ru] = rv;
            cur.push(e);
            rec(e + 1, edges, parent, cur, out);
            cur.pop();
            parent[ru] = ru;
        }
    }
    let mut parent: Vec<usize> = (0..nverts).collect();
    let mut out = Vec::new();
    rec(0, edges, &mut parent, &mut Vec::new(), &mut out);
    out
}

/// For every pair `(u, v)`, the forest edges on the unique path between them,
/// or `None` if they lie in different components.
pub(crate) fn forest_path(
    nverts: usize,
    edges: &[(usize, usize)],
    forest: &[usize],
    u: usize,
    v: usize,
) -> Option<Vec<usize>> {
    if u == v {
        return Some(Vec::new());
    }
    // adjacency restricted to the forest; depth-first search from u
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nverts];
    for &e in forest {
        let (a, b) = edges[e];
        adj[a].push((b, e));
        adj[b].push((a, e));
    }
    let mut via: Vec<Option<(usize, usize)>> = vec![None; nverts];
    let mut seen = vec![false; nverts];
    let mut stack = vec![u];
    seen[u] = true;
    while let Some(x) = stack.pop() {
        if x == v {
            break;
        }
        for &(y, e) in &adj[x] {
            if !seen[y] {
                seen[y] = true;
                via[y] = Some((x, e));
                stack.push(y);
            }
        }
    }
    if !seen[v] {
        return None;
    }
    let mut path = Vec::new();
    let mut x = v;
    while x != u {
        let (p, e) = via[x].expect("path back-pointer");
        path.push(e);
        x = p;
    }
    Some(path)
}

/// Symmetric matrix `s_{ab}(w)`: the smallest weight on the forest path from
/// `a` to `b`, 0 across components, 1 on the diagonal.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InterpolationMatrix {
    pub n: usize,
    pub s: Vec<f64>,
}

impl InterpolationMatrix {
    /// `weights[k]` is the weight of `forest.links[k]`.
    pub fn from_forest(objects: &ObjectSet, forest: &Forest, weights: &[f64]) -> Self {
        assert_eq!(weights.len(), forest.links.len());
        let n = objects.n();
        let mut s = vec![0.0; n * n];
        for a in 0..n {
            s[a * n + a] = 1.0;
            for b in a + 1..n {
                if let Some(path) = forest_path(n, objects.links(), &forest.links, a, b) {
                    let w = path
                        .iter()
                        .map(|e| {
                            let k = forest.links.iter().position(|x| x == e).expect("forest link");
                            weights[k]
                        })
                        .fold(f64::INFINITY, f64::min);
                    s[a * n + b] = w;
                    s[b * n + a] = w;
                }
            }
        }
        Self { n, s }
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.s[a * self.n + b]
    }
}
