//! Discrete model of temporal orientability: cells carry a local time axis,
//! edges identify neighbouring frames and may flip the axis. A consistent
//! global sign assignment exists iff every cycle has even flip parity; an
//! odd-parity cycle is the discrete Moebius obstruction.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlipEdge {
    pub a: usize,
    pub b: usize,
    pub flip: bool,
}

/// An undirected cell complex with frame-flip edges.
#[derive(Debug, Clone)]
pub struct OrientationComplex {
    n_cells: usize,
    edges: Vec<FlipEdge>,
    adjacency: Vec<Vec<(usize, bool)>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OrientationError {
    #[error("edge ({0}, {1}) references a cell outside 0..{2}")]
    BadEdge(usize, usize, usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("self-loop edge at cell {0}")]
    SelfLoop(usize),
    #[error("complex is disconnected: cell {0} unreachable from cell {1}; disconnected space-times are not allowed")]
    Disconnected(usize, usize),
    #[error("root cell {0} does not exist (complex has {1} cells)")]
    BadRoot(usize, usize),
    #[error("labeling refused: the assignment is inconsistent")]
    Inconsistent,
    #[error("descriptor parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl OrientationComplex {
    pub fn new(n_cells: usize, edges: Vec<FlipEdge>) -> Result<Self, OrientationError> {
        let mut adjacency = vec![Vec::new(); n_cells];
        let mut seen = std::collections::HashSet::new();
        for e in &edges {
            if e.a >= n_cells || e.b >= n_cells {
                return Err(OrientationError::BadEdge(e.a, e.b, n_cells));
            }
            if e.a == e.b {
                return Err(OrientationError::SelfLoop(e.a));
            }
            let key = (e.a.min(e.b), e.a.max(e.b));
            if !seen.insert(key) {
                return Err(OrientationError::DuplicateEdge(e.a, e.b));
            }
            adjacency[e.a].push((e.b, e.flip));
            adjacency[e.b].push((e.a, e.flip));
        }
        for adj in &mut adjacency {
            adj.sort();
        }
        Ok(Self {
            n_cells,
            edges,
            adjacency,
        })
    }

    /// A cycle of n cells; `flips` lists the flipped edges by index i,
    /// meaning the edge (i, (i+1) mod n).
    pub fn ring(n: usize, flips: &[usize]) -> Result<Self, OrientationError> {
        let edges = (0..n)
            .map(|i| FlipEdge {
                a: i,
                b: (i + 1) % n,
                flip: flips.contains(&i),
            })
            .collect();
        Self::new(n, edges)
    }

    /// An nx-by-nt grid, optionally periodic in either direction; the wrap
    /// edges carry a flip when the corresponding flag is set (a Moebius-in-x
    /// or Moebius-in-time complex).
    #[allow(clippy::too_many_arguments)]
    pub fn grid(
        nx: usize,
        nt: usize,
        periodic_x: bool,
        periodic_t: bool,
        flip_x: bool,
        flip_t: bool,
    ) -> Result<Self, OrientationError> {
        let idx = |ix: usize, it: usize| it * nx + ix;
        let mut edges = Vec::new();
        for it in 0..nt {
            for ix in 0..nx {
                if ix + 1 < nx {
                    edges.push(FlipEdge { a: idx(ix, it), b: idx(ix + 1, it), flip: false });
                } else if periodic_x && nx > 2 {
                    edges.push(FlipEdge { a: idx(ix, it), b: idx(0, it), flip: flip_x });
                }
                if it + 1 < nt {
                    edges.push(FlipEdge { a: idx(ix, it), b: idx(ix, it + 1), flip: false });
                } else if periodic_t && nt > 2 {
                    edges.push(FlipEdge { a: idx(ix, it), b: idx(ix, 0), flip: flip_t });
                }
            }
        }
        Self::new(nx * nt, edges)
    }

    /// Parses the line-oriented descriptor: `cell N` then `edge i j flip={0|1}`
    /// lines. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, OrientationError> {
        let mut n_cells: Option<usize> = None;
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = lineno + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("cell") => {
                    let n = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| OrientationError::Parse {
                            line: lineno,
                            msg: "expected `cell N`".into(),
                        })?;
                    n_cells = Some(n);
                }
                Some("edge") => {
                    let a: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| OrientationError::Parse {
                            line: lineno,
                            msg: "expected `edge i j flip={0|1}`".into(),
                        })?;
                    let b: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| OrientationError::Parse {
                            line: lineno,
                            msg: "expected `edge i j flip={0|1}`".into(),
                        })?;
                    let flip = match parts.next() {
                        Some("flip=0") | None => false,
                        Some("flip=1") => true,
                        Some(other) => {
                            return Err(OrientationError::Parse {
                                line: lineno,
                                msg: format!("unknown edge attribute `{other}`"),
                            })
                        }
                    };
                    edges.push(FlipEdge { a, b, flip });
                }
                Some(other) => {
                    return Err(OrientationError::Parse {
                        line: lineno,
                        msg: format!("unknown directive `{other}`"),
                    })
                }
                None => unreachable!(),
            }
        }
        let n = n_cells.ok_or(OrientationError::Parse {
            line: 0,
            msg: "missing `cell N` directive".into(),
        })?;
        Self::new(n, edges)
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn edges(&self) -> &[FlipEdge] {
        &self.edges
    }
}

/// The result of sign propagation: either a full consistent assignment or a
/// minimal odd-parity witness cycle.
#[derive(Debug, Clone)]
pub struct OrientationAssignment {
    pub signs: Vec<i8>,
    pub consistent: bool,
    /// Present when inconsistent; a closed walk of cells whose flip parity is
    /// odd, minimal in BFS depth (ties broken by smallest cell index).
    pub witness_cycle: Vec<usize>,
}

/// Propagates a sign from the root by breadth-first search; neighbours are
/// explored in cell-index order so the result and the witness are
/// deterministic.
pub fn assign_orientation(
    c: &OrientationComplex,
    root: usize,
    root_sign: i8,
) -> Result<OrientationAssignment, OrientationError> {
    assert!(root_sign == 1 || root_sign == -1, "root sign must be +-1");
    if root >= c.n_cells {
        return Err(OrientationError::BadRoot(root, c.n_cells));
    }
    let mut signs: Vec<i8> = vec![0; c.n_cells];
    let mut parent: Vec<Option<usize>> = vec![None; c.n_cells];
    let mut depth: Vec<usize> = vec![0; c.n_cells];
    signs[root] = root_sign;
    let mut queue = VecDeque::from([root]);
    while let Some(i) = queue.pop_front() {
        for &(j, flip) in &c.adjacency[i] {
            let expected = if flip { -signs[i] } else { signs[i] };
            if signs[j] == 0 {
                signs[j] = expected;
                parent[j] = Some(i);
                depth[j] = depth[i] + 1;
                queue.push_back(j);
            } else if signs[j] != expected {
                let witness = witness_cycle(&parent, i, j);
                return Ok(OrientationAssignment {
                    signs,
                    consistent: false,
                    witness_cycle: witness,
                });
            }
        }
    }
    if let Some(un) = signs.iter().position(|&s| s == 0) {
        return Err(OrientationError::Disconnected(un, root));
    }
    Ok(OrientationAssignment {
        signs,
        consistent: true,
        witness_cycle: Vec::new(),
    })
}

/// Closes the BFS tree paths of the conflicting edge (i, j) at their lowest
/// common ancestor.
fn witness_cycle(parent: &[Option<usize>], i: usize, j: usize) -> Vec<usize> {
    let path_to_root = |mut v: usize| {
        let mut path = vec![v];
        while let Some(p) = parent[v] {
            path.push(p);
            v = p;
        }
        path
    };
    let pi = path_to_root(i);
    let pj = path_to_root(j);
    // Strip the shared tail.
    let mut ci = pi.len();
    let mut cj = pj.len();
    while ci > 0 && cj > 0 && pi[ci - 1] == pj[cj - 1] {
        ci -= 1;
        cj -= 1;
    }
    // i .. lca .. j, closing back to i via the conflict edge.
    let mut cycle = pi[..=ci.min(pi.len() - 1)].to_vec();
    for v in pj[..cj].iter().rev() {
        cycle.push(*v);
    }
    cycle
}

/// Flip parity of a closed walk over the complex; `cycle` lists cells in
/// order, the closing edge is implicit.
pub fn cycle_flip_parity(c: &OrientationComplex, cycle: &[usize]) -> Option<bool> {
    let mut parity = false;
    for i in 0..cycle.len() {
        let (a, b) = (cycle[i], cycle[(i + 1) % cycle.len()]);
        let flip = c.adjacency[a].iter().find(|&&(v, _)| v == b)?.1;
        parity ^= flip;
    }
    Some(parity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    CPlus,
    CMinus,
}

/// Labels, for each cell, the light-cone lobe containing the sampled field
/// vector. `field_sign[i]` says in which local lobe the cell's timelike field
/// vector lies; a lobe agreeing with the global assignment is C+.
/// Flipping the root sign swaps every label globally.
pub fn label_cones(
    assignment: &OrientationAssignment,
    field_sign: &[i8],
) -> Result<Vec<Cone>, OrientationError> {
    if !assignment.consistent {
        return Err(OrientationError::Inconsistent);
    }
    assert_eq!(assignment.signs.len(), field_sign.len());
    Ok(assignment
        .signs
        .iter()
        .zip(field_sign)
        .map(|(&s, &f)| if s == f { Cone::CPlus } else { Cone::CMinus })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_ring_consistent() {
        let c = OrientationComplex::ring(8, &[]).unwrap();
        let a = assign_orientation(&c, 0, 1).unwrap();
        assert!(a.consistent);
        assert!(a.signs.iter().all(|&s| s == 1));
    }

    #[test]
    fn moebius_ring_inconsistent_with_odd_witness() {
        let c = OrientationComplex::ring(8, &[3]).unwrap();
        let a = assign_orientation(&c, 0, 1).unwrap();
        assert!(!a.consistent);
        assert_eq!(a.witness_cycle.len(), 8, "witness is the whole ring");
        assert_eq!(cycle_flip_parity(&c, &a.witness_cycle), Some(true));
    }

    #[test]
    fn two_flip_ring_consistent() {
        let c = OrientationComplex::ring(8, &[1, 5]).unwrap();
        let a = assign_orientation(&c, 0, 1).unwrap();
        assert!(a.consistent);
    }

    #[test]
    fn grid_moebius_in_time() {
        let c = OrientationComplex::grid(3, 3, false, true, false, true).unwrap();
        let a = assign_orientation(&c, 0, 1).unwrap();
        assert!(!a.consistent);
        assert_eq!(cycle_flip_parity(&c, &a.witness_cycle), Some(true));
    }

    #[test]
    fn disconnected_is_an_error() {
        let c = OrientationComplex::new(
            4,
            vec![FlipEdge { a: 0, b: 1, flip: false }, FlipEdge { a: 2, b: 3, flip: false }],
        )
        .unwrap();
        assert!(matches!(
            assign_orientation(&c, 0, 1),
            Err(OrientationError::Disconnected(_, 0))
        ));
    }

    #[test]
    fn global_flip_equivariance() {
        let c = OrientationComplex::ring(6, &[0, 4]).unwrap();
        let a = assign_orientation(&c, 0, 1).unwrap();
        let b = assign_orientation(&c, 0, -1).unwrap();
        assert!(a.consistent && b.consistent);
        for (x, y) in a.signs.iter().zip(&b.signs) {
            assert_eq!(*x, -*y);
        }
        let field = vec![1i8; 6];
        let la = label_cones(&a, &field).unwrap();
        let lb = label_cones(&b, &field).unwrap();
        for (x, y) in la.iter().zip(&lb) {
            assert_ne!(x, y, "labels swap globally");
        }
    }

    #[test]
    fn labeling_refused_when_inconsistent() {
        let c = OrientationComplex::ring(4, &[0]).unwrap();
        let a = assign_orientation(&c, 0, 1).unwrap();
        assert_eq!(
            label_cones(&a, &[1, 1, 1, 1]),
            Err(OrientationError::Inconsistent)
        );
    }

    #[test]
    fn all_plus_field_uniform_labels() {
        let c = OrientationComplex::ring(5, &[]).unwrap();
        let a = assign_orientation(&c, 0, 1).unwrap();
        let labels = label_cones(&a, &[1; 5]).unwrap();
        assert!(labels.iter().all(|&l| l == Cone::CPlus));
    }

    #[test]
    fn descriptor_round_trip_and_errors() {
        let c = OrientationComplex::parse("cell 4\nedge 0 1 flip=0\nedge 1 2 flip=1\nedge 2 3\nedge 3 0 flip=0\n").unwrap();
        assert_eq!(c.n_cells(), 4);
        assert_eq!(c.edges().len(), 4);

        let dup = OrientationComplex::parse("cell 3\nedge 0 1\nedge 1 0\n");
        assert!(matches!(dup, Err(OrientationError::DuplicateEdge(1, 0))));

        let bad = OrientationComplex::parse("cell 3\nedge 0 1 flip=2\n");
        assert!(matches!(bad, Err(OrientationError::Parse { line: 2, .. })));
    }

    #[test]
    fn ring_constructor_shapes() {
        let c = OrientationComplex::ring(4, &[]).unwrap();
        assert_eq!(c.n_cells(), 4);
        assert_eq!(c.edges().len(), 4);
        assert!(c.edges().iter().all(|e| !e.flip));
    }

    /// Exhaustive oracle: enumerate every simple cycle and compare parity
    /// consistency against the BFS verdict.
    fn all_cycles_even(c: &OrientationComplex) -> bool {
        fn dfs(
            c: &OrientationComplex,
            start: usize,
            v: usize,
            visited: &mut Vec<bool>,
            path: &mut Vec<usize>,
            ok: &mut bool,
        ) {
            for &(w, _) in &c.adjacency[v] {
                if w == start && path.len() >= 3 {
                    if cycle_flip_parity(c, path) == Some(true) {
                        *ok = false;
                    }
                } else if !visited[w] && w > start {
                    visited[w] = true;
                    path.push(w);
                    dfs(c, start, w, visited, path, ok);
                    path.pop();
                    visited[w] = false;
                }
            }
        }
        let mut ok = true;
        for start in 0..c.n_cells {
            let mut visited = vec![false; c.n_cells];
            visited[start] = true;
            let mut path = vec![start];
            dfs(c, start, start, &mut visited, &mut path, &mut ok);
        }
        ok
    }

    #[test]
    fn bfs_matches_exhaustive_parity_on_small_complexes() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut connected_checked = 0;
        while connected_checked < 60 {
            let n = rng.gen_range(3..=12);
            let extra = rng.gen_range(0..=n);
            let mut edges: Vec<FlipEdge> = (1..n)
                .map(|i| FlipEdge {
                    a: rng.gen_range(0..i),
                    b: i,
                    flip: rng.gen_bool(0.3),
                })
                .collect();
            for _ in 0..extra {
                let a = rng.gen_range(0..n);
                let b = rng.gen_range(0..n);
                if a != b
                    && !edges
                        .iter()
                        .any(|e| (e.a.min(e.b), e.a.max(e.b)) == (a.min(b), a.max(b)))
                {
                    edges.push(FlipEdge { a, b, flip: rng.gen_bool(0.3) });
                }
            }
            let c = OrientationComplex::new(n, edges).unwrap();
            let verdict = assign_orientation(&c, 0, 1).unwrap();
            assert_eq!(verdict.consistent, all_cycles_even(&c));
            if !verdict.consistent {
                assert_eq!(cycle_flip_parity(&c, &verdict.witness_cycle), Some(true));
            }
            connected_checked += 1;
        }
    }
}
