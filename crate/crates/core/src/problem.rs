//! Ising / Max-Cut problem representation.
//!
//! A [`CouplingMatrix`] stores `J = -W`, where `W` is the weighted adjacency
//! matrix of the graph. With that convention the Ising energy `-xᵀJx` and the
//! cut value `¼(xᵀJx - Σᵢⱼ Jᵢⱼ)` are tied together and the maximum of the cut
//! value equals the maximum cut of the graph.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest instance `brute_force_max_cut` agrees to enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 24;

/// Dense symmetric coupling matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    j: Array2<f64>,
    total: f64,
}

/// One undirected edge in graph (adjacency) terms, `weight = -J[i][j]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

impl CouplingMatrix {
    /// Builds `J = -W` from a list of graph edges with 0-based indices.
    pub fn from_edges(n: usize, edges: &[Edge]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("node count must be positive".into()));
        }
        let mut j = Array2::zeros((n, n));
        let mut seen = HashSet::with_capacity(edges.len());
        for e in edges {
            if e.i >= n || e.j >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({}, {}) out of range for n = {n}",
                    e.i, e.j
                )));
            }
            if e.i == e.j {
                return Err(Error::InvalidArgument(format!("self-loop at node {}", e.i)));
            }
            if !e.weight.is_finite() {
                return Err(Error::InvalidArgument("non-finite edge weight".into()));
            }
            if !seen.insert((e.i.min(e.j), e.i.max(e.j))) {
                return Err(Error::InvalidArgument(format!("duplicate edge ({}, {})", e.i, e.j)));
            }
            j[[e.i, e.j]] = -e.weight;
            j[[e.j, e.i]] = -e.weight;
        }
        Ok(Self::from_valid(j))
    }

    /// Wraps an explicit `J`; it must be square, symmetric and zero on the diagonal.
    pub fn from_dense(j: Array2<f64>) -> Result<Self> {
        let (rows, cols) = j.dim();
        if rows != cols {
            return Err(Error::DimensionMismatch {
                expected: rows,
                actual: cols,
            });
        }
        if rows == 0 {
            return Err(Error::InvalidArgument("node count must be positive".into()));
        }
        for r in 0..rows {
            if j[[r, r]] != 0.0 {
                return Err(Error::InvalidArgument(format!("nonzero diagonal at {r}")));
            }
            for c in (r + 1)..rows {
                if j[[r, c]] != j[[c, r]] || !j[[r, c]].is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "matrix not symmetric/finite at ({r}, {c})"
                    )));
                }
            }
        }
        Ok(Self::from_valid(j))
    }

    fn from_valid(j: Array2<f64>) -> Self {
        let total = j.sum();
        Self { j, total }
    }

    pub fn n(&self) -> usize {
        self.j.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.j.view()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.j[[i, j]]
    }

    /// `Σᵢⱼ Jᵢⱼ`
    pub fn total(&self) -> f64 {
        self.total
    }

    /// `max_i Σ_j |J[i][j]|`
    pub fn row_sum_norm(&self) -> f64 {
        self.j
            .rows()
            .into_iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.j.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Upper-triangle edges in graph terms, ordered by `(i, j)`.
    pub fn edges(&self) -> Vec<Edge> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = self.j[[i, j]];
                if v != 0.0 {
                    out.push(Edge { i, j, weight: -v });
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        let n = self.n();
        (0..n)
            .map(|i| ((i + 1)..n).filter(|&j| self.j[[i, j]] != 0.0).count())
            .sum()
    }

    /// Applies a node relabeling: node `i` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        if perm.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: perm.len(),
            });
        }
        let mut j = Array2::zeros((n, n));
        for r in 0..n {
            for c in 0..n {
                j[[perm[r], perm[c]]] = self.j[[r, c]];
            }
        }
        Self::from_dense(j)
    }
}

/// A vector of ±1 spins.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfiguration(Vec<i8>);

impl SpinConfiguration {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(pos) = spins.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument(format!(
                "spin {pos} is {} (expected ±1)",
                spins[pos]
            )));
        }
        Ok(Self(spins))
    }

    pub fn all_up(n: usize) -> Self {
        Self(vec![1; n])
    }

    /// Elementwise sign with `sign(0) = +1`.
    pub fn from_amplitudes<'a>(amplitudes: impl IntoIterator<Item = &'a f64>) -> Self {
        Self(
            amplitudes
                .into_iter()
                .map(|&c| if c < 0.0 { -1 } else { 1 })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    pub fn flipped(&self) -> Self {
        Self(self.0.iter().map(|s| -s).collect())
    }
}

/// `xᵀJx` for a ±1 vector.
fn quadratic_form(matrix: &CouplingMatrix, x: &SpinConfiguration) -> Result<f64> {
    let n = matrix.n();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: x.len(),
        });
    }
    let s = x.spins();
    let mut acc = 0.0;
    for (i, row) in matrix.j.rows().into_iter().enumerate() {
        let field: f64 = row
            .iter()
            .zip(s)
            .map(|(&v, &sj)| v * f64::from(sj))
            .sum();
        acc += f64::from(s[i]) * field;
    }
    Ok(acc)
}

/// `C(J, x) = ¼(xᵀJx - Σᵢⱼ Jᵢⱼ)`
pub fn cut_value(matrix: &CouplingMatrix, x: &SpinConfiguration) -> Result<f64> {
    Ok(0.25 * (quadratic_form(matrix, x)? - matrix.total()))
}

/// `-xᵀJx`
pub fn ising_energy(matrix: &CouplingMatrix, x: &SpinConfiguration) -> Result<f64> {
    Ok(-quadratic_form(matrix, x)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Every edge has weight 1.
    Unit,
    /// Every edge has weight +1 or -1 with equal probability.
    Signed,
}

impl std::str::FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(Self::Unit),
            "signed" => Ok(Self::Signed),
            other => Err(Error::InvalidArgument(format!("unknown weight mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for WeightMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Unit => "unit",
            Self::Signed => "signed",
        })
    }
}

/// Samples a G(n, p) graph and returns its coupling matrix.
pub fn generate_erdos_renyi(
    n: usize,
    connect_prob: f64,
    weight_mode: WeightMode,
    seed: u64,
) -> Result<CouplingMatrix> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2, got {n}")));
    }
    if !(0.0..=1.0).contains(&connect_prob) {
        return Err(Error::InvalidArgument(format!(
            "connection probability {connect_prob} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut j = Array2::zeros((n, n));
    for a in 0..n {
        for b in (a + 1)..n {
            if rng.random::<f64>() < connect_prob {
                let w = match weight_mode {
                    WeightMode::Unit => 1.0,
                    WeightMode::Signed => {
                        if rng.random::<bool>() {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                };
                j[[a, b]] = -w;
                j[[b, a]] = -w;
            }
        }
    }
    Ok(CouplingMatrix::from_valid(j))
}

/// Exhaustive maximum cut. The last spin is pinned to +1 since `x` and `-x`
/// cut the same edges; the remaining `2^(n-1)` patterns are walked in Gray
/// code order with incrementally maintained local fields.
pub fn brute_force_max_cut(matrix: &CouplingMatrix) -> Result<(SpinConfiguration, f64)> {
    let n = matrix.n();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let j = &matrix.j;
    let mut x = vec![1i8; n];
    // field[i] = Σ_k J[i][k] x[k]
    let mut field: Vec<f64> = j.rows().into_iter().map(|r| r.sum()).collect();
    let mut quad: f64 = field.iter().sum();
    let mut best_quad = quad;
    let mut best = x.clone();

    let free = n - 1;
    for step in 1u64..(1u64 << free) {
        let k = step.trailing_zeros() as usize;
        let xk = f64::from(x[k]);
        // flipping x_k changes xᵀJx by -4 x_k field_k (zero diagonal)
        quad -= 4.0 * xk * field[k];
        x[k] = -x[k];
        let delta = -2.0 * xk;
        for (f, &jk) in field.iter_mut().zip(j.column(k).iter()) {
            *f += delta * jk;
        }
        if quad > best_quad {
            best_quad = quad;
            best.copy_from_slice(&x);
        }
    }
    let best = SpinConfiguration(best);
    let value = cut_value(matrix, &best)?;
    Ok((best, value))
}

/// A named Gset-format instance.
#[derive(Debug, Clone)]
pub struct GsetInstance {
    pub name: String,
    pub matrix: CouplingMatrix,
    pub best_known_cut: Option<i64>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses the Gset text layout: a header `n m` followed by `m` lines `i j w`
/// with 1-based node indices. Blank lines are ignored.
pub fn parse_gset(text: &str) -> Result<GsetInstance> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(idx, l)| (idx + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 2 {
        return Err(parse_err(hline, "header must be `n m`"));
    }
    let n: usize = head[0]
        .parse()
        .map_err(|_| parse_err(hline, format!("bad node count {:?}", head[0])))?;
    let m: usize = head[1]
        .parse()
        .map_err(|_| parse_err(hline, format!("bad edge count {:?}", head[1])))?;
    if n == 0 {
        return Err(parse_err(hline, "node count must be positive"));
    }

    let mut edges = Vec::with_capacity(m);
    let mut seen = HashSet::with_capacity(m);
    for (lineno, line) in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 3 {
            return Err(parse_err(lineno, "edge line must be `i j w`"));
        }
        let index = |s: &str| -> Result<usize> {
            let v: usize = s
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad node index {s:?}")))?;
            if v == 0 || v > n {
                return Err(parse_err(lineno, format!("node index {v} outside [1, {n}]")));
            }
            Ok(v - 1)
        };
        let i = index(tok[0])?;
        let j = index(tok[1])?;
        let weight: f64 = tok[2]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad weight {:?}", tok[2])))?;
        if !weight.is_finite() {
            return Err(parse_err(lineno, "non-finite weight"));
        }
        if i == j {
            return Err(parse_err(lineno, format!("self-loop at node {}", i + 1)));
        }
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(parse_err(
                lineno,
                format!("duplicate edge ({}, {})", i + 1, j + 1),
            ));
        }
        if edges.len() == m {
            return Err(parse_err(lineno, format!("more than {m} edges declared in header")));
        }
        edges.push(Edge { i, j, weight });
    }
    if edges.len() != m {
        return Err(parse_err(
            text.lines().count().max(1),
            format!("header declares {m} edges, found {}", edges.len()),
        ));
    }
    Ok(GsetInstance {
        name: String::new(),
        matrix: CouplingMatrix::from_edges(n, &edges)?,
        best_known_cut: None,
    })
}

/// Reads a Gset file; the instance is named after the file stem and picks up
/// the shipped best-known value for G1–G10.
pub fn read_gset(path: &Path) -> Result<GsetInstance> {
    let text = std::fs::read_to_string(path)?;
    let mut inst = parse_gset(&text)?;
    inst.name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    inst.best_known_cut = best_known_cut(&inst.name);
    Ok(inst)
}

fn format_weight(w: f64) -> String {
    if w.fract() == 0.0 && w.abs() < 1e15 {
        format!("{}", w as i64)
    } else {
        format!("{w}")
    }
}

/// Serializes back to the Gset layout (edges in `(i, j)` order, `i < j`).
pub fn to_gset_string(matrix: &CouplingMatrix) -> String {
    let edges = matrix.edges();
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", matrix.n(), edges.len());
    for e in edges {
        let _ = writeln!(out, "{} {} {}", e.i + 1, e.j + 1, format_weight(e.weight));
    }
    out
}

const BEST_KNOWN: &str = include_str!("../data/gset_best_known.csv");

/// Best-known cut values shipped with the crate, as `(name, cut)` pairs.
pub fn best_known_table() -> Vec<(String, i64)> {
    BEST_KNOWN
        .lines()
        .skip(1)
        .filter_map(|l| {
            let (name, v) = l.split_once(',')?;
            Some((name.trim().to_string(), v.trim().parse().ok()?))
        })
        .collect()
}

pub fn best_known_cut(name: &str) -> Option<i64> {
    best_known_table()
        .into_iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, v)| v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn single_edge() -> CouplingMatrix {
        parse_gset("2 1\n1 2 1").unwrap().matrix
    }

    fn spins(v: &[i8]) -> SpinConfiguration {
        SpinConfiguration::new(v.to_vec()).unwrap()
    }

    fn unit_graph(n: usize, pairs: &[(usize, usize)]) -> CouplingMatrix {
        let edges: Vec<Edge> = pairs
            .iter()
            .map(|&(i, j)| Edge { i, j, weight: 1.0 })
            .collect();
        CouplingMatrix::from_edges(n, &edges).unwrap()
    }

    /// Plain enumeration over all 2^n patterns, used to check the Gray-code walk.
    fn naive_max_cut(m: &CouplingMatrix) -> f64 {
        let n = m.n();
        (0u32..(1 << n))
            .map(|mask| {
                let x: Vec<i8> = (0..n).map(|b| if mask >> b & 1 == 1 { -1 } else { 1 }).collect();
                cut_value(m, &SpinConfiguration(x)).unwrap()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn parses_single_edge() {
        let inst = parse_gset("2 1\n1 2 1").unwrap();
        assert_eq!(inst.matrix.n(), 2);
        assert_eq!(inst.matrix.get(0, 1), -1.0);
        assert_eq!(inst.matrix.get(1, 0), -1.0);
        assert_eq!(inst.matrix.get(0, 0), 0.0);
    }

    #[test]
    fn parses_triangle() {
        let m = parse_gset("3 3\n1 2 1\n2 3 1\n1 3 1\n").unwrap().matrix;
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 0.0 } else { -1.0 };
                assert_eq!(m.get(i, j), expected);
            }
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases = [
            ("2 1\n1 2", 2),
            ("2 1\n1 1 1", 2),
            ("3 2\n1 2 1\n2 1 1", 3),
            ("2 1\n1 3 1", 2),
            ("2 1\n0 2 1", 2),
            ("2 x\n1 2 1", 1),
            ("3 2\n1 2 1\n2 3 z", 3),
        ];
        for (text, line) in cases {
            match parse_gset(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn parse_rejects_count_mismatch() {
        assert!(matches!(parse_gset("3 3\n1 2 1\n2 3 1"), Err(Error::Parse { .. })));
        assert!(matches!(parse_gset("3 1\n1 2 1\n2 3 1"), Err(Error::Parse { .. })));
        assert!(matches!(parse_gset(""), Err(Error::Parse { .. })));
    }

    #[test]
    fn cut_and_energy_of_single_edge() {
        let m = single_edge();
        assert_eq!(cut_value(&m, &spins(&[1, -1])).unwrap(), 1.0);
        assert_eq!(cut_value(&m, &spins(&[1, 1])).unwrap(), 0.0);
        assert_eq!(ising_energy(&m, &spins(&[1, -1])).unwrap(), -2.0);
    }

    #[test]
    fn zero_matrix_has_zero_energy() {
        let m = CouplingMatrix::from_dense(Array2::zeros((5, 5))).unwrap();
        assert_eq!(ising_energy(&m, &spins(&[1, -1, 1, 1, -1])).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let m = single_edge();
        assert!(matches!(
            cut_value(&m, &spins(&[1, 1, 1])),
            Err(Error::DimensionMismatch { expected: 2, actual: 3 })
        ));
        assert!(ising_energy(&m, &spins(&[1])).is_err());
    }

    #[test]
    fn spin_configuration_rejects_non_spins() {
        assert!(SpinConfiguration::new(vec![1, 0, -1]).is_err());
        assert_eq!(
            SpinConfiguration::from_amplitudes(&[0.0, -0.1, 0.3]).spins(),
            &[1, -1, 1]
        );
    }

    #[test]
    fn energy_cut_identity_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in 0..20 {
            let n = rng.random_range(2..30);
            let m = generate_erdos_renyi(n, 0.4, WeightMode::Signed, k).unwrap();
            let x = SpinConfiguration(
                (0..n)
                    .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                    .collect(),
            );
            let c = cut_value(&m, &x).unwrap();
            let e = ising_energy(&m, &x).unwrap();
            assert!((c - 0.25 * (-e - m.total())).abs() <= 1e-12);
        }
    }

    #[test]
    fn generator_edge_cases() {
        let zero = generate_erdos_renyi(6, 0.0, WeightMode::Unit, 1).unwrap();
        assert_eq!(zero.edge_count(), 0);
        let full = generate_erdos_renyi(4, 1.0, WeightMode::Unit, 1).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(full.get(i, j), if i == j { 0.0 } else { -1.0 });
            }
        }
        assert!(generate_erdos_renyi(4, 1.5, WeightMode::Unit, 1).is_err());
        assert!(generate_erdos_renyi(4, f64::NAN, WeightMode::Unit, 1).is_err());
        assert!(generate_erdos_renyi(1, 0.5, WeightMode::Unit, 1).is_err());
        assert_eq!(
            generate_erdos_renyi(30, 0.2, WeightMode::Signed, 9).unwrap(),
            generate_erdos_renyi(30, 0.2, WeightMode::Signed, 9).unwrap()
        );
    }

    #[test]
    fn generator_edge_count_matches_binomial() {
        // 4950 pairs at p = 0.06: mean 297, per-seed sd sqrt(4950·0.06·0.94)
        let seeds = 1000;
        let counts: Vec<f64> = (0..seeds)
            .map(|s| generate_erdos_renyi(100, 0.06, WeightMode::Unit, s).unwrap().edge_count() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / seeds as f64;
        let se = (4950.0 * 0.06 * 0.94f64).sqrt() / (seeds as f64).sqrt();
        assert!((mean - 297.0).abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn signed_generator_is_roughly_balanced() {
        let m = generate_erdos_renyi(200, 0.1, WeightMode::Signed, 3).unwrap();
        let edges = m.edges();
        let neg = edges.iter().filter(|e| e.weight < 0.0).count() as f64;
        let frac = neg / edges.len() as f64;
        assert!((frac - 0.5).abs() < 0.05, "{frac}");
        assert!(edges.iter().all(|e| e.weight.abs() == 1.0));
    }

    #[test]
    fn brute_force_small_graphs() {
        assert_eq!(brute_force_max_cut(&single_edge()).unwrap().1, 1.0);
        let triangle = unit_graph(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(brute_force_max_cut(&triangle).unwrap().1, 2.0);
        let square = unit_graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let (x, v) = brute_force_max_cut(&square).unwrap();
        assert_eq!(v, 4.0);
        assert_eq!(cut_value(&square, &x).unwrap(), 4.0);
    }

    #[test]
    fn brute_force_refuses_large_instances() {
        let m = generate_erdos_renyi(25, 0.1, WeightMode::Unit, 0).unwrap();
        assert!(matches!(brute_force_max_cut(&m), Err(Error::TooLarge { n: 25, .. })));
    }

    #[test]
    fn brute_force_matches_plain_enumeration() {
        for seed in 0..8 {
            let m = generate_erdos_renyi(10, 0.4, WeightMode::Signed, seed).unwrap();
            let (x, v) = brute_force_max_cut(&m).unwrap();
            assert_eq!(v, naive_max_cut(&m));
            assert_eq!(cut_value(&m, &x).unwrap(), v);
        }
    }

    #[test]
    fn best_known_values_ship_for_g1_to_g10() {
        let table = best_known_table();
        assert_eq!(table.len(), 10);
        assert_eq!(best_known_cut("G1"), Some(11624));
        assert_eq!(best_known_cut("G9"), Some(2054));
        assert_eq!(best_known_cut("G10"), Some(2000));
        assert_eq!(best_known_cut("G11"), None);
    }

    #[test]
    fn permutation_preserves_cut_structure() {
        let m = generate_erdos_renyi(8, 0.5, WeightMode::Unit, 5).unwrap();
        let p = m.permuted(&[3, 1, 0, 7, 6, 2, 5, 4]).unwrap();
        assert_eq!(brute_force_max_cut(&m).unwrap().1, brute_force_max_cut(&p).unwrap().1);
        assert_eq!(m.edge_count(), p.edge_count());
    }

    proptest! {
        #[test]
        fn gset_round_trip(n in 2usize..25, p in 0.0f64..1.0, seed in any::<u64>(), signed in any::<bool>()) {
            let mode = if signed { WeightMode::Signed } else { WeightMode::Unit };
            let m = generate_erdos_renyi(n, p, mode, seed).unwrap();
            let back = parse_gset(&to_gset_string(&m)).unwrap().matrix;
            prop_assert_eq!(back, m);
        }

        #[test]
        fn cut_is_flip_symmetric_and_bounded(n in 2usize..14, seed in any::<u64>(), bits in any::<u32>()) {
            let m = generate_erdos_renyi(n, 0.5, WeightMode::Unit, seed).unwrap();
            let x = SpinConfiguration((0..n).map(|b| if bits >> b & 1 == 1 { -1 } else { 1 }).collect());
            let c = cut_value(&m, &x).unwrap();
            prop_assert_eq!(c, cut_value(&m, &x.flipped()).unwrap());
            prop_assert!(c >= 0.0 && c.fract() == 0.0 && c <= m.edge_count() as f64);
        }

        #[test]
        fn brute_force_dominates_random_spins(seed in 0u64..500) {
            let m = generate_erdos_renyi(12, 0.35, WeightMode::Signed, seed).unwrap();
            let (_, best) = brute_force_max_cut(&m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            for _ in 0..100 {
                let x = SpinConfiguration((0..12).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect());
                prop_assert!(best >= cut_value(&m, &x).unwrap());
            }
        }
    }
}
