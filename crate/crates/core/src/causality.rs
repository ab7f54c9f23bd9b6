//! Bipartite causal games, causal bounds and causal-polytope membership.
//!
//! A causal table is a convex mixture of deterministic one-way signalling strategies
//! (`A≺B` or `B≺A`). Bounds are maxima over those vertices; membership is decided by the
//! minimum-norm point of the vertex hull translated by the table.

use nalgebra::{DMatrix, DVector};
use std::collections::HashSet;

use crate::instruments::{unflatten, ProbabilityTable};
use crate::{Error, Result};

/// Per-order cap on enumerated strategies.
pub const DEFAULT_STRATEGY_CAP: usize = 1_000_000;
/// Distance to the causal polytope below which a table counts as causal.
pub const CAUSAL_TOL: f64 = 1e-7;
/// Margin above the bound for a violation.
pub const VIOLATION_TOL: f64 = 1e-9;

/// A bipartite game: uniform or weighted inputs and a win predicate.
///
/// Both `input_dist` and `wins` use the probability-table layout: settings tuples
/// row-major, and within each, outcome tuples row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalGame {
    settings: [usize; 2],
    outcomes: [usize; 2],
    input_dist: Vec<f64>,
    wins: Vec<bool>,
}

impl CausalGame {
    pub fn new(settings: [usize; 2], outcomes: [usize; 2], input_dist: Vec<f64>, wins: Vec<bool>) -> Result<Self> {
        let n_s = settings[0] * settings[1];
        let n_o = outcomes[0] * outcomes[1];
        if n_s == 0 || n_o == 0 {
            return Err(Error::ShapeMismatch("empty alphabet".into()));
        }
        if input_dist.len() != n_s || wins.len() != n_s * n_o {
            return Err(Error::ShapeMismatch(format!(
                "expected {n_s} input weights and {} predicate entries",
                n_s * n_o
            )));
        }
        if input_dist.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::NotNormalized("negative input weight".into()));
        }
        let total: f64 = input_dist.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized(format!("input distribution sums to {total}")));
        }
        Ok(Self {
            settings,
            outcomes,
            input_dist,
            wins,
        })
    }

    /// Uniform inputs with win predicate `win(x, y, a, b)`.
    pub fn uniform(
        settings: [usize; 2],
        outcomes: [usize; 2],
        win: impl Fn(usize, usize, usize, usize) -> bool,
    ) -> Result<Self> {
        let n_s = settings[0] * settings[1];
        let mut wins = Vec::with_capacity(n_s * outcomes[0] * outcomes[1]);
        for x in 0..settings[0] {
            for y in 0..settings[1] {
                for a in 0..outcomes[0] {
                    for b in 0..outcomes[1] {
                        wins.push(win(x, y, a, b));
                    }
                }
            }
        }
        Self::new(settings, outcomes, vec![1.0 / n_s as f64; n_s], wins)
    }

    /// Guess your neighbour's input: win iff `a = y` and `b = x`.
    pub fn gyni() -> Self {
        Self::uniform([2, 2], [2, 2], |x, y, a, b| a == y && b == x).expect("well formed")
    }

    /// Lazy GYNI: a party only has to guess when its own input is 1.
    pub fn lgyni() -> Self {
        Self::uniform([2, 2], [2, 2], |x, y, a, b| x * (a ^ y) == 0 && y * (b ^ x) == 0).expect("well formed")
    }

    /// Bob's setting is `2·dir + y`. For `dir = 0` Bob must output Alice's bit `x`;
    /// for `dir = 1` Alice must output Bob's bit `y`.
    pub fn ocb() -> Self {
        Self::uniform([2, 4], [2, 2], |x, s, a, b| {
            let (dir, y) = (s / 2, s % 2);
            if dir == 0 {
                b == x
            } else {
                a == y
            }
        })
        .expect("well formed")
    }

    /// Always won.
    pub fn trivial(settings: [usize; 2], outcomes: [usize; 2]) -> Result<Self> {
        Self::uniform(settings, outcomes, |_, _, _, _| true)
    }

    pub fn settings(&self) -> [usize; 2] {
        self.settings
    }

    pub fn outcomes(&self) -> [usize; 2] {
        self.outcomes
    }

    pub fn input_dist(&self) -> &[f64] {
        &self.input_dist
    }

    pub fn wins(&self) -> &[bool] {
        &self.wins
    }

    /// Winning `(settings, outcomes)` tuples.
    pub fn winning_tuples(&self) -> Vec<([usize; 2], [usize; 2])> {
        let radices = [self.settings[0], self.settings[1], self.outcomes[0], self.outcomes[1]];
        self.wins
            .iter()
            .enumerate()
            .filter(|(_, &w)| w)
            .map(|(i, _)| {
                let d = unflatten(i, &radices);
                ([d[0], d[1]], [d[2], d[3]])
            })
            .collect()
    }

    /// `Σ p(x,y) · win · P(a,b|x,y)` for a flat table.
    pub fn win_probability(&self, values: &[f64]) -> f64 {
        let n_o = self.outcomes[0] * self.outcomes[1];
        let mut total = 0.0;
        for (s, &px) in self.input_dist.iter().enumerate() {
            let mut row = 0.0;
            for o in 0..n_o {
                if self.wins[s * n_o + o] {
                    row += values[s * n_o + o];
                }
            }
            total += px * row;
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CausalOrder {
    ABeforeB,
    BBeforeA,
}

impl CausalOrder {
    pub fn label(self) -> &'static str {
        match self {
            CausalOrder::ABeforeB => "A<B",
            CausalOrder::BBeforeA => "B<A",
        }
    }
}

/// Deterministic one-way signalling strategy.
///
/// The first party answers `first[x_first]`; the second answers
/// `second[x_first · s_second + x_second]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DeterministicStrategy {
    pub order: CausalOrder,
    pub first: Vec<usize>,
    pub second: Vec<usize>,
}

impl DeterministicStrategy {
    /// Outcomes `(a, b)` on settings `(x, y)`.
    pub fn respond(&self, settings: [usize; 2], x: usize, y: usize) -> (usize, usize) {
        match self.order {
            CausalOrder::ABeforeB => (self.first[x], self.second[x * settings[1] + y]),
            CausalOrder::BBeforeA => (self.second[y * settings[0] + x], self.first[y]),
        }
    }

    /// The 0/1 table in probability-table layout.
    pub fn table(&self, settings: [usize; 2], outcomes: [usize; 2]) -> Vec<f64> {
        let n_o = outcomes[0] * outcomes[1];
        let mut t = vec![0.0; settings[0] * settings[1] * n_o];
        for x in 0..settings[0] {
            for y in 0..settings[1] {
                let (a, b) = self.respond(settings, x, y);
                t[(x * settings[1] + y) * n_o + a * outcomes[1] + b] = 1.0;
            }
        }
        t
    }
}

/// A strategy together with its induced table.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyTable {
    pub strategy: DeterministicStrategy,
    pub table: Vec<f64>,
}

/// Number of deterministic strategies for each order `(A≺B, B≺A)`.
pub fn strategy_counts(settings: [usize; 2], outcomes: [usize; 2]) -> (f64, f64) {
    let count = |first: usize, second: usize| {
        (outcomes[first] as f64).powi(settings[first] as i32)
            * (outcomes[second] as f64).powi((settings[0] * settings[1]) as i32)
    };
    (count(0, 1), count(1, 0))
}

/// Every deterministic one-way strategy table, `A≺B` first, dropping exact duplicates
/// (a table reachable in both orders is kept under `A≺B`).
pub fn enumerate_strategies(game: &CausalGame) -> Result<Vec<StrategyTable>> {
    enumerate_tables(game.settings, game.outcomes, DEFAULT_STRATEGY_CAP)
}

pub fn enumerate_tables(settings: [usize; 2], outcomes: [usize; 2], cap: usize) -> Result<Vec<StrategyTable>> {
    let (n_ab, n_ba) = strategy_counts(settings, outcomes);
    let needed = n_ab.max(n_ba);
    if needed > cap as f64 {
        return Err(Error::EnumerationCap { needed, cap });
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for order in [CausalOrder::ABeforeB, CausalOrder::BBeforeA] {
        let (f, s) = match order {
            CausalOrder::ABeforeB => (0, 1),
            CausalOrder::BBeforeA => (1, 0),
        };
        let n_first = (outcomes[f] as f64).powi(settings[f] as i32) as usize;
        let n_second = (outcomes[s] as f64).powi((settings[0] * settings[1]) as i32) as usize;
        let first_radix = vec![outcomes[f]; settings[f]];
        let second_radix = vec![outcomes[s]; settings[0] * settings[1]];
        for i in 0..n_first {
            let first = unflatten(i, &first_radix);
            for j in 0..n_second {
                let strategy = DeterministicStrategy {
                    order,
                    first: first.clone(),
                    second: unflatten(j, &second_radix),
                };
                let table = strategy.table(settings, outcomes);
                let key: Vec<bool> = table.iter().map(|&v| v > 0.5).collect();
                if seen.insert(key) {
                    out.push(StrategyTable { strategy, table });
                }
            }
        }
    }
    Ok(out)
}

/// Largest winning probability over causal strategies.
pub fn causal_bound(game: &CausalGame) -> Result<f64> {
    Ok(enumerate_strategies(game)?
        .iter()
        .map(|s| game.win_probability(&s.table))
        .fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedStrategy {
    pub strategy: DeterministicStrategy,
    pub weight: f64,
}

/// Outcome of a causal-polytope membership test.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalityVerdict {
    pub causal: bool,
    /// Euclidean distance from the table to the causal polytope.
    pub residual: f64,
    /// Total weight on `A≺B` strategies (including those that signal in neither
    /// direction); present only for causal tables.
    pub q_a_before_b: Option<f64>,
    /// Mixture weights, present only for causal tables.
    pub weights: Vec<WeightedStrategy>,
}

/// Membership of a bipartite table in the causal polytope.
pub fn is_causal(p: &ProbabilityTable) -> Result<CausalityVerdict> {
    if p.parties().len() != 2 {
        return Err(Error::PartyCount {
            expected: 2,
            found: p.parties().len(),
        });
    }
    p.check()?;
    let settings = [p.settings()[0], p.settings()[1]];
    let outcomes = [p.outcomes()[0], p.outcomes()[1]];
    let vertices = enumerate_tables(settings, outcomes, DEFAULT_STRATEGY_CAP)?;
    let target = DVector::from_column_slice(p.values());
    let points: Vec<DVector<f64>> = vertices
        .iter()
        .map(|v| DVector::from_column_slice(&v.table) - &target)
        .collect();
    let (residual, lambda) = min_norm_point(&points);
    let causal = residual < CAUSAL_TOL;
    if !causal {
        return Ok(CausalityVerdict {
            causal,
            residual,
            q_a_before_b: None,
            weights: Vec::new(),
        });
    }
    let weights: Vec<WeightedStrategy> = lambda
        .into_iter()
        .map(|(i, w)| WeightedStrategy {
            strategy: vertices[i].strategy.clone(),
            weight: w,
        })
        .collect();
    let q = weights
        .iter()
        .filter(|w| w.strategy.order == CausalOrder::ABeforeB)
        .map(|w| w.weight)
        .sum();
    Ok(CausalityVerdict {
        causal,
        residual,
        q_a_before_b: Some(q),
        weights,
    })
}

/// Minimum-norm point of `conv(points)` by Wolfe's algorithm.
///
/// Returns the norm and the sparse convex weights `(index, λ)`.
fn min_norm_point(points: &[DVector<f64>]) -> (f64, Vec<(usize, f64)>) {
    const MAJOR_TOL: f64 = 1e-14;
    const MAX_MAJOR: usize = 10_000;
    let scale = points.iter().map(|p| p.norm_squared()).fold(1.0f64, f64::max);
    let start = (0..points.len())
        .min_by(|&i, &j| points[i].norm_squared().total_cmp(&points[j].norm_squared()))
        .expect("at least one point");
    let mut active = vec![start];
    let mut lambda = vec![1.0];
    let mut x = points[start].clone();
    for _ in 0..MAX_MAJOR {
        let xx = x.norm_squared();
        if xx == 0.0 {
            break;
        }
        let (j, xp) = (0..points.len())
            .map(|i| (i, x.dot(&points[i])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty");
        if xx - xp <= MAJOR_TOL * scale || active.contains(&j) {
            break;
        }
        active.push(j);
        lambda.push(0.0);
        loop {
            let alpha = affine_min_norm(points, &active);
            if alpha.iter().all(|&a| a > 1e-15) {
                lambda = alpha;
                break;
            }
            let mut theta = 1.0f64;
            for (l, a) in lambda.iter().zip(&alpha) {
                if *a <= 1e-15 && l - a > 0.0 {
                    theta = theta.min(l / (l - a));
                }
            }
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l += theta * (a - *l);
            }
            let keep: Vec<bool> = lambda.iter().map(|&l| l > 1e-15).collect();
            active = active.iter().zip(&keep).filter(|(_, &k)| k).map(|(&i, _)| i).collect();
            lambda = lambda.iter().zip(&keep).filter(|(_, &k)| k).map(|(&l, _)| l).collect();
            if active.len() <= 1 {
                lambda = vec![1.0; active.len()];
                break;
            }
        }
        let total: f64 = lambda.iter().sum();
        lambda.iter_mut().for_each(|l| *l /= total);
        x = active
            .iter()
            .zip(&lambda)
            .fold(DVector::zeros(x.len()), |acc, (&i, &l)| acc + &points[i] * l);
    }
    (x.norm(), active.into_iter().zip(lambda).collect())
}

/// Weights `α` (summing to 1) of the minimum-norm point of the affine hull of the
/// active points.
fn affine_min_norm(points: &[DVector<f64>], active: &[usize]) -> Vec<f64> {
    let n = active.len();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    for (r, &i) in active.iter().enumerate() {
        for (c, &j) in active.iter().enumerate() {
            m[(r, c)] = points[i].dot(&points[j]);
        }
        m[(r, n)] = 1.0;
        m[(n, r)] = 1.0;
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let sol = match m.clone().lu().solve(&rhs) {
        Some(s) if s.iter().all(|v| v.is_finite()) => s,
        _ => m.svd(true, true).solve(&rhs, 1e-12).expect("SVD solve"),
    };
    sol.rows(0, n).iter().copied().collect()
}

/// Score of a table against a game.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityScore {
    pub value: f64,
    pub bound: f64,
    pub violated: bool,
}

pub fn score_inequality(p: &ProbabilityTable, game: &CausalGame) -> Result<InequalityScore> {
    if p.settings() != game.settings || p.outcomes() != game.outcomes {
        return Err(Error::ShapeMismatch(format!(
            "table has settings {:?} / outcomes {:?}, game expects {:?} / {:?}",
            p.settings(),
            p.outcomes(),
            game.settings,
            game.outcomes
        )));
    }
    let value = game.win_probability(p.values());
    let bound = causal_bound(game)?;
    Ok(InequalityScore {
        value,
        bound,
        violated: value > bound + VIOLATION_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(settings: [usize; 2], outcomes: [usize; 2], values: Vec<f64>) -> ProbabilityTable {
        ProbabilityTable::new(
            vec!["A".into(), "B".into()],
            settings.to_vec(),
            outcomes.to_vec(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn binary_enumeration_counts() {
        assert_eq!(strategy_counts([2, 2], [2, 2]), (64.0, 64.0));
        let tables = enumerate_strategies(&CausalGame::gyni()).unwrap();
        assert!(tables.len() <= 128);
        // tables where the second party ignores the first party's input are shared
        assert_eq!(tables.len(), 112);
    }

    #[test]
    fn trivial_game() {
        let g = CausalGame::trivial([1, 1], [1, 1]).unwrap();
        assert_eq!(enumerate_strategies(&g).unwrap().len(), 1);
        assert_eq!(causal_bound(&g).unwrap(), 1.0);
    }

    #[test]
    fn enumerated_tables_are_one_way() {
        for st in enumerate_strategies(&CausalGame::ocb()).unwrap() {
            let (s, o) = ([2, 4], [2, 2]);
            let t = table(s, o, st.table.clone());
            // the later party's setting never changes the earlier party's marginal
            for x in 0..2 {
                for y in 0..4 {
                    let ma: Vec<f64> = (0..2)
                        .map(|a| t.get(&[x, y], &[a, 0]) + t.get(&[x, y], &[a, 1]))
                        .collect();
                    let mb: Vec<f64> = (0..2)
                        .map(|b| t.get(&[x, y], &[0, b]) + t.get(&[x, y], &[1, b]))
                        .collect();
                    match st.strategy.order {
                        CausalOrder::ABeforeB => {
                            let ma0: Vec<f64> = (0..2)
                                .map(|a| t.get(&[x, 0], &[a, 0]) + t.get(&[x, 0], &[a, 1]))
                                .collect();
                            assert_eq!(ma, ma0);
                        }
                        CausalOrder::BBeforeA => {
                            let mb0: Vec<f64> = (0..2)
                                .map(|b| t.get(&[0, y], &[0, b]) + t.get(&[0, y], &[1, b]))
                                .collect();
                            assert_eq!(mb, mb0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn known_bounds() {
        assert_eq!(causal_bound(&CausalGame::gyni()).unwrap(), 0.5);
        assert_eq!(causal_bound(&CausalGame::lgyni()).unwrap(), 0.75);
        assert_eq!(causal_bound(&CausalGame::ocb()).unwrap(), 0.75);
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            enumerate_tables([4, 4], [2, 2], DEFAULT_STRATEGY_CAP),
            Err(Error::EnumerationCap { .. })
        ));
    }

    #[test]
    fn uniform_table_is_causal() {
        let v = is_causal(&table([2, 2], [2, 2], vec![0.25; 16])).unwrap();
        assert!(v.causal);
        assert!(v.residual < 1e-10);
        let total: f64 = v.weights.iter().map(|w| w.weight).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(v.weights.iter().all(|w| w.weight >= 0.0));
    }

    #[test]
    fn vertices_are_causal() {
        for st in enumerate_strategies(&CausalGame::gyni()).unwrap() {
            let v = is_causal(&table([2, 2], [2, 2], st.table.clone())).unwrap();
            assert!(v.residual < 1e-10);
        }
    }

    #[test]
    fn decomposition_reconstructs_table() {
        let tables = enumerate_strategies(&CausalGame::gyni()).unwrap();
        let (s, o) = ([2, 2], [2, 2]);
        let mix: Vec<f64> = (0..16)
            .map(|k| 0.3 * tables[3].table[k] + 0.5 * tables[70].table[k] + 0.2 * tables[100].table[k])
            .collect();
        let v = is_causal(&table(s, o, mix.clone())).unwrap();
        assert!(v.causal);
        let mut rebuilt = [0.0; 16];
        for w in &v.weights {
            for (r, t) in rebuilt.iter_mut().zip(w.strategy.table(s, o)) {
                *r += w.weight * t;
            }
        }
        let err = rebuilt
            .iter()
            .zip(&mix)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err <= v.residual + 1e-12);
    }

    #[test]
    fn pr_box_gyni_table_is_not_causal() {
        // perfect GYNI winning: a = y, b = x
        let mut values = vec![0.0; 16];
        for x in 0..2 {
            for y in 0..2 {
                values[(x * 2 + y) * 4 + y * 2 + x] = 1.0;
            }
        }
        let t = table([2, 2], [2, 2], values);
        let v = is_causal(&t).unwrap();
        assert!(!v.causal);
        assert!(v.residual > 1e-3);
        assert!(v.q_a_before_b.is_none());
        let score = score_inequality(&t, &CausalGame::gyni()).unwrap();
        assert_eq!(score.value, 1.0);
        assert!(score.violated);
    }

    #[test]
    fn unnormalized_table_is_rejected() {
        assert!(matches!(
            is_causal(&table([2, 2], [2, 2], vec![0.3; 16])),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn shape_mismatch_in_scoring() {
        let t = table([2, 2], [2, 2], vec![0.25; 16]);
        assert!(matches!(
            score_inequality(&t, &CausalGame::ocb()),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
