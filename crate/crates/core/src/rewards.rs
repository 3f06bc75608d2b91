//! Leaderboard and terminal rewards.
//!
//! Both reward schemes compare an episode's cut against the `q`-th percentile
//! `C^q` of a leaderboard holding the last `P` cut values. The board is updated
//! with the current batch *before* the percentile is taken.
//!
//! * R2: `+1` above `C^q`, `-1` below, a fair coin on ties.
//! * R3: `+q/100` above, `-(1 - q/100)` below, and on ties the value `r̄` that
//!   makes the mean reward over the board window exactly zero.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Leaderboard {
    capacity: usize,
    values: VecDeque<f64>,
}

impl Leaderboard {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("leaderboard capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            values: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Appends a value, evicting the oldest one when full.
    pub fn push(&mut self, value: f64) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(value);
    }

    pub fn extend(&mut self, values: &[f64]) {
        for &v in values {
            self.push(v);
        }
    }

    /// Oldest first.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }

    /// Nearest-rank percentile: the `⌈(q/100)·len⌉`-th smallest value.
    pub fn percentile(&self, q: f64) -> Result<f64> {
        if self.values.is_empty() {
            return Err(Error::EmptyLeaderboard);
        }
        let mut sorted: Vec<f64> = self.values.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
        Ok(sorted[rank.clamp(1, sorted.len()) - 1])
    }

    /// `position,cut` rows, oldest entry first.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("position,cut\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{i},{v}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardScheme {
    Ranked,
    RescaledRanked,
}

impl std::str::FromStr for RewardScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "r2" => Ok(Self::Ranked),
            "r3" => Ok(Self::RescaledRanked),
            other => Err(Error::InvalidArgument(format!("unknown reward scheme {other:?}"))),
        }
    }
}

impl std::fmt::Display for RewardScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ranked => "r2",
            Self::RescaledRanked => "r3",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    /// Percentile level on the 0–100 scale.
    pub q: f64,
    pub scheme: RewardScheme,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            q: 99.0,
            scheme: RewardScheme::RescaledRanked,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 100.0) {
            return Err(Error::InvalidArgument(format!("percentile {} outside (0, 100)", self.q)));
        }
        Ok(())
    }
}

pub fn percentile(board: &Leaderboard, q: f64) -> Result<f64> {
    board.percentile(q)
}

pub fn r2_reward<R: Rng + ?Sized>(cut: f64, threshold: f64, rng: &mut R) -> f64 {
    if cut > threshold {
        1.0
    } else if cut < threshold {
        -1.0
    } else if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Tie reward that zeroes `n₊·q/100 − n₋·(1 − q/100) + n₀·r̄`; zero when there are no ties.
pub fn tie_reward(n_above: usize, n_below: usize, n_tie: usize, q: f64) -> f64 {
    if n_tie == 0 {
        return 0.0;
    }
    (n_below as f64 * (1.0 - q / 100.0) - n_above as f64 * (q / 100.0)) / n_tie as f64
}

/// The R3 reward function for one board snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaledRankedRule {
    pub threshold: f64,
    pub above: f64,
    pub below: f64,
    pub tie: f64,
    pub n_above: usize,
    pub n_below: usize,
    pub n_tie: usize,
}

impl RescaledRankedRule {
    pub fn from_board(board: &Leaderboard, q: f64) -> Result<Self> {
        let threshold = board.percentile(q)?;
        let above = q / 100.0;
        let below = -(1.0 - q / 100.0);
        let (mut n_above, mut n_below, mut n_tie) = (0, 0, 0);
        for v in board.values() {
            if v > threshold {
                n_above += 1;
            } else if v < threshold {
                n_below += 1;
            } else {
                n_tie += 1;
            }
        }
        let tie = tie_reward(n_above, n_below, n_tie, q);
        Ok(Self {
            threshold,
            above,
            below,
            tie,
            n_above,
            n_below,
            n_tie,
        })
    }

    pub fn reward(&self, cut: f64) -> f64 {
        if cut > self.threshold {
            self.above
        } else if cut < self.threshold {
            self.below
        } else {
            self.tie
        }
    }
}

/// R3 rewards for a batch against a board that already contains it.
pub fn r3_rewards(batch_cuts: &[f64], board: &Leaderboard, q: f64) -> Result<Vec<f64>> {
    let rule = RescaledRankedRule::from_board(board, q)?;
    Ok(batch_cuts.iter().map(|&c| rule.reward(c)).collect())
}

/// Terminal rewards for one batch plus the percentile bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardOutcome {
    pub rewards: Vec<f64>,
    pub percentile: f64,
    /// Fraction of the batch strictly above the percentile.
    pub fraction_above: f64,
}

/// Inserts the batch into the board, then scores every episode.
pub fn assign_rewards<R: Rng + ?Sized>(
    batch_cuts: &[f64],
    board: &mut Leaderboard,
    config: &RewardConfig,
    rng: &mut R,
) -> Result<RewardOutcome> {
    config.validate()?;
    board.extend(batch_cuts);
    let threshold = board.percentile(config.q)?;
    let rewards = match config.scheme {
        RewardScheme::Ranked => batch_cuts
            .iter()
            .map(|&c| r2_reward(c, threshold, rng))
            .collect(),
        RewardScheme::RescaledRanked => r3_rewards(batch_cuts, board, config.q)?,
    };
    let above = batch_cuts.iter().filter(|&&c| c > threshold).count();
    Ok(RewardOutcome {
        rewards,
        percentile: threshold,
        fraction_above: above as f64 / batch_cuts.len().max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn board(values: &[f64], capacity: usize) -> Leaderboard {
        let mut b = Leaderboard::new(capacity).unwrap();
        b.extend(values);
        b
    }

    #[test]
    fn ring_buffer_evicts_oldest() {
        let b = board(&[1.0, 2.0, 3.0, 4.0, 5.0], 3);
        assert_eq!(b.values().collect::<Vec<_>>(), vec![3.0, 4.0, 5.0]);
        assert!(Leaderboard::new(0).is_err());
    }

    #[test]
    fn nearest_rank_percentile() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(board(&values, 100).percentile(99.0).unwrap(), 99.0);
        assert_eq!(board(&[7.0; 10], 10).percentile(99.0).unwrap(), 7.0);
        assert_eq!(board(&[3.5], 10).percentile(1.0).unwrap(), 3.5);
        assert_eq!(board(&[3.5], 10).percentile(99.0).unwrap(), 3.5);
        assert!(matches!(Leaderboard::new(4).unwrap().percentile(50.0), Err(Error::EmptyLeaderboard)));
    }

    #[test]
    fn r2_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(r2_reward(11.0, 10.0, &mut rng), 1.0);
        assert_eq!(r2_reward(9.0, 10.0, &mut rng), -1.0);
        let draws = 10_000;
        let sum: f64 = (0..draws).map(|_| r2_reward(10.0, 10.0, &mut rng)).sum();
        let mean = sum / draws as f64;
        // each draw has variance 1
        assert!(mean.abs() <= 3.0 / (draws as f64).sqrt(), "{mean}");
    }

    #[test]
    fn r3_tie_reward_from_counts() {
        let r = tie_reward(2, 93, 5, 99.0);
        assert!((r - (-0.21)).abs() < 1e-12, "{r}");
        let total = 2.0 * 0.99 - 93.0 * 0.01 + 5.0 * r;
        assert!(total.abs() < 1e-12);
        assert_eq!(tie_reward(3, 4, 0, 99.0), 0.0);
    }

    #[test]
    fn r3_rule_on_window() {
        // 193 below, 5 at the 99th percentile, 2 above
        let mut values = vec![10.0; 193];
        values.extend([20.0; 5]);
        values.extend([30.0, 31.0]);
        let b = board(&values, 200);
        let rule = RescaledRankedRule::from_board(&b, 99.0).unwrap();
        assert_eq!(rule.threshold, 20.0);
        assert_eq!((rule.n_above, rule.n_below, rule.n_tie), (2, 193, 5));
        let total: f64 = b.values().map(|v| rule.reward(v)).sum();
        assert!(total.abs() < 1e-12);
        assert!((rule.reward(31.0) - 0.99).abs() < 1e-15);
        assert!((rule.reward(10.0) + 0.01).abs() < 1e-15);
    }

    #[test]
    fn r3_all_equal_window_gives_zero() {
        let b = board(&[5.0; 64], 64);
        assert_eq!(r3_rewards(&[5.0; 64], &b, 99.0).unwrap(), vec![0.0; 64]);
    }

    #[test]
    fn assign_rewards_inserts_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = Leaderboard::new(5).unwrap();
        let out = assign_rewards(&[4.0], &mut b, &RewardConfig::default(), &mut rng).unwrap();
        assert_eq!(out.rewards, vec![0.0]);
        assert_eq!(b.len(), 1);

        let mut b = board(&[1.0, 2.0, 3.0, 2.0], 5);
        let out = assign_rewards(&[9.0], &mut b, &RewardConfig::default(), &mut rng).unwrap();
        // 9 is itself the 99th percentile of {1,2,3,2,9}, so it ties
        assert_eq!(out.percentile, 9.0);

        let mut b = board(&vec![1.0; 200], 500);
        let out = assign_rewards(&[9.0], &mut b, &RewardConfig::default(), &mut rng).unwrap();
        assert_eq!(out.percentile, 1.0);
        assert!((out.rewards[0] - 0.99).abs() < 1e-15);
        assert_eq!(out.fraction_above, 1.0);
    }

    #[test]
    fn invalid_percentile_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = Leaderboard::new(5).unwrap();
        let cfg = RewardConfig { q: 100.0, scheme: RewardScheme::Ranked };
        assert!(assign_rewards(&[1.0], &mut b, &cfg, &mut rng).is_err());
    }

    #[test]
    fn leaderboard_csv() {
        assert_eq!(board(&[3.0, 4.0], 2).to_csv(), "position,cut\n0,3\n1,4\n");
    }

    fn window() -> impl Strategy<Value = (Vec<f64>, f64)> {
        (prop::collection::vec(0i32..20, 1..300), 1.0f64..99.9)
            .prop_map(|(v, q)| (v.into_iter().map(f64::from).collect(), q))
    }

    proptest! {
        #[test]
        fn r3_window_mean_is_zero((values, q) in window()) {
            let b = board(&values, values.len());
            let rule = RescaledRankedRule::from_board(&b, q).unwrap();
            let mean = b.values().map(|v| rule.reward(v)).sum::<f64>() / b.len() as f64;
            prop_assert!(mean.abs() <= 1e-9);
        }

        #[test]
        fn r3_rewards_are_monotone_bounded_and_separated((values, q) in window()) {
            let b = board(&values, values.len());
            let rule = RescaledRankedRule::from_board(&b, q).unwrap();
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let rewards: Vec<f64> = sorted.iter().map(|&v| rule.reward(v)).collect();
            prop_assert!(rewards.windows(2).all(|w| w[0] <= w[1] + 1e-12));
            prop_assert!(rewards.iter().all(|r| (-1.0..=1.0).contains(r)));
            if rule.n_above >= 1 {
                prop_assert!(rule.tie < q / 100.0);
            }
        }

        #[test]
        fn r2_rewards_are_signs((values, q) in window(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut b = Leaderboard::new(values.len()).unwrap();
            let cfg = RewardConfig { q, scheme: RewardScheme::Ranked };
            let out = assign_rewards(&values, &mut b, &cfg, &mut rng).unwrap();
            prop_assert!(out.rewards.iter().all(|&r| r == 1.0 || r == -1.0));
        }
    }
}
