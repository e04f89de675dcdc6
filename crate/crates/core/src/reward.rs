//! Feature-match and length rewards, and group-relative advantages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{extract_features, Partition, StatFeatureSet, MAX_FREQUENT};
use crate::traj::{Loc, TrajPoint};

/// Which components make up the compared feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub include_length: bool,
}

impl FeatureSpec {
    /// The reward's feature vector; length is scored separately there.
    pub const REWARD: FeatureSpec = FeatureSpec {
        include_length: false,
    };
    /// The edit engine also repairs length.
    pub const REFINE: FeatureSpec = FeatureSpec {
        include_length: true,
    };

    pub fn n_components(&self, n_periods: usize) -> usize {
        MAX_FREQUENT + 2 * n_periods + usize::from(self.include_length)
    }
}

/// Per-component equality: each frequent slot, each period probability,
/// each per-period list, then optionally length.
pub fn component_matches(a: &StatFeatureSet, b: &StatFeatureSet, spec: FeatureSpec) -> Vec<bool> {
    let mut out = Vec::with_capacity(spec.n_components(a.period_probs.len()));
    for i in 0..MAX_FREQUENT {
        out.push(a.frequent_locations.get(i) == b.frequent_locations.get(i));
    }
    out.extend(a.period_probs.iter().zip(&b.period_probs).map(|(x, y)| x == y));
    out.extend(a.period_frequent.iter().zip(&b.period_frequent).map(|(x, y)| x == y));
    if spec.include_length {
        out.push(a.length == b.length);
    }
    out
}

pub fn feature_mismatches(a: &StatFeatureSet, b: &StatFeatureSet, spec: FeatureSpec) -> usize {
    component_matches(a, b, spec).iter().filter(|m| !**m).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub matched_features: usize,
    pub n_features: usize,
    pub r_distribution: f64,
    pub r_length: f64,
    pub total: f64,
}

/// Number of matched components and K.
pub fn reward_distribution(
    generated: &[TrajPoint],
    truth: &[TrajPoint],
    partition: &Partition,
) -> Result<(usize, usize)> {
    let a = extract_features(generated, partition)?;
    let b = extract_features(truth, partition)?;
    let m = component_matches(&a, &b, FeatureSpec::REWARD);
    Ok((m.iter().filter(|x| **x).count(), m.len()))
}

pub fn reward_length(len: usize, truth_len: usize) -> Result<f64> {
    if truth_len == 0 {
        return Err(Error::Empty("ground-truth trajectory"));
    }
    Ok(-(len.abs_diff(truth_len) as f64) / truth_len as f64)
}

/// An empty generation matches no feature but still gets a length score.
pub fn reward(generated: &[TrajPoint], truth: &[TrajPoint], partition: &Partition) -> Result<RewardBreakdown> {
    let r_length = reward_length(generated.len(), truth.len())?;
    let (matched, k) = if generated.is_empty() {
        (0, FeatureSpec::REWARD.n_components(partition.len()))
    } else {
        reward_distribution(generated, truth, partition)?
    };
    let r_distribution = matched as f64;
    Ok(RewardBreakdown {
        matched_features: matched,
        n_features: k,
        r_distribution,
        r_length,
        total: r_distribution + r_length,
    })
}

/// Standardized rewards with population std; all zero when the group is
/// constant.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::Invalid("advantages need a group of at least two".into()));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("reward".into()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = rewards.iter().fold(0.0f64, |m, r| m.max(r.abs())).max(1.0);
    // Treat spread at rounding level as zero, so constant groups of
    // inexact values still map to zeros.
    if std <= 1e-12 * scale {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Locations named anywhere in a feature set.
pub fn feature_locations(f: &StatFeatureSet) -> Vec<Loc> {
    let mut v: Vec<Loc> = f
        .frequent_locations
        .iter()
        .chain(f.period_frequent.iter().flatten())
        .copied()
        .collect();
    v.sort();
    v.dedup();
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub sample_id: String,
    pub matched_features: usize,
    pub n_features: usize,
    pub r_distribution: f64,
    pub r_length: f64,
    pub total: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advantages: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(slot: u8, loc: u32) -> TrajPoint {
        TrajPoint::new(0, 0, slot, Loc::new(loc, 0))
    }

    #[test]
    fn identity_reward() {
        let p = Partition::default();
        let t = vec![pt(1, 1), pt(14, 1), pt(15, 2), pt(30, 2), pt(40, 3)];
        let r = reward(&t, &t, &p).unwrap();
        assert_eq!(r.n_features, 11);
        assert_eq!(r.matched_features, 11);
        assert_eq!((r.r_distribution, r.r_length, r.total), (11.0, 0.0, 11.0));
    }

    #[test]
    fn only_night_probability_differs() {
        let p = Partition::default();
        // 20 points: 4 in the night vs 5 in the night, the rest in the
        // evening; no location repeats.
        let mut a: Vec<TrajPoint> = (0..4).map(|i| pt(i, 100 + i as u32)).collect();
        a.extend((0..16).map(|i| pt(36 + (i % 8) as u8, i as u32)));
        let mut b = a.clone();
        b.push(pt(5, 200));
        // Keep length equal by dropping one evening point.
        b.remove(4);
        let fa = extract_features(&a, &p).unwrap();
        let fb = extract_features(&b, &p).unwrap();
        assert_eq!(fa.period_probs, vec![20, 0, 0, 80]);
        assert_eq!(fb.period_probs, vec![25, 0, 0, 75]);
        // Both night and evening shares move, so two components differ.
        let (m, k) = reward_distribution(&a, &b, &p).unwrap();
        assert_eq!((m, k), (9, 11));
        // Half-up rounding: 1/40 at night is 5% while 39/40 in the
        // evening still rounds to 100%, so only the night share differs.
        let e: Vec<TrajPoint> = (0..40).map(|i| pt(36 + (i % 8) as u8, 1000 + i as u32)).collect();
        let mut f = e.clone();
        f[0] = pt(3, 5000);
        let fe = extract_features(&e, &p).unwrap();
        let ff = extract_features(&f, &p).unwrap();
        assert_eq!(fe.period_probs, vec![0, 0, 0, 100]);
        assert_eq!(ff.period_probs, vec![5, 0, 0, 100]);
        assert_eq!(reward_distribution(&e, &f, &p).unwrap(), (10, 11));
    }

    #[test]
    fn length_reward() {
        assert_eq!(reward_length(10, 10).unwrap(), 0.0);
        assert!((reward_length(8, 10).unwrap() + 0.2).abs() < 1e-15);
        assert_eq!(reward_length(0, 10).unwrap(), -1.0);
        assert!(reward_length(3, 0).is_err());
    }

    #[test]
    fn advantages() {
        assert_eq!(group_advantages(&[1.0, 1.0, 1.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(group_advantages(&[0.0, 2.0]).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(group_advantages(&[0.1, 0.1, 0.1]).unwrap(), vec![0.0; 3]);
        assert!(group_advantages(&[1.0]).is_err());
        let a = group_advantages(&[3.0, 1.0, 4.0, 1.0, 5.0]).unwrap();
        assert!(a.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn disjoint_features() {
        let p = Partition::default();
        let a = vec![pt(1, 1), pt(2, 1), pt(3, 1)];
        let b = vec![pt(14, 2), pt(15, 2), pt(25, 3), pt(26, 3), pt(40, 4), pt(41, 4), pt(42, 5), pt(43, 5)];
        let fa = extract_features(&a, &p).unwrap();
        let fb = extract_features(&b, &p).unwrap();
        assert_eq!(fa.period_probs, vec![100, 0, 0, 0]);
        assert_eq!(fb.period_probs, vec![0, 25, 25, 50]);
        let m = component_matches(&fa, &fb, FeatureSpec::REWARD);
        assert_eq!(m.iter().filter(|x| **x).count(), 0);
    }
}
