//! Reset rewards, the visit clock and nodal importance.

use serde::{Deserialize, Serialize};

use crate::{Error, NodeId, Result, TIME_EPS};

/// Concave, nondecreasing reward of idle time with `psi(0) = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardFunction {
    /// `1 - exp(-rate * dt)`: probability that a Poisson event with this rate
    /// occurred during the idle time.
    Exponential { rate: f64 },
    /// `weight * dt`: weighted idle time.
    Linear { weight: f64 },
    /// `weight * dt^exponent`, `exponent` in `(0, 1]`.
    Power { weight: f64, exponent: f64 },
}

impl RewardFunction {
    pub fn exponential(rate: f64) -> Self {
        RewardFunction::Exponential { rate }
    }

    pub fn linear(weight: f64) -> Self {
        RewardFunction::Linear { weight }
    }

    pub fn power(weight: f64, exponent: f64) -> Self {
        RewardFunction::Power { weight, exponent }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        let valid = match *self {
            RewardFunction::Exponential { rate } => ok(rate),
            RewardFunction::Linear { weight } => ok(weight),
            RewardFunction::Power { weight, exponent } => {
                ok(weight) && exponent > 0.0 && exponent <= 1.0
            }
        };
        if valid {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid reward function {self:?}")))
        }
    }

    /// `psi(dt)`; negative arguments are clamped to zero.
    pub fn eval(&self, dt: f64) -> f64 {
        let dt = dt.max(0.0);
        match *self {
            RewardFunction::Exponential { rate } => -(-rate * dt).exp_m1(),
            RewardFunction::Linear { weight } => weight * dt,
            RewardFunction::Power { weight, exponent } => weight * dt.powf(exponent),
        }
    }

    /// Reward accrued over one second of idling; ranks nodes for anchor selection.
    pub fn growth_score(&self) -> f64 {
        self.eval(1.0)
    }
}

/// `R_v(t)`: zero at the last visit, `psi(t - t_bar)` afterwards.
pub fn node_reward(rf: &RewardFunction, t: f64, t_bar: f64) -> Result<f64> {
    if t < t_bar - TIME_EPS {
        return Err(Error::TimeBeforeVisit { t, last_visit: t_bar });
    }
    if t - t_bar <= TIME_EPS {
        return Ok(0.0);
    }
    Ok(rf.eval(t - t_bar))
}

/// Last scan time of every node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisitClock {
    last_visit: Vec<f64>,
}

impl VisitClock {
    pub fn uniform(node_count: usize, t: f64) -> Self {
        Self {
            last_visit: vec![t; node_count],
        }
    }

    pub fn from_times(last_visit: Vec<f64>) -> Self {
        Self { last_visit }
    }

    pub fn len(&self) -> usize {
        self.last_visit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.last_visit.is_empty()
    }

    pub fn last_visit(&self, v: NodeId) -> f64 {
        self.last_visit[v.index()]
    }

    pub fn times(&self) -> &[f64] {
        &self.last_visit
    }

    /// Records a scan of `v` at `t`. Returns the reward scored, which is zero when
    /// the node was already scanned at that instant.
    pub fn scan(&mut self, rf: &RewardFunction, v: NodeId, t: f64) -> Result<f64> {
        let slot = &mut self.last_visit[v.index()];
        let r = node_reward(rf, t, *slot)?;
        *slot = slot.max(t);
        Ok(r)
    }
}

/// How anchor nodes are picked for the importance term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum AnchorRule {
    All,
    /// The `k` nodes with the largest one-second reward (default `ceil(|V| / 10)`).
    TopK {
        #[serde(default)]
        k: Option<usize>,
    },
    /// Every `stride`-th node by id.
    Stride { stride: usize },
    Explicit { nodes: Vec<NodeId> },
}

impl Default for AnchorRule {
    fn default() -> Self {
        AnchorRule::TopK { k: None }
    }
}

impl AnchorRule {
    /// Resolves the rule to a sorted anchor list. Ties in `TopK` go to the lower id.
    pub fn resolve(&self, rewards: &[RewardFunction]) -> Result<Vec<NodeId>> {
        let n = rewards.len();
        let mut out: Vec<NodeId> = match self {
            AnchorRule::All => (0..n as u32).map(NodeId).collect(),
            AnchorRule::TopK { k } => {
                let k = k.unwrap_or(n.div_ceil(10)).min(n);
                let mut ranked: Vec<NodeId> = (0..n as u32).map(NodeId).collect();
                ranked.sort_by(|a, b| {
                    rewards[b.index()]
                        .growth_score()
                        .total_cmp(&rewards[a.index()].growth_score())
                        .then(a.cmp(b))
                });
                ranked.truncate(k);
                ranked
            }
            AnchorRule::Stride { stride } => {
                if *stride == 0 {
                    return Err(Error::InvalidArgument("anchor stride must be positive".into()));
                }
                (0..n as u32).step_by(*stride).map(NodeId).collect()
            }
            AnchorRule::Explicit { nodes } => {
                if let Some(bad) = nodes.iter().find(|v| v.index() >= n) {
                    return Err(Error::UnknownNode(*bad));
                }
                nodes.clone()
            }
        };
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }
}

/// Parameters of the importance term added to the utility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceConfig {
    pub alpha: f64,
    pub radius: u32,
    pub anchors: Vec<NodeId>,
    /// Floor on the travel-time denominator; `None` uses the agent's cheapest edge.
    pub zero_tau_floor: Option<f64>,
}

impl ImportanceConfig {
    /// No importance term: the augmented utility equals the plain utility.
    pub fn disabled() -> Self {
        Self {
            alpha: 0.0,
            radius: 2,
            anchors: Vec::new(),
            zero_tau_floor: None,
        }
    }

    pub fn new(alpha: f64, radius: u32, anchors: Vec<NodeId>) -> Self {
        Self {
            alpha,
            radius,
            anchors,
            zero_tau_floor: None,
        }
    }

    pub fn validate(&self, node_count: usize) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!("alpha {} must be >= 0", self.alpha)));
        }
        if let Some(bad) = self.anchors.iter().find(|v| v.index() >= node_count) {
            return Err(Error::UnknownNode(*bad));
        }
        if let Some(eps) = self.zero_tau_floor {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::InvalidArgument(format!("zero_tau_floor {eps} must be > 0")));
            }
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.alpha > 0.0 && !self.anchors.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reset_and_idle_cases() {
        let e = RewardFunction::exponential(0.1);
        assert_eq!(node_reward(&e, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(node_reward(&RewardFunction::linear(1.0), 5.0, 2.0).unwrap(), 3.0);
        // 1 - e^-1 to 17 digits
        assert_relative_eq!(
            node_reward(&e, 10.0, 0.0).unwrap(),
            0.632_120_558_828_557_7,
            max_relative = 1e-15
        );
        assert!(matches!(
            node_reward(&e, 1.0, 2.0),
            Err(Error::TimeBeforeVisit { .. })
        ));
    }

    #[test]
    fn psi_vanishes_at_zero() {
        for rf in [
            RewardFunction::exponential(3.0),
            RewardFunction::linear(2.0),
            RewardFunction::power(1.5, 0.5),
        ] {
            assert_eq!(rf.eval(0.0), 0.0);
        }
    }

    #[test]
    fn validation() {
        assert!(RewardFunction::exponential(0.0).validate().is_err());
        assert!(RewardFunction::power(1.0, 1.5).validate().is_err());
        assert!(RewardFunction::power(1.0, 1.0).validate().is_ok());
        assert!(ImportanceConfig::new(-1.0, 2, vec![]).validate(4).is_err());
        assert!(ImportanceConfig::new(0.1, 2, vec![NodeId(4)]).validate(4).is_err());
    }

    #[test]
    fn clock_scan_dedups_same_instant() {
        let rf = RewardFunction::linear(1.0);
        let mut clock = VisitClock::uniform(2, 0.0);
        assert_eq!(clock.scan(&rf, NodeId(1), 3.0).unwrap(), 3.0);
        assert_eq!(clock.scan(&rf, NodeId(1), 3.0).unwrap(), 0.0);
        assert_eq!(clock.last_visit(NodeId(1)), 3.0);
    }

    #[test]
    fn anchor_rules() {
        let rewards: Vec<_> = [0.1, 0.5, 0.5, 0.2, 0.9]
            .into_iter()
            .map(RewardFunction::exponential)
            .collect();
        assert_eq!(
            AnchorRule::TopK { k: Some(3) }.resolve(&rewards).unwrap(),
            vec![NodeId(1), NodeId(2), NodeId(4)]
        );
        // default k = ceil(5/10) = 1
        assert_eq!(AnchorRule::default().resolve(&rewards).unwrap(), vec![NodeId(4)]);
        assert_eq!(
            AnchorRule::Stride { stride: 2 }.resolve(&rewards).unwrap(),
            vec![NodeId(0), NodeId(2), NodeId(4)]
        );
        assert_eq!(AnchorRule::All.resolve(&rewards).unwrap().len(), 5);
        assert!(AnchorRule::Stride { stride: 0 }.resolve(&rewards).is_err());
    }
}
