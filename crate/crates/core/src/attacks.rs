//! Gradient-space Byzantine attacks.
//!
//! Each attack turns the honest updates into one malicious vector; the
//! Byzantine group submits `f` identical copies of it. The optimized
//! variants grid-search the attack factor against the server's actual
//! pipeline, maximizing the distance between its output and the honest mean.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::aggregators::Params;
use crate::error::{Error, Result};
use crate::numerics::{sq_dist, Scalar, VectorSet};
use crate::preaggregators::Pipeline;

pub const DEFAULT_IPM_TAU: f64 = 0.9;
pub const DEFAULT_ALIE_TAU: f64 = 1.5;

/// 0, 0.25, ..., 10.
pub fn default_grid() -> Vec<f64> {
    (0..=40).map(|i| i as f64 * 0.25).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackKind {
    SignFlipping,
    InnerProductManipulation,
    ALittleIsEnough,
    OptimalInnerProductManipulation,
    OptimalALittleIsEnough,
    /// Poisons training labels; the simulator implements it.
    LabelFlipping,
}

impl AttackKind {
    pub const ALL: [AttackKind; 6] = [
        Self::SignFlipping,
        Self::InnerProductManipulation,
        Self::ALittleIsEnough,
        Self::OptimalInnerProductManipulation,
        Self::OptimalALittleIsEnough,
        Self::LabelFlipping,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SignFlipping => "SignFlipping",
            Self::InnerProductManipulation => "InnerProductManipulation",
            Self::ALittleIsEnough => "ALittleIsEnough",
            Self::OptimalInnerProductManipulation => "Optimal_InnerProductManipulation",
            Self::OptimalALittleIsEnough => "Optimal_ALittleIsEnough",
            Self::LabelFlipping => "LabelFlipping",
        }
    }

    /// Whether the attack is computed from honest update vectors.
    pub fn is_gradient_attack(self) -> bool {
        self != Self::LabelFlipping
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName {
                what: "attack",
                name: s.to_string(),
                valid: Self::ALL.map(Self::name).join(", "),
            })
    }
}

/// The fixed-factor attacks an optimized variant searches over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseAttack {
    Ipm,
    Alie,
}

impl BaseAttack {
    pub fn vector<T: Scalar>(self, honest: &VectorSet<T>, tau: T) -> Vec<T> {
        match self {
            Self::Ipm => ipm(honest, tau),
            Self::Alie => alie(honest, tau),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub tau: f64,
    pub grid: Vec<f64>,
}

impl AttackSpec {
    pub fn new(kind: AttackKind) -> Self {
        let tau = match kind {
            AttackKind::ALittleIsEnough => DEFAULT_ALIE_TAU,
            _ => DEFAULT_IPM_TAU,
        };
        Self {
            kind,
            tau,
            grid: default_grid(),
        }
    }

    /// Builds a spec from a config entry. `tau` applies to the fixed-factor
    /// attacks and `grid` to the optimized ones.
    pub fn parse(name: &str, params: &Params, grid: Option<Vec<f64>>) -> Result<Self> {
        let kind: AttackKind = name.parse()?;
        let mut spec = Self::new(kind);
        let allowed: &[&str] = match kind {
            AttackKind::InnerProductManipulation | AttackKind::ALittleIsEnough => &["tau"],
            _ => &[],
        };
        if let Some(key) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidParam {
                name: key.clone(),
                reason: format!("not a parameter of {kind}"),
            });
        }
        if let Some(&tau) = params.get("tau") {
            if !tau.is_finite() {
                return Err(Error::InvalidParam {
                    name: "tau".into(),
                    reason: "must be finite".into(),
                });
            }
            spec.tau = tau;
        }
        if let Some(grid) = grid {
            if !matches!(
                kind,
                AttackKind::OptimalInnerProductManipulation | AttackKind::OptimalALittleIsEnough
            ) {
                return Err(Error::InvalidParam {
                    name: "grid".into(),
                    reason: format!("{kind} does not search an attack factor"),
                });
            }
            if grid.is_empty() || grid.iter().any(|t| !t.is_finite()) {
                return Err(Error::InvalidParam {
                    name: "grid".into(),
                    reason: "must be a non-empty list of finite values".into(),
                });
            }
            spec.grid = grid;
        }
        Ok(spec)
    }

    /// The `f` Byzantine vectors for this round, or `None` when `f = 0`.
    pub fn generate<T: Scalar, R: Rng + Clone>(
        &self,
        ctx: &AttackContext<'_, T>,
        rng: &R,
    ) -> Result<Option<VectorSet<T>>> {
        if ctx.f == 0 {
            return Ok(None);
        }
        let v = match self.kind {
            AttackKind::SignFlipping => sign_flipping(ctx.honest),
            AttackKind::InnerProductManipulation => ipm(ctx.honest, T::lit(self.tau)),
            AttackKind::ALittleIsEnough => alie(ctx.honest, T::lit(self.tau)),
            AttackKind::OptimalInnerProductManipulation => {
                optimize_attack_factor(ctx, BaseAttack::Ipm, &self.grid, rng)?.vector
            }
            AttackKind::OptimalALittleIsEnough => {
                optimize_attack_factor(ctx, BaseAttack::Alie, &self.grid, rng)?.vector
            }
            AttackKind::LabelFlipping => {
                return Err(Error::InvalidParam {
                    name: "attack".into(),
                    reason: "LabelFlipping acts on training data, not on update vectors".into(),
                })
            }
        };
        VectorSet::repeat(&v, ctx.f).map(Some)
    }
}

/// What an omniscient adversary observes.
#[derive(Debug, Clone, Copy)]
pub struct AttackContext<'a, T> {
    pub honest: &'a VectorSet<T>,
    pub f: usize,
    pub pipeline: &'a Pipeline<T>,
}

pub fn sign_flipping<T: Scalar>(honest: &VectorSet<T>) -> Vec<T> {
    honest.mean().into_iter().map(|m| -m).collect()
}

/// Inner product manipulation: `-tau * mean`.
pub fn ipm<T: Scalar>(honest: &VectorSet<T>, tau: T) -> Vec<T> {
    honest.mean().into_iter().map(|m| -(tau * m)).collect()
}

/// A little is enough: `mean - tau * std`, with the population standard
/// deviation taken per coordinate.
pub fn alie<T: Scalar>(honest: &VectorSet<T>, tau: T) -> Vec<T> {
    let mu = honest.mean();
    let inv_n = T::one() / T::from_count(honest.n());
    let mut var = vec![T::zero(); honest.d()];
    for row in honest.rows() {
        for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mu) {
            let t = x - m;
            *v = *v + t * t;
        }
    }
    mu.iter()
        .zip(var)
        .map(|(&m, v)| m - tau * (v * inv_n).sqrt())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedAttack<T> {
    pub tau: T,
    pub vector: Vec<T>,
    /// `||pipeline(honest + f copies) - mean(honest)||`.
    pub score: T,
}

/// Distance between the pipeline output and the honest mean when the
/// Byzantine rows all equal `attack`.
///
/// Runs on a clone of the pipeline and the rng, so aggregator memory and
/// bucketing shuffles are identical for every candidate and the caller's
/// state is left untouched.
pub fn attack_score<T: Scalar, R: Rng + Clone>(
    ctx: &AttackContext<'_, T>,
    attack: &[T],
    rng: &R,
) -> Result<T> {
    let xs = ctx.honest.concat(&VectorSet::repeat(attack, ctx.f)?)?;
    let mut pipeline = ctx.pipeline.clone();
    let out = pipeline.apply(&xs, &mut rng.clone())?;
    Ok(sq_dist(&out, &ctx.honest.mean()).sqrt())
}

/// Grid search over the attack factor. Ties go to the smallest factor.
pub fn optimize_attack_factor<T: Scalar, R: Rng + Clone>(
    ctx: &AttackContext<'_, T>,
    base: BaseAttack,
    grid: &[f64],
    rng: &R,
) -> Result<OptimizedAttack<T>> {
    if grid.is_empty() {
        return Err(Error::InvalidParam {
            name: "grid".into(),
            reason: "must be non-empty".into(),
        });
    }
    ctx.pipeline.check_feasible(ctx.honest.n() + ctx.f)?;
    let mut best: Option<OptimizedAttack<T>> = None;
    for &t in grid {
        let tau = T::lit(t);
        let vector = base.vector(ctx.honest, tau);
        let score = attack_score(ctx, &vector, rng)?;
        let better = match &best {
            None => true,
            Some(b) => score > b.score || (score == b.score && tau < b.tau),
        };
        if better {
            best = Some(OptimizedAttack { tau, vector, score });
        }
    }
    Ok(best.expect("grid is non-empty"))
}
