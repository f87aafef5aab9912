//! Behaviour-membership classifier.
//!
//! A trajectory belongs to a mode's behaviour when `Y = O_K x + T_K U` for some initial
//! state `x`. The residual of the best such `x` is the classification statistic.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{simulate_mode, ModeBank, StateSpaceMode, Trajectory};
use crate::numerics::{self, ToleranceConfig};

pub const DEFAULT_ACCEPT_TOL: f64 = 1e-6;

/// `||Y - O_K x - T_K U||` minimized over `x`, without normalization.
pub fn raw_mode_residual(mode: &StateSpaceMode, traj: &Trajectory) -> Result<f64> {
    if mode.m() != traj.m() || mode.l() != traj.l() {
        return Err(Error::invalid(format!(
            "mode {} has m = {}, l = {}; trajectory has m = {}, l = {}",
            mode.id(),
            mode.m(),
            mode.l(),
            traj.m(),
            traj.l()
        )));
    }
    let y = traj.stacked_outputs();
    let forced = simulate_mode(mode, &DVector::zeros(mode.n()), traj.inputs())?.stacked_outputs();
    let free = y - forced;

    let (m, n) = (mode.m(), mode.n());
    let mut o = DMatrix::zeros(traj.horizon() * m, n);
    let mut block = mode.c().clone();
    for k in 0..traj.horizon() {
        o.view_mut((k * m, 0), (m, n)).copy_from(&block);
        block = &block * mode.a();
    }
    let ls = numerics::lstsq_min_norm(&o, &free, &ToleranceConfig::default())?;
    Ok(ls.residual_norm)
}

/// Behaviour residual normalized by `1 + ||Y||`.
pub fn mode_residual(mode: &StateSpaceMode, traj: &Trajectory) -> Result<f64> {
    Ok(raw_mode_residual(mode, traj)? / (1.0 + traj.stacked_outputs().norm()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Mode(usize),
    Ambiguous,
    None,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Mode(id) => write!(f, "{id}"),
            Verdict::Ambiguous => f.write_str("AMBIGUOUS"),
            Verdict::None => f.write_str("NONE"),
        }
    }
}

impl std::str::FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "AMBIGUOUS" => Ok(Verdict::Ambiguous),
            "NONE" => Ok(Verdict::None),
            id => id
                .parse()
                .map(Verdict::Mode)
                .map_err(|_| Error::invalid(format!("unknown verdict {s:?}"))),
        }
    }
}

impl Serialize for Verdict {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Verdict {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub residuals: BTreeMap<usize, f64>,
    pub accepted: Vec<usize>,
    pub verdict: Verdict,
}

impl ClassificationReport {
    pub fn residual(&self, id: usize) -> Option<f64> {
        self.residuals.get(&id).copied()
    }

    pub fn accepts(&self, id: usize) -> bool {
        self.accepted.contains(&id)
    }
}

pub fn classify(bank: &ModeBank, traj: &Trajectory, accept_tol: f64) -> Result<ClassificationReport> {
    if bank.is_empty() {
        return Err(Error::invalid("mode bank is empty"));
    }
    if !(accept_tol.is_finite() && accept_tol >= 0.0) {
        return Err(Error::invalid("accept tolerance must be finite and nonnegative"));
    }
    let mut residuals = BTreeMap::new();
    for mode in bank.modes() {
        residuals.insert(mode.id(), mode_residual(mode, traj)?);
    }
    let accepted: Vec<usize> = residuals
        .iter()
        .filter(|(_, r)| **r <= accept_tol)
        .map(|(id, _)| *id)
        .collect();
    let verdict = match accepted.as_slice() {
        [] => Verdict::None,
        [id] => Verdict::Mode(*id),
        _ => Verdict::Ambiguous,
    };
    Ok(ClassificationReport {
        residuals,
        accepted,
        verdict,
    })
}
