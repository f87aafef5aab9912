//! On-disk formats: mode banks, utility specs, plans and controllers as JSON, trajectories
//! as CSV. Matrices are nested row-major arrays.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariance::{KernelPlan, LiftedOperators, UtilitySpec};
use crate::model::{ModeBank, StateSpaceMode, Trajectory};
use crate::numerics::ToleranceConfig;
use crate::regulation::TrackingController;

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(Error::invalid(format!("{what} is empty")));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::invalid(format!("{what} has ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn vectors_from_rows(rows: &[Vec<f64>]) -> Vec<DVector<f64>> {
    rows.iter().map(|r| DVector::from_column_slice(r)).collect()
}

fn vectors_to_rows(v: &[DVector<f64>]) -> Vec<Vec<f64>> {
    v.iter().map(|x| x.iter().copied().collect()).collect()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeFile {
    pub id: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankFile {
    pub m: usize,
    pub l: usize,
    pub modes: Vec<ModeFile>,
}

impl BankFile {
    pub fn from_bank(bank: &ModeBank) -> Self {
        Self {
            m: bank.m(),
            l: bank.l(),
            modes: bank
                .modes()
                .iter()
                .map(|md| ModeFile {
                    id: md.id(),
                    a: matrix_to_rows(md.a()),
                    b: matrix_to_rows(md.b()),
                    c: matrix_to_rows(md.c()),
                })
                .collect(),
        }
    }

    pub fn to_bank(&self) -> Result<ModeBank> {
        let mut modes = Vec::with_capacity(self.modes.len());
        for mf in &self.modes {
            let mode = StateSpaceMode::new(
                mf.id,
                matrix_from_rows(&mf.a, "A")?,
                matrix_from_rows(&mf.b, "B")?,
                matrix_from_rows(&mf.c, "C")?,
            )?;
            if mode.m() != self.m || mode.l() != self.l {
                return Err(Error::invalid(format!(
                    "mode {} has m = {}, l = {}; bank declares m = {}, l = {}",
                    mf.id,
                    mode.m(),
                    mode.l(),
                    self.m,
                    self.l
                )));
            }
            modes.push(mode);
        }
        ModeBank::new(modes)
    }
}

pub fn read_bank(path: &Path) -> Result<ModeBank> {
    read_json::<BankFile>(path)?.to_bank()
}

pub fn write_bank(path: &Path, bank: &ModeBank) -> Result<()> {
    write_json(path, &BankFile::from_bank(bank))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UtilityFile {
    Shorthand {
        kind: String,
        #[serde(rename = "K")]
        horizon: usize,
        m: usize,
    },
    Explicit {
        #[serde(rename = "K")]
        horizon: usize,
        q: usize,
        #[serde(rename = "F")]
        f: Vec<Vec<f64>>,
        mu: Vec<f64>,
    },
}

impl UtilityFile {
    pub fn average(horizon: usize, m: usize) -> Self {
        UtilityFile::Shorthand {
            kind: "average".into(),
            horizon,
            m,
        }
    }

    pub fn from_spec(spec: &UtilitySpec) -> Self {
        UtilityFile::Explicit {
            horizon: spec.horizon(),
            q: spec.q(),
            f: matrix_to_rows(spec.f()),
            mu: spec.mu().iter().copied().collect(),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            UtilityFile::Shorthand { horizon, .. } | UtilityFile::Explicit { horizon, .. } => *horizon,
        }
    }

    /// `m` is the output dimension of the bank the spec will be used with.
    pub fn to_spec(&self, m: usize, tol: &ToleranceConfig) -> Result<UtilitySpec> {
        match self {
            UtilityFile::Shorthand {
                kind,
                horizon,
                m: file_m,
            } => {
                if kind != "average" {
                    return Err(Error::invalid(format!("unknown utility kind {kind:?}")));
                }
                if *file_m != m {
                    return Err(Error::invalid(format!(
                        "utility is for m = {file_m}, bank has m = {m}"
                    )));
                }
                UtilitySpec::average(*horizon, m, tol)
            }
            UtilityFile::Explicit { horizon, q, f, mu } => {
                let f = matrix_from_rows(f, "F")?;
                if f.nrows() != *q {
                    return Err(Error::invalid(format!("F has {} rows, q = {q}", f.nrows())));
                }
                UtilitySpec::new(f, DVector::from_column_slice(mu), *horizon, m, tol)
            }
        }
    }
}

/// The persisted part of a plan; everything else is recomputed on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub x2_init: Vec<f64>,
    #[serde(rename = "U2")]
    pub u2: Vec<Vec<f64>>,
    pub seed: u64,
    pub magnitude: f64,
}

impl PlanFile {
    pub fn from_plan(plan: &KernelPlan) -> Self {
        Self {
            x2_init: plan.x2_init.iter().copied().collect(),
            u2: vectors_to_rows(&plan.u2),
            seed: plan.seed,
            magnitude: plan.magnitude,
        }
    }

    pub fn to_plan(&self, ops: &LiftedOperators, spec: &UtilitySpec, tol: &ToleranceConfig) -> Result<KernelPlan> {
        KernelPlan::from_parts(
            ops,
            spec,
            DVector::from_column_slice(&self.x2_init),
            vectors_from_rows(&self.u2),
            self.seed,
            self.magnitude,
            tol,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerFile {
    pub true_mode: usize,
    pub target_mode: usize,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    #[serde(rename = "S")]
    pub s: Vec<Vec<f64>>,
    #[serde(rename = "Pi")]
    pub pi: Vec<Vec<f64>>,
}

impl ControllerFile {
    pub fn from_controller(ctrl: &TrackingController) -> Self {
        Self {
            true_mode: ctrl.true_mode_id(),
            target_mode: ctrl.target_mode_id(),
            r: matrix_to_rows(ctrl.r()),
            l: matrix_to_rows(ctrl.l()),
            s: matrix_to_rows(ctrl.s()),
            pi: matrix_to_rows(ctrl.init_map()),
        }
    }

    pub fn to_controller(&self, bank: &ModeBank, tol: &ToleranceConfig) -> Result<TrackingController> {
        TrackingController::from_parts(
            bank.require(self.true_mode)?,
            bank.require(self.target_mode)?,
            matrix_from_rows(&self.r, "R")?,
            matrix_from_rows(&self.l, "L")?,
            matrix_from_rows(&self.s, "S")?,
            matrix_from_rows(&self.pi, "Pi")?,
            tol,
        )
    }
}

struct Columns {
    u: Vec<usize>,
    y: Vec<usize>,
    x: Vec<usize>,
}

fn classify_header(header: &csv::StringRecord) -> Result<Columns> {
    if header.get(0) != Some("k") {
        return Err(Error::invalid("trajectory header must start with k"));
    }
    let mut groups: [Vec<(usize, usize)>; 3] = Default::default();
    for (col, name) in header.iter().enumerate().skip(1) {
        let (prefix, idx) = name
            .split_once('_')
            .and_then(|(p, i)| i.parse::<usize>().ok().map(|i| (p, i)))
            .ok_or_else(|| Error::invalid(format!("unrecognised column {name:?}")))?;
        let g = match prefix {
            "u" => 0,
            "y" => 1,
            "x" => 2,
            _ => return Err(Error::invalid(format!("unrecognised column {name:?}"))),
        };
        groups[g].push((idx, col));
    }
    let mut out = Vec::with_capacity(3);
    for (g, prefix) in groups.iter_mut().zip(["u", "y", "x"]) {
        g.sort_unstable();
        if g.iter().enumerate().any(|(i, (idx, _))| *idx != i + 1) {
            return Err(Error::invalid(format!("{prefix} columns must be numbered 1..")));
        }
        out.push(g.iter().map(|(_, c)| *c).collect::<Vec<_>>());
    }
    let x = out.pop().unwrap_or_default();
    let y = out.pop().unwrap_or_default();
    let u = out.pop().unwrap_or_default();
    if u.is_empty() || y.is_empty() {
        return Err(Error::invalid("trajectory needs at least one u and one y column"));
    }
    Ok(Columns { u, y, x })
}

fn parse_cells(rec: &csv::StringRecord, cols: &[usize], row: usize) -> Result<Option<DVector<f64>>> {
    let cells: Vec<&str> = cols.iter().map(|c| rec.get(*c).unwrap_or("").trim()).collect();
    if cells.iter().all(|c| c.is_empty()) {
        return Ok(None);
    }
    let mut v = DVector::zeros(cells.len());
    for (i, c) in cells.iter().enumerate() {
        v[i] = c
            .parse()
            .map_err(|_| Error::invalid(format!("row k = {row}: cannot parse {c:?}")))?;
    }
    Ok(Some(v))
}

pub fn trajectory_from_reader<R: std::io::Read>(reader: R) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let cols = classify_header(rdr.headers()?)?;
    let (mut us, mut ys, mut xs) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let k: usize = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::invalid(format!("row {}: bad k", i + 1)))?;
        if k != i + 1 {
            return Err(Error::invalid(format!("rows must be k = 1, 2, ...; found k = {k} at row {}", i + 1)));
        }
        us.push(parse_cells(&rec, &cols.u, k)?);
        ys.push(parse_cells(&rec, &cols.y, k)?.ok_or_else(|| Error::invalid(format!("row k = {k}: missing y")))?);
        if !cols.x.is_empty() {
            xs.push(parse_cells(&rec, &cols.x, k)?.ok_or_else(|| Error::invalid(format!("row k = {k}: missing x")))?);
        }
    }
    if us.last().is_some_and(Option::is_some) {
        return Err(Error::invalid("the last row must leave u empty"));
    }
    us.pop();
    let inputs = us
        .into_iter()
        .enumerate()
        .map(|(i, u)| u.ok_or_else(|| Error::invalid(format!("row k = {}: missing u", i + 1))))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(inputs, ys, (!xs.is_empty()).then_some(xs))
}

pub fn trajectory_to_writer<W: std::io::Write>(traj: &Trajectory, writer: W) -> Result<()> {
    let n = traj.states().map_or(0, |xs| xs[0].len());
    let mut header = vec!["k".to_string()];
    header.extend((1..=traj.l()).map(|i| format!("u_{i}")));
    header.extend((1..=traj.m()).map(|i| format!("y_{i}")));
    header.extend((1..=n).map(|i| format!("x_{i}")));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&header)?;
    for k in 0..traj.horizon() {
        let mut row = vec![(k + 1).to_string()];
        match traj.inputs().get(k) {
            Some(u) => row.extend(u.iter().map(f64::to_string)),
            None => row.extend(std::iter::repeat_n(String::new(), traj.l())),
        }
        row.extend(traj.outputs()[k].iter().map(f64::to_string));
        if let Some(xs) = traj.states() {
            row.extend(xs[k].iter().map(f64::to_string));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("csv flush: {e}")))?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    trajectory_from_reader(file)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    trajectory_to_writer(traj, file)
}

/// Writes `k` followed by named columns, one row per sample. Missing samples stay empty.
pub fn write_series(path: &Path, names: &[&str], columns: &[Vec<Option<f64>>]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["k"];
    header.extend_from_slice(names);
    w.write_record(&header)?;
    let rows = columns.iter().map(Vec::len).max().unwrap_or(0);
    for k in 0..rows {
        let mut row = vec![(k + 1).to_string()];
        for col in columns {
            row.push(col.get(k).copied().flatten().map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
