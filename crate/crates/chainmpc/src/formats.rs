//! JSON artifacts and CSV series. Matrices are arrays of rows.

use std::io::Write;
use std::path::Path;

use chainmpc_core::dist::{FlopReportRow, MessageLog};
use chainmpc_core::ipm::IpmIterate;
use chainmpc_core::linalg::{Mat, Vector};
use chainmpc_core::model::{validate_chain, ChainSystem, SubsystemModel};
use chainmpc_core::mpcloop::ClosedLoopTrace;
use chainmpc_core::qpstruct::StructuredQP;
use chainmpc_core::sets::{certify_terminal_sets, Polytope, TerminalSets};
use chainmpc_core::synthesis::{design_from_sdp_variables, DesignMethod, SdpVariables, TerminalDesign};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub type Rows = Vec<Vec<f64>>;

pub fn mat_from_rows(name: &str, rows: &Rows) -> CliResult<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(CliError::Validation(format!("{name} is empty")));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(CliError::Validation(format!("{name} has rows of different lengths")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::Validation(format!("{name} has a non-finite entry")));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn mat_to_rows(m: &Mat) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn vec_from(name: &str, v: &[f64]) -> CliResult<Vector> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::Validation(format!("{name} has a non-finite entry")));
    }
    Ok(Vector::from_column_slice(v))
}

pub fn vec_to(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Plant description, leader first.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PlantFile {
    pub subsystems: Vec<SubsystemEntry>,
}

/// One subsystem; `b` is the constraint bound, `B` the input matrix.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SubsystemEntry {
    #[serde(rename = "A")]
    pub a_mat: Rows,
    #[serde(rename = "B")]
    pub b_mat: Rows,
    #[serde(rename = "A_cpl", default, skip_serializing_if = "Option::is_none")]
    pub a_cpl: Option<Rows>,
    #[serde(rename = "B_cpl", default, skip_serializing_if = "Option::is_none")]
    pub b_cpl: Option<Rows>,
    #[serde(rename = "Gx")]
    pub gx: Rows,
    #[serde(rename = "Gu")]
    pub gu: Rows,
    #[serde(rename = "b")]
    pub bound: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
}

impl PlantFile {
    pub fn from_chain(chain: &ChainSystem) -> Self {
        PlantFile {
            subsystems: chain
                .subsystems()
                .iter()
                .map(|s| SubsystemEntry {
                    a_mat: mat_to_rows(&s.a),
                    b_mat: mat_to_rows(&s.b),
                    a_cpl: s.a_cpl.as_ref().map(mat_to_rows),
                    b_cpl: s.b_cpl.as_ref().map(mat_to_rows),
                    gx: mat_to_rows(&s.gx),
                    gu: mat_to_rows(&s.gu),
                    bound: vec_to(&s.bound),
                    q: mat_to_rows(&s.q),
                    r: mat_to_rows(&s.r),
                })
                .collect(),
        }
    }

    pub fn to_chain(&self) -> CliResult<ChainSystem> {
        let mut raw = Vec::with_capacity(self.subsystems.len());
        for (k, e) in self.subsystems.iter().enumerate() {
            let tag = |f: &str| format!("subsystem {}: {f}", k + 1);
            let opt = |f: &str, m: &Option<Rows>| m.as_ref().map(|r| mat_from_rows(&tag(f), r)).transpose();
            raw.push(SubsystemModel {
                index: k + 1,
                a: mat_from_rows(&tag("A"), &e.a_mat)?,
                b: mat_from_rows(&tag("B"), &e.b_mat)?,
                a_cpl: opt("A_cpl", &e.a_cpl)?,
                b_cpl: opt("B_cpl", &e.b_cpl)?,
                gx: mat_from_rows(&tag("Gx"), &e.gx)?,
                gu: mat_from_rows(&tag("Gu"), &e.gu)?,
                bound: vec_from(&tag("b"), &e.bound)?,
                q: mat_from_rows(&tag("Q"), &e.q)?,
                r: mat_from_rows(&tag("R"), &e.r)?,
            });
        }
        Ok(validate_chain(raw)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GainEntry {
    #[serde(rename = "K")]
    pub k: Rows,
    #[serde(rename = "P")]
    pub p: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub subsystems: Vec<GainEntry>,
    pub tau: Option<f64>,
    #[serde(rename = "lambda_max_W")]
    pub lambda_max_w: Option<f64>,
    pub certified: bool,
    pub method: String,
}

fn method_name(m: DesignMethod) -> String {
    match m {
        DesignMethod::Riccati => "riccati".into(),
        DesignMethod::ScaledRiccati { gamma } => format!("scaled-riccati:{gamma}"),
        DesignMethod::Sdp => "sdp".into(),
        DesignMethod::Given => "given".into(),
    }
}

fn parse_method(s: &str) -> CliResult<DesignMethod> {
    Ok(match s {
        "riccati" => DesignMethod::Riccati,
        "sdp" => DesignMethod::Sdp,
        "given" => DesignMethod::Given,
        other => match other.strip_prefix("scaled-riccati:").map(str::parse::<f64>) {
            Some(Ok(gamma)) => DesignMethod::ScaledRiccati { gamma },
            _ => return Err(CliError::Validation(format!("unknown design method {other:?}"))),
        },
    })
}

impl DesignFile {
    pub fn from_design(d: &TerminalDesign) -> Self {
        DesignFile {
            subsystems: d
                .gains
                .iter()
                .zip(&d.penalties)
                .map(|(k, p)| GainEntry {
                    k: mat_to_rows(k),
                    p: mat_to_rows(p),
                })
                .collect(),
            tau: d.tau,
            lambda_max_w: d.lambda_max_w.is_finite().then_some(d.lambda_max_w),
            certified: d.certified,
            method: method_name(d.method),
        }
    }

    /// Rebuilds the design and recomputes its certificate against `chain`.
    pub fn to_design(&self, chain: &ChainSystem) -> CliResult<TerminalDesign> {
        let mut gains = Vec::with_capacity(self.subsystems.len());
        let mut penalties = Vec::with_capacity(self.subsystems.len());
        for (k, e) in self.subsystems.iter().enumerate() {
            gains.push(mat_from_rows(&format!("subsystem {}: K", k + 1), &e.k)?);
            penalties.push(mat_from_rows(&format!("subsystem {}: P", k + 1), &e.p)?);
        }
        let mut d = TerminalDesign::certify(chain, gains, penalties, parse_method(&self.method)?)?;
        d.tau = self.tau;
        Ok(d)
    }
}

/// Variables of the LMI program, for importing an external solver's result.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SdpVarsFile {
    #[serde(rename = "G")]
    pub g: Rows,
    #[serde(rename = "S")]
    pub s: Vec<Rows>,
    #[serde(rename = "Y")]
    pub y: Vec<Rows>,
    #[serde(rename = "W_tilde")]
    pub w_tilde: Vec<Rows>,
    pub mu: Vec<f64>,
    pub tau: f64,
}

impl SdpVarsFile {
    pub fn to_design(&self, chain: &ChainSystem) -> CliResult<TerminalDesign> {
        let list = |name: &str, v: &[Rows]| -> CliResult<Vec<Mat>> {
            v.iter()
                .enumerate()
                .map(|(k, r)| mat_from_rows(&format!("{name}[{k}]"), r))
                .collect()
        };
        let vars = SdpVariables {
            g: mat_from_rows("G", &self.g)?,
            s: list("S", &self.s)?,
            y: list("Y", &self.y)?,
            w_tilde: list("W_tilde", &self.w_tilde)?,
            mu: self.mu.clone(),
            tau: self.tau,
        };
        Ok(design_from_sdp_variables(chain, &vars)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SetEntry {
    #[serde(rename = "F")]
    pub f: Rows,
    pub g: Vec<f64>,
    pub alpha: f64,
    pub certified: bool,
}

/// Scaled terminal sets `{x : F x ≤ g}`; `alpha` is the scaling already applied.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SetsFile {
    pub subsystems: Vec<SetEntry>,
}

impl SetsFile {
    pub fn from_sets(t: &TerminalSets) -> Self {
        SetsFile {
            subsystems: t
                .sets
                .iter()
                .zip(&t.certified)
                .map(|(s, c)| SetEntry {
                    f: mat_to_rows(s.f()),
                    g: vec_to(s.g()),
                    alpha: t.alpha,
                    certified: *c,
                })
                .collect(),
        }
    }

    /// Rebuilds the sets and re-runs the vertex checks against `design`.
    pub fn to_sets(&self, chain: &ChainSystem, design: &TerminalDesign) -> CliResult<TerminalSets> {
        let mut sets = Vec::with_capacity(self.subsystems.len());
        for (k, e) in self.subsystems.iter().enumerate() {
            let f = mat_from_rows(&format!("subsystem {}: F", k + 1), &e.f)?;
            let g = vec_from(&format!("subsystem {}: g", k + 1), &e.g)?;
            if g.len() != f.nrows() {
                return Err(CliError::Validation(format!(
                    "subsystem {}: F has {} rows but g has {} entries",
                    k + 1,
                    f.nrows(),
                    g.len()
                )));
            }
            sets.push(Polytope::new(f, g)?);
        }
        let alpha = self.subsystems.first().map_or(1.0, |e| e.alpha);
        Ok(certify_terminal_sets(chain, design, sets, alpha)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SubsystemSolution {
    /// `x_1, …, x_N`.
    pub x: Rows,
    /// `u_0, …, u_{N−1}`.
    pub u: Rows,
    pub nu: Vec<f64>,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolutionFile {
    pub status: String,
    pub iterations: usize,
    pub cost: f64,
    pub horizon: usize,
    pub subsystems: Vec<SubsystemSolution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_max_deviation: Option<f64>,
}

impl SolutionFile {
    pub fn new(qp: &StructuredQP, it: &IpmIterate, status: &str, iterations: usize) -> Self {
        let lay = &qp.layout;
        let eo = qp.eq_offsets();
        let io = qp.ineq_offsets();
        let seg = |v: &Vector, o: &[usize], i: usize| v.rows(o[i], o[i + 1] - o[i]).iter().copied().collect();
        let subsystems = (0..lay.subsystems())
            .map(|i| SubsystemSolution {
                x: (1..=lay.horizon).map(|t| vec_to(&lay.state(&it.z, i, t))).collect(),
                u: (0..lay.horizon).map(|t| vec_to(&lay.input(&it.z, i, t))).collect(),
                nu: seg(&it.nu, &eo, i),
                lambda: seg(&it.lambda, &io, i),
            })
            .collect();
        SolutionFile {
            status: status.into(),
            iterations,
            cost: qp.cost(&it.z),
            horizon: lay.horizon,
            subsystems,
            oracle_max_deviation: None,
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn flat(vs: &[Vector]) -> String {
    vs.iter()
        .flat_map(|v| v.iter())
        .map(|x| format!("{x:e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Columns `t, x, u, V_N, iters, max_violation, in_terminal_set`; vectors are
/// stacked over subsystems and space-separated.
pub fn trace_csv(trace: &ClosedLoopTrace) -> CliResult<Vec<u8>> {
    let rows = (0..trace.len()).map(|t| {
        vec![
            t.to_string(),
            flat(&trace.states[t]),
            flat(&trace.inputs[t]),
            trace.costs.get(t).map_or_else(|| "nan".into(), |c| format!("{c:e}")),
            trace.iterations[t].to_string(),
            format!("{:e}", trace.max_violation[t]),
            trace.in_terminal_set[t].to_string(),
        ]
    });
    csv_bytes(&["t", "x", "u", "V_N", "iters", "max_violation", "in_terminal_set"], rows)
}

pub fn message_log_csv(log: &MessageLog) -> CliResult<Vec<u8>> {
    let rows = log.records().into_iter().map(|r| {
        vec![
            r.step.to_string(),
            r.sender.to_string(),
            r.receiver.to_string(),
            r.kind.name().to_string(),
            r.payload_elements.to_string(),
        ]
    });
    csv_bytes(&["step", "sender", "receiver", "kind", "payload_elements"], rows)
}

pub fn flop_report_csv(report: &[FlopReportRow]) -> CliResult<Vec<u8>> {
    let rows = report.iter().map(|r| {
        vec![
            r.row.name().to_string(),
            format!("{}", r.predicted),
            r.measured.to_string(),
        ]
    });
    csv_bytes(&["row_name", "predicted", "measured"], rows)
}

/// Comma-separated stacked state, split by subsystem dimension.
pub fn parse_state(text: &str, chain: &ChainSystem) -> CliResult<Vec<Vector>> {
    let values: Vec<f64> = text
        .split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| CliError::Usage(format!("--x0 entry {t:?}: {e}"))))
        .collect::<CliResult<_>>()?;
    if values.len() != chain.total_states() {
        return Err(CliError::Validation(format!(
            "--x0 has {} entries, the plant has {} states",
            values.len(),
            chain.total_states()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Validation("--x0 has a non-finite entry".into()));
    }
    let mut out = Vec::with_capacity(chain.len());
    let mut at = 0;
    for s in chain.subsystems() {
        out.push(Vector::from_column_slice(&values[at..at + s.n()]));
        at += s.n();
    }
    Ok(out)
}
