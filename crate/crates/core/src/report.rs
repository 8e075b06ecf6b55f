//! Run artifacts: trace and regret CSV, summary JSON, partition snapshots.
//!
//! Everything renders to memory; writing files is the caller's job.

use serde::Serialize;
use svg::node::element::{Rectangle, Title};
use svg::Document;

use crate::engine::{BatchKind, BatchRecord, RunTrace};
use crate::environments::InstanceDescriptor;
use crate::error::{Error, Result};
use crate::geometry::StandardCube;

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// `t,batch,cube_depth,cube_index,x1..xd,reward,cumulative_regret`.
/// Cube columns stay empty for pulls that have no cube (zooming).
pub fn trace_csv(trace: &RunTrace, regret: &[f64]) -> Result<Vec<u8>> {
    let dim = trace.pulls.first().map_or(0, |p| p.arm.dim());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "t".to_string(),
        "batch".into(),
        "cube_depth".into(),
        "cube_index".into(),
    ];
    header.extend((1..=dim).map(|i| format!("x{i}")));
    header.extend(["reward".into(), "cumulative_regret".into()]);
    w.write_record(&header).map_err(csv_error)?;
    for (p, r) in trace.pulls.iter().zip(regret) {
        let mut row = vec![p.t.to_string(), p.batch.to_string()];
        match &p.cube {
            Some(c) => {
                row.push(c.depth().to_string());
                row.push(index_label(c));
            }
            None => row.extend([String::new(), String::new()]),
        }
        row.extend(p.arm.coords().iter().map(f64::to_string));
        row.push(p.reward.to_string());
        row.push(r.to_string());
        w.write_record(&row).map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn index_label(c: &StandardCube) -> String {
    c.index()
        .iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join("-")
}

/// `t,regret`.
pub fn regret_csv(regret: &[f64]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "regret"]).map_err(csv_error)?;
    for (i, r) in regret.iter().enumerate() {
        w.write_record([(i + 1).to_string(), r.to_string()])
            .map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchSummary {
    pub index: usize,
    pub kind: BatchKind,
    pub depth: u32,
    pub edge: f64,
    pub samples: u64,
    pub active_cubes: usize,
    pub eliminated_cubes: usize,
    pub mu_hat_max: Option<f64>,
    pub first_t: u64,
    pub last_t: u64,
}

impl From<&BatchRecord> for BatchSummary {
    fn from(b: &BatchRecord) -> Self {
        Self {
            index: b.index,
            kind: b.kind,
            depth: b.depth,
            edge: b.edge,
            samples: b.samples,
            active_cubes: b.active.len(),
            eliminated_cubes: b.eliminated.len(),
            mu_hat_max: b.mu_hat_max,
            first_t: b.first_t,
            last_t: b.last_t,
        }
    }
}

pub const ROUND_COUNTING: &str =
    "one round per batch on the grid: every commit, plus the final segment ending at t = T (a batch cut short by the horizon, or the cleanup run)";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub algorithm: String,
    pub instance: InstanceDescriptor,
    pub horizon: u64,
    pub seed: u64,
    pub schedule: Option<String>,
    pub grid: Vec<u64>,
    pub rounds_used: usize,
    pub commits: usize,
    pub round_counting: &'static str,
    pub batches: Vec<BatchSummary>,
    pub final_regret: f64,
}

impl RunSummary {
    pub fn new(trace: &RunTrace, instance: &InstanceDescriptor, regret: &[f64]) -> Self {
        Self {
            algorithm: trace.algorithm.clone(),
            instance: instance.clone(),
            horizon: trace.horizon,
            seed: trace.seed,
            schedule: trace.config.as_ref().map(|c| c.schedule.name().to_string()),
            grid: trace.grid.clone(),
            rounds_used: trace.rounds_used(),
            commits: trace.commits(),
            round_counting: ROUND_COUNTING,
            batches: trace.batches.iter().map(BatchSummary::from).collect(),
            final_regret: regret.last().copied().unwrap_or(0.0),
        }
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellState {
    Active,
    JustEliminated,
    EliminatedEarlier,
}

impl CellState {
    fn fill(self) -> &'static str {
        match self {
            Self::Active => "#ffffff",
            Self::JustEliminated => "#555555",
            Self::EliminatedEarlier => "#cccccc",
        }
    }
}

/// The partition as it stands before batch `m`, one entry per cube.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionSnapshot {
    pub batch: usize,
    pub cells: Vec<(StandardCube, CellState)>,
}

impl PartitionSnapshot {
    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|(_, s)| *s == state).count()
    }
}

/// Snapshots before every played batch except cleanup.
pub fn partition_snapshots(trace: &RunTrace) -> Vec<PartitionSnapshot> {
    let mut earlier: Vec<StandardCube> = Vec::new();
    let mut recent: Vec<StandardCube> = Vec::new();
    let mut out = Vec::new();
    for b in &trace.batches {
        if b.kind == BatchKind::Cleanup {
            break;
        }
        let mut cells: Vec<(StandardCube, CellState)> = Vec::new();
        cells.extend(
            earlier
                .iter()
                .map(|c| (c.clone(), CellState::EliminatedEarlier)),
        );
        cells.extend(
            recent
                .iter()
                .map(|c| (c.clone(), CellState::JustEliminated)),
        );
        cells.extend(b.active.iter().map(|c| (c.clone(), CellState::Active)));
        out.push(PartitionSnapshot {
            batch: b.index,
            cells,
        });
        earlier.append(&mut recent);
        recent = b.eliminated.clone();
    }
    out
}

const CANVAS: f64 = 512.0;

/// Renders a snapshot of a 1- or 2-dimensional run; the second axis points up.
pub fn snapshot_svg(snapshot: &PartitionSnapshot) -> Result<String> {
    let dim = snapshot.cells.first().map_or(2, |(c, _)| c.dim());
    if dim > 2 {
        return Err(Error::InvalidParams(format!(
            "partition snapshots need d <= 2 (got d={dim})"
        )));
    }
    let mut doc = Document::new()
        .set("viewBox", (0, 0, CANVAS, CANVAS))
        .set("width", CANVAS)
        .set("height", CANVAS)
        .add(Title::new(format!(
            "partition before batch {}",
            snapshot.batch
        )));
    for (cube, state) in &snapshot.cells {
        let (x0, x1) = cube.interval(0);
        let (y0, y1) = if dim == 2 {
            cube.interval(1)
        } else {
            (0.0, 1.0)
        };
        doc = doc.add(
            Rectangle::new()
                .set("x", x0 * CANVAS)
                .set("y", (1.0 - y1) * CANVAS)
                .set("width", (x1 - x0) * CANVAS)
                .set("height", (y1 - y0) * CANVAS)
                .set("fill", state.fill())
                .set("stroke", "#000000")
                .set("stroke-width", 0.5)
                .set("data-cube", cube.to_string()),
        );
    }
    Ok(doc.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::cumulative_regret;
    use crate::engine::{run_blin, RunConfig};
    use crate::environments::{constant_instance, linear_instance};
    use crate::sequences::EdgeLengthSchedule;

    fn linear_run() -> (RunTrace, Vec<f64>) {
        let inst = linear_instance();
        let cfg = RunConfig::new(20_000, EdgeLengthSchedule::Doubling, 3).noiseless();
        let trace = run_blin(&cfg, &inst).unwrap();
        let regret = cumulative_regret(&trace, &inst);
        (trace, regret)
    }

    #[test]
    fn csv_shapes() {
        let (trace, regret) = linear_run();
        let text = String::from_utf8(trace_csv(&trace, &regret).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,batch,cube_depth,cube_index,x1,reward,cumulative_regret"
        );
        assert_eq!(text.lines().count(), 20_001);
        let r = String::from_utf8(regret_csv(&regret).unwrap()).unwrap();
        assert_eq!(r.lines().next().unwrap(), "t,regret");
        assert!(r.lines().nth(1).unwrap().starts_with("1,"));
    }

    #[test]
    fn constant_summary_has_zero_regret() {
        let inst = constant_instance(1, 0.0).unwrap();
        let cfg = RunConfig::new(100, EdgeLengthSchedule::Doubling, 1);
        let trace = run_blin(&cfg, &inst).unwrap();
        let regret = cumulative_regret(&trace, &inst);
        let s = RunSummary::new(&trace, inst.descriptor(), &regret);
        assert_eq!(s.final_regret, 0.0);
        let v: serde_json::Value = serde_json::from_slice(&s.to_json().unwrap()).unwrap();
        assert_eq!(v["rounds_used"], trace.rounds_used());
        assert_eq!(v["instance"]["kind"], "constant");
    }

    #[test]
    fn snapshots_tile_and_match_records() {
        let inst = crate::environments::two_peak_instance();
        let cfg = RunConfig::new(60_000, EdgeLengthSchedule::Doubling, 2).noiseless();
        let trace = run_blin(&cfg, &inst).unwrap();
        let snaps = partition_snapshots(&trace);
        for (s, b) in snaps.iter().zip(&trace.batches) {
            let area: f64 = s.cells.iter().map(|(c, _)| c.edge() * c.edge()).sum();
            assert!((area - 1.0).abs() < 1e-12);
            assert_eq!(s.count(CellState::Active), b.active.len());
            let svg = snapshot_svg(s).unwrap();
            assert_eq!(svg.matches("<rect").count(), s.cells.len());
        }
        for w in snaps.windows(2) {
            let prev = &trace.batches[w[0].batch - 1];
            assert_eq!(w[1].count(CellState::JustEliminated), prev.eliminated.len());
        }
    }
}
