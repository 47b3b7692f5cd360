//! Batch run driver: time loop over a scenario with series, snapshot,
//! line-cut, checkpoint and manifest outputs.
//!
//! Output directory layout:
//!
//! - `scenario.toml`: the config that was run
//! - `series.csv`: one row per time level, columns [`SERIES_COLUMNS`]
//! - `snapshots/step_NNNNNN_{background,patch,solid}.vtk`
//! - `line_cuts/<name>_step_NNNNNN.csv` and `..._crossings.csv`
//! - `checkpoints/step_NNNNNN.json`, `checkpoints/final.json`, and
//!   `checkpoints/error.json` after a failed step
//! - `manifest.json`

use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{FsiError, Result};
use crate::output::{
    sample_line_cut, series_csv, write_file, write_snapshot, LineCut, SeriesRow, SERIES_COLUMNS,
};
use crate::problem::{FieldState, Mode, Problem};
use crate::scenario::ScenarioConfig;

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub scenario: String,
    pub state: FieldState,
    pub series: Vec<SeriesRow>,
    /// Outputs written so far.
    pub manifest: Manifest,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| FsiError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| FsiError::Parse(e.to_string()))?;
        write_file(path, text.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineCutRecord {
    pub name: String,
    pub step: usize,
    pub t: f64,
    pub samples: String,
    pub crossings: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub mode: Mode,
    pub notes: Vec<String>,
    pub series: String,
    pub columns: Vec<String>,
    /// Solid node used for d1, d2.
    pub probe_node: Option<usize>,
    pub steps: usize,
    pub final_time: f64,
    pub status: String,
    pub snapshots: Vec<String>,
    pub line_cuts: Vec<LineCutRecord>,
    pub checkpoints: Vec<String>,
    pub solver_version: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop after this many steps in this invocation.
    pub max_steps: Option<usize>,
    pub restart: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub state: FieldState,
    pub series: Vec<SeriesRow>,
    pub line_cuts: Vec<(String, LineCut)>,
    pub manifest: Manifest,
}

/// Solid node nearest to `probe` in the reference configuration (lowest id on ties).
pub fn probe_node(problem: &Problem, cfg: &ScenarioConfig) -> Option<usize> {
    let (s, x) = (problem.solid.as_ref()?, cfg.output.probe?);
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in s.mesh.nodes.iter().enumerate() {
        let d = (p - x).norm();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| i)
}

struct Writer<'a> {
    cfg: &'a ScenarioConfig,
    problem: &'a Problem,
    out: &'a Path,
    manifest: Manifest,
    line_cuts: Vec<(String, LineCut)>,
}

impl Writer<'_> {
    fn checkpoint(&mut self, name: &str, state: &FieldState, series: &[SeriesRow]) -> Result<()> {
        let rel = format!("checkpoints/{name}.json");
        if !self.manifest.checkpoints.contains(&rel) {
            self.manifest.checkpoints.push(rel.clone());
        }
        let cp = Checkpoint {
            scenario: self.cfg.name.clone(),
            state: state.clone(),
            series: series.to_vec(),
            manifest: self.manifest.clone(),
        };
        cp.save(&self.out.join(&rel))
    }

    fn level_outputs(&mut self, state: &FieldState) -> Result<()> {
        let step = state.step;
        let every = self.cfg.output.snapshot_every;
        if every > 0 && step.is_multiple_of(every) {
            for f in write_snapshot(
                self.problem,
                state,
                &self.out.join("snapshots"),
                &format!("step_{step:06}"),
            )? {
                self.manifest.snapshots.push(format!("snapshots/{f}"));
            }
        }
        let dt = self.cfg.time.dt;
        for spec in &self.cfg.output.line_cuts {
            if !spec
                .times
                .iter()
                .any(|&t| (state.time - t).abs() <= 0.5 * dt * (1.0 + 1e-9))
            {
                continue;
            }
            let cut = sample_line_cut(self.problem, state, spec.p0, spec.p1, spec.n_samples)?;
            let stem = format!("line_cuts/{}_step_{step:06}", spec.name);
            let (samples, crossings) = (format!("{stem}.csv"), format!("{stem}_crossings.csv"));
            write_file(&self.out.join(&samples), cut.samples_csv().as_bytes())?;
            write_file(&self.out.join(&crossings), cut.crossings_csv().as_bytes())?;
            self.manifest.line_cuts.push(LineCutRecord {
                name: spec.name.clone(),
                step,
                t: state.time,
                samples,
                crossings,
            });
            self.line_cuts.push((spec.name.clone(), cut));
        }
        Ok(())
    }

    fn finish(&mut self, state: &FieldState, series: &[SeriesRow], status: String) -> Result<()> {
        write_file(&self.out.join("series.csv"), series_csv(series).as_bytes())?;
        self.manifest.steps = state.step;
        self.manifest.final_time = state.time;
        self.manifest.status = status;
        let text = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| FsiError::Parse(e.to_string()))?;
        write_file(&self.out.join("manifest.json"), text.as_bytes())
    }
}

/// Runs `cfg` into `out`. A solver error writes `checkpoints/error.json` with
/// the last converged level and a manifest whose status names the error,
/// then returns the error.
pub fn run(cfg: &ScenarioConfig, out: &Path, opts: &RunOptions) -> Result<RunReport> {
    let problem = cfg.build()?;
    for dir in ["snapshots", "line_cuts", "checkpoints"] {
        std::fs::create_dir_all(out.join(dir))?;
    }
    write_file(&out.join("scenario.toml"), cfg.to_toml()?.as_bytes())?;
    let probe = probe_node(&problem, cfg);

    let mut manifest = Manifest {
        scenario: cfg.name.clone(),
        mode: cfg.mode,
        notes: cfg.notes.clone(),
        series: "series.csv".into(),
        columns: SERIES_COLUMNS.iter().map(|c| c.to_string()).collect(),
        probe_node: probe,
        steps: 0,
        final_time: cfg.time.t0,
        status: "running".into(),
        snapshots: Vec::new(),
        line_cuts: Vec::new(),
        checkpoints: Vec::new(),
        solver_version: env!("CARGO_PKG_VERSION").into(),
    };
    let (mut state, mut series) = match &opts.restart {
        Some(path) => {
            let cp = Checkpoint::load(path)?;
            if cp.scenario != cfg.name {
                return Err(FsiError::Config(format!(
                    "checkpoint belongs to \"{}\", not \"{}\"",
                    cp.scenario, cfg.name
                )));
            }
            info!(
                "restarting {} at step {} (t = {})",
                cfg.name, cp.state.step, cp.state.time
            );
            manifest = cp.manifest;
            (cp.state, cp.series)
        }
        None => {
            let s = problem.initial_state()?;
            let row = SeriesRow::of(&s, probe, 0, 0);
            (s, vec![row])
        }
    };

    let mut w = Writer {
        cfg,
        problem: &problem,
        out,
        manifest,
        line_cuts: Vec::new(),
    };
    if opts.restart.is_none() {
        w.level_outputs(&state)?;
    }

    let total = cfg.time.num_steps();
    let mut budget = opts.max_steps.unwrap_or(usize::MAX);
    while state.step < total && budget > 0 {
        let (next, report) = match problem.step(&state) {
            Ok(r) => r,
            Err(e) => {
                warn!("step {} failed: {e}", state.step + 1);
                w.checkpoint("error", &state, &series)?;
                w.finish(
                    &state,
                    &series,
                    format!("failed at step {}: {e}", state.step + 1),
                )?;
                return Err(e);
            }
        };
        budget -= 1;
        state = next;
        info!(
            "step {} t = {} iterations {} cycles {}",
            state.step, state.time, report.iterations, report.cycles
        );
        series.push(SeriesRow::of(
            &state,
            probe,
            report.iterations,
            report.cycles,
        ));
        w.level_outputs(&state)?;
        let k = cfg.output.checkpoint_every;
        if k > 0 && state.step % k == 0 {
            w.checkpoint(&format!("step_{:06}", state.step), &state, &series)?;
        }
    }
    w.checkpoint("final", &state, &series)?;
    let status = if state.step >= total {
        "completed"
    } else {
        "stopped"
    };
    w.finish(&state, &series, status.into())?;
    Ok(RunReport {
        state,
        series,
        line_cuts: w.line_cuts,
        manifest: w.manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bc::TimeLaw;
    use crate::scenario::builtin_scenario;

    // odd grid: no patch vertex sits on a grid line along the symmetry axes
    fn tiny_ball() -> ScenarioConfig {
        let mut cfg = builtin_scenario("compressing_ball:desk").unwrap();
        if let crate::scenario::MeshSpec::Rect { nx, ny, .. } = &mut cfg.background {
            *nx = 9;
            *ny = 9;
        }
        cfg.patch = Some(crate::scenario::MeshSpec::Annulus {
            center: crate::geometry::vec2(0.0, 0.0),
            r_inner: 0.75,
            r_outer: 0.9,
            n_circum: 8,
            n_radial: 1,
            grading: 1.0,
        });
        cfg.solid.as_mut().unwrap().mesh = crate::scenario::MeshSpec::Disc {
            center: crate::geometry::vec2(0.0, 0.0),
            radius: 0.75,
            n_circum: 8,
        };
        cfg.time.dt = 0.1;
        cfg.time.t_end = 0.4;
        cfg
    }

    #[test]
    fn zero_inflow_ball_stays_at_rest() {
        let mut cfg = tiny_ball();
        for bc in &mut cfg.fluid_bc {
            bc.law = TimeLaw::zero();
        }
        let dir = tempfile::tempdir().unwrap();
        let report = run(&cfg, dir.path(), &RunOptions::default()).unwrap();
        assert_eq!(report.series.len(), 5);
        for r in &report.series {
            assert!(r.f[0].abs() < 1e-8 && r.f[1].abs() < 1e-8, "{r:?}");
        }
        assert!(!dir
            .path()
            .join("snapshots")
            .read_dir()
            .unwrap()
            .any(|_| true));
        let manifest: Manifest = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest.status, "completed");
        assert_eq!(manifest.columns, SERIES_COLUMNS);
    }

    #[test]
    fn restart_reproduces_outputs_bitwise() {
        let mut cfg = tiny_ball();
        cfg.output.snapshot_every = 2;
        cfg.output.checkpoint_every = 2;
        let full = tempfile::tempdir().unwrap();
        let a = run(&cfg, full.path(), &RunOptions::default()).unwrap();

        let part = tempfile::tempdir().unwrap();
        run(
            &cfg,
            part.path(),
            &RunOptions {
                max_steps: Some(2),
                restart: None,
            },
        )
        .unwrap();
        let cp = part.path().join("checkpoints/step_000002.json");
        let b = run(
            &cfg,
            part.path(),
            &RunOptions {
                max_steps: None,
                restart: Some(cp),
            },
        )
        .unwrap();

        assert_eq!(a.state, b.state);
        for f in [
            "series.csv",
            "manifest.json",
            "snapshots/step_000004_background.vtk",
            "snapshots/step_000004_solid.vtk",
            "checkpoints/final.json",
        ] {
            let x = std::fs::read(full.path().join(f)).unwrap();
            let y = std::fs::read(part.path().join(f)).unwrap();
            assert!(x == y, "{f} differs");
        }
        assert!(a.series.iter().any(|r| r.d[1] != 0.0));
    }

    #[test]
    fn failure_leaves_error_checkpoint() {
        let mut cfg = tiny_ball();
        cfg.newton.max_iterations = 1;
        cfg.newton.max_halvings = 0;
        let dir = tempfile::tempdir().unwrap();
        assert!(run(&cfg, dir.path(), &RunOptions::default()).is_err());
        let cp = Checkpoint::load(&dir.path().join("checkpoints/error.json")).unwrap();
        assert_eq!(cp.state.step, 0);
        let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert!(manifest.contains("failed at step 1"));
    }
}
