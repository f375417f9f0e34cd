//! Run configuration: flat key=value file, command-line overrides on top,
//! physical constraints re-validated before anything runs.

use qdec_core::integrator::{IntegratorConfig, Method};
use qdec_core::quench::{CouplingSplit, ModeGrid, QuenchSchedule};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub n: usize,
    pub delta: f64,
    pub tau_q: f64,
    pub g_start: f64,
    pub g_end: f64,
    /// Trace sampling step in g.
    pub dg: f64,
    pub integrator: String,
    /// None: the step rule dt = min(0.01, 0.05/omega_max) decides.
    pub dt_max: Option<f64>,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Evolve every m-th mode and integrate the interpolant instead of
    /// taking the full product.
    pub subsample: usize,
    /// Fields at which full mode snapshots are taken.
    pub snapshots: Vec<f64>,
    /// Ramp may stop anywhere instead of covering both critical points.
    pub partial: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_root: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 1000,
            delta: 0.01,
            tau_q: 250.0,
            g_start: 5.0,
            g_end: -3.0,
            dg: 2.5e-3,
            integrator: "magnus4".into(),
            dt_max: None,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            subsample: 1,
            snapshots: vec![2.0, 0.0, -2.0],
            partial: false,
            out_root: None,
        }
    }
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<f64>().map_err(|_| format!("bad number '{p}'"))
        })
        .collect()
}

impl RunConfig {
    pub fn apply_file(&mut self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                format!("{}:{}: expected key=value, got '{line}'", path.display(), i + 1)
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
        }
        Ok(())
    }

    pub fn apply_override(&mut self, pair: &str) -> Result<(), String> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| format!("--set expects key=value, got '{pair}'"))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse()
                .map_err(|_| format!("bad value '{v}' for {key}"))
        }
        match key {
            "n" => self.n = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "tau_q" => self.tau_q = num(key, value)?,
            "g_start" => self.g_start = num(key, value)?,
            "g_end" => self.g_end = num(key, value)?,
            "dg" => self.dg = num(key, value)?,
            "integrator" => {
                value.parse::<Method>().map_err(|e| e.to_string())?;
                self.integrator = value.to_ascii_lowercase();
            }
            "dt_max" => self.dt_max = Some(num(key, value)?),
            "rel_tol" => self.rel_tol = num(key, value)?,
            "abs_tol" => self.abs_tol = num(key, value)?,
            "subsample" => self.subsample = num(key, value)?,
            "snapshots" => self.snapshots = parse_f64_list(value)?,
            "partial" => {
                self.partial = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    other => return Err(format!("bad value '{other}' for partial")),
                }
            }
            "out_root" => self.out_root = Some(value.to_string()),
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Build the validated physical objects. Every constraint the library
    /// enforces is checked here so config mistakes surface before a run.
    pub fn resolve(&self) -> Result<Resolved, String> {
        let schedule = if self.partial {
            QuenchSchedule::partial(self.tau_q, self.g_start, self.g_end)
        } else {
            QuenchSchedule::new(self.tau_q, self.g_start, self.g_end)
        }
        .map_err(|e| e.to_string())?;
        let grid = ModeGrid::new(self.n).map_err(|e| e.to_string())?;
        CouplingSplit::pair(self.delta).map_err(|e| e.to_string())?;
        if !(self.dg > 0.0 && self.dg.is_finite()) {
            return Err(format!("dg must be positive, got {}", self.dg));
        }
        if self.subsample == 0 {
            return Err("subsample factor must be at least 1".into());
        }
        for &g in &self.snapshots {
            if !(g <= self.g_start && g >= self.g_end) {
                return Err(format!(
                    "snapshot g={g} lies outside the ramp [{}, {}]",
                    self.g_end, self.g_start
                ));
            }
        }
        let method: Method = self.integrator.parse().map_err(|e: qdec_core::Error| e.to_string())?;
        let defaults = IntegratorConfig::default_for(&schedule, self.delta);
        let integrator = IntegratorConfig::new(
            method,
            self.dt_max.unwrap_or(defaults.dt_max),
            self.rel_tol,
            self.abs_tol,
        )
        .map_err(|e| e.to_string())?;
        Ok(Resolved {
            schedule,
            grid,
            integrator,
        })
    }

    /// Output directory precedence: --out flag, config out_root, environment,
    /// then ./qdec-out.
    pub fn out_dir(&self, flag: Option<PathBuf>) -> PathBuf {
        flag.or_else(|| self.out_root.as_ref().map(PathBuf::from))
            .or_else(|| std::env::var_os("QDEC_OUT_ROOT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("qdec-out"))
    }
}

pub struct Resolved {
    pub schedule: QuenchSchedule,
    pub grid: ModeGrid,
    pub integrator: IntegratorConfig,
}

/// Uniform g-grid of trace samples with the snapshot fields merged in.
pub struct SampleGrid {
    pub times: Vec<f64>,
    pub snapshot_indices: Vec<usize>,
}

pub fn build_samples(
    schedule: &QuenchSchedule,
    dg: f64,
    snapshots: &[f64],
) -> Result<SampleGrid, String> {
    let (gs, ge) = (schedule.g_start(), schedule.g_end());
    let mut times: Vec<f64> = Vec::new();
    let mut j = 0u64;
    loop {
        let g = gs - j as f64 * dg;
        if g <= ge {
            break;
        }
        times.push(schedule.time_at(g));
        j += 1;
        if j > 50_000_000 {
            return Err("dg produces more than 5e7 samples".into());
        }
    }
    times.push(schedule.time_at(ge));

    let tol = 1e-9 * (schedule.t_end() - schedule.t_start()).max(1.0);
    let near = |a: f64, b: f64| (a - b).abs() <= tol;
    for &g in snapshots {
        let st = schedule.time_at(g);
        let pos = times.partition_point(|&t| t < st);
        let dup = (pos < times.len() && near(times[pos], st))
            || (pos > 0 && near(times[pos - 1], st));
        if !dup {
            times.insert(pos, st);
        }
    }
    let mut idx: Vec<usize> = snapshots
        .iter()
        .map(|&g| {
            let st = schedule.time_at(g);
            let pos = times.partition_point(|&t| t < st);
            if pos < times.len() && near(times[pos], st) {
                pos
            } else {
                pos - 1
            }
        })
        .collect();
    idx.sort_unstable();
    idx.dedup();
    Ok(SampleGrid {
        times,
        snapshot_indices: idx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_layering_and_errors() {
        let dir = std::env::temp_dir().join("qdec-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.conf");
        std::fs::write(&path, "# comment\nn = 200\ndelta=0.02\nsnapshots = 1.5, -1.5\n")
            .unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.n, 200);
        assert_eq!(cfg.delta, 0.02);
        assert_eq!(cfg.snapshots, vec![1.5, -1.5]);
        cfg.apply_override("n=400").unwrap();
        assert_eq!(cfg.n, 400);

        std::fs::write(&path, "bogus_key=1\n").unwrap();
        let err = cfg.apply_file(&path).unwrap_err();
        assert!(err.contains(":1:"), "{err}");
        std::fs::write(&path, "\n\nn 200\n").unwrap();
        let err = cfg.apply_file(&path).unwrap_err();
        assert!(err.contains(":3:"), "{err}");
    }

    #[test]
    fn resolve_rejects_bad_physics() {
        let mut cfg = RunConfig::default();
        cfg.delta = 0.5;
        assert!(cfg.resolve().is_err());
        let mut cfg = RunConfig::default();
        cfg.g_end = 0.5; // full run must cross both critical points
        assert!(cfg.resolve().is_err());
        cfg.partial = true;
        cfg.snapshots = vec![2.0, 1.0]; // defaults would now sit off the ramp
        assert!(cfg.resolve().is_ok());
        cfg.snapshots = vec![0.0];
        assert!(cfg.resolve().is_err());
        let mut cfg = RunConfig::default();
        cfg.snapshots = vec![7.0];
        assert!(cfg.resolve().is_err());
        let mut cfg = RunConfig::default();
        cfg.integrator = "leapfrog".into();
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn sample_grid_merges_snapshots() {
        let sched = QuenchSchedule::new(250.0, 5.0, -3.0).unwrap();
        let grid = build_samples(&sched, 2.5e-3, &[2.0, 0.0, -2.0]).unwrap();
        assert!(grid.times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(grid.snapshot_indices.len(), 3);
        for (&i, want) in grid.snapshot_indices.iter().zip([2.0, 0.0, -2.0]) {
            let g = sched.field_at(grid.times[i]);
            assert!((g - want).abs() < 1e-9, "snapshot landed at g={g}");
        }
        // snapshot at an existing grid point is not duplicated
        let plain = build_samples(&sched, 2.5e-3, &[]).unwrap();
        let merged = build_samples(&sched, 2.5e-3, &[5.0]).unwrap();
        assert_eq!(plain.times.len(), merged.times.len());
        assert_eq!(merged.snapshot_indices, vec![0]);
    }
}
