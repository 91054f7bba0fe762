//! CSV readers and writers for trajectories, observations, and samples.

use std::fmt::Write as _;
use std::path::Path;

use crate::abc::WeightedSample;
use crate::error::{Error, Result};
use crate::sim::{ObservationModel, ObservationSet, Trajectory};

/// Trajectory as `time,<species...>`, one row per snapshot.
pub fn trajectory_to_csv(traj: &Trajectory, species: &[String]) -> String {
    let mut out = String::from("time");
    for s in species {
        let _ = write!(out, ",{s}");
    }
    out.push('\n');
    for i in 0..traj.len() {
        let _ = write!(out, "{}", traj.times[i]);
        for c in traj.row(i) {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

/// Observations as `time,<observed species...>`, one row per observation
/// time. Values are printed with full round-trip precision.
pub fn observations_to_csv(
    obs: &ObservationSet,
    obs_model: &ObservationModel,
    species: &[String],
) -> String {
    let mut out = String::from("time");
    for &i in &obs_model.observed {
        let _ = write!(out, ",{}", species[i]);
    }
    out.push('\n');
    for (row, &t) in obs_model.times.iter().enumerate() {
        let _ = write!(out, "{t}");
        for v in obs.row(row) {
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
    }
    out
}

/// Parse observations written by [`observations_to_csv`]; the column count
/// and row count must match the observation model.
pub fn observations_from_csv(text: &str, obs_model: &ObservationModel) -> Result<ObservationSet> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let _header = lines
        .next()
        .ok_or_else(|| Error::Config("empty observations CSV".into()))?;
    let mut values = Vec::new();
    let mut n_rows = 0usize;
    for line in lines {
        let mut fields = line.split(',');
        let t: f64 = fields
            .next()
            .ok_or_else(|| Error::Config("missing time column".into()))?
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad time value in row {n_rows}")))?;
        let expect = obs_model
            .times
            .get(n_rows)
            .ok_or_else(|| Error::Config("more observation rows than model times".into()))?;
        if (t - expect).abs() > 1e-9 * (1.0 + expect.abs()) {
            return Err(Error::Config(format!(
                "observation time {t} does not match model time {expect}"
            )));
        }
        let mut cols = 0usize;
        for field in fields {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad value in row {n_rows}")))?;
            values.push(v);
            cols += 1;
        }
        if cols != obs_model.observed.len() {
            return Err(Error::Dimension(format!(
                "row {n_rows} has {cols} values for {} observed species",
                obs_model.observed.len()
            )));
        }
        n_rows += 1;
    }
    if n_rows != obs_model.times.len() {
        return Err(Error::Dimension(format!(
            "{n_rows} observation rows for {} model times",
            obs_model.times.len()
        )));
    }
    Ok(ObservationSet { values, n_times: n_rows, n_cols: obs_model.observed.len() })
}

/// Samples as `level,weight,cost,approx_accept,exact_run,exact_accept,theta0..`.
pub fn samples_to_csv(samples: &[WeightedSample]) -> String {
    let dim = samples.first().map_or(0, |s| s.theta.len());
    let mut out = String::from("level,weight,cost,approx_accept,exact_run,exact_accept");
    for j in 0..dim {
        let _ = write!(out, ",theta{j}");
    }
    out.push('\n');
    for s in samples {
        let exact_accept = match s.exact_accept {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        let _ = write!(
            out,
            "{},{:?},{:?},{},{},{}",
            s.level,
            s.w,
            s.cost,
            u8::from(s.approx_accept),
            u8::from(s.exact_run),
            exact_accept
        );
        for t in &s.theta {
            let _ = write!(out, ",{t:?}");
        }
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}
