use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Force coefficient predicted by a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Drag,
    Lift,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Drag => "drag",
            Target::Lift => "lift",
        })
    }
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drag" => Ok(Target::Drag),
            "lift" => Ok(Target::Lift),
            other => Err(Error::InvalidArgument(format!(
                "unknown target `{other}` (expected drag or lift)"
            ))),
        }
    }
}

/// What the `value` column of a dataset holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetLabel {
    Drag,
    Lift,
    Residual,
}

impl From<Target> for TargetLabel {
    fn from(t: Target) -> Self {
        match t {
            Target::Drag => TargetLabel::Drag,
            Target::Lift => TargetLabel::Lift,
        }
    }
}

/// One simulated run: a velocity and its sampled coefficient history.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub u_bar: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub const DEFAULT_VELOCITY_DOMAIN: (f64, f64) = (0.9, 1.1);
pub const DEFAULT_TIME_WINDOW: (f64, f64) = (0.0, 8.0);

/// Triplets `(u, t, value)` grouped by trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletDataset {
    trajectories: Vec<Trajectory>,
    pub label: TargetLabel,
    pub t0: f64,
    pub tf: f64,
    pub velocity_domain: (f64, f64),
}

impl TripletDataset {
    /// Validates every structural invariant; velocities outside the default
    /// domain are accepted with a logged warning.
    pub fn new(trajectories: Vec<Trajectory>, label: TargetLabel, t0: f64, tf: f64) -> Result<Self> {
        let ds = Self {
            trajectories,
            label,
            t0,
            tf,
            velocity_domain: DEFAULT_VELOCITY_DOMAIN,
        };
        ds.validate()?;
        for w in ds.domain_warnings() {
            log::warn!("{w}");
        }
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if self.trajectories.is_empty() {
            return Err(Error::Empty("dataset has no trajectories"));
        }
        if !(self.t0.is_finite() && self.tf.is_finite() && self.t0 < self.tf) {
            return Err(Error::InvalidArgument(format!(
                "time window [{}, {}] is not a finite increasing interval",
                self.t0, self.tf
            )));
        }
        let q = self.trajectories[0].len();
        for (i, tr) in self.trajectories.iter().enumerate() {
            if tr.times.len() != tr.values.len() {
                return Err(Error::InvalidArgument(format!(
                    "trajectory {i}: {} times but {} values",
                    tr.times.len(),
                    tr.values.len()
                )));
            }
            if tr.is_empty() {
                return Err(Error::Empty("trajectory with no samples"));
            }
            if tr.len() != q {
                return Err(Error::InvalidArgument(format!(
                    "trajectory {i} has {} samples, expected q = {q}",
                    tr.len()
                )));
            }
            if !tr.u_bar.is_finite() {
                return Err(Error::NonFinite(format!("velocity of trajectory {i}")));
            }
            if tr.values.iter().chain(&tr.times).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("samples of trajectory {i}")));
            }
            if tr.times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidArgument(format!(
                    "trajectory {i}: times are not strictly increasing"
                )));
            }
            if tr.times[0] < self.t0 || tr.times[tr.len() - 1] > self.tf {
                return Err(Error::InvalidArgument(format!(
                    "trajectory {i}: times leave the window [{}, {}]",
                    self.t0, self.tf
                )));
            }
        }
        Ok(())
    }

    pub fn domain_warnings(&self) -> Vec<String> {
        let (lo, hi) = self.velocity_domain;
        self.trajectories
            .iter()
            .filter(|t| t.u_bar < lo || t.u_bar > hi)
            .map(|t| format!("velocity {} m/s lies outside the domain [{lo}, {hi}]", t.u_bar))
            .collect()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn num_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    /// Samples per trajectory.
    pub fn q(&self) -> usize {
        self.trajectories[0].len()
    }

    pub fn num_triplets(&self) -> usize {
        self.num_trajectories() * self.q()
    }

    pub fn velocities(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.u_bar).collect()
    }

    /// True when every trajectory is sampled on the same time grid.
    pub fn shared_time_grid(&self) -> bool {
        let first = &self.trajectories[0].times;
        self.trajectories.iter().all(|t| &t.times == first)
    }

    /// Dataset over a subset of trajectories, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let trajectories = indices
            .iter()
            .map(|&i| {
                self.trajectories.get(i).cloned().ok_or(Error::DimensionMismatch {
                    context: "trajectory index",
                    expected: self.trajectories.len(),
                    received: i,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ds = Self {
            trajectories,
            ..self.clone_header()
        };
        ds.validate()?;
        ds.velocity_domain = self.velocity_domain;
        Ok(ds)
    }

    /// Same trajectories and times with every value replaced by `f(trajectory index, sample index)`.
    pub fn map_values(
        &self,
        label: TargetLabel,
        mut f: impl FnMut(usize, usize, &Trajectory) -> f64,
    ) -> Result<Self> {
        let trajectories = self
            .trajectories
            .iter()
            .enumerate()
            .map(|(i, tr)| Trajectory {
                u_bar: tr.u_bar,
                times: tr.times.clone(),
                values: (0..tr.len()).map(|j| f(i, j, tr)).collect(),
            })
            .collect();
        let ds = Self {
            trajectories,
            label,
            ..self.clone_header()
        };
        ds.validate()?;
        Ok(ds)
    }

    fn clone_header(&self) -> Self {
        Self {
            trajectories: Vec::new(),
            label: self.label,
            t0: self.t0,
            tf: self.tf,
            velocity_domain: self.velocity_domain,
        }
    }

    /// Content hash over velocities, times and values (hex, 16 bytes).
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for tr in &self.trajectories {
            hasher.update(tr.u_bar.to_le_bytes());
            for (t, v) in tr.times.iter().zip(&tr.values) {
                hasher.update(t.to_le_bytes());
                hasher.update(v.to_le_bytes());
            }
        }
        hasher.finalize()[..16].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes the `u,t,value` CSV layout, one row per triplet.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(b"u,t,value\n")?;
        for tr in &self.trajectories {
            for (t, v) in tr.times.iter().zip(&tr.values) {
                // Shortest round-trip decimal representation.
                writeln!(out, "{},{},{}", tr.u_bar, t, v)?;
            }
        }
        out.flush()
    }

    /// Parses the CSV layout; `origin` names the source in error messages.
    pub fn read_csv<R: Read>(input: R, label: TargetLabel, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let header = reader
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        if header.iter().collect::<Vec<_>>() != ["u", "t", "value"] {
            return Err(parse_err(1, format!("expected header `u,t,value`, found `{}`", header.iter().collect::<Vec<_>>().join(","))));
        }

        let mut trajectories: Vec<Trajectory> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != 3 {
                return Err(parse_err(line, format!("expected 3 fields, found {}", record.len())));
            }
            let field = |k: usize, name: &str| -> Result<f64> {
                let v: f64 = record[k]
                    .parse()
                    .map_err(|e| parse_err(line, format!("{name} `{}`: {e}", &record[k])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(line, format!("{name} is not finite")))
                }
            };
            let (u, t, v) = (field(0, "u")?, field(1, "t")?, field(2, "value")?);
            match trajectories.last_mut() {
                Some(tr) if tr.u_bar.to_bits() == u.to_bits() => {
                    if t <= *tr.times.last().unwrap() {
                        return Err(parse_err(line, format!(
                            "time {t} does not increase within the trajectory for u = {u}"
                        )));
                    }
                    tr.times.push(t);
                    tr.values.push(v);
                }
                _ => trajectories.push(Trajectory {
                    u_bar: u,
                    times: vec![t],
                    values: vec![v],
                }),
            }
        }
        if trajectories.is_empty() {
            return Err(Error::Empty("dataset file has no rows"));
        }
        let q = trajectories[0].len();
        if let Some((i, tr)) = trajectories.iter().enumerate().find(|(_, tr)| tr.len() != q) {
            return Err(Error::InvalidArgument(format!(
                "{}: trajectory {i} (u = {}) has {} rows, expected q = {q}",
                origin.display(),
                tr.u_bar,
                tr.len()
            )));
        }
        let (mut t0, mut tf) = DEFAULT_TIME_WINDOW;
        for tr in &trajectories {
            t0 = t0.min(tr.times[0]);
            tf = tf.max(*tr.times.last().unwrap());
        }
        Self::new(trajectories, label, t0, tf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, label: TargetLabel) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), label, path)
    }
}

pub fn save_triplets(dataset: &TripletDataset, path: &Path) -> Result<()> {
    dataset.save(path)
}

pub fn load_triplets(path: &Path, label: TargetLabel) -> Result<TripletDataset> {
    TripletDataset::load(path, label)
}
