//! Offline (state, action, value) datasets built by running the exact solver
//! at sampled initial states.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::SolverSettings;
use crate::error::{Error, Result};
use crate::msa::{exact_solve_with, SAConfig};
use crate::problem::{Polytope, ProblemSpec};
use crate::sip::Transcription;

/// Tolerance for lattice rounding and membership of grid nodes.
const GRID_TOL: f64 = 1e-9;

/// One solved initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub x: Vec<f64>,
    /// `η₀` of the recovered policy; `None` when infeasible.
    pub u0: Option<Vec<f64>>,
    pub value: Option<f64>,
    pub feasible: bool,
    pub seed: u64,
    pub iters_used: usize,
    /// The nominal inner solve stalled; the record carries no solution.
    pub stalled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    Grid { h: f64 },
    Random { count: usize, seed: u64 },
    List { count: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub spec_hash: String,
    pub d: usize,
    pub m: usize,
    pub sampling: Sampling,
    pub sa: SAConfig,
    /// Indices of records whose nominal solve stalled.
    #[serde(default)]
    pub stalled: Vec<usize>,
    pub created_by: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_feasible(&self) -> usize {
        self.records.iter().filter(|r| r.feasible).count()
    }

    pub fn n_infeasible(&self) -> usize {
        self.records
            .iter()
            .filter(|r| !r.feasible && !r.stalled)
            .count()
    }

    pub fn infeasible_fraction(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.n_infeasible() as f64 / self.records.len() as f64
        }
    }

    pub fn feasible_records(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| r.feasible)
    }

    /// Record with bitwise-equal state.
    pub fn lookup(&self, x: &[f64]) -> Option<&Record> {
        self.records.iter().find(|r| bits(&r.x) == bits(x))
    }

    /// Rejects artifacts built for a different spec.
    pub fn check_spec(&self, spec: &ProblemSpec) -> Result<()> {
        let expected = spec.hash();
        if self.meta.spec_hash != expected {
            return Err(Error::HashMismatch {
                expected,
                found: self.meta.spec_hash.clone(),
            });
        }
        Ok(())
    }

    /// Largest violation of `H_U u0 <= k_U - ε‖H_U rows‖₁` over feasible records.
    pub fn max_tightened_violation(&self, spec: &ProblemSpec) -> f64 {
        let hu = spec.control_set().h();
        let ku = spec.tightened_control_offsets();
        let mut worst = f64::NEG_INFINITY;
        for r in self.feasible_records() {
            let u = r.u0.as_deref().unwrap_or(&[]);
            for (i, k) in ku.iter().enumerate() {
                let v: f64 = (0..u.len()).map(|j| hu[(i, j)] * u[j]).sum::<f64>() - k;
                worst = worst.max(v);
            }
        }
        worst
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(header(self.meta.d, self.meta.m))?;
        for r in &self.records {
            let mut row: Vec<String> = r.x.iter().map(|v| fmt_num(*v)).collect();
            match &r.u0 {
                Some(u) => row.extend(u.iter().map(|v| fmt_num(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), self.meta.m)),
            }
            row.push(r.value.map(fmt_num).unwrap_or_default());
            row.push(r.feasible.to_string());
            row.push(r.seed.to_string());
            row.push(r.iters_used.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        std::fs::write(
            sidecar_path(path),
            serde_json::to_string_pretty(&self.meta)?,
        )?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let meta: DatasetMeta =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let (d, m) = (meta.d, meta.m);
        let expected = header(d, m);
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_path(path)?;
        let mut rows = rdr.records();
        let head = rows.next().ok_or_else(|| Error::Parse {
            line: 1,
            field: "header".into(),
            message: "file is empty".into(),
        })??;
        let got: Vec<&str> = head.iter().collect();
        if got != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Parse {
                line: 1,
                field: "header".into(),
                message: format!(
                    "expected `{}`, found `{}`",
                    expected.join(","),
                    got.join(",")
                ),
            });
        }
        let stalled: HashSet<usize> = meta.stalled.iter().copied().collect();
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (idx, row) in rows.enumerate() {
            let row = row?;
            let line = idx + 2;
            let perr = |field: &str, message: String| Error::Parse {
                line,
                field: field.to_string(),
                message,
            };
            if row.len() != expected.len() {
                let field = if row.len() < d + m {
                    format!("u_{}", row.len().saturating_sub(d) + 1)
                } else {
                    "u".into()
                };
                return Err(perr(
                    &field,
                    format!(
                        "record {} has {} fields, expected {} (d = {d}, m = {m})",
                        idx,
                        row.len(),
                        expected.len()
                    ),
                ));
            }
            let num = |j: usize| -> Result<Option<f64>> {
                let s = row[j].trim();
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|e| perr(&expected[j], format!("record {idx}: {e}")))
            };
            let mut x = Vec::with_capacity(d);
            for j in 0..d {
                x.push(num(j)?.ok_or_else(|| {
                    perr(&expected[j], format!("record {idx}: state entry is empty"))
                })?);
            }
            let mut u = Vec::with_capacity(m);
            for j in d..d + m {
                u.push(num(j)?);
            }
            let value = num(d + m)?;
            let feasible = match row[d + m + 1].trim() {
                "true" => true,
                "false" => false,
                other => {
                    return Err(perr(
                        "feasible",
                        format!("record {idx}: expected true/false, found `{other}`"),
                    ))
                }
            };
            let seed = row[d + m + 2]
                .trim()
                .parse::<u64>()
                .map_err(|e| perr("seed", format!("record {idx}: {e}")))?;
            let iters_used = row[d + m + 3]
                .trim()
                .parse::<usize>()
                .map_err(|e| perr("iters", format!("record {idx}: {e}")))?;
            let u0 = if feasible {
                let full: Option<Vec<f64>> = u.into_iter().collect();
                if full.is_none() || value.is_none() {
                    return Err(perr(
                        "value",
                        format!("record {idx}: feasible record lacks u0 or value"),
                    ));
                }
                full
            } else {
                None
            };
            if !seen.insert(bits(&x)) {
                return Err(perr("x_1", format!("record {idx}: duplicate state {x:?}")));
            }
            records.push(Record {
                x,
                u0,
                value: if feasible { value } else { None },
                feasible,
                seed,
                iters_used,
                stalled: stalled.contains(&idx),
            });
        }
        Ok(Dataset { records, meta })
    }
}

/// `data.csv` -> `data.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

fn header(d: usize, m: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    h.extend((1..=m).map(|i| format!("u_{i}")));
    h.extend(["value", "feasible", "seed", "iters"].map(String::from));
    h
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn bits(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// Integer lattice indices `m` with `m·h` in the bounding box of `set` and in `set`, lexicographic in `m`.
pub fn grid_lattice(set: &Polytope, h: f64) -> Result<Vec<Vec<i64>>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "grid step must be positive, got {h}"
        )));
    }
    let (lo, hi) = set.bounding_box()?;
    let diameter = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    if h > diameter {
        return Err(Error::InvalidArgument(format!(
            "grid step {h} exceeds the box diameter {diameter}"
        )));
    }
    let ranges: Vec<(i64, i64)> = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| {
            (
                (a / h - GRID_TOL).ceil() as i64,
                (b / h + GRID_TOL).floor() as i64,
            )
        })
        .collect();
    let scale = set.k().amax().max(1.0);
    let mut out = Vec::new();
    let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    if ranges.iter().any(|r| r.0 > r.1) {
        return Ok(out);
    }
    loop {
        let x: Vec<f64> = idx.iter().map(|&i| i as f64 * h).collect();
        if set.contains(&x, GRID_TOL * scale) {
            out.push(idx.clone());
        }
        // odometer with the last coordinate fastest
        let mut k = idx.len();
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            if idx[k] < ranges[k].1 {
                idx[k] += 1;
                break;
            }
            idx[k] = ranges[k].0;
        }
    }
}

/// Lattice nodes `m·h` inside `set`.
pub fn grid_states(set: &Polytope, h: f64) -> Result<Vec<Vec<f64>>> {
    Ok(grid_lattice(set, h)?
        .into_iter()
        .map(|m| m.into_iter().map(|i| i as f64 * h).collect())
        .collect())
}

/// `count` states drawn uniformly from `set` by rejection from its bounding box.
pub fn random_states(set: &Polytope, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let (lo, hi) = set.bounding_box()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut tries = 0usize;
    while out.len() < count {
        tries += 1;
        if tries > 1000 * count.max(1) + 10_000 {
            return Err(Error::InvalidArgument(
                "rejection sampling found too few points in the set".into(),
            ));
        }
        let x: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| rng.random_range(*a..=*b))
            .collect();
        if set.contains(&x, 0.0) {
            out.push(x);
        }
    }
    Ok(out)
}

/// Seed of record `index`: `seed ⊕ splitmix64(index)`.
pub fn record_seed(seed: u64, index: usize) -> u64 {
    let mut z = (index as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    seed ^ (z ^ (z >> 31))
}

/// Seed for an ad-hoc state: `seed` mixed with the bits of every coordinate.
pub fn state_seed(seed: u64, x: &[f64]) -> u64 {
    x.iter()
        .fold(seed, |s, v| record_seed(s, v.to_bits() as usize))
}

/// Fresh exact `u₀` at `x`; `None` when `x` is infeasible or the solve stalls.
pub fn oracle_action(tr: &Transcription, x: &[f64], cfg: &SAConfig) -> Result<Option<Vec<f64>>> {
    match exact_solve_with(
        tr,
        x,
        &cfg.with_seed(state_seed(cfg.seed, x)),
        &SolverSettings::default(),
    ) {
        Ok(res) if res.feasible => Ok(res.first_control()),
        Ok(_) | Err(Error::OutsideFeasibleSet { .. }) | Err(Error::SolverStall { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Worker count from `ROBOSYNTH_WORKERS`, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var("ROBOSYNTH_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs the exact solver at every state.
pub fn generate(
    spec: &ProblemSpec,
    states: &[Vec<f64>],
    cfg: &SAConfig,
    workers: usize,
) -> Result<Dataset> {
    generate_with(spec, states, cfg, workers, &SolverSettings::default())
}

pub fn generate_with(
    spec: &ProblemSpec,
    states: &[Vec<f64>],
    cfg: &SAConfig,
    workers: usize,
    settings: &SolverSettings,
) -> Result<Dataset> {
    cfg.validate()?;
    let d = spec.dims().d;
    let mut seen = HashSet::new();
    for x in states {
        if x.len() != d {
            return Err(Error::Dimension(format!(
                "state has {} entries, expected {d}",
                x.len()
            )));
        }
        if !seen.insert(bits(x)) {
            return Err(Error::InvalidArgument(format!("duplicate state {x:?}")));
        }
    }
    let tr = Transcription::new(spec);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let records: Vec<Result<Record>> = pool.install(|| {
        states
            .par_iter()
            .enumerate()
            .map(|(i, x)| solve_record(&tr, x, cfg, i, settings))
            .collect()
    });
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    let stalled = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.stalled)
        .map(|(i, _)| i)
        .collect();
    Ok(Dataset {
        meta: DatasetMeta {
            spec_hash: spec.hash(),
            d,
            m: spec.dims().m,
            sampling: Sampling::List {
                count: states.len(),
            },
            sa: *cfg,
            stalled,
            created_by: format!("robosynth {}", env!("CARGO_PKG_VERSION")),
        },
        records,
    })
}

/// Grid dataset over the state constraint set.
pub fn generate_grid(
    spec: &ProblemSpec,
    h: f64,
    cfg: &SAConfig,
    workers: usize,
) -> Result<Dataset> {
    let states = grid_states(spec.state_set(), h)?;
    let mut ds = generate(spec, &states, cfg, workers)?;
    ds.meta.sampling = Sampling::Grid { h };
    Ok(ds)
}

fn solve_record(
    tr: &Transcription,
    x: &[f64],
    cfg: &SAConfig,
    index: usize,
    settings: &SolverSettings,
) -> Result<Record> {
    let seed = record_seed(cfg.seed, index);
    let empty = |stalled| Record {
        x: x.to_vec(),
        u0: None,
        value: None,
        feasible: false,
        seed,
        iters_used: 0,
        stalled,
    };
    match exact_solve_with(tr, x, &cfg.with_seed(seed), settings) {
        Ok(res) => Ok(Record {
            x: x.to_vec(),
            u0: res.first_control().filter(|_| res.feasible),
            value: Some(res.value).filter(|_| res.feasible),
            feasible: res.feasible,
            seed,
            iters_used: res.history.len() - 1,
            stalled: false,
        }),
        Err(Error::OutsideFeasibleSet { .. }) => Ok(empty(false)),
        Err(Error::SolverStall { .. }) => Ok(empty(true)),
        Err(e) => Err(e),
    }
}
