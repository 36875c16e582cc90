use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MsmError, Result};
use crate::history::SamplePath;
use crate::simulation::{CohortSpec, Simulator};

/// Monte Carlo `P_hj(s, t)` for one `(h, s)` on the grid points `t >= s`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthCurve {
    pub from: usize,
    pub s: f64,
    pub times: Vec<f64>,
    /// Number of paths in `h` at `s`; zero leaves the curve undefined.
    pub denominator: u64,
    /// `probabilities[t][j - 1]`; `None` when `denominator == 0`.
    pub probabilities: Vec<Option<Vec<f64>>>,
}

impl TruthCurve {
    pub fn value(&self, t_index: usize, to: usize) -> Option<f64> {
        self.probabilities[t_index].as_ref().map(|p| p[to - 1])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruthTable {
    pub setting: String,
    pub n_paths: usize,
    pub n_states: usize,
    pub curves: Vec<TruthCurve>,
}

/// One row of the truth CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub from: usize,
    pub to: usize,
    pub s: f64,
    pub t: f64,
    pub probability: Option<f64>,
    pub n_at_s: u64,
}

impl TruthTable {
    pub fn curve(&self, from: usize, s: f64) -> Option<&TruthCurve> {
        self.curves.iter().find(|c| c.from == from && c.s == s)
    }

    pub fn records(&self) -> Vec<TruthRecord> {
        let mut out = Vec::new();
        for c in &self.curves {
            for to in 1..=self.n_states {
                for (i, &t) in c.times.iter().enumerate() {
                    out.push(TruthRecord {
                        from: c.from,
                        to,
                        s: c.s,
                        t,
                        probability: c.value(i, to),
                        n_at_s: c.denominator,
                    });
                }
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in self.records() {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`TruthTable::write_csv`]; `n_paths` is not stored in the file.
    pub fn read_csv<R: Read>(reader: R, setting: &str, n_states: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut curves: Vec<TruthCurve> = Vec::new();
        for rec in rdr.deserialize() {
            let r: TruthRecord = rec?;
            if r.to == 0 || r.to > n_states || r.from == 0 || r.from > n_states {
                return Err(MsmError::param("truth", format!("state out of range in row {r:?}")));
            }
            let idx = match curves.iter().position(|c| c.from == r.from && c.s == r.s) {
                Some(i) => i,
                None => {
                    curves.push(TruthCurve {
                        from: r.from,
                        s: r.s,
                        times: Vec::new(),
                        denominator: r.n_at_s,
                        probabilities: Vec::new(),
                    });
                    curves.len() - 1
                }
            };
            let c = &mut curves[idx];
            let ti = match c.times.iter().position(|&t| t == r.t) {
                Some(i) => i,
                None => {
                    c.times.push(r.t);
                    c.probabilities.push(r.probability.map(|_| vec![0.0; n_states]));
                    c.times.len() - 1
                }
            };
            if let (Some(row), Some(p)) = (c.probabilities[ti].as_mut(), r.probability) {
                row[r.to - 1] = p;
            }
        }
        Ok(TruthTable {
            setting: setting.to_string(),
            n_paths: 0,
            n_states,
            curves,
        })
    }
}

// counts[(s, h)][t][j]
struct Counts {
    denominators: Vec<u64>,
    cells: Vec<Vec<Vec<u64>>>,
}

fn grid_after(grid: &[f64], s: f64) -> Vec<f64> {
    grid.iter().copied().filter(|&t| t >= s).collect()
}

fn add_path(counts: &mut Counts, path: &SamplePath, keys: &[(f64, usize)], grids: &[Vec<f64>]) {
    for (k, &(s, h)) in keys.iter().enumerate() {
        if path.state_at_unchecked(s) != h {
            continue;
        }
        counts.denominators[k] += 1;
        let events = path.events();
        let mut state = path.state_at_unchecked(s);
        let mut next = events.partition_point(|e| e.time <= s);
        for (i, &t) in grids[k].iter().enumerate() {
            while next < events.len() && events[next].time <= t {
                state = events[next].to;
                next += 1;
            }
            counts.cells[k][i][state - 1] += 1;
        }
    }
}

/// Empirical transition probabilities from `n_paths` uncensored paths:
/// `P_hj(s, t) = #{X(s) = h, X(t) = j} / #{X(s) = h}` for every transient
/// `h`, every `s` in `start_times` and every grid point `t >= s`.
pub fn compute_truth(
    simulator: &Simulator,
    n_paths: usize,
    seed: u64,
    start_times: &[f64],
    grid: &[f64],
    setting_label: &str,
) -> Result<TruthTable> {
    if n_paths == 0 {
        return Err(MsmError::param("truth_paths", "need at least one path"));
    }
    let space = simulator.state_space();
    let k = space.size();
    let keys: Vec<(f64, usize)> = start_times
        .iter()
        .flat_map(|&s| space.non_absorbing().map(move |h| (s, h)))
        .collect();
    let grids: Vec<Vec<f64>> = keys.iter().map(|&(s, _)| grid_after(grid, s)).collect();
    let empty = || Counts {
        denominators: vec![0; keys.len()],
        cells: grids.iter().map(|g| vec![vec![0; k]; g.len()]).collect(),
    };
    let spec = CohortSpec::new(n_paths, seed);
    const CHUNK: usize = 4096;
    let n_chunks = n_paths.div_ceil(CHUNK);
    let counts = (0..n_chunks)
        .into_par_iter()
        .map(|c| -> Result<Counts> {
            let mut acc = empty();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_paths) {
                let path = simulator.simulate_subject(&spec, i as u64, false)?;
                add_path(&mut acc, &path, &keys, &grids);
            }
            Ok(acc)
        })
        .try_reduce(empty, |mut a, b| {
            for (x, y) in a.denominators.iter_mut().zip(&b.denominators) {
                *x += y;
            }
            for (ca, cb) in a.cells.iter_mut().zip(&b.cells) {
                for (ra, rb) in ca.iter_mut().zip(cb) {
                    for (x, y) in ra.iter_mut().zip(rb) {
                        *x += y;
                    }
                }
            }
            Ok(a)
        })?;

    let curves = keys
        .iter()
        .enumerate()
        .map(|(idx, &(s, h))| {
            let d = counts.denominators[idx];
            let probabilities = counts.cells[idx]
                .iter()
                .map(|row| (d > 0).then(|| row.iter().map(|&c| c as f64 / d as f64).collect()))
                .collect();
            TruthCurve {
                from: h,
                s,
                times: grids[idx].clone(),
                denominator: d,
                probabilities,
            }
        })
        .collect();
    Ok(TruthTable {
        setting: setting_label.to_string(),
        n_paths,
        n_states: k,
        curves,
    })
}
