use std::io::Write;

use crate::error::Result;
use crate::history::Cohort;

/// Number of observed subjects per state at each grid time, plus the number
/// already censored.
#[derive(Clone, Debug, PartialEq)]
pub struct Occupancy {
    pub times: Vec<f64>,
    /// `counts[t][j - 1]`
    pub counts: Vec<Vec<u64>>,
    pub censored: Vec<u64>,
}

pub fn occupancy(cohort: &Cohort, grid: &[f64]) -> Occupancy {
    let k = cohort.state_space().size();
    let mut counts = vec![vec![0; k]; grid.len()];
    let mut censored = vec![0; grid.len()];
    for path in cohort.paths() {
        for (i, &t) in grid.iter().enumerate() {
            if t > cohort.max_time() {
                continue;
            }
            if path.is_observed_at(t) {
                counts[i][path.state_at_unchecked(t) - 1] += 1;
            } else {
                censored[i] += 1;
            }
        }
    }
    Occupancy {
        times: grid.to_vec(),
        counts,
        censored,
    }
}

impl Occupancy {
    /// Accumulates another cohort's counts on the same grid.
    pub fn add(&mut self, other: &Occupancy) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (x, y) in self.censored.iter_mut().zip(&other.censored) {
            *x += y;
        }
    }

    /// Columns `t,state_1,...,state_k,censored`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let k = self.counts.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=k).map(|j| format!("state_{j}")));
        header.push("censored".into());
        w.write_record(&header)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(self.counts[i].iter().map(u64::to_string));
            row.push(self.censored[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
