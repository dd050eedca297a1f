//! Conditional future-class transition tensor `P[i][j][n]`: the training-set
//! probability of class `j` (phases plus EOS) at `n` minutes after observing
//! phase `i`.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{HorizonGrid, LabeledSequence, PhaseLabel, SECONDS_PER_MINUTE};
use crate::error::{Result, SwagError};
use crate::rng::rng_from;

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionPriorTensor {
    c_in: usize,
    c_out: usize,
    n: usize,
    /// Row-major `[i][j][n-1]`.
    data: Vec<f64>,
    /// `(i, n)` rows with no observations, `n` one-based.
    unobserved: Vec<(usize, usize)>,
}

/// On-disk JSON layout.
#[derive(Serialize, Deserialize)]
struct PriorsFile {
    c_in: usize,
    c_out: usize,
    n: usize,
    data: Vec<f64>,
    unobserved: Vec<[usize; 2]>,
}

impl TransitionPriorTensor {
    /// Build from raw counts `[i][j][n-1]`. Rows with zero mass become uniform
    /// and are flagged.
    pub fn from_counts(c_in: usize, c_out: usize, n: usize, counts: &[u64]) -> Self {
        assert_eq!(counts.len(), c_in * c_out * n);
        let mut data = vec![0.0; counts.len()];
        let mut unobserved = Vec::new();
        for i in 0..c_in {
            for step in 0..n {
                let total: u64 = (0..c_out).map(|j| counts[(i * c_out + j) * n + step]).sum();
                for j in 0..c_out {
                    let idx = (i * c_out + j) * n + step;
                    data[idx] = if total == 0 {
                        1.0 / c_out as f64
                    } else {
                        counts[idx] as f64 / total as f64
                    };
                }
                if total == 0 {
                    unobserved.push((i, step + 1));
                }
            }
        }
        Self {
            c_in,
            c_out,
            n,
            data,
            unobserved,
        }
    }

    pub fn num_phases(&self) -> usize {
        self.c_in
    }

    pub fn num_classes(&self) -> usize {
        self.c_out
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn unobserved(&self) -> &[(usize, usize)] {
        &self.unobserved
    }

    pub fn is_observed(&self, i: usize, n: usize) -> bool {
        !self.unobserved.contains(&(i, n))
    }

    /// `P[i][j][n]` with `n` one-based.
    pub fn get(&self, i: usize, j: usize, n: usize) -> f64 {
        self.data[(i * self.c_out + j) * self.n + (n - 1)]
    }

    /// `P[i][:][n]`.
    pub fn row(&self, i: usize, n: usize) -> Vec<f64> {
        (0..self.c_out).map(|j| self.get(i, j, n)).collect()
    }

    /// Probability vectors for `n = 1..=N`; EOS cannot condition.
    pub fn probability_vectors(&self, current: PhaseLabel, grid: &HorizonGrid) -> Result<Vec<Vec<f64>>> {
        self.check_current(current)?;
        self.check_grid(grid)?;
        Ok((1..=grid.minutes()).map(|n| self.row(current.0, n)).collect())
    }

    /// One independent draw per minute from `P[current][:][n]`.
    pub fn sample_future(&self, current: PhaseLabel, grid: &HorizonGrid, seed: u64) -> Result<Vec<PhaseLabel>> {
        self.check_current(current)?;
        self.check_grid(grid)?;
        let mut rng = rng_from(seed);
        Ok((1..=grid.minutes())
            .map(|n| {
                let u: f64 = rng.random();
                PhaseLabel(sample_index(&self.row(current.0, n), u))
            })
            .collect())
    }

    /// Most likely class per minute; ties go to the lower index.
    pub fn argmax_future(&self, current: PhaseLabel, grid: &HorizonGrid) -> Result<Vec<PhaseLabel>> {
        Ok(self
            .probability_vectors(current, grid)?
            .iter()
            .map(|row| PhaseLabel(argmax(row)))
            .collect())
    }

    fn check_current(&self, current: PhaseLabel) -> Result<()> {
        if current.0 >= self.c_in {
            return Err(SwagError::Domain(format!(
                "class {} cannot condition the priors (phases are 0..{})",
                current.0, self.c_in
            )));
        }
        Ok(())
    }

    fn check_grid(&self, grid: &HorizonGrid) -> Result<()> {
        if grid.minutes() > self.n {
            return Err(SwagError::Domain(format!(
                "horizon {} exceeds the prior tensor's {}",
                grid.minutes(),
                self.n
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = PriorsFile {
            c_in: self.c_in,
            c_out: self.c_out,
            n: self.n,
            data: self.data.clone(),
            unobserved: self.unobserved.iter().map(|&(i, n)| [i, n]).collect(),
        };
        serde_json::to_string(&file).expect("priors serialize")
    }

    pub fn from_json(text: &str, context: &str) -> Result<Self> {
        let file: PriorsFile =
            serde_json::from_str(text).map_err(|e| SwagError::format(context, e.to_string()))?;
        if file.data.len() != file.c_in * file.c_out * file.n {
            return Err(SwagError::format(
                context,
                format!(
                    "{} values for shape {}x{}x{}",
                    file.data.len(),
                    file.c_in,
                    file.c_out,
                    file.n
                ),
            ));
        }
        if file.c_out != file.c_in + 1 {
            return Err(SwagError::format(context, "c_out must equal c_in + 1"));
        }
        if file.data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SwagError::format(context, "probabilities must be finite and non-negative"));
        }
        if file
            .unobserved
            .iter()
            .any(|&[i, n]| i >= file.c_in || n == 0 || n > file.n)
        {
            return Err(SwagError::format(context, "unobserved entry out of range"));
        }
        Ok(Self {
            c_in: file.c_in,
            c_out: file.c_out,
            n: file.n,
            data: file.data,
            unobserved: file.unobserved.into_iter().map(|[i, n]| (i, n)).collect(),
        })
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = j;
        }
    }
    best
}

/// Inverse-CDF draw given a uniform `u` in `[0, 1)`. Zero-probability classes
/// are never returned.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = j;
        if target < acc {
            return j;
        }
    }
    last
}

/// Count future classes over every `stride`-th second of every training
/// sequence and normalize per `(i, n)`.
pub fn extract_transition_priors(
    sequences: &[LabeledSequence],
    grid: &HorizonGrid,
    num_phases: usize,
    stride: usize,
) -> Result<TransitionPriorTensor> {
    if sequences.is_empty() {
        return Err(SwagError::Domain("cannot extract priors from an empty training set".into()));
    }
    if stride == 0 {
        return Err(SwagError::Config("prior stride must be positive".into()));
    }
    let c_out = num_phases + 1;
    let n = grid.minutes();
    let mut counts = vec![0u64; num_phases * c_out * n];
    for seq in sequences {
        if seq.num_phases() != num_phases {
            return Err(SwagError::Domain(format!(
                "sequence {} has {} phases, expected {num_phases}",
                seq.video_id(),
                seq.num_phases()
            )));
        }
        for t in (0..seq.len()).step_by(stride) {
            let i = seq.at(t).0;
            for step in 1..=n {
                let j = seq.future_label(t, step * SECONDS_PER_MINUTE).0;
                counts[(i * c_out + j) * n + step - 1] += 1;
            }
        }
    }
    Ok(TransitionPriorTensor::from_counts(num_phases, c_out, n, &counts))
}

pub fn save_priors(priors: &TransitionPriorTensor, path: &Path) -> Result<()> {
    fs::write(path, priors.to_json() + "\n").map_err(|e| SwagError::io(path, e))
}

pub fn load_priors(path: &Path) -> Result<TransitionPriorTensor> {
    let text = fs::read_to_string(path).map_err(|e| SwagError::io(path, e))?;
    TransitionPriorTensor::from_json(&text, &path.display().to_string())
}
