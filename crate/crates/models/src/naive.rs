//! Two-stage prediction: count the links, then ask that count's regressor.

use kinchain_core::chain::{LENGTH_LABEL_WIDTH, MAX_MOVING_LINKS};
use kinchain_core::dataset::SampleStack;

use crate::arch::Task;
use crate::error::{ModelError, Result};
use crate::estimator::Estimator;

/// A counter plus one length regressor per link count.
pub struct NaivePipeline<'a> {
    pub counter: &'a mut Estimator,
    /// Index `n - 1` holds the regressor for `n` moving links.
    pub regressors: Vec<Option<&'a mut Estimator>>,
}

impl<'a> NaivePipeline<'a> {
    pub fn new(counter: &'a mut Estimator, regressors: Vec<Option<&'a mut Estimator>>) -> Result<Self> {
        if counter.task != Task::Count {
            return Err(ModelError::InvalidState(format!(
                "naive pipeline needs a counter, got {}",
                counter.task
            )));
        }
        if regressors.len() != MAX_MOVING_LINKS {
            return Err(ModelError::InvalidState(format!(
                "naive pipeline needs {MAX_MOVING_LINKS} regressor slots, got {}",
                regressors.len()
            )));
        }
        for (i, r) in regressors.iter().enumerate() {
            if let Some(r) = r {
                if r.task != Task::Lengths(i + 1) {
                    return Err(ModelError::InvalidState(format!(
                        "regressor slot {} holds a {} estimator",
                        i + 1,
                        r.task
                    )));
                }
            }
        }
        Ok(NaivePipeline {
            counter,
            regressors,
        })
    }

    /// Predicted count and zero-padded lengths for each stack.
    pub fn predict(&mut self, stacks: &[&SampleStack]) -> Result<Vec<(usize, [f64; LENGTH_LABEL_WIDTH])>> {
        let counts = self.counter.predict_counts(stacks)?;
        let mut out = vec![(0, [0.0; LENGTH_LABEL_WIDTH]); stacks.len()];
        for n in 1..=MAX_MOVING_LINKS {
            let idx: Vec<usize> = (0..stacks.len()).filter(|&i| counts[i] == n).collect();
            if idx.is_empty() {
                continue;
            }
            let reg = self.regressors[n - 1].as_deref_mut().ok_or_else(|| {
                ModelError::InvalidState(format!("no regressor for n={n}"))
            })?;
            let routed: Vec<&SampleStack> = idx.iter().map(|&i| stacks[i]).collect();
            for (&i, lengths) in idx.iter().zip(reg.predict_lengths(&routed)?) {
                out[i] = (n, lengths);
            }
        }
        Ok(out)
    }
}
