//! Leak-free test feedback. A pipeline only sees the observations revealed so
//! far; a block's ground truth is handed out in exchange for that block's
//! intervals.

use crate::error::{Error, Result};
use crate::series::{HorizonIntervals, TimeSeries};

/// Source of test-phase feedback, consumed block by block.
pub trait FeedbackStream {
    /// Forecast horizon `H` (block length).
    fn horizon(&self) -> usize;

    /// Every observation revealed so far, oldest first. Before the first
    /// submission this is the training prefix.
    fn history(&self) -> &[f64];

    /// Blocks that still await intervals.
    fn remaining_blocks(&self) -> usize;

    /// 1-based time index of the next block's first target.
    fn next_origin(&self) -> usize {
        self.history().len() + 1
    }

    /// Accepts the intervals for the next block and reveals its `H` values.
    fn submit(&mut self, intervals: HorizonIntervals) -> Result<Vec<f64>>;
}

/// Walk-forward backtest over a fully known series: the first
/// `len - n_test` values are visible up front, the rest are revealed `H` at
/// a time.
#[derive(Debug, Clone)]
pub struct BacktestStream {
    values: Vec<f64>,
    horizon: usize,
    revealed: usize,
    submitted: Vec<HorizonIntervals>,
}

impl BacktestStream {
    pub fn new(series: &TimeSeries, n_test: usize, horizon: usize) -> Result<Self> {
        Self::from_values(series.values().to_vec(), n_test, horizon)
    }

    pub fn from_values(values: Vec<f64>, n_test: usize, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(crate::error::invalid("H", "horizon must be positive"));
        }
        if n_test == 0 || n_test % horizon != 0 {
            return Err(crate::error::invalid(
                "n_test",
                format!("{n_test} is not a positive multiple of H = {horizon}"),
            ));
        }
        if n_test >= values.len() {
            return Err(Error::SeriesTooShort {
                needed: n_test + 1,
                got: values.len(),
            });
        }
        Ok(Self {
            revealed: values.len() - n_test,
            values,
            horizon,
            submitted: Vec::new(),
        })
    }

    /// Intervals received so far, in submission order.
    pub fn submitted(&self) -> &[HorizonIntervals] {
        &self.submitted
    }
}

impl FeedbackStream for BacktestStream {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn history(&self) -> &[f64] {
        &self.values[..self.revealed]
    }

    fn remaining_blocks(&self) -> usize {
        (self.values.len() - self.revealed) / self.horizon
    }

    fn submit(&mut self, intervals: HorizonIntervals) -> Result<Vec<f64>> {
        if self.remaining_blocks() == 0 {
            return Err(Error::Protocol("no blocks remain".into()));
        }
        if intervals.origin != self.next_origin() {
            return Err(Error::Protocol(format!(
                "expected origin {}, got {}",
                self.next_origin(),
                intervals.origin
            )));
        }
        if intervals.horizon() != self.horizon {
            return Err(Error::Protocol(format!(
                "expected {} intervals, got {}",
                self.horizon,
                intervals.horizon()
            )));
        }
        let start = self.revealed;
        self.revealed += self.horizon;
        self.submitted.push(intervals);
        Ok(self.values[start..self.revealed].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::PredictionInterval;

    fn block(origin: usize, h: usize) -> HorizonIntervals {
        HorizonIntervals {
            origin,
            intervals: vec![PredictionInterval::new(0.0, 1.0).unwrap(); h],
        }
    }

    #[test]
    fn reveals_block_after_submission() {
        let mut s = BacktestStream::from_values((1..=10).map(f64::from).collect(), 4, 2).unwrap();
        assert_eq!(s.history(), &[1., 2., 3., 4., 5., 6.]);
        assert_eq!(s.remaining_blocks(), 2);
        assert_eq!(s.next_origin(), 7);
        assert_eq!(s.submit(block(7, 2)).unwrap(), vec![7., 8.]);
        assert_eq!(s.history().len(), 8);
        assert_eq!(s.submit(block(9, 2)).unwrap(), vec![9., 10.]);
        assert_eq!(s.remaining_blocks(), 0);
        assert!(s.submit(block(11, 2)).is_err());
        assert_eq!(s.submitted().len(), 2);
    }

    #[test]
    fn rejects_bad_submissions_and_sizes() {
        let mut s = BacktestStream::from_values((1..=10).map(f64::from).collect(), 4, 2).unwrap();
        assert!(matches!(s.submit(block(8, 2)), Err(Error::Protocol(_))));
        assert!(matches!(s.submit(block(7, 3)), Err(Error::Protocol(_))));
        assert!(BacktestStream::from_values(vec![0.0; 10], 3, 2).is_err());
        assert!(BacktestStream::from_values(vec![0.0; 10], 10, 2).is_err());
        assert!(BacktestStream::from_values(vec![0.0; 10], 0, 2).is_err());
    }
}
