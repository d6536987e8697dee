use crate::adaptive::{init_gamma, sample_without_replacement, AciState, SlidingScoreWindow};
use crate::conformal::{
    conformal_quantile, corrected_band, cqr_score_unchecked, score_absolute, symmetric_interval,
    ScoreSet,
};
use crate::error::{Error, Result};
use crate::model::{Learner, Regressor};
use crate::rng::derive_seed;
use crate::series::{frame_values, recursive_forecast, HorizonIntervals, SupervisedFrame};

use super::ensemble::{fit_ensemble, member_seed, BootstrapEnsemble};
use super::feedback::FeedbackStream;
use super::{Method, OriginRecord, PipelineParams, RunResult};

const WINDOW_STREAM: u64 = 0x5A3;

/// Seed for sampling the score window of 1-based horizon `h`.
pub fn window_seed(seed: u64, h: usize) -> u64 {
    derive_seed(seed, &[WINDOW_STREAM, h as u64])
}

/// Splits `n_rows` chronologically into `(n_fit, n_cal)` with the last
/// `round(n_rows * cal_fraction)` rows (at least one, leaving at least one)
/// for calibration.
pub fn split_calibration(n_rows: usize, cal_fraction: f64) -> Result<(usize, usize)> {
    if n_rows < 2 {
        return Err(Error::SeriesTooShort {
            needed: 2,
            got: n_rows,
        });
    }
    let n_cal = ((n_rows as f64 * cal_fraction).round() as usize).clamp(1, n_rows - 1);
    Ok((n_rows - n_cal, n_cal))
}

fn check_stream(stream: &dyn FeedbackStream, params: &PipelineParams) -> Result<()> {
    params.validate()?;
    if stream.horizon() != params.horizon {
        return Err(Error::DimensionMismatch {
            expected: params.horizon,
            got: stream.horizon(),
        });
    }
    if stream.remaining_blocks() == 0 {
        return Err(crate::error::invalid("n_test", "no test blocks to forecast"));
    }
    Ok(())
}

fn last_window(history: &[f64], p: usize) -> Result<Vec<f64>> {
    if history.len() < p {
        return Err(Error::SeriesTooShort {
            needed: p,
            got: history.len(),
        });
    }
    Ok(history[history.len() - p..].to_vec())
}

fn check_model_shape<M: Regressor>(model: &M, p: usize, h: usize) -> Result<()> {
    if model.input_dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: model.input_dim(),
        });
    }
    if model.output_dim() != h {
        return Err(Error::DimensionMismatch {
            expected: h,
            got: model.output_dim(),
        });
    }
    Ok(())
}

/// Out-of-bag CQR scores per target column.
fn oob_cqr_scores<M: Regressor>(
    ensemble: &BootstrapEnsemble<M>,
    lower: usize,
    upper: usize,
    frame: &SupervisedFrame,
) -> Result<(Vec<ScoreSet>, usize)> {
    let lo = ensemble.oob_predict(lower, frame)?;
    let hi = ensemble.oob_predict(upper, frame)?;
    let mut sets = vec![ScoreSet::new(); frame.horizon()];
    for i in 0..frame.n_rows() {
        let (Some(l), Some(u)) = (&lo.rows[i], &hi.rows[i]) else {
            continue;
        };
        for (h, set) in sets.iter_mut().enumerate() {
            set.push(cqr_score_unchecked(l[h], u[h], frame.target_row(i)[h]))?;
        }
    }
    Ok((sets, lo.skipped.len()))
}

/// Adaptive bagged MIMO CQR on an already fitted ensemble (learner 0 is the
/// lower quantile, learner 1 the upper) and the frame it was fitted on.
pub fn run_aenbmimocqr_with<M: Regressor>(
    ensemble: &BootstrapEnsemble<M>,
    frame: &SupervisedFrame,
    stream: &mut dyn FeedbackStream,
    params: &PipelineParams,
) -> Result<RunResult> {
    check_stream(stream, params)?;
    let horizon = params.horizon;
    check_model_shape(&ensemble.models(0)[0], params.lags, horizon)?;
    check_model_shape(&ensemble.models(1)[0], params.lags, horizon)?;

    let (scores, skipped) = oob_cqr_scores(ensemble, 0, 1, frame)?;
    let initial = scores[0].len();
    let gamma = params
        .gamma
        .unwrap_or_else(|| init_gamma(params.window, initial));
    let mut aci = AciState::new(params.alpha, gamma, horizon)?;
    let mut qhat: Vec<f64> = scores
        .iter()
        .enumerate()
        .map(|(h, s)| s.quantile(aci.alpha(h + 1)))
        .collect::<Result<_>>()?;
    let mut windows: Vec<SlidingScoreWindow> = scores
        .iter()
        .enumerate()
        .map(|(h, s)| sample_without_replacement(s, params.window, window_seed(params.seed, h + 1)))
        .collect::<Result<_>>()?;

    let mut result = RunResult {
        method: Method::Aenbmimocqr,
        per_origin: Vec::new(),
        alpha_trace: Some(Vec::new()),
        qhat_trace: Vec::new(),
        window_trace: Vec::new(),
        skipped_oob_rows: skipped,
        initial_scores: initial,
        gamma: Some(gamma),
    };
    while stream.remaining_blocks() > 0 {
        let x = last_window(stream.history(), params.lags)?;
        let lo = ensemble.predict_mean(0, &x);
        let hi = ensemble.predict_mean(1, &x);
        let intervals: Vec<_> = (0..horizon)
            .map(|h| corrected_band(lo[h], hi[h], qhat[h]))
            .collect();
        let block = HorizonIntervals {
            origin: stream.next_origin(),
            intervals,
        };
        if let Some(trace) = result.alpha_trace.as_mut() {
            trace.push(aci.alphas().to_vec());
        }
        result.qhat_trace.push(qhat.clone());
        result
            .window_trace
            .push(windows.iter().map(SlidingScoreWindow::len).collect());

        let truth = stream.submit(block.clone())?;
        for h in 0..horizon {
            let y = truth[h];
            let score = cqr_score_unchecked(lo[h] - qhat[h], hi[h] + qhat[h], y);
            windows[h].push(score);
            aci.update(h + 1, block.intervals[h].contains(y));
            qhat[h] = windows[h].quantile(aci.alpha(h + 1))?;
        }
        result.per_origin.push(OriginRecord { block, truth });
    }
    Ok(result)
}

/// Fits the bagged lower/upper quantile ensembles on the stream's training
/// prefix and runs the adaptive MIMO pipeline.
pub fn run_aenbmimocqr<L: Learner>(
    stream: &mut dyn FeedbackStream,
    params: &PipelineParams,
    lower: L,
    upper: L,
) -> Result<RunResult> {
    check_stream(stream, params)?;
    let frame = frame_values(stream.history(), params.lags, params.horizon)?;
    let ensemble = fit_ensemble(&frame, &[lower, upper], params.n_bootstrap, params.seed)?;
    run_aenbmimocqr_with(&ensemble, &frame, stream, params)
}

/// Split MIMO CQR with fitted quantile models and a calibration frame.
pub fn run_mimocqr_with<M: Regressor>(
    lower: &M,
    upper: &M,
    calibration: &SupervisedFrame,
    stream: &mut dyn FeedbackStream,
    params: &PipelineParams,
) -> Result<RunResult> {
    check_stream(stream, params)?;
    let horizon = params.horizon;
    check_model_shape(lower, params.lags, horizon)?;
    check_model_shape(upper, params.lags, horizon)?;
    if calibration.is_empty() {
        return Err(Error::EmptyScoreSet);
    }
    let lo_cal = lower.predict_rows(calibration.covariates());
    let hi_cal = upper.predict_rows(calibration.covariates());
    let qhat: Vec<f64> = (0..horizon)
        .map(|h| {
            let scores: Vec<f64> = (0..calibration.n_rows())
                .map(|i| {
                    cqr_score_unchecked(lo_cal[[i, h]], hi_cal[[i, h]], calibration.target_row(i)[h])
                })
                .collect();
            conformal_quantile(&scores, params.alpha)
        })
        .collect::<Result<_>>()?;

    let mut result = RunResult {
        method: Method::Mimocqr,
        per_origin: Vec::new(),
        alpha_trace: None,
        qhat_trace: Vec::new(),
        window_trace: Vec::new(),
        skipped_oob_rows: 0,
        initial_scores: calibration.n_rows(),
        gamma: None,
    };
    while stream.remaining_blocks() > 0 {
        let x = last_window(stream.history(), params.lags)?;
        let lo = lower.predict_one(&x);
        let hi = upper.predict_one(&x);
        let block = HorizonIntervals {
            origin: stream.next_origin(),
            intervals: (0..horizon)
                .map(|h| corrected_band(lo[h], hi[h], qhat[h]))
                .collect(),
        };
        result.qhat_trace.push(qhat.clone());
        result.window_trace.push(vec![calibration.n_rows(); horizon]);
        let truth = stream.submit(block.clone())?;
        result.per_origin.push(OriginRecord { block, truth });
    }
    Ok(result)
}

/// Trains one lower and one upper multi-output model on the leading rows of
/// the training frame, calibrates on the trailing rows, then forecasts.
pub fn run_mimocqr<L: Learner>(
    stream: &mut dyn FeedbackStream,
    params: &PipelineParams,
    lower: L,
    upper: L,
) -> Result<RunResult> {
    check_stream(stream, params)?;
    let frame = frame_values(stream.history(), params.lags, params.horizon)?;
    let (n_fit, _) = split_calibration(frame.n_rows(), params.cal_fraction)?;
    let fit = frame.slice_rows(0, n_fit);
    let calibration = frame.slice_rows(n_fit, frame.n_rows());
    let (lo, hi) = rayon::join(
        || lower.fit(&fit, member_seed(params.seed, 0, 0)),
        || upper.fit(&fit, member_seed(params.seed, 0, 1)),
    );
    run_mimocqr_with(&lo?, &hi?, &calibration, stream, params)
}

/// Recursive bagged pipeline with absolute-residual scores on a fitted
/// single-output ensemble (learner 0).
pub fn run_enbpi_with<M: Regressor>(
    ensemble: &BootstrapEnsemble<M>,
    frame: &SupervisedFrame,
    stream: &mut dyn FeedbackStream,
    params: &PipelineParams,
) -> Result<RunResult> {
    check_stream(stream, params)?;
    check_model_shape(&ensemble.models(0)[0], params.lags, 1)?;
    let oob = ensemble.oob_predict(0, frame)?;
    let scores: Vec<f64> = (0..frame.n_rows())
        .filter_map(|i| {
            oob.rows[i]
                .as_ref()
                .map(|p| score_absolute(p[0], frame.target_row(i)[0]))
        })
        .collect();
    let initial = scores.len();
    let mut qhat = conformal_quantile(&scores, params.alpha)?;
    let mut window = SlidingScoreWindow::full(scores)?;

    let mut result = RunResult {
        method: Method::Enbpi,
        per_origin: Vec::new(),
        alpha_trace: None,
        qhat_trace: Vec::new(),
        window_trace: Vec::new(),
        skipped_oob_rows: oob.skipped.len(),
        initial_scores: initial,
        gamma: None,
    };
    while stream.remaining_blocks() > 0 {
        let x = last_window(stream.history(), params.lags)?;
        let point = recursive_forecast(|v| ensemble.predict_mean(0, v)[0], &x, params.horizon);
        let block = HorizonIntervals {
            origin: stream.next_origin(),
            intervals: point.iter().map(|&y| symmetric_interval(y, qhat)).collect(),
        };
        result.qhat_trace.push(vec![qhat]);
        result.window_trace.push(vec![window.len()]);
        let truth = stream.submit(block.clone())?;
        for (yhat, y) in point.iter().zip(&truth) {
            window.push(score_absolute(*yhat, *y));
        }
        qhat = window.quantile(params.alpha)?;
        result.per_origin.push(OriginRecord { block, truth });
    }
    Ok(result)
}

/// Fits a bagged one-step squared-error ensemble and runs the recursive
/// absolute-residual pipeline.
pub fn run_enbpi<L: Learner>(
    stream: &mut dyn FeedbackStream,
    params: &PipelineParams,
    learner: L,
) -> Result<RunResult> {
    check_stream(stream, params)?;
    let frame = frame_values(stream.history(), params.lags, 1)?;
    let ensemble = fit_ensemble(&frame, &[learner], params.n_bootstrap, params.seed)?;
    run_enbpi_with(&ensemble, &frame, stream, params)
}

/// Recursive bagged CQR on a fitted ensemble with learners
/// `[lower, median, upper]`.
pub fn run_enbcqr_with<M: Regressor>(
    ensemble: &BootstrapEnsemble<M>,
    frame: &SupervisedFrame,
    stream: &mut dyn FeedbackStream,
    params: &PipelineParams,
) -> Result<RunResult> {
    check_stream(stream, params)?;
    if ensemble.n_learners() != 3 {
        return Err(crate::error::invalid(
            "learners",
            "expected lower, median and upper learners",
        ));
    }
    for k in 0..3 {
        check_model_shape(&ensemble.models(k)[0], params.lags, 1)?;
    }
    let (scores, skipped) = oob_cqr_scores(ensemble, 0, 2, frame)?;
    let scores = scores.into_iter().next().expect("single output column");
    let initial = scores.len();
    let mut qhat = scores.quantile(params.alpha)?;
    let mut window = SlidingScoreWindow::full(scores.as_slice().to_vec())?;

    let mut result = RunResult {
        method: Method::Enbcqr,
        per_origin: Vec::new(),
        alpha_trace: None,
        qhat_trace: Vec::new(),
        window_trace: Vec::new(),
        skipped_oob_rows: skipped,
        initial_scores: initial,
        gamma: None,
    };
    while stream.remaining_blocks() > 0 {
        let x = last_window(stream.history(), params.lags)?;
        let mut bands = Vec::with_capacity(params.horizon);
        recursive_forecast(
            |v| {
                bands.push((ensemble.predict_mean(0, v)[0], ensemble.predict_mean(2, v)[0]));
                ensemble.predict_mean(1, v)[0]
            },
            &x,
            params.horizon,
        );
        let block = HorizonIntervals {
            origin: stream.next_origin(),
            intervals: bands
                .iter()
                .map(|&(lo, hi)| corrected_band(lo, hi, qhat))
                .collect(),
        };
        result.qhat_trace.push(vec![qhat]);
        result.window_trace.push(vec![window.len()]);
        let truth = stream.submit(block.clone())?;
        for (&(lo, hi), &y) in bands.iter().zip(&truth) {
            window.push(cqr_score_unchecked(lo, hi, y));
        }
        qhat = window.quantile(params.alpha)?;
        result.per_origin.push(OriginRecord { block, truth });
    }
    Ok(result)
}

/// Fits bagged one-step lower, median and upper quantile ensembles (shared
/// bags) and runs the recursive CQR pipeline.
pub fn run_enbcqr<L: Learner>(
    stream: &mut dyn FeedbackStream,
    params: &PipelineParams,
    lower: L,
    median: L,
    upper: L,
) -> Result<RunResult> {
    check_stream(stream, params)?;
    let frame = frame_values(stream.history(), params.lags, 1)?;
    let ensemble = fit_ensemble(&frame, &[lower, median, upper], params.n_bootstrap, params.seed)?;
    run_enbcqr_with(&ensemble, &frame, stream, params)
}
