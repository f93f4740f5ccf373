use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};

/// Sample times are `k * Ts`, so event times are compared with a small
/// relative slack to absorb the rounding in that product.
const TIME_EPS: f64 = 1e-9;

fn reached(t: f64, event: f64) -> bool {
    t >= event - TIME_EPS * (1.0 + event.abs())
}

/// Vector-valued reference `r(t)`, defined for all `t >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSignal {
    Constant(DVector<f64>),
    /// `before` for `t < t_step`, `after` from `t_step` on.
    Step {
        t_step: f64,
        before: DVector<f64>,
        after: DVector<f64>,
    },
    /// `amplitude * sin(angular_frequency * t)`.
    Sinusoid {
        amplitude: DVector<f64>,
        angular_frequency: f64,
    },
    /// Starts at zero and toggles between zero and `amplitude` at each switch time.
    SquareWave {
        amplitude: DVector<f64>,
        switch_times: Vec<f64>,
    },
    /// Level `i` is held for `dwell_times[i]` seconds; the last level is held forever.
    PiecewiseConstant {
        levels: Vec<DVector<f64>>,
        dwell_times: Vec<f64>,
    },
    /// Zero-order hold of samples taken every `period` seconds; holds the last sample.
    Tabulated {
        period: f64,
        samples: Vec<DVector<f64>>,
    },
}

impl ReferenceSignal {
    pub fn scalar_step(t_step: f64, before: f64, after: f64) -> Self {
        ReferenceSignal::Step {
            t_step,
            before: DVector::from_element(1, before),
            after: DVector::from_element(1, after),
        }
    }

    pub fn scalar_sinusoid(amplitude: f64, angular_frequency: f64) -> Self {
        ReferenceSignal::Sinusoid {
            amplitude: DVector::from_element(1, amplitude),
            angular_frequency,
        }
    }

    pub fn scalar_constant(value: f64) -> Self {
        ReferenceSignal::Constant(DVector::from_element(1, value))
    }

    pub fn dim(&self) -> usize {
        match self {
            ReferenceSignal::Constant(c) => c.len(),
            ReferenceSignal::Step { after, .. } => after.len(),
            ReferenceSignal::Sinusoid { amplitude, .. } | ReferenceSignal::SquareWave { amplitude, .. } => amplitude.len(),
            ReferenceSignal::PiecewiseConstant { levels, .. } => levels.first().map_or(0, |l| l.len()),
            ReferenceSignal::Tabulated { samples, .. } => samples.first().map_or(0, |s| s.len()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::InvalidArgument("reference signal has no components".into()));
        }
        match self {
            ReferenceSignal::Step { t_step, before, .. } => {
                if before.len() != dim || !t_step.is_finite() {
                    return Err(Error::InvalidArgument("step reference: before/after dimensions or time invalid".into()));
                }
            }
            ReferenceSignal::Sinusoid { angular_frequency, .. } => {
                if !angular_frequency.is_finite() {
                    return Err(Error::InvalidArgument("sinusoid frequency must be finite".into()));
                }
            }
            ReferenceSignal::SquareWave { switch_times, .. } => {
                if switch_times.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::InvalidArgument("square wave switch times must be nondecreasing".into()));
                }
            }
            ReferenceSignal::PiecewiseConstant { levels, dwell_times } => {
                if levels.len() != dwell_times.len() || levels.iter().any(|l| l.len() != dim) {
                    return Err(Error::InvalidArgument("piecewise-constant reference: one dwell time per level of equal dimension".into()));
                }
                if dwell_times.iter().any(|d| !(*d > 0.0)) {
                    return Err(Error::InvalidArgument("dwell times must be positive".into()));
                }
            }
            ReferenceSignal::Tabulated { period, samples } => {
                if !(*period > 0.0) || samples.iter().any(|s| s.len() != dim) {
                    return Err(Error::InvalidArgument("tabulated reference: positive period and equal-size samples required".into()));
                }
            }
            ReferenceSignal::Constant(_) => {}
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        match self {
            ReferenceSignal::Constant(c) => c.clone(),
            ReferenceSignal::Step { t_step, before, after } => {
                if reached(t, *t_step) {
                    after.clone()
                } else {
                    before.clone()
                }
            }
            ReferenceSignal::Sinusoid {
                amplitude,
                angular_frequency,
            } => amplitude * (angular_frequency * t).sin(),
            ReferenceSignal::SquareWave { amplitude, switch_times } => {
                let switches = switch_times.iter().filter(|&&s| reached(t, s)).count();
                if switches % 2 == 1 {
                    amplitude.clone()
                } else {
                    DVector::zeros(amplitude.len())
                }
            }
            ReferenceSignal::PiecewiseConstant { levels, dwell_times } => {
                let mut end = 0.0;
                for (level, dwell) in levels.iter().zip(dwell_times) {
                    end += dwell;
                    if !reached(t, end) {
                        return level.clone();
                    }
                }
                levels.last().cloned().unwrap_or_else(|| DVector::zeros(0))
            }
            ReferenceSignal::Tabulated { period, samples } => {
                let idx = (t / period + TIME_EPS).floor().max(0.0) as usize;
                samples[idx.min(samples.len() - 1)].clone()
            }
        }
    }

    /// Samples at `0, ts, ..., (count - 1) ts`, held beyond the last one.
    pub fn tabulate(&self, ts: f64, count: usize) -> ReferenceSignal {
        ReferenceSignal::Tabulated {
            period: ts,
            samples: (0..count.max(1)).map(|k| self.eval(k as f64 * ts)).collect(),
        }
    }
}

/// `(r(t_{k+1}), ..., r(t_{k+N}))` stacked, with `t_j = j Ts`.
pub fn preview_window(sig: &ReferenceSignal, k: usize, horizon: usize, ts: f64) -> DVector<f64> {
    let nr = sig.dim();
    let mut out = DVector::zeros(horizon * nr);
    for j in 0..horizon {
        let t = (k + j + 1) as f64 * ts;
        out.rows_mut(j * nr, nr).copy_from(&sig.eval(t));
    }
    out
}

/// Random scalar piecewise-constant reference covering `duration` seconds.
///
/// Levels are uniform on `[-1.5, 1.5]` clipped to `[-1, 1]`; dwell times are
/// uniform on `[1, 3]` seconds.
pub fn random_piecewise_constant<R: Rng + ?Sized>(rng: &mut R, duration: f64) -> ReferenceSignal {
    let mut levels = Vec::new();
    let mut dwell_times = Vec::new();
    let mut covered = 0.0;
    while covered < duration {
        let level: f64 = rng.random_range(-1.5..=1.5);
        let dwell: f64 = rng.random_range(1.0..=3.0);
        levels.push(DVector::from_element(1, level.clamp(-1.0, 1.0)));
        dwell_times.push(dwell);
        covered += dwell;
    }
    ReferenceSignal::PiecewiseConstant { levels, dwell_times }
}
