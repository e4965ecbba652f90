//! Uniform-grid quadrature and fixed-step integration helpers.

use std::ops::{Add, Mul};

use crate::error::{Error, Result};

/// Uniform grid `start + i * step`, `i = 0..=intervals`, with the step shrunk
/// so that the grid lands exactly on `end`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub intervals: usize,
    end: f64,
}

impl UniformGrid {
    /// Smallest grid on `[start, end]` with spacing at most `max_step`.
    pub fn covering(start: f64, end: f64, max_step: f64) -> Result<Self> {
        Self::build(start, end, max_step, false)
    }

    /// As [`covering`](Self::covering) but with an even interval count, as
    /// composite Simpson requires.
    pub fn covering_even(start: f64, end: f64, max_step: f64) -> Result<Self> {
        Self::build(start, end, max_step, true)
    }

    fn build(start: f64, end: f64, max_step: f64, even: bool) -> Result<Self> {
        if !(max_step > 0.0) || !max_step.is_finite() {
            return Err(Error::InvalidParameter {
                name: "step",
                reason: format!("must be positive, got {max_step}"),
            });
        }
        if !(end >= start) {
            return Err(Error::InvalidParameter {
                name: "t_end",
                reason: format!("end {end} precedes start {start}"),
            });
        }
        let span = end - start;
        let mut intervals = ((span / max_step) * (1.0 - 1e-12)).ceil().max(0.0) as usize;
        if even && intervals % 2 == 1 {
            intervals += 1;
        }
        if intervals == 0 {
            return Ok(Self {
                start,
                step: 0.0,
                intervals: 0,
                end: start,
            });
        }
        Ok(Self {
            start,
            step: span / intervals as f64,
            intervals,
            end,
        })
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn at(&self, i: usize) -> f64 {
        if i == self.intervals {
            // the last node is the requested end point, not a rounded product
            self.end
        } else {
            self.start + self.step * i as f64
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.intervals).map(move |i| self.at(i))
    }
}

/// Composite Simpson rule over uniformly spaced samples. An odd interval
/// count is handled with a 3/8 rule on the last three intervals; a single
/// interval falls back to the trapezoid rule.
pub fn simpson<T>(samples: &[T], step: f64) -> T
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T> + Default,
{
    let n = samples.len().saturating_sub(1);
    match n {
        0 => T::default(),
        1 => (samples[0] + samples[1]) * (0.5 * step),
        _ => {
            let (even_part, tail) = if n.is_multiple_of(2) {
                (n, 0)
            } else {
                (n - 3, 3)
            };
            let mut acc = T::default();
            let mut i = 0;
            while i < even_part {
                acc = acc + (samples[i] + samples[i + 1] * 4.0 + samples[i + 2]) * (step / 3.0);
                i += 2;
            }
            if tail == 3 {
                let s = &samples[even_part..];
                acc = acc + (s[0] + s[1] * 3.0 + s[2] * 3.0 + s[3]) * (3.0 * step / 8.0);
            }
            acc
        }
    }
}

/// Running integral `I_i = int_{x_0}^{x_i} y` over uniformly spaced samples,
/// fourth-order accurate at every node. Even nodes use composite Simpson;
/// each odd node adds the quadratic-interpolant integral over its first half
/// panel, `h/12 (5 y_0 + 8 y_1 - y_2)`.
pub fn cumulative_simpson<T>(samples: &[T], step: f64) -> Vec<T>
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T> + Default,
{
    let n = samples.len();
    let mut out = vec![T::default(); n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = (samples[0] + samples[1]) * (0.5 * step);
        return out;
    }
    let mut i = 0;
    while i + 2 < n {
        let (y0, y1, y2) = (samples[i], samples[i + 1], samples[i + 2]);
        out[i + 1] = out[i] + (y0 * 5.0 + y1 * 8.0 + y2 * -1.0) * (step / 12.0);
        out[i + 2] = out[i] + (y0 + y1 * 4.0 + y2) * (step / 3.0);
        i += 2;
    }
    if i + 1 < n {
        // trailing single interval: quadratic through the last three nodes
        let (y0, y1, y2) = (samples[i - 1], samples[i], samples[i + 1]);
        out[i + 1] = out[i] + (y0 * -1.0 + y1 * 8.0 + y2 * 5.0) * (step / 12.0);
    }
    out
}
