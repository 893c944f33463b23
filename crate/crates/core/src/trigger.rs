//! Pseudo-noise preamble generation and streaming trigger detection.
//!
//! The preamble is a maximal-length LFSR sequence sent as real BPSK chips,
//! one chip per sample. Detection uses the normalized correlation
//!
//! `score[i] = |sum_k s[i+k] c_k| / (sqrt(L) * sqrt(sum_k |s[i+k]|^2))`
//!
//! which lies in `[0, 1]` and does not depend on the stream amplitude.
//! Scores are computed by overlap-save in chunks aligned to absolute stream
//! positions, so events do not depend on how the stream is split into blocks.

use std::collections::VecDeque;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{fft_in_place, ifft_in_place};
use crate::rng::{derive, stream};
use crate::{ComplexSignal, Error, Result};

/// Feedback taps of primitive polynomials, highest exponent first.
const TAPS: [&[u32]; 18] = [
    &[3, 2],
    &[4, 3],
    &[5, 3],
    &[6, 5],
    &[7, 6],
    &[8, 6, 5, 4],
    &[9, 5],
    &[10, 7],
    &[11, 9],
    &[12, 6, 4, 1],
    &[13, 4, 3, 1],
    &[14, 5, 3, 1],
    &[15, 14],
    &[16, 15, 13, 4],
    &[17, 14],
    &[18, 11],
    &[19, 6, 2, 1],
    &[20, 17],
];

#[derive(Debug, Clone, PartialEq)]
pub struct PnSequence {
    /// `+-1` chips.
    pub chips: Vec<f64>,
    pub order: u32,
    pub seed: u64,
}

impl PnSequence {
    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    /// Chips as a complex signal with amplitude `amplitude`.
    pub fn to_signal(&self, amplitude: f64, sample_rate: f64) -> ComplexSignal {
        ComplexSignal::new(
            self.chips
                .iter()
                .map(|&c| Complex64::new(c * amplitude, 0.0))
                .collect(),
            sample_rate,
            0.0,
        )
    }
}

/// m-sequence of length `2^order - 1`; `seed` picks the starting state.
pub fn generate_pn(order: u32, seed: u64) -> Result<PnSequence> {
    if !(3..=20).contains(&order) {
        return Err(Error::Domain {
            what: "pn order",
            value: order as f64,
            min: 3.0,
            max: 20.0,
        });
    }
    let taps = TAPS[(order - 3) as usize];
    let len = (1u32 << order) - 1;
    let mut state = (derive(seed, &[stream::TRIGGER]) % len as u64) as u32 + 1;
    let chips = (0..len)
        .map(|_| {
            let out = state & 1;
            let fb = taps
                .iter()
                .fold(0, |acc, &t| acc ^ ((state >> (order - t)) & 1));
            state = (state >> 1) | (fb << (order - 1));
            if out == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    Ok(PnSequence { chips, order, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerEvent {
    /// Stream index of the first preamble chip.
    pub index: usize,
    pub score: f64,
}

/// Streaming correlator.
///
/// Feed blocks with [`push`](Self::push), then call
/// [`finish`](Self::finish). An index becomes an event when its score
/// reaches the threshold and is the largest within one preamble length on
/// either side (the earlier index wins ties).
pub struct Detector {
    chips: Vec<f64>,
    threshold: f64,
    chunk: usize,
    fft_len: usize,
    ref_spectrum: Vec<Complex64>,
    /// Samples from absolute index `buf_start`.
    buf: VecDeque<Complex64>,
    buf_start: usize,
    /// Scores from absolute index `score_start`.
    scores: VecDeque<f64>,
    score_start: usize,
    /// First index not yet decided.
    decided: usize,
    total: usize,
}

impl Detector {
    pub fn new(pn: &PnSequence, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::Domain {
                what: "threshold",
                value: threshold,
                min: 0.0,
                max: 1.0,
            });
        }
        let l = pn.len();
        let chunk = (4 * l).max(4096).next_power_of_two();
        let fft_len = (chunk + l).next_power_of_two();
        let mut ref_spectrum = vec![Complex64::new(0.0, 0.0); fft_len];
        for (dst, &c) in ref_spectrum.iter_mut().zip(&pn.chips) {
            *dst = Complex64::new(c, 0.0);
        }
        fft_in_place(&mut ref_spectrum);
        for v in &mut ref_spectrum {
            *v = v.conj();
        }
        Ok(Self {
            chips: pn.chips.clone(),
            threshold,
            chunk,
            fft_len,
            ref_spectrum,
            buf: VecDeque::new(),
            buf_start: 0,
            scores: VecDeque::new(),
            score_start: 0,
            decided: 0,
            total: 0,
        })
    }

    fn pn_len(&self) -> usize {
        self.chips.len()
    }

    /// Processes the next block of the stream; returns events that are final.
    pub fn push(&mut self, block: &[Complex64]) -> Vec<TriggerEvent> {
        self.buf.extend(block.iter().copied());
        self.total += block.len();
        let l = self.pn_len();
        loop {
            let next = self.score_start + self.scores.len();
            if next + self.chunk + l - 1 > self.total {
                break;
            }
            self.score_chunk(next, self.chunk);
        }
        let events = self.decide(false);
        self.trim();
        events
    }

    /// Flushes the tail of the stream.
    pub fn finish(&mut self) -> Vec<TriggerEvent> {
        let l = self.pn_len();
        let next = self.score_start + self.scores.len();
        if self.total + 1 > next + l {
            let count = self.total + 1 - l - next;
            self.score_chunk(next, count);
        }
        let events = self.decide(true);
        self.trim();
        events
    }

    /// Scores for indices `[start, start + count)`.
    fn score_chunk(&mut self, start: usize, count: usize) {
        let l = self.pn_len();
        let off = start - self.buf_start;
        let seg_len = count + l - 1;
        let mut x = vec![Complex64::new(0.0, 0.0); self.fft_len];
        for (i, dst) in x.iter_mut().enumerate().take(seg_len) {
            *dst = self.buf[off + i];
        }
        let energy: Vec<f64> = {
            let mut acc = 0.0;
            let mut prefix = Vec::with_capacity(seg_len + 1);
            prefix.push(0.0);
            for v in &x[..seg_len] {
                acc += v.norm_sqr();
                prefix.push(acc);
            }
            (0..count).map(|i| prefix[i + l] - prefix[i]).collect()
        };
        fft_in_place(&mut x);
        for (a, b) in x.iter_mut().zip(&self.ref_spectrum) {
            *a *= b;
        }
        ifft_in_place(&mut x);
        let inv = 1.0 / self.fft_len as f64;
        let norm_l = (l as f64).sqrt();
        for i in 0..count {
            let e = energy[i];
            let score = if e > 0.0 {
                ((x[i] * inv).norm() / (norm_l * e.sqrt())).min(1.0)
            } else {
                0.0
            };
            self.scores.push_back(score);
        }
    }

    fn score(&self, i: usize) -> f64 {
        self.scores[i - self.score_start]
    }

    fn decide(&mut self, at_end: bool) -> Vec<TriggerEvent> {
        let l = self.pn_len();
        let known_end = self.score_start + self.scores.len();
        let mut events = Vec::new();
        while self.decided < known_end {
            let i = self.decided;
            let hi = i + l - 1;
            if !at_end && hi >= known_end {
                break;
            }
            let s = self.score(i);
            if s >= self.threshold {
                let lo = i.saturating_sub(l - 1).max(self.score_start);
                let hi = hi.min(known_end - 1);
                let is_max =
                    (lo..i).all(|j| self.score(j) < s) && (i + 1..=hi).all(|j| self.score(j) <= s);
                if is_max {
                    events.push(TriggerEvent { index: i, score: s });
                }
            }
            self.decided += 1;
        }
        events
    }

    /// Drops samples and scores no longer needed.
    fn trim(&mut self) {
        let l = self.pn_len();
        let keep_scores_from = self.decided.saturating_sub(l - 1).max(self.score_start);
        while self.score_start < keep_scores_from {
            self.scores.pop_front();
            self.score_start += 1;
        }
        let next = self.score_start + self.scores.len();
        while self.buf_start < next {
            self.buf.pop_front();
            self.buf_start += 1;
        }
    }
}

/// Detects every preamble in `stream`.
pub fn correlate_detect(
    stream: &ComplexSignal,
    pn: &PnSequence,
    threshold: f64,
) -> Result<Vec<TriggerEvent>> {
    let mut det = Detector::new(pn, threshold)?;
    let mut events = det.push(&stream.samples);
    events.extend(det.finish());
    Ok(events)
}

/// `length` samples starting `offset` samples after the event.
pub fn extract_window(
    stream: &ComplexSignal,
    event: &TriggerEvent,
    offset: usize,
    length: usize,
) -> Result<ComplexSignal> {
    let start = event.index + offset;
    let end = start + length;
    if end > stream.len() {
        return Err(Error::Bounds {
            start,
            end,
            len: stream.len(),
        });
    }
    Ok(ComplexSignal::new(
        stream.samples[start..end].to_vec(),
        stream.sample_rate,
        stream.time_of(start),
    ))
}
