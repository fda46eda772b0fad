//! Heralded-retrieval statistics: correlators, the efficiency estimator chain,
//! the Cauchy-Schwarz test and a seeded Monte Carlo click generator.
//!
//! Each field (write and read) is split 50:50 onto two non-number-resolving
//! detectors, so a trial yields 0, 1 or 2 clicks per field. Single-detector
//! probabilities are averaged over the pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value with a one-standard-deviation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub error: f64,
}

impl Measured {
    pub fn exact(value: f64) -> Self {
        Measured { value, error: 0.0 }
    }

    pub fn relative_error(&self) -> f64 {
        if self.value == 0.0 {
            0.0
        } else {
            (self.error / self.value).abs()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyChain {
    pub escape: f64,
    pub transmission: f64,
    pub detection: f64,
}

impl EfficiencyChain {
    pub fn new(escape: f64, transmission: f64, detection: f64) -> Result<Self> {
        let chain = EfficiencyChain {
            escape,
            transmission,
            detection,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta_esc", self.escape),
            ("eta_t", self.transmission),
            ("eta_d", self.detection),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::param(name, format!("must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// η_tot = η_esc·η_t·η_d.
    pub fn total(&self) -> f64 {
        self.escape * self.transmission * self.detection
    }
}

/// η_esc = 0.56, η_t = 0.53, η_d = 0.45.
pub fn reference_chain() -> EfficiencyChain {
    EfficiencyChain {
        escape: 0.56,
        transmission: 0.53,
        detection: 0.45,
    }
}

/// Aggregated click counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub trials: u64,
    /// `histogram[w][r]`: trials with `w` write clicks and `r` read clicks.
    pub histogram: [[u64; 3]; 3],
    /// Gates run without excitation to measure false heralds.
    pub background_trials: u64,
    /// Background gates with at least one write click.
    pub background_write_clicks: u64,
}

impl DetectionRecord {
    pub fn empty() -> Self {
        DetectionRecord {
            trials: 0,
            histogram: [[0; 3]; 3],
            background_trials: 0,
            background_write_clicks: 0,
        }
    }

    pub fn record(&mut self, write_clicks: u8, read_clicks: u8) {
        self.trials += 1;
        self.histogram[write_clicks.min(2) as usize][read_clicks.min(2) as usize] += 1;
    }

    pub fn merge(&mut self, other: &DetectionRecord) {
        self.trials += other.trials;
        for w in 0..3 {
            for r in 0..3 {
                self.histogram[w][r] += other.histogram[w][r];
            }
        }
        self.background_trials += other.background_trials;
        self.background_write_clicks += other.background_write_clicks;
    }

    pub fn validate(&self) -> Result<()> {
        let total: u64 = self.histogram.iter().flatten().sum();
        if total != self.trials {
            return Err(Error::param(
                "histogram",
                format!("sums to {total}, expected {} trials", self.trials),
            ));
        }
        if self.background_write_clicks > self.background_trials {
            return Err(Error::param("background_write_clicks", "exceeds background_trials"));
        }
        Ok(())
    }

    fn count(&self, pred: impl Fn(usize, usize) -> bool) -> u64 {
        let mut n = 0;
        for w in 0..3 {
            for r in 0..3 {
                if pred(w, r) {
                    n += self.histogram[w][r];
                }
            }
        }
        n
    }

    /// Trials with at least one write click.
    pub fn heralds(&self) -> u64 {
        self.count(|w, _| w > 0)
    }

    pub fn read_events(&self) -> u64 {
        self.count(|_, r| r > 0)
    }

    pub fn coincidences(&self) -> u64 {
        self.count(|w, r| w > 0 && r > 0)
    }

    fn frac(&self, n: u64) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            n as f64 / self.trials as f64
        }
    }

    pub fn p_w(&self) -> f64 {
        self.frac(self.heralds())
    }

    pub fn p_r(&self) -> f64 {
        self.frac(self.read_events())
    }

    pub fn p_wr(&self) -> f64 {
        self.frac(self.coincidences())
    }

    /// p_r|w = p_wr/p_w.
    pub fn p_r_given_w(&self) -> Result<Measured> {
        let (nwr, nw) = (self.coincidences(), self.heralds());
        if nw == 0 {
            return Err(Error::UndefinedCorrelator("p_r|w"));
        }
        let value = nwr as f64 / nw as f64;
        Ok(Measured {
            value,
            error: value * poisson_rel(&[nwr, nw]),
        })
    }

    /// Background herald probability p_b.
    pub fn p_b(&self) -> Measured {
        if self.background_trials == 0 {
            return Measured::exact(0.0);
        }
        let n = self.background_write_clicks;
        Measured {
            value: n as f64 / self.background_trials as f64,
            error: (n as f64).sqrt() / self.background_trials as f64,
        }
    }

    /// Trials with one and with two clicks in the write (`true`) or read field.
    fn singles_pairs(&self, write: bool) -> (u64, u64) {
        let pick = |w: usize, r: usize| if write { w } else { r };
        (self.count(|w, r| pick(w, r) == 1), self.count(|w, r| pick(w, r) == 2))
    }
}

/// √(Σ 1/nᵢ): relative error of a product or ratio of independent Poisson counts.
fn poisson_rel(counts: &[u64]) -> f64 {
    counts
        .iter()
        .map(|&n| if n == 0 { f64::INFINITY } else { 1.0 / n as f64 })
        .sum::<f64>()
        .sqrt()
}

/// g²_wr = p_wr/(p_w·p_r).
pub fn cross_correlation(record: &DetectionRecord) -> Result<Measured> {
    let (nw, nr, nwr) = (record.heralds(), record.read_events(), record.coincidences());
    if nw == 0 || nr == 0 {
        return Err(Error::UndefinedCorrelator("g2_wr"));
    }
    let value = nwr as f64 * record.trials as f64 / (nw as f64 * nr as f64);
    let error = if nwr == 0 {
        0.0
    } else {
        value * poisson_rel(&[nwr, nw, nr])
    };
    Ok(Measured { value, error })
}

/// Same-field autocorrelation from the two detectors of one field:
/// P(both click)/P(single detector)².
fn auto_correlation(record: &DetectionRecord, write: bool, name: &'static str) -> Result<Measured> {
    let (n1, n2) = record.singles_pairs(write);
    let t = record.trials as f64;
    let clicks = n1 + 2 * n2;
    if clicks == 0 {
        return Err(Error::UndefinedCorrelator(name));
    }
    let p_single = clicks as f64 / (2.0 * t);
    let value = (n2 as f64 / t) / (p_single * p_single);
    // The pair count dominates; clicks enter squared.
    let error = if n2 == 0 {
        0.0
    } else {
        value * (1.0 / n2 as f64 + 4.0 / clicks as f64).sqrt()
    };
    Ok(Measured { value, error })
}

pub fn write_autocorrelation(record: &DetectionRecord) -> Result<Measured> {
    auto_correlation(record, true, "g2_ww")
}

pub fn read_autocorrelation(record: &DetectionRecord) -> Result<Measured> {
    auto_correlation(record, false, "g2_rr")
}

/// p^c_r|w = p_r|w / [η_tot(1 − p_b/p_w)].
pub fn corrected_retrieval(
    p_r_given_w: Measured,
    p_b: Measured,
    p_w: Measured,
    chain: &EfficiencyChain,
) -> Result<Measured> {
    chain.validate()?;
    if !(p_b.value >= 0.0) {
        return Err(Error::param("p_b", "must be >= 0"));
    }
    if p_b.value >= p_w.value {
        return Err(Error::NoiseDominated {
            p_b: p_b.value,
            p_w: p_w.value,
        });
    }
    let signal = 1.0 - p_b.value / p_w.value;
    let value = p_r_given_w.value / (chain.total() * signal);
    // d ln p^c = d ln p_r|w + (p_b/p_w)/(1 − p_b/p_w)·(d ln p_b − d ln p_w)
    let k = (p_b.value / p_w.value) / signal;
    let rel = (p_r_given_w.relative_error().powi(2)
        + (k * p_b.relative_error()).powi(2)
        + (k * p_w.relative_error()).powi(2))
    .sqrt();
    Ok(Measured {
        value,
        error: value * rel,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyEstimate {
    /// χ, clamped to [0, 1] for reporting.
    pub chi: Measured,
    /// Unclamped p^c(1 − 1/g²_wr).
    pub raw: f64,
    /// Set when g²_wr ≤ 1 (coincidences are all accidental) or χ > 1.
    pub out_of_model: bool,
}

/// χ = p^c(1 − 1/g²_wr).
pub fn intrinsic_efficiency(corrected: Measured, g2_wr: Measured) -> Result<EfficiencyEstimate> {
    if !(g2_wr.value > 0.0) {
        return Err(Error::param("g2_wr", "must be positive"));
    }
    let factor = 1.0 - 1.0 / g2_wr.value;
    let raw = corrected.value * factor;
    // ∂χ/∂p^c = factor, ∂χ/∂g² = p^c/g⁴
    let error = ((factor * corrected.error).powi(2)
        + (corrected.value / (g2_wr.value * g2_wr.value) * g2_wr.error).powi(2))
    .sqrt();
    let out_of_model = g2_wr.value <= 1.0 || raw > 1.0;
    Ok(EfficiencyEstimate {
        chi: Measured {
            value: raw.clamp(0.0, 1.0),
            error,
        },
        raw,
        out_of_model,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchySchwarz {
    /// (g²_wr)²/(g²_ww·g²_rr).
    pub ratio: f64,
    /// √(g²_ww·g²_rr).
    pub bound: f64,
    /// (g²_wr − bound) in units of its standard error.
    pub significance: f64,
    /// g²_wr exceeds the bound by at least one standard error.
    pub nonclassical: bool,
}

pub fn cauchy_schwarz(g2_wr: Measured, g2_ww: Measured, g2_rr: Measured) -> Result<CauchySchwarz> {
    if !(g2_ww.value > 0.0 && g2_rr.value > 0.0) {
        return Err(Error::UndefinedCorrelator("cauchy_schwarz"));
    }
    let bound = (g2_ww.value * g2_rr.value).sqrt();
    let ratio = g2_wr.value * g2_wr.value / (g2_ww.value * g2_rr.value);
    let bound_err = 0.5 * bound * (g2_ww.relative_error().powi(2) + g2_rr.relative_error().powi(2)).sqrt();
    let sigma = g2_wr.error.hypot(bound_err);
    let diff = g2_wr.value - bound;
    let significance = if sigma > 0.0 {
        diff / sigma
    } else if diff > 0.0 {
        f64::INFINITY
    } else if diff < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    Ok(CauchySchwarz {
        ratio,
        bound,
        significance,
        nonclassical: diff > 0.0 && diff >= sigma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub trials: u64,
    pub p_w: Measured,
    pub p_r: Measured,
    pub p_wr: Measured,
    pub p_r_given_w: Measured,
    pub p_b: Measured,
    pub eta_tot: f64,
    pub g2_wr: Measured,
    pub g2_ww: Measured,
    pub g2_rr: Measured,
    pub p_rw_corrected: Measured,
    pub chi_estimate: EfficiencyEstimate,
    /// `None` when an autocorrelation is zero (no same-field pairs seen).
    pub cauchy_schwarz: Option<CauchySchwarz>,
}

fn prob(n: u64, trials: u64) -> Measured {
    let t = trials as f64;
    Measured {
        value: n as f64 / t,
        error: (n as f64).sqrt() / t,
    }
}

/// Runs the full estimator chain on a record.
pub fn summarize(record: &DetectionRecord, chain: &EfficiencyChain) -> Result<StatsSummary> {
    record.validate()?;
    if record.trials == 0 {
        return Err(Error::UndefinedCorrelator("p_w"));
    }
    let p_w = prob(record.heralds(), record.trials);
    let p_r = prob(record.read_events(), record.trials);
    let p_wr = prob(record.coincidences(), record.trials);
    let p_r_given_w = record.p_r_given_w()?;
    let p_b = record.p_b();
    let g2_wr = cross_correlation(record)?;
    let g2_ww = write_autocorrelation(record)?;
    let g2_rr = read_autocorrelation(record)?;
    let p_rw_corrected = corrected_retrieval(p_r_given_w, p_b, p_w, chain)?;
    let chi_estimate = intrinsic_efficiency(p_rw_corrected, g2_wr)?;
    let cauchy_schwarz = cauchy_schwarz(g2_wr, g2_ww, g2_rr).ok();
    Ok(StatsSummary {
        trials: record.trials,
        p_w,
        p_r,
        p_wr,
        p_r_given_w,
        p_b,
        eta_tot: chain.total(),
        g2_wr,
        g2_ww,
        g2_rr,
        p_rw_corrected,
        chi_estimate,
        cauchy_schwarz,
    })
}

/// Parameters of the click generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    /// Mean write-photon (excitation) number µ per trial.
    pub mean_excitations: f64,
    pub chi_true: f64,
    /// Efficiency from read photon to read-detector click.
    pub chain: EfficiencyChain,
    /// Efficiency from write photon to write-detector click.
    pub write_efficiency: f64,
    /// Dark-count probability per detector per gate.
    pub dark_count: f64,
    /// Number of excitation-free background gates; `None` matches `trials`.
    pub background_trials: Option<u64>,
}

impl DetectionModel {
    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        if !(self.mean_excitations > 0.0 && self.mean_excitations.is_finite()) {
            return Err(Error::param("mu", "must be positive"));
        }
        for (name, v) in [
            ("chi_true", self.chi_true),
            ("write_efficiency", self.write_efficiency),
            ("dark_count", self.dark_count),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Trials per independent random stream.
pub const CHUNK_TRIALS: u64 = 1 << 16;
const BACKGROUND_STREAM: u64 = 1 << 63;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Clicks on a detector pair from `photons` arriving with efficiency `eta`.
fn pair_clicks(rng: &mut ChaCha8Rng, photons: u64, eta: f64, dark: f64) -> u8 {
    let (mut d1, mut d2) = (false, false);
    for _ in 0..photons {
        if rng.random::<f64>() < eta {
            if rng.random::<bool>() {
                d1 = true;
            } else {
                d2 = true;
            }
        }
    }
    if dark > 0.0 {
        d1 |= rng.random::<f64>() < dark;
        d2 |= rng.random::<f64>() < dark;
    }
    d1 as u8 + d2 as u8
}

fn run_chunk(model: &DetectionModel, seed: u64, chunk: u64, n: u64, mut sink: impl FnMut(u8, u8)) {
    let mut rng = stream_rng(seed, chunk);
    let thermal = Geometric::new(1.0 / (1.0 + model.mean_excitations)).expect("valid thermal parameter");
    let eta_r = model.chain.total();
    for _ in 0..n {
        let excitations = thermal.sample(&mut rng);
        let w = pair_clicks(&mut rng, excitations, model.write_efficiency, model.dark_count);
        let mut photons = 0;
        for _ in 0..excitations {
            if rng.random::<f64>() < model.chi_true {
                photons += 1;
            }
        }
        let r = pair_clicks(&mut rng, photons, eta_r, model.dark_count);
        sink(w, r);
    }
}

fn run_background(model: &DetectionModel, seed: u64, trials: u64) -> u64 {
    let chunks = trials.div_ceil(CHUNK_TRIALS);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = CHUNK_TRIALS.min(trials - c * CHUNK_TRIALS);
            let mut rng = stream_rng(seed, BACKGROUND_STREAM | c);
            (0..n)
                .filter(|_| pair_clicks(&mut rng, 0, 0.0, model.dark_count) > 0)
                .count() as u64
        })
        .sum()
}

fn chunk_sizes(trials: u64) -> impl IndexedParallelIterator<Item = (u64, u64)> {
    let chunks = trials.div_ceil(CHUNK_TRIALS) as usize;
    (0..chunks).into_par_iter().map(move |c| {
        let c = c as u64;
        (c, CHUNK_TRIALS.min(trials - c * CHUNK_TRIALS))
    })
}

/// Simulates `trials` heralding gates plus background gates. The result
/// depends only on `model`, `trials` and `seed`, not on the thread count.
pub fn simulate_detection_events(model: &DetectionModel, trials: u64, seed: u64) -> Result<DetectionRecord> {
    model.validate()?;
    let mut record = chunk_sizes(trials)
        .map(|(c, n)| {
            let mut rec = DetectionRecord::empty();
            run_chunk(model, seed, c, n, |w, r| rec.record(w, r));
            rec
        })
        .reduce(DetectionRecord::empty, |mut a, b| {
            a.merge(&b);
            a
        });
    let bg = model.background_trials.unwrap_or(trials);
    record.background_trials = bg;
    record.background_write_clicks = run_background(model, seed, bg);
    Ok(record)
}

/// Per-trial clicks `(write, read)` in trial order, from the same streams as
/// [`simulate_detection_events`], and the aggregated record.
pub fn simulate_trials(model: &DetectionModel, trials: u64, seed: u64) -> Result<(Vec<(u8, u8)>, DetectionRecord)> {
    model.validate()?;
    let per_chunk: Vec<Vec<(u8, u8)>> = chunk_sizes(trials)
        .map(|(c, n)| {
            let mut v = Vec::with_capacity(n as usize);
            run_chunk(model, seed, c, n, |w, r| v.push((w, r)));
            v
        })
        .collect();
    let events: Vec<(u8, u8)> = per_chunk.into_iter().flatten().collect();
    let mut record = DetectionRecord::empty();
    for &(w, r) in &events {
        record.record(w, r);
    }
    let bg = model.background_trials.unwrap_or(trials);
    record.background_trials = bg;
    record.background_write_clicks = run_background(model, seed, bg);
    Ok((events, record))
}
