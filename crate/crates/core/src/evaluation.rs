//! Monte-Carlo evaluation of trained beamformers (outage probability and
//! effective sum rate), baseline schemes, and the blockage-probability sweep.

use num_complex::Complex64;
use rand::Rng as _;
use rayon::prelude::*;

use crate::channel::{
    draw_blockage, gen_geometry, noise_normalized, ChannelBasis, SystemConfig,
};
use crate::error::Result;
use crate::optimizer::{
    bsgd_outmin, init_state, project_e, BsgdOptions, SampleSource, StepSchedule, StopRule,
};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::surrogate::{BeamformingState, EffectiveLink};
use crate::CVec;

/// Beamforming schemes compared in the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Full scheme: D, A, e trained on random blockage realizations.
    Robust,
    /// Trained on the blockage-free channel, deployed under blockage.
    NonRobust,
    /// Random fixed reflection phases; only D and A trained.
    RisRandom,
    /// No reflecting surface at all (direct links only).
    NoRis,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Robust,
        Scheme::NonRobust,
        Scheme::RisRandom,
        Scheme::NoRis,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Robust => "robust",
            Scheme::NonRobust => "non-robust",
            Scheme::RisRandom => "ris-random",
            Scheme::NoRis => "no-ris",
        }
    }
}

/// Monte-Carlo estimate of per-user outage and effective rate.
#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Per-user outage probability: fraction of trials with SINR <= target.
    pub outage: Vec<f64>,
    /// Average of the per-user outages.
    pub outage_avg: f64,
    /// Per-user effective rate: mean of log2(1 + SINR), counted as zero in
    /// trials where the user is in outage.
    pub rates: Vec<f64>,
    /// Sum of the per-user effective rates.
    pub eff_sum_rate: f64,
    pub n_trials: usize,
}

/// Evaluate a fixed beamforming state over `n_trials` fresh blockage draws.
pub fn evaluate(
    state: &BeamformingState,
    basis: &ChannelBasis,
    config: &SystemConfig,
    p_block: f64,
    n_trials: usize,
    rng: &mut Rng,
) -> Result<EvalReport> {
    let k_users = config.n_users;
    let n_paths = basis.gains[0].len();
    let mut outage_counts = vec![0usize; k_users];
    let mut rate_sums = vec![0.0f64; k_users];
    for _ in 0..n_trials {
        let draw = draw_blockage(k_users, n_paths, p_block, rng);
        let sample = basis.assemble(&draw)?;
        let link = EffectiveLink::compute(state, &sample, config.noise_power)?;
        for k in 0..k_users {
            let omega = link.sinr(k);
            if omega <= config.sinr_targets[k] {
                outage_counts[k] += 1;
            } else {
                rate_sums[k] += (1.0 + omega).log2();
            }
        }
    }
    let outage: Vec<f64> = outage_counts
        .iter()
        .map(|&c| c as f64 / n_trials as f64)
        .collect();
    let rates: Vec<f64> = rate_sums.iter().map(|&s| s / n_trials as f64).collect();
    Ok(EvalReport {
        outage_avg: outage.iter().sum::<f64>() / k_users as f64,
        eff_sum_rate: rates.iter().sum(),
        outage,
        rates,
        n_trials,
    })
}

/// Knobs of the blockage-probability sweep.
#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub p_grid: Vec<f64>,
    pub n_geometries: usize,
    pub n_eval_trials: usize,
    pub schedule: StepSchedule,
    pub stop: StopRule,
    pub master_seed: u64,
    pub schemes: Vec<Scheme>,
    /// Rescale gains so the working noise power is 1 (recommended; physical
    /// path losses otherwise push SINR arithmetic toward underflow).
    pub noise_normalize: bool,
}

/// One (blockage probability, scheme, geometry) cell of the sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub p_block: f64,
    pub scheme: Scheme,
    pub geo_index: usize,
    pub outage_avg: f64,
    pub eff_sum_rate: f64,
    pub n_trials: usize,
    pub seed: u64,
}

/// Aggregate over geometries for one (blockage probability, scheme) pair.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub p_block: f64,
    pub scheme: Scheme,
    pub outage_mean: f64,
    pub outage_se: f64,
    pub rate_mean: f64,
    pub rate_se: f64,
    pub n_geometries: usize,
}

fn random_phase_vector(dim: usize, rng: &mut Rng) -> Result<CVec> {
    let mut e = CVec::from_fn(dim, |_, _| {
        Complex64::from_polar(1.0, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
    });
    e[dim - 1] = Complex64::ONE;
    project_e(&e)
}

/// Everything computed for a single geometry at every grid point; the sweep
/// runs one of these per geometry, in parallel, with seeds derived purely
/// from (master seed, geometry index) so the output is thread-count invariant.
fn sweep_one_geometry(
    config: &SystemConfig,
    settings: &SweepSettings,
    geo_index: usize,
) -> Result<Vec<SweepRow>> {
    let geo_seed = derive_seed(settings.master_seed, 1 + geo_index as u64);
    let geo = gen_geometry(config, &mut rng_from_seed(geo_seed))?;
    let (geo, cfg) = if settings.noise_normalize {
        let (g, c, _scale) = noise_normalized(&geo, config);
        (g, c)
    } else {
        (geo, config.clone())
    };
    let basis = ChannelBasis::new(&geo);
    let h0 = basis.no_blockage();

    // The no-reflector variant shares the users' direct links.
    let geo_nr = geo.without_ris();
    let mut cfg_nr = cfg.clone();
    cfg_nr.n_ris = 0;
    let basis_nr = ChannelBasis::new(&geo_nr);
    let h0_nr = basis_nr.no_blockage();

    // The blockage-free-trained state does not depend on the grid point.
    let mut rows = Vec::new();
    let non_robust = if settings.schemes.contains(&Scheme::NonRobust) {
        let mut rng = rng_from_seed(derive_seed(geo_seed, 2));
        let init = init_state(&h0, cfg.n_rf, cfg.p_max, &mut rng)?;
        let source = SampleSource::Fixed(h0.clone());
        let (state, _) = bsgd_outmin(
            &cfg,
            &init,
            &source,
            &settings.schedule,
            &settings.stop,
            &BsgdOptions::default(),
            &mut rng,
        )?;
        Some(state)
    } else {
        None
    };

    for (pi, &p) in settings.p_grid.iter().enumerate() {
        // A distinct seed stream per (grid point, scheme) slot.
        let slot = |j: u64| derive_seed(geo_seed, 16 + 8 * pi as u64 + j);
        for scheme in &settings.schemes {
            let (state, basis_ref, cfg_ref, eval_seed) = match scheme {
                Scheme::Robust => {
                    let mut rng = rng_from_seed(slot(0));
                    let init = init_state(&h0, cfg.n_rf, cfg.p_max, &mut rng)?;
                    let source = SampleSource::Bernoulli {
                        basis: &basis,
                        p_block: p,
                    };
                    let (state, _) = bsgd_outmin(
                        &cfg,
                        &init,
                        &source,
                        &settings.schedule,
                        &settings.stop,
                        &BsgdOptions::default(),
                        &mut rng,
                    )?;
                    (state, &basis, &cfg, slot(1))
                }
                Scheme::NonRobust => (
                    non_robust.clone().expect("trained above"),
                    &basis,
                    &cfg,
                    slot(2),
                ),
                Scheme::RisRandom => {
                    let mut rng = rng_from_seed(slot(3));
                    let e = random_phase_vector(cfg.dim_e(), &mut rng)?;
                    let mut init = init_state(&h0, cfg.n_rf, cfg.p_max, &mut rng)?;
                    init.e_vec = e;
                    let source = SampleSource::Bernoulli {
                        basis: &basis,
                        p_block: p,
                    };
                    let (state, _) = bsgd_outmin(
                        &cfg,
                        &init,
                        &source,
                        &settings.schedule,
                        &settings.stop,
                        &BsgdOptions { update_e: false },
                        &mut rng,
                    )?;
                    (state, &basis, &cfg, slot(4))
                }
                Scheme::NoRis => {
                    let mut rng = rng_from_seed(slot(5));
                    let init = init_state(&h0_nr, cfg_nr.n_rf, cfg_nr.p_max, &mut rng)?;
                    let source = SampleSource::Bernoulli {
                        basis: &basis_nr,
                        p_block: p,
                    };
                    let (state, _) = bsgd_outmin(
                        &cfg_nr,
                        &init,
                        &source,
                        &settings.schedule,
                        &settings.stop,
                        &BsgdOptions { update_e: false },
                        &mut rng,
                    )?;
                    (state, &basis_nr, &cfg_nr, slot(6))
                }
            };
            let report = evaluate(
                &state,
                basis_ref,
                cfg_ref,
                p,
                settings.n_eval_trials,
                &mut rng_from_seed(eval_seed),
            )?;
            rows.push(SweepRow {
                p_block: p,
                scheme: *scheme,
                geo_index,
                outage_avg: report.outage_avg,
                eff_sum_rate: report.eff_sum_rate,
                n_trials: report.n_trials,
                seed: eval_seed,
            });
        }
    }
    Ok(rows)
}

/// Run the full sweep: geometries in parallel, output order fixed by
/// (geometry index, grid point, scheme) regardless of thread count.
pub fn sweep_pblock(config: &SystemConfig, settings: &SweepSettings) -> Result<Vec<SweepRow>> {
    let per_geo: Vec<Result<Vec<SweepRow>>> = (0..settings.n_geometries)
        .into_par_iter()
        .map(|g| sweep_one_geometry(config, settings, g))
        .collect();
    let mut rows = Vec::new();
    for r in per_geo {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Mean and standard error over geometries per (grid point, scheme).
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(u64, Scheme)> = Vec::new();
    for r in rows {
        let key = (r.p_block.to_bits(), r.scheme);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.iter()
        .map(|&(pbits, scheme)| {
            let vals: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.p_block.to_bits() == pbits && r.scheme == scheme)
                .collect();
            let n = vals.len() as f64;
            let mean = |f: &dyn Fn(&SweepRow) -> f64| vals.iter().map(|r| f(r)).sum::<f64>() / n;
            let om = mean(&|r| r.outage_avg);
            let rm = mean(&|r| r.eff_sum_rate);
            let se = |f: &dyn Fn(&SweepRow) -> f64, m: f64| {
                if vals.len() < 2 {
                    0.0
                } else {
                    let var =
                        vals.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / (n - 1.0);
                    (var / n).sqrt()
                }
            };
            SummaryRow {
                p_block: f64::from_bits(pbits),
                scheme,
                outage_mean: om,
                outage_se: se(&|r| r.outage_avg, om),
                rate_mean: rm,
                rate_se: se(&|r| r.eff_sum_rate, rm),
                n_geometries: vals.len(),
            }
        })
        .collect()
}

pub fn rows_to_csv<W: std::io::Write>(rows: &[SweepRow], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "p_block,scheme,geo_index,outage_avg,eff_sum_rate,n_trials,seed"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.p_block,
            r.scheme.as_str(),
            r.geo_index,
            r.outage_avg,
            r.eff_sum_rate,
            r.n_trials,
            r.seed
        )?;
    }
    Ok(())
}

pub fn summary_to_csv<W: std::io::Write>(rows: &[SummaryRow], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "p_block,scheme,outage_mean,outage_se,rate_mean,rate_se,n_geometries"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.p_block,
            r.scheme.as_str(),
            r.outage_mean,
            r.outage_se,
            r.rate_mean,
            r.rate_se,
            r.n_geometries
        )?;
    }
    Ok(())
}
