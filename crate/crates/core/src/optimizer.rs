//! Projections onto the three constraint sets, initialization of e/A/D, step
//! schedules, and the block stochastic gradient descent main loop.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{ChannelBasis, ChannelSample, SystemConfig};
use crate::error::{OutminError, Result};
use crate::rng::Rng;
use crate::surrogate::{
    grad_hinge_from_link, hinge_from_link, BeamformingState, Block, EffectiveLink,
};
use crate::{CMat, CVec};

/// Step-size schedule kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    InverseT,
}

/// Step-size schedule; the optional cap enforces alpha_t <= 1/L.
#[derive(Debug, Clone, Copy)]
pub struct StepSchedule {
    pub kind: ScheduleKind,
    pub alpha0: f64,
    pub tau: f64,
    pub lipschitz_cap: Option<f64>,
}

impl StepSchedule {
    pub fn constant(alpha0: f64) -> Self {
        StepSchedule {
            kind: ScheduleKind::Constant,
            alpha0,
            tau: 1.0,
            lipschitz_cap: None,
        }
    }

    pub fn inverse_t(alpha0: f64, tau: f64) -> Self {
        StepSchedule {
            kind: ScheduleKind::InverseT,
            alpha0,
            tau,
            lipschitz_cap: None,
        }
    }

    /// alpha_t for iteration t >= 1; always in (0, 1].
    pub fn step_size(&self, t: usize) -> f64 {
        let base = match self.kind {
            ScheduleKind::Constant => self.alpha0,
            ScheduleKind::InverseT => self.alpha0 / (1.0 + t as f64 / self.tau),
        };
        let capped = match self.lipschitz_cap {
            Some(l) => base.min(1.0 / l),
            None => base,
        };
        capped.min(1.0)
    }
}

/// Termination rule: hard iteration cap plus rolling-window convergence.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopRule {
    pub t_max: usize,
    pub window: usize,
    pub tol: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            t_max: 100_000,
            window: 500,
            tol: 1e-4,
        }
    }
}

/// One logged record of the run.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub t: usize,
    pub objective_rolling: f64,
    pub grad_norm_d: f64,
    pub grad_norm_a: f64,
    pub grad_norm_e: f64,
    pub alpha: f64,
}

/// Per-window trace of a BSGD run.
#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    pub fn to_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "t,objective_rolling,grad_norm_d,grad_norm_a,grad_norm_e,alpha"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.t, r.objective_rolling, r.grad_norm_d, r.grad_norm_a, r.grad_norm_e, r.alpha
            )?;
        }
        Ok(())
    }
}

/// Projection onto S_D for fixed A: rescale to the power boundary,
/// Z * sqrt(P_max) / ||A Z||_F.
pub fn project_d(d_candidate: &CMat, a_current: &CMat, p_max: f64) -> Result<CMat> {
    let norm = (a_current * d_candidate).norm();
    if norm == 0.0 {
        return Err(OutminError::Degenerate(
            "A * Z vanishes; cannot project onto the power boundary".into(),
        ));
    }
    Ok(d_candidate * Complex64::from(p_max.sqrt() / norm))
}

/// Elementwise phase projection onto S_A. Zero entries map to 1.
pub fn project_a(a_candidate: &CMat) -> CMat {
    a_candidate.map(|z| {
        let r = z.norm();
        if r == 0.0 {
            Complex64::ONE
        } else {
            z / r
        }
    })
}

/// Projection onto S_e: divide by the last entry, take elementwise phases.
pub fn project_e(e_candidate: &CVec) -> Result<CVec> {
    let last = e_candidate[e_candidate.len() - 1];
    if last == Complex64::ZERO {
        return Err(OutminError::Degenerate(
            "last reflection entry is zero; gauge is undefined".into(),
        ));
    }
    let mut out = e_candidate.map(|z| {
        let w = z / last;
        let r = w.norm();
        if r == 0.0 {
            Complex64::ONE
        } else {
            w / r
        }
    });
    let n = out.len();
    out[n - 1] = Complex64::ONE;
    Ok(out)
}

/// Result of the reflection-vector initialization.
#[derive(Debug, Clone)]
pub struct InitEResult {
    pub e: CVec,
    /// Total equivalent channel gain after each MM iterate (nondecreasing).
    pub objectives: Vec<f64>,
}

/// Initialize e by maximizing the total no-blockage channel gain
/// sum_k ||e^H H_k^(0)||^2 with the MM fixed-point iteration
/// e <- exp{j angle(S e / [S e]_last)}, S = sum_k H_k H_k^H.
pub fn init_e(h0: &ChannelSample, max_mm_iters: usize, tol: f64) -> Result<InitEResult> {
    let dim = h0.h_eq[0].nrows();
    let mut s: CMat = DMatrix::zeros(dim, dim);
    for h in &h0.h_eq {
        s += h * h.adjoint();
    }
    if s.norm_squared() == 0.0 {
        return Err(OutminError::Degenerate("zero channel".into()));
    }
    let mut e: CVec = DVector::from_element(dim, Complex64::ONE);
    let objective = |e: &CVec| (e.adjoint() * &s * e)[(0, 0)].re;
    let mut objectives = vec![objective(&e)];
    for _ in 0..max_mm_iters {
        let w = &s * &e;
        if w[dim - 1] == Complex64::ZERO {
            return Err(OutminError::Degenerate(
                "MM iterate has zero last entry".into(),
            ));
        }
        e = project_e(&w)?;
        let obj = objective(&e);
        let prev = *objectives.last().expect("nonempty");
        objectives.push(obj);
        if (obj - prev).abs() < tol * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(InitEResult { e, objectives })
}

/// Initialize A by phase-aligning each user's effective channel: column k is
/// the elementwise phase of H_k^(0),H e. Columns beyond K (when N_RF > K)
/// get seeded random phases.
pub fn init_a(h0: &ChannelSample, e0: &CVec, n_rf: usize, rng: &mut Rng) -> Result<CMat> {
    let k_users = h0.n_users();
    let n = h0.h_eq[0].ncols();
    let mut a = DMatrix::zeros(n, n_rf);
    for k in 0..k_users.min(n_rf) {
        let col = h0.h_eq[k].adjoint() * e0;
        if col.norm() == 0.0 {
            return Err(OutminError::Degenerate(format!(
                "effective channel of user {k} is zero"
            )));
        }
        a.set_column(
            k,
            &col.map(|z| {
                let r = z.norm();
                if r == 0.0 {
                    Complex64::ONE
                } else {
                    z / r
                }
            }),
        );
    }
    for c in k_users..n_rf {
        let extra = crate::selftest::random_cmat(n, 1, rng);
        a.set_column(c, &extra.column(0).map(|z| {
            let r = z.norm();
            if r == 0.0 {
                Complex64::ONE
            } else {
                z / r
            }
        }));
    }
    Ok(a)
}

/// Matched-filter initialization of D: d_k proportional to (e^H H_k^(0) A)^H,
/// jointly scaled to the power boundary.
pub fn init_d(h0: &ChannelSample, a0: &CMat, e0: &CVec, p_max: f64) -> Result<CMat> {
    let k_users = h0.n_users();
    let n_rf = a0.ncols();
    let mut d = DMatrix::zeros(n_rf, k_users);
    for k in 0..k_users {
        let w = a0.adjoint() * (h0.h_eq[k].adjoint() * e0);
        d.set_column(k, &w);
    }
    if d.norm() == 0.0 {
        return Err(OutminError::Degenerate("zero effective channel".into()));
    }
    project_d(&d, a0, p_max)
}

/// Full initialization chain from the no-blockage channel.
pub fn init_state(
    h0: &ChannelSample,
    n_rf: usize,
    p_max: f64,
    rng: &mut Rng,
) -> Result<BeamformingState> {
    let e = init_e(h0, 200, 1e-9)?.e;
    let a = init_a(h0, &e, n_rf, rng)?;
    let d = init_d(h0, &a, &e, p_max)?;
    Ok(BeamformingState {
        d_mat: d,
        a_mat: a,
        e_vec: e,
    })
}

/// Source of per-iteration channel samples.
pub enum SampleSource<'a> {
    /// Fresh i.i.d. Bernoulli blockage per iteration.
    Bernoulli {
        basis: &'a ChannelBasis,
        p_block: f64,
    },
    /// The same realization every iteration (e.g. the no-blockage channel).
    Fixed(ChannelSample),
}

impl SampleSource<'_> {
    pub fn draw(&self, rng: &mut Rng) -> Result<ChannelSample> {
        match self {
            SampleSource::Bernoulli { basis, p_block } => {
                let draw = crate::channel::draw_blockage(
                    basis.n_users(),
                    basis.gains[0].len(),
                    *p_block,
                    rng,
                );
                basis.assemble(&draw)
            }
            SampleSource::Fixed(s) => Ok(s.clone()),
        }
    }
}

/// Options of the main loop.
#[derive(Debug, Clone, Copy)]
pub struct BsgdOptions {
    /// When false the reflection vector is held fixed (RIS-random baseline).
    pub update_e: bool,
}

impl Default for BsgdOptions {
    fn default() -> Self {
        BsgdOptions { update_e: true }
    }
}

/// The BSGD outage-minimization loop: per iteration one sampled channel is
/// shared by sequential D, A, e projected gradient updates (each block using
/// the freshest values of the others). Stops when consecutive rolling-window
/// means of the per-sample objective agree to relative `tol`, or at `t_max`.
pub fn bsgd_outmin(
    config: &SystemConfig,
    init: &BeamformingState,
    source: &SampleSource,
    schedule: &StepSchedule,
    stop: &StopRule,
    options: &BsgdOptions,
    rng: &mut Rng,
) -> Result<(BeamformingState, RunTrace)> {
    let noise = config.noise_power;
    let eps = config.epsilon;
    let omegas = &config.sinr_targets;
    let p_max = config.p_max;
    let mut state = init.clone();
    state.check_feasible(p_max)?;

    let mut trace = RunTrace::default();
    let mut win_obj = 0.0f64;
    let mut win_gd = 0.0f64;
    let mut win_ga = 0.0f64;
    let mut win_ge = 0.0f64;
    let mut win_count = 0usize;
    let mut prev_mean: Option<f64> = None;

    let sum_grad = |link: &EffectiveLink,
                    block: Block,
                    state: &BeamformingState,
                    sample: &ChannelSample|
     -> CMat {
        let mut acc = grad_hinge_from_link(link, block, state, sample, 0, omegas[0], eps);
        for k in 1..omegas.len() {
            acc += grad_hinge_from_link(link, block, state, sample, k, omegas[k], eps);
        }
        acc
    };

    for t in 1..=stop.t_max {
        let sample = source.draw(rng)?;
        let alpha = schedule.step_size(t);

        // Objective of the incoming state on this sample.
        let link = EffectiveLink::compute(&state, &sample, noise)?;
        let obj: f64 = (0..omegas.len())
            .map(|k| hinge_from_link(&link, k, omegas[k], eps))
            .sum();

        // D step.
        let grad_d = sum_grad(&link, Block::D, &state, &sample);
        let cand = &state.d_mat - &grad_d * Complex64::from(alpha);
        state.d_mat = project_d(&cand, &state.a_mat, p_max)?;

        // A step with the fresh D; D is rescaled afterwards so the power
        // constraint tracks the updated analog precoder.
        let link = EffectiveLink::compute(&state, &sample, noise)?;
        let grad_a = sum_grad(&link, Block::A, &state, &sample);
        let cand = &state.a_mat - &grad_a * Complex64::from(alpha);
        state.a_mat = project_a(&cand);
        state.d_mat = project_d(&state.d_mat, &state.a_mat, p_max)?;

        // e step with the fresh D and A.
        let grad_e_norm;
        if options.update_e {
            let link = EffectiveLink::compute(&state, &sample, noise)?;
            let grad_e = sum_grad(&link, Block::E, &state, &sample);
            grad_e_norm = grad_e.norm();
            let cand = &state.e_vec - grad_e.column(0) * Complex64::from(alpha);
            state.e_vec = project_e(&cand)?;
        } else {
            grad_e_norm = 0.0;
        }

        win_obj += obj;
        win_gd += grad_d.norm();
        win_ga += grad_a.norm();
        win_ge += grad_e_norm;
        win_count += 1;

        if win_count == stop.window || t == stop.t_max {
            let n = win_count as f64;
            let mean = win_obj / n;
            trace.rows.push(TraceRow {
                t,
                objective_rolling: mean,
                grad_norm_d: win_gd / n,
                grad_norm_a: win_ga / n,
                grad_norm_e: win_ge / n,
                alpha,
            });
            state.check_feasible(p_max)?;
            let converged = match prev_mean {
                Some(prev) => (mean - prev).abs() < stop.tol * prev.abs().max(1e-12),
                None => false,
            };
            prev_mean = Some(mean);
            win_obj = 0.0;
            win_gd = 0.0;
            win_ga = 0.0;
            win_ge = 0.0;
            win_count = 0;
            if converged {
                break;
            }
        }
    }

    state.check_feasible(p_max)?;
    Ok((state, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelBasis;
    use crate::rng::rng_from_seed;
    use crate::selftest::{random_cmat, synthetic_geometry, unit_gain_config};
    use approx::assert_relative_eq;

    #[test]
    fn step_size_examples() {
        let s = StepSchedule::constant(0.1);
        assert_relative_eq!(s.step_size(1), 0.1);
        assert_relative_eq!(s.step_size(1000), 0.1);
        let s = StepSchedule::inverse_t(1.0, 100.0);
        assert_relative_eq!(s.step_size(100), 0.5);
        let mut s = StepSchedule::constant(0.5);
        s.lipschitz_cap = Some(10.0);
        assert_relative_eq!(s.step_size(3), 0.1);
        // nonincreasing, positive
        let s = StepSchedule::inverse_t(1.0, 10.0);
        let mut prev = f64::INFINITY;
        for t in 1..100 {
            let a = s.step_size(t);
            assert!(a > 0.0 && a <= prev);
            prev = a;
        }
    }

    #[test]
    fn project_d_hits_the_power_boundary() {
        let mut rng = rng_from_seed(1);
        let p_max: f64 = 2.5;
        // identity A: direct formula.
        let a = CMat::identity(3, 3);
        let z = random_cmat(3, 2, &mut rng);
        let z = &z * Complex64::from(2.0 * p_max.sqrt() / z.norm());
        let proj = project_d(&z, &a, p_max).unwrap();
        assert_relative_eq!((&proj - &z / Complex64::from(2.0)).norm(), 0.0, epsilon = 1e-12);
        // already feasible-with-equality candidates are unchanged.
        let again = project_d(&proj, &a, p_max).unwrap();
        assert!((&again - &proj).norm() < 1e-12);
        // random A: exact power after projection.
        for _ in 0..20 {
            let a = random_cmat(4, 2, &mut rng);
            let z = random_cmat(2, 2, &mut rng);
            let proj = project_d(&z, &a, p_max).unwrap();
            let power = (&a * &proj).norm_squared();
            assert_relative_eq!(power, p_max, max_relative = 1e-12);
        }
        assert!(project_d(&CMat::zeros(2, 2), &CMat::identity(2, 2), p_max).is_err());
    }

    #[test]
    fn project_a_preserves_phases() {
        let z = CMat::from_element(1, 1, Complex64::new(3.0, 4.0));
        let p = project_a(&z);
        assert_relative_eq!(
            (p[(0, 0)] - Complex64::new(0.6, 0.8)).norm(),
            0.0,
            epsilon = 1e-12
        );
        // idempotent; nearest unit-modulus point entrywise.
        let mut rng = rng_from_seed(2);
        let z = random_cmat(3, 3, &mut rng);
        let p = project_a(&z);
        assert!((&project_a(&p) - &p).norm() < 1e-12);
        for (zi, pi) in z.iter().zip(p.iter()) {
            // sweep the unit circle: no point is closer than the phase projection.
            let best = (zi - pi).norm();
            for j in 0..360 {
                let y = Complex64::from_polar(1.0, j as f64 * std::f64::consts::TAU / 360.0);
                assert!((zi - y).norm() >= best - 1e-12);
            }
        }
    }

    #[test]
    fn project_e_gauge_and_feasibility() {
        let z = CVec::from_vec(vec![Complex64::new(0.0, 1.0), Complex64::ONE]);
        let p = project_e(&z).unwrap();
        assert!((&p - &z).norm() < 1e-12);
        let z2 = &z * Complex64::from(2.0);
        assert!((&project_e(&z2).unwrap() - &p).norm() < 1e-12);
        let mut rng = rng_from_seed(3);
        for _ in 0..20 {
            let z = random_cmat(5, 1, &mut rng).column(0).into_owned();
            let p = project_e(&z).unwrap();
            for (i, v) in p.iter().enumerate() {
                if i == 4 {
                    assert_eq!(*v, Complex64::ONE);
                } else {
                    assert_relative_eq!(v.norm(), 1.0, epsilon = 1e-12);
                }
            }
            // gauge invariance under any nonzero complex scale.
            let scaled = &z * Complex64::new(-0.3, 1.7);
            assert!((&project_e(&scaled).unwrap() - &p).norm() < 1e-12);
            // idempotency.
            assert!((&project_e(&p).unwrap() - &p).norm() < 1e-12);
        }
        let bad = CVec::from_vec(vec![Complex64::ONE, Complex64::ZERO]);
        assert!(project_e(&bad).is_err());
    }

    #[test]
    fn init_e_monotone_and_degenerate_cases() {
        let cfg = unit_gain_config(4, 2, 2, 1, 2);
        let mut rng = rng_from_seed(4);
        for _ in 0..10 {
            let geo = synthetic_geometry(&cfg, &mut rng);
            let h0 = ChannelBasis::new(&geo).no_blockage();
            let res = init_e(&h0, 100, 1e-10).unwrap();
            for w in res.objectives.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "objective decreased: {:?}", w);
            }
        }
        // No RIS elements: e = [1] immediately.
        let cfg0 = unit_gain_config(4, 1, 1, 0, 1);
        let geo0 = synthetic_geometry(&cfg0, &mut rng);
        let h0 = ChannelBasis::new(&geo0).no_blockage();
        let res = init_e(&h0, 100, 1e-10).unwrap();
        assert_eq!(res.e.len(), 1);
        assert_eq!(res.e[0], Complex64::ONE);
    }

    #[test]
    fn init_e_rank_one_fixed_point_in_one_step() {
        // S = u u^H: the map lands on exp{j angle(u/u_last)} in a single step.
        let mut rng = rng_from_seed(5);
        let u = random_cmat(4, 1, &mut rng).column(0).into_owned();
        // Build a sample whose single H matrix has H H^H = u u^H: H = u w^H, ||w|| = 1.
        let mut w = random_cmat(4, 1, &mut rng).column(0).into_owned();
        w /= Complex64::from(w.norm());
        let h = &u * w.adjoint();
        let sample = ChannelSample { h_eq: vec![h] };
        let res = init_e(&sample, 50, 1e-12).unwrap();
        let expect = project_e(&u).unwrap();
        assert!((&res.e - &expect).norm() < 1e-9);
    }

    #[test]
    fn init_a_and_d_contracts() {
        let cfg = unit_gain_config(4, 2, 2, 1, 2);
        let mut rng = rng_from_seed(6);
        let geo = synthetic_geometry(&cfg, &mut rng);
        let h0 = ChannelBasis::new(&geo).no_blockage();
        let e = init_e(&h0, 100, 1e-10).unwrap().e;
        let a = init_a(&h0, &e, cfg.n_rf, &mut rng).unwrap();
        for v in a.iter() {
            assert_relative_eq!(v.norm(), 1.0, epsilon = 1e-12);
        }
        // column-by-column definition check.
        for k in 0..cfg.n_users {
            let col = h0.h_eq[k].adjoint() * &e;
            for r in 0..cfg.n_tx {
                let expect = col[r] / col[r].norm();
                assert!((a[(r, k)] - expect).norm() < 1e-12);
            }
        }
        let d = init_d(&h0, &a, &e, cfg.p_max).unwrap();
        assert_relative_eq!((&a * &d).norm_squared(), cfg.p_max, max_relative = 1e-12);
        // single user: d_1 aligned with the effective channel.
        let cfg1 = unit_gain_config(4, 1, 1, 0, 1);
        let geo1 = synthetic_geometry(&cfg1, &mut rng);
        let h01 = ChannelBasis::new(&geo1).no_blockage();
        let e1 = CVec::from_element(1, Complex64::ONE);
        let a1 = init_a(&h01, &e1, 1, &mut rng).unwrap();
        let d1 = init_d(&h01, &a1, &e1, 1.0).unwrap();
        let w = a1.adjoint() * (h01.h_eq[0].adjoint() * &e1);
        let cos = d1.column(0).dotc(&w).norm() / (d1.norm() * w.norm());
        assert_relative_eq!(cos, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn bsgd_zero_step_is_a_fixed_point() {
        let cfg = unit_gain_config(4, 2, 2, 1, 2);
        let mut rng = rng_from_seed(7);
        let geo = synthetic_geometry(&cfg, &mut rng);
        let basis = ChannelBasis::new(&geo);
        let h0 = basis.no_blockage();
        let init = init_state(&h0, cfg.n_rf, cfg.p_max, &mut rng).unwrap();
        let schedule = StepSchedule::constant(1e-300);
        let stop = StopRule {
            t_max: 20,
            window: 5,
            tol: 0.0,
        };
        let source = SampleSource::Fixed(h0);
        let (state, _) = bsgd_outmin(
            &cfg,
            &init,
            &source,
            &schedule,
            &stop,
            &BsgdOptions::default(),
            &mut rng,
        )
        .unwrap();
        assert!((&state.d_mat - &init.d_mat).norm() < 1e-9);
        assert!((&state.a_mat - &init.a_mat).norm() < 1e-12);
        assert!((&state.e_vec - &init.e_vec).norm() < 1e-12);
    }

    #[test]
    fn bsgd_without_blockage_descends_deterministically() {
        let mut cfg = unit_gain_config(6, 2, 2, 1, 2);
        cfg.p_block = 0.0;
        // targets high enough that the initial state is in outage.
        cfg.sinr_targets = vec![50.0, 50.0];
        let mut rng = rng_from_seed(8);
        let geo = synthetic_geometry(&cfg, &mut rng);
        let basis = ChannelBasis::new(&geo);
        let h0 = basis.no_blockage();
        let init = init_state(&h0, cfg.n_rf, cfg.p_max, &mut rng).unwrap();
        let schedule = StepSchedule::constant(1e-3);
        let stop = StopRule {
            t_max: 400,
            window: 10,
            tol: 0.0,
        };
        let source = SampleSource::Fixed(h0);
        let (_, trace) = bsgd_outmin(
            &cfg,
            &init,
            &source,
            &schedule,
            &stop,
            &BsgdOptions::default(),
            &mut rng,
        )
        .unwrap();
        // deterministic projected gradient: rolling objective nonincreasing
        // beyond the first window (1e-9 numerical slack).
        for w in trace.rows.windows(2) {
            assert!(
                w[1].objective_rolling <= w[0].objective_rolling + 1e-9,
                "objective rose: {} -> {}",
                w[0].objective_rolling,
                w[1].objective_rolling
            );
        }
    }

    #[test]
    fn bsgd_preserves_feasibility() {
        let cfg = unit_gain_config(4, 2, 2, 1, 2);
        let mut rng = rng_from_seed(9);
        let geo = synthetic_geometry(&cfg, &mut rng);
        let basis = ChannelBasis::new(&geo);
        let init = init_state(&basis.no_blockage(), cfg.n_rf, cfg.p_max, &mut rng).unwrap();
        let source = SampleSource::Bernoulli {
            basis: &basis,
            p_block: 0.4,
        };
        let stop = StopRule {
            t_max: 300,
            window: 50,
            tol: 0.0,
        };
        let (state, trace) = bsgd_outmin(
            &cfg,
            &init,
            &source,
            &StepSchedule::constant(0.05),
            &stop,
            &BsgdOptions::default(),
            &mut rng,
        )
        .unwrap();
        state.check_feasible(cfg.p_max).unwrap();
        assert!(!trace.rows.is_empty());
        let mut last_t = 0;
        for r in &trace.rows {
            assert!(r.t > last_t);
            assert!(r.objective_rolling.is_finite());
            last_t = r.t;
        }
    }

    #[test]
    fn fixed_e_stays_fixed() {
        let cfg = unit_gain_config(4, 2, 2, 1, 2);
        let mut rng = rng_from_seed(10);
        let geo = synthetic_geometry(&cfg, &mut rng);
        let basis = ChannelBasis::new(&geo);
        let init = init_state(&basis.no_blockage(), cfg.n_rf, cfg.p_max, &mut rng).unwrap();
        let source = SampleSource::Bernoulli {
            basis: &basis,
            p_block: 0.4,
        };
        let stop = StopRule {
            t_max: 100,
            window: 20,
            tol: 0.0,
        };
        let (state, _) = bsgd_outmin(
            &cfg,
            &init,
            &source,
            &StepSchedule::constant(0.05),
            &stop,
            &BsgdOptions { update_e: false },
            &mut rng,
        )
        .unwrap();
        assert_eq!(state.e_vec, init.e_vec);
    }

    #[test]
    fn trace_serializes_to_csv() {
        let trace = RunTrace {
            rows: vec![TraceRow {
                t: 500,
                objective_rolling: 0.25,
                grad_norm_d: 1.0,
                grad_norm_a: 2.0,
                grad_norm_e: 3.0,
                alpha: 0.1,
            }],
        };
        let mut buf = Vec::new();
        trace.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,objective_rolling,grad_norm_d,grad_norm_a,grad_norm_e,alpha\n"));
        assert!(text.contains("500,0.25,1,2,3,0.1"));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn phase_projection_is_unit_modulus_and_idempotent(
                re in proptest::collection::vec(-1e3f64..1e3, 6),
                im in proptest::collection::vec(-1e3f64..1e3, 6),
            ) {
                let z = CMat::from_fn(2, 3, |r, c| Complex64::new(re[c * 2 + r], im[c * 2 + r]));
                let p = project_a(&z);
                for v in p.iter() {
                    prop_assert!((v.norm() - 1.0).abs() < 1e-12);
                }
                prop_assert!((&project_a(&p) - &p).norm() < 1e-12);
            }

            #[test]
            fn step_sizes_stay_in_unit_interval_and_decay(
                alpha0 in 1e-6f64..10.0,
                tau in 1e-3f64..1e6,
                t in 1usize..100_000,
            ) {
                let s = StepSchedule::inverse_t(alpha0, tau);
                let a = s.step_size(t);
                prop_assert!(a > 0.0 && a <= 1.0);
                prop_assert!(s.step_size(t + 1) <= a);
            }
        }
    }
}
