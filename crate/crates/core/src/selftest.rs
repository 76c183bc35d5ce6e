//! Verification oracles, independent of the factored implementation paths.
//!
//! Everything here recomputes quantities the slow-but-obvious way: SINR and
//! gradients through explicitly materialized Kronecker quadratic forms,
//! derivatives through central finite differences, outage through exhaustive
//! blockage-pattern enumeration. Used by the `selftest` CLI mode and by the
//! acceptance suite.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_distr::{Distribution, Normal};

use crate::channel::{
    ChannelBasis, ChannelSample, GeometricChannel, GeometryConfig, PathlossConfig,
    PathlossParams, SystemConfig,
};
use crate::rng::{rng_from_seed, Rng};
use crate::surrogate::{
    grad_hinge_block, hinge, sinr, BeamformingState, Block,
};
use crate::{CMat, CVec};

/// A config whose path-loss law yields unit-variance gains (C0 = 0 dB,
/// zero exponent, no shadowing): convenient O(1) numerics for small tests.
pub fn unit_gain_config(
    n_tx: usize,
    n_rf: usize,
    n_users: usize,
    n_ris: usize,
    m_side: usize,
) -> SystemConfig {
    let unit = PathlossParams {
        c0_db: 0.0,
        exponent: 0.0,
        shadowing_std_db: 0.0,
    };
    SystemConfig {
        n_tx,
        n_rf,
        n_users,
        n_ris,
        m_rows: m_side,
        m_cols: m_side,
        p_max: 1.0,
        noise_power: 1.0,
        sinr_targets: vec![1.0; n_users],
        epsilon: 0.01,
        p_block: 0.3,
        n_paths_bu: 2,
        n_paths_bi: 2,
        n_paths_iu: 2,
        geometry: GeometryConfig {
            bs: [0.0, 0.0],
            ris: (0..n_ris).map(|u| [40.0, 10.0 - 20.0 * u as f64]).collect(),
            user_center: [50.0, 0.0],
            user_radius: 5.0,
        },
        pathloss: PathlossConfig {
            bu: unit,
            bi: unit,
            iu: unit,
        },
    }
}

/// Geometry drawn from the config's path-loss law (unit gains for
/// [`unit_gain_config`]).
pub fn synthetic_geometry(config: &SystemConfig, rng: &mut Rng) -> GeometricChannel {
    crate::channel::gen_geometry(config, rng).expect("valid test config")
}

pub fn random_cmat(rows: usize, cols: usize, rng: &mut Rng) -> CMat {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    DMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(normal.sample(rng), normal.sample(rng))
    })
}

/// A random state satisfying all three constraint sets, with A and e at
/// random phases and D scaled to the power boundary.
pub fn random_feasible_state(config: &SystemConfig, rng: &mut Rng) -> BeamformingState {
    let a_mat = random_cmat(config.n_tx, config.n_rf, rng)
        .map(|z| if z == Complex64::ZERO { Complex64::ONE } else { z / z.norm() });
    let dim_e = config.dim_e();
    let mut e_vec: CVec = random_cmat(dim_e, 1, rng)
        .column(0)
        .map(|z| if z == Complex64::ZERO { Complex64::ONE } else { z / z.norm() });
    e_vec[dim_e - 1] = Complex64::ONE;
    let mut d_mat = random_cmat(config.n_rf, config.n_users, rng);
    let power = (&a_mat * &d_mat).norm();
    d_mat *= Complex64::from(config.p_max.sqrt() / power);
    BeamformingState { d_mat, a_mat, e_vec }
}

/// Materialized quadratic-form pair (Q, Q_bar) for one block, built exactly
/// as written: Kronecker products for D and A, rank-structured sums for e.
pub fn materialize_q(
    block: Block,
    state: &BeamformingState,
    sample: &ChannelSample,
    k: usize,
) -> (CMat, CMat) {
    let h = &sample.h_eq[k];
    let k_users = state.n_users();
    match block {
        Block::E => {
            let ha = h * &state.a_mat;
            let fk = &ha * state.d_mat.column(k);
            let q = &fk * fk.adjoint();
            let mut q_bar = CMat::zeros(h.nrows(), h.nrows());
            for i in 0..k_users {
                if i != k {
                    let fi = &ha * state.d_mat.column(i);
                    q_bar += &fi * fi.adjoint();
                }
            }
            (q, q_bar)
        }
        Block::A => {
            let t = h.adjoint() * &state.e_vec;
            let m = &t * t.adjoint();
            let dk = state.d_mat.column(k).into_owned();
            let left = dk.map(|z| z.conj()) * dk.transpose();
            let n_rf = state.d_mat.nrows();
            let mut left_bar = CMat::zeros(n_rf, n_rf);
            for i in 0..k_users {
                if i != k {
                    let di = state.d_mat.column(i).into_owned();
                    left_bar += di.map(|z| z.conj()) * di.transpose();
                }
            }
            (left.kronecker(&m), left_bar.kronecker(&m))
        }
        Block::D => {
            let t = h.adjoint() * &state.e_vec;
            let w = state.a_mat.adjoint() * &t;
            let m = &w * w.adjoint();
            let mut sel = CMat::zeros(k_users, k_users);
            sel[(k, k)] = Complex64::ONE;
            let sel_bar = CMat::identity(k_users, k_users) - &sel;
            (sel.kronecker(&m), sel_bar.kronecker(&m))
        }
    }
}

fn block_vec(block: Block, state: &BeamformingState) -> CVec {
    match block {
        Block::D => DVector::from_column_slice(state.d_mat.as_slice()),
        Block::A => DVector::from_column_slice(state.a_mat.as_slice()),
        Block::E => state.e_vec.clone(),
    }
}

/// SINR via the materialized quadratic forms: x^H Q x / (x^H Q_bar x + sigma^2).
pub fn sinr_via_q(
    block: Block,
    state: &BeamformingState,
    sample: &ChannelSample,
    k: usize,
    noise: f64,
) -> f64 {
    let (q, q_bar) = materialize_q(block, state, sample, k);
    let x = block_vec(block, state);
    let num = x.dotc(&(&q * &x)).re;
    let den = x.dotc(&(&q_bar * &x)).re + noise;
    num / den
}

/// Unified SINR gradient via the materialized forms:
/// Q x / v - (x^H Q x / v^2) Q_bar x, returned as a flat vector.
pub fn grad_sinr_via_q(
    block: Block,
    state: &BeamformingState,
    sample: &ChannelSample,
    k: usize,
    noise: f64,
) -> CVec {
    let (q, q_bar) = materialize_q(block, state, sample, k);
    let x = block_vec(block, state);
    let qx = &q * &x;
    let qbx = &q_bar * &x;
    let num = x.dotc(&qx).re;
    let v = x.dotc(&qbx).re + noise;
    qx / Complex64::from(v) - qbx * Complex64::from(num / (v * v))
}

/// Replace one block of the state.
pub fn with_block(state: &BeamformingState, block: Block, value: &CMat) -> BeamformingState {
    let mut s = state.clone();
    match block {
        Block::D => s.d_mat = value.clone(),
        Block::A => s.a_mat = value.clone(),
        Block::E => s.e_vec = value.column(0).into_owned(),
    }
    s
}

pub fn get_block(state: &BeamformingState, block: Block) -> CMat {
    match block {
        Block::D => state.d_mat.clone(),
        Block::A => state.a_mat.clone(),
        Block::E => CMat::from_column_slice(state.e_vec.len(), 1, state.e_vec.as_slice()),
    }
}

/// Central finite difference of u_k along the complex direction `delta`:
/// [u(x + t d) - u(x - t d)] / (2t). For the Wirtinger convention used here
/// this must equal 2 Re<grad, delta>.
pub fn fd_directional_hinge(
    block: Block,
    state: &BeamformingState,
    sample: &ChannelSample,
    k: usize,
    omega: f64,
    eps: f64,
    noise: f64,
    delta: &CMat,
    step: f64,
) -> f64 {
    let x = get_block(state, block);
    let plus = with_block(state, block, &(&x + delta * Complex64::from(step)));
    let minus = with_block(state, block, &(&x - delta * Complex64::from(step)));
    let u_plus = hinge(omega, eps, sinr(&plus, sample, k, noise).expect("dims"));
    let u_minus = hinge(omega, eps, sinr(&minus, sample, k, noise).expect("dims"));
    (u_plus - u_minus) / (2.0 * step)
}

/// Margin 1 - sinr/omega of user k, used to keep FD probes away from the
/// hinge kinks.
pub fn margin(
    state: &BeamformingState,
    sample: &ChannelSample,
    k: usize,
    omega: f64,
    noise: f64,
) -> f64 {
    1.0 - sinr(state, sample, k, noise).expect("dims") / omega
}

fn real_gradient(
    block: Block,
    state: &BeamformingState,
    sample: &ChannelSample,
    k: usize,
    omega: f64,
    eps: f64,
    noise: f64,
) -> DVector<f64> {
    let g = grad_hinge_block(block, state, sample, k, omega, eps, noise).expect("dims");
    let n = g.len();
    let mut r = DVector::zeros(2 * n);
    for (i, z) in g.iter().enumerate() {
        r[i] = 2.0 * z.re;
        r[n + i] = 2.0 * z.im;
    }
    r
}

fn real_to_block(v: &DVector<f64>, rows: usize, cols: usize) -> CMat {
    let n = rows * cols;
    CMat::from_fn(rows, cols, |r, c| {
        let i = c * rows + r;
        Complex64::new(v[i], v[n + i])
    })
}

/// Spectral-norm estimate of the complex Hessian of u_k with respect to one
/// block, by power iteration on finite-difference Hessian-vector products of
/// the real gradient. The factor 1/2 converts the real-parameter Hessian to
/// the complex (augmented) Hessian scale bounded by the curvature constants.
pub fn fd_hessian_spectral_estimate(
    block: Block,
    state: &BeamformingState,
    sample: &ChannelSample,
    k: usize,
    omega: f64,
    eps: f64,
    noise: f64,
    fd_step: f64,
    power_iters: usize,
) -> f64 {
    let x = get_block(state, block);
    let (rows, cols) = (x.nrows(), x.ncols());
    let dim = 2 * rows * cols;
    let mut v = DVector::from_fn(dim, |i, _| 1.0 + (i as f64 * 0.37).sin());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..power_iters {
        let dir = real_to_block(&v, rows, cols);
        let plus = with_block(state, block, &(&x + &dir * Complex64::from(fd_step)));
        let minus = with_block(state, block, &(&x - &dir * Complex64::from(fd_step)));
        let hv = (real_gradient(block, &plus, sample, k, omega, eps, noise)
            - real_gradient(block, &minus, sample, k, omega, eps, noise))
            / (2.0 * fd_step);
        let norm = hv.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&hv).abs();
        v = hv / norm;
    }
    lambda / 2.0
}

/// Exact per-user outage probability by enumerating every blockage pattern of
/// the user's own direct paths (the only randomness its SINR depends on).
pub fn exhaustive_outage(
    state: &BeamformingState,
    basis: &ChannelBasis,
    config: &SystemConfig,
) -> Vec<f64> {
    let l = config.n_paths_bu;
    let p = config.p_block;
    let mut out = Vec::with_capacity(config.n_users);
    for k in 0..config.n_users {
        let mut outage = 0.0;
        for pattern in 0..(1usize << l) {
            let mut draw = crate::channel::BlockageDraw::all_ones(config.n_users, l);
            let mut prob = 1.0;
            for bit in 0..l {
                if pattern & (1 << bit) != 0 {
                    draw.gamma[k][bit] = 0;
                    prob *= p;
                } else {
                    prob *= 1.0 - p;
                }
            }
            let sample = basis.assemble(&draw).expect("consistent dims");
            let s = sinr(state, &sample, k, config.noise_power).expect("dims");
            if s <= config.sinr_targets[k] {
                outage += prob;
            }
        }
        out.push(outage);
    }
    out
}

/// One self-check outcome.
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Run the derived-value oracles on a tiny instance. Used by the CLI
/// `selftest` mode.
pub fn run_selftests(seed: u64) -> Vec<CheckResult> {
    let mut results = Vec::new();
    let cfg = unit_gain_config(4, 2, 2, 1, 2);
    let mut rng = rng_from_seed(seed);
    let geo = synthetic_geometry(&cfg, &mut rng);
    let basis = ChannelBasis::new(&geo);
    let sample = basis.no_blockage();

    // Kronecker equivalence of SINR and gradients.
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let state = random_feasible_state(&cfg, &mut rng);
        for block in [Block::D, Block::A, Block::E] {
            for k in 0..cfg.n_users {
                let fast = sinr(&state, &sample, k, cfg.noise_power).expect("dims");
                let slow = sinr_via_q(block, &state, &sample, k, cfg.noise_power);
                worst = worst.max((fast - slow).abs() / slow.abs().max(1e-300));
                let g_fast = crate::surrogate::grad_sinr_block(
                    block,
                    &state,
                    &sample,
                    k,
                    cfg.noise_power,
                )
                .expect("dims");
                let g_fast = DVector::from_column_slice(g_fast.as_slice());
                let g_slow = grad_sinr_via_q(block, &state, &sample, k, cfg.noise_power);
                worst = worst
                    .max((&g_fast - &g_slow).norm() / g_slow.norm().max(1e-300));
            }
        }
        let _ = trial;
    }
    results.push(CheckResult {
        name: "kronecker-equivalence",
        passed: worst < 1e-10,
        detail: format!("worst relative deviation {worst:.3e}"),
    });

    // Finite-difference gradient agreement away from the hinge kinks.
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for _ in 0..20 {
        let state = random_feasible_state(&cfg, &mut rng);
        for block in [Block::D, Block::A, Block::E] {
            for k in 0..cfg.n_users {
                let omega = cfg.sinr_targets[k];
                let m = margin(&state, &sample, k, omega, cfg.noise_power);
                if m.abs() < 1e-4 || (m - cfg.epsilon).abs() < 1e-4 {
                    continue;
                }
                let delta = random_cmat(
                    get_block(&state, block).nrows(),
                    get_block(&state, block).ncols(),
                    &mut rng,
                );
                let delta = &delta / Complex64::from(delta.norm());
                let fd = fd_directional_hinge(
                    block,
                    &state,
                    &sample,
                    k,
                    omega,
                    cfg.epsilon,
                    cfg.noise_power,
                    &delta,
                    1e-6,
                );
                let g = grad_hinge_block(
                    block,
                    &state,
                    &sample,
                    k,
                    omega,
                    cfg.epsilon,
                    cfg.noise_power,
                )
                .expect("dims");
                let analytic = 2.0
                    * g.iter()
                        .zip(delta.iter())
                        .map(|(a, b)| (a.conj() * b).re)
                        .sum::<f64>();
                let scale = analytic.abs().max(fd.abs());
                if scale < 1e-12 {
                    continue;
                }
                worst = worst.max((fd - analytic).abs() / scale);
                checked += 1;
            }
        }
    }
    results.push(CheckResult {
        name: "fd-gradient",
        passed: worst < 1e-5 && checked > 0,
        detail: format!("worst relative deviation {worst:.3e} over {checked} probes"),
    });

    // Exhaustive outage vs Monte Carlo.
    let state = random_feasible_state(&cfg, &mut rng);
    let exact = exhaustive_outage(&state, &basis, &cfg);
    let trials = 20_000usize;
    let mut counts = vec![0usize; cfg.n_users];
    for _ in 0..trials {
        let draw = crate::channel::sample_blockage(&cfg, &mut rng);
        let s = basis.assemble(&draw).expect("dims");
        for k in 0..cfg.n_users {
            if sinr(&state, &s, k, cfg.noise_power).expect("dims") <= cfg.sinr_targets[k] {
                counts[k] += 1;
            }
        }
    }
    let mut ok = true;
    let mut detail = String::new();
    for k in 0..cfg.n_users {
        let mc = counts[k] as f64 / trials as f64;
        let se = (exact[k] * (1.0 - exact[k]) / trials as f64).sqrt();
        let within = (mc - exact[k]).abs() <= 3.0 * se + 1e-12;
        ok &= within;
        detail.push_str(&format!("user {k}: exact {:.4} mc {:.4}; ", exact[k], mc));
    }
    results.push(CheckResult {
        name: "exhaustive-outage",
        passed: ok,
        detail,
    });

    results
}
