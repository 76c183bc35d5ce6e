//! SINR, the smooth hinge surrogate and its Wirtinger block gradients,
//! empirical risk, and the Lipschitz constants backing the step-size cap.
//!
//! The quadratic-form matrices Q_{x,k} are never materialized: all values and
//! gradients go through the factored amplitudes c_{k,i} = e^H H_k A d_i. The
//! Kronecker forms exist only in the verification oracle.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{ChannelBasis, ChannelSample, GeometricChannel, SystemConfig};
use crate::error::{OutminError, Result};
use crate::{CMat, CVec};

/// Optimization variable blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    D,
    A,
    E,
}

/// The optimization variables: digital precoder D, analog precoder A, and
/// equivalent reflection vector e.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingState {
    /// N_RF x K.
    pub d_mat: CMat,
    /// N x N_RF, unit-modulus entries.
    pub a_mat: CMat,
    /// Length U*M + 1, unit-modulus entries with last entry exactly 1.
    pub e_vec: CVec,
}

impl BeamformingState {
    pub fn n_users(&self) -> usize {
        self.d_mat.ncols()
    }

    /// Check the three constraint-set invariants.
    pub fn check_feasible(&self, p_max: f64) -> Result<()> {
        let power = (&self.a_mat * &self.d_mat).norm_squared();
        if power > p_max * (1.0 + 1e-9) {
            return Err(OutminError::Domain(format!(
                "power constraint violated: ||AD||_F^2 = {power} > {p_max}"
            )));
        }
        for v in self.a_mat.iter() {
            if (v.norm() - 1.0).abs() > 1e-12 {
                return Err(OutminError::Domain(format!(
                    "analog precoder entry has modulus {}",
                    v.norm()
                )));
            }
        }
        let last = self.e_vec.len() - 1;
        for (i, v) in self.e_vec.iter().enumerate() {
            if i == last {
                if *v != Complex64::new(1.0, 0.0) {
                    return Err(OutminError::Domain(
                        "last reflection entry must be exactly 1".into(),
                    ));
                }
            } else if (v.norm() - 1.0).abs() > 1e-12 {
                return Err(OutminError::Domain(format!(
                    "reflection entry {i} has modulus {}",
                    v.norm()
                )));
            }
        }
        Ok(())
    }
}

/// Factored per-user link quantities shared by all SINR and gradient
/// evaluations on one (state, sample) pair.
#[derive(Debug, Clone)]
pub struct EffectiveLink {
    /// c[(k, i)] = e^H H_k A d_i.
    pub c: CMat,
    /// v[k] = sum_{i != k} |c[(k,i)]|^2 + sigma^2.
    pub v: DVector<f64>,
    /// t[k] = H_k^H e.
    pub t: Vec<CVec>,
    /// w[k] = A^H t[k].
    pub w: Vec<CVec>,
}

impl EffectiveLink {
    pub fn compute(state: &BeamformingState, sample: &ChannelSample, noise: f64) -> Result<Self> {
        let k_users = state.n_users();
        if sample.n_users() != k_users {
            return Err(OutminError::Dimension(format!(
                "sample has {} users, state has {}",
                sample.n_users(),
                k_users
            )));
        }
        let mut c = DMatrix::zeros(k_users, k_users);
        let mut v = DVector::zeros(k_users);
        let mut t = Vec::with_capacity(k_users);
        let mut w = Vec::with_capacity(k_users);
        for k in 0..k_users {
            let h = &sample.h_eq[k];
            if h.nrows() != state.e_vec.len() || h.ncols() != state.a_mat.nrows() {
                return Err(OutminError::Dimension(format!(
                    "H_{k} is {}x{}, expected {}x{}",
                    h.nrows(),
                    h.ncols(),
                    state.e_vec.len(),
                    state.a_mat.nrows()
                )));
            }
            let tk = h.adjoint() * &state.e_vec;
            let wk = state.a_mat.adjoint() * &tk;
            let mut interference = 0.0;
            for i in 0..k_users {
                let cki = wk.dotc(&state.d_mat.column(i));
                c[(k, i)] = cki;
                if i != k {
                    interference += cki.norm_sqr();
                }
            }
            v[k] = interference + noise;
            t.push(tk);
            w.push(wk);
        }
        Ok(EffectiveLink { c, v, t, w })
    }

    /// SINR of user k.
    pub fn sinr(&self, k: usize) -> f64 {
        self.c[(k, k)].norm_sqr() / self.v[k]
    }
}

/// SINR of user k for the given state and channel realization.
pub fn sinr(state: &BeamformingState, sample: &ChannelSample, k: usize, noise: f64) -> Result<f64> {
    if noise <= 0.0 {
        return Err(OutminError::Domain("noise power must be positive".into()));
    }
    Ok(EffectiveLink::compute(state, sample, noise)?.sinr(k))
}

/// Smooth hinge surrogate of the outage indicator, with margin
/// m = 1 - sinr/omega: 0 for m < 0, m^2/(2 eps) for 0 <= m <= eps,
/// m - eps/2 above.
pub fn hinge(omega: f64, eps: f64, sinr_value: f64) -> f64 {
    let m = 1.0 - sinr_value / omega;
    if m < 0.0 {
        0.0
    } else if m <= eps {
        m * m / (2.0 * eps)
    } else {
        m - eps / 2.0
    }
}

/// Conjugate (Wirtinger) gradient of the SINR of user k with respect to one
/// block, using the cached link factors. Shapes: D -> N_RF x K,
/// A -> N x N_RF, E -> (U*M+1) x 1.
pub fn grad_sinr_from_link(
    link: &EffectiveLink,
    block: Block,
    state: &BeamformingState,
    sample: &ChannelSample,
    k: usize,
) -> CMat {
    let k_users = state.n_users();
    let v = link.v[k];
    let ckk = link.c[(k, k)];
    let signal = ckk.norm_sqr();
    let ratio = signal / (v * v);
    match block {
        Block::E => {
            // H_k A d_i reused for all i; grad = f_k conj(c_kk)/v - ratio * sum_{i!=k} f_i conj(c_ki).
            let ha = &sample.h_eq[k] * &state.a_mat;
            let mut grad: CVec = DVector::zeros(state.e_vec.len());
            for i in 0..k_users {
                let fi = &ha * state.d_mat.column(i);
                if i == k {
                    grad += fi * (ckk.conj() / v);
                } else {
                    grad -= fi * (link.c[(k, i)].conj() * ratio);
                }
            }
            CMat::from_column_slice(state.e_vec.len(), 1, grad.as_slice())
        }
        Block::A => {
            // grad = t_k s^H with s = (conj(c_kk)/v) d_k - ratio * sum_{i!=k} conj(c_ki) d_i.
            let mut s: CVec = state.d_mat.column(k) * (ckk.conj() / Complex64::from(v));
            for i in 0..k_users {
                if i != k {
                    s -= state.d_mat.column(i) * (link.c[(k, i)].conj() * ratio);
                }
            }
            &link.t[k] * s.adjoint()
        }
        Block::D => {
            // column k: w_k c_kk / v; column i != k: -ratio * w_k c_ki.
            let mut grad = DMatrix::zeros(state.d_mat.nrows(), k_users);
            for i in 0..k_users {
                let coef = if i == k {
                    ckk / Complex64::from(v)
                } else {
                    -link.c[(k, i)] * ratio
                };
                grad.set_column(i, &(&link.w[k] * coef));
            }
            grad
        }
    }
}

/// Conjugate gradient of the SINR of user k with respect to one block.
pub fn grad_sinr_block(
    block: Block,
    state: &BeamformingState,
    sample: &ChannelSample,
    k: usize,
    noise: f64,
) -> Result<CMat> {
    let link = EffectiveLink::compute(state, sample, noise)?;
    Ok(grad_sinr_from_link(&link, block, state, sample, k))
}

fn zero_like(block: Block, state: &BeamformingState) -> CMat {
    match block {
        Block::D => DMatrix::zeros(state.d_mat.nrows(), state.d_mat.ncols()),
        Block::A => DMatrix::zeros(state.a_mat.nrows(), state.a_mat.ncols()),
        Block::E => DMatrix::zeros(state.e_vec.len(), 1),
    }
}

/// Piecewise hinge gradient factor: d u / d sinr divided by omega.
fn hinge_chain(omega: f64, eps: f64, sinr_value: f64) -> f64 {
    let m = 1.0 - sinr_value / omega;
    if m < 0.0 {
        0.0
    } else if m <= eps {
        // ((sinr/omega - 1)/eps) * (1/omega)
        -m / (eps * omega)
    } else {
        -1.0 / omega
    }
}

/// Conjugate gradient of the hinge surrogate u_k with respect to one block,
/// using shared link factors.
pub fn grad_hinge_from_link(
    link: &EffectiveLink,
    block: Block,
    state: &BeamformingState,
    sample: &ChannelSample,
    k: usize,
    omega: f64,
    eps: f64,
) -> CMat {
    let chain = hinge_chain(omega, eps, link.sinr(k));
    if chain == 0.0 {
        return zero_like(block, state);
    }
    grad_sinr_from_link(link, block, state, sample, k) * Complex64::from(chain)
}

/// Conjugate gradient of the hinge surrogate u_k with respect to one block.
pub fn grad_hinge_block(
    block: Block,
    state: &BeamformingState,
    sample: &ChannelSample,
    k: usize,
    omega: f64,
    eps: f64,
    noise: f64,
) -> Result<CMat> {
    let link = EffectiveLink::compute(state, sample, noise)?;
    Ok(grad_hinge_from_link(&link, block, state, sample, k, omega, eps))
}

/// Hinge value of user k on one sample.
pub fn hinge_from_link(link: &EffectiveLink, k: usize, omega: f64, eps: f64) -> f64 {
    hinge(omega, eps, link.sinr(k))
}

/// Empirical risk: (1/T) sum_t sum_k u_k(state, sample_t).
pub fn empirical_risk(
    state: &BeamformingState,
    samples: &[ChannelSample],
    omegas: &[f64],
    eps: f64,
    noise: f64,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(OutminError::Usage("empty sample list".into()));
    }
    let mut total = 0.0;
    for s in samples {
        let link = EffectiveLink::compute(state, s, noise)?;
        for (k, &omega) in omegas.iter().enumerate() {
            total += hinge_from_link(&link, k, omega, eps);
        }
    }
    Ok(total / samples.len() as f64)
}

/// Batch gradient of the empirical risk with respect to one block:
/// (1/T) sum_t sum_k grad u_k.
pub fn empirical_risk_grad(
    block: Block,
    state: &BeamformingState,
    samples: &[ChannelSample],
    omegas: &[f64],
    eps: f64,
    noise: f64,
) -> Result<CMat> {
    if samples.is_empty() {
        return Err(OutminError::Usage("empty sample list".into()));
    }
    let mut acc = zero_like(block, state);
    for s in samples {
        let link = EffectiveLink::compute(state, s, noise)?;
        for (k, &omega) in omegas.iter().enumerate() {
            acc += grad_hinge_from_link(&link, block, state, s, k, omega, eps);
        }
    }
    Ok(acc / Complex64::from(samples.len() as f64))
}

const POWER_ITER_CAP: usize = 10_000;

/// Largest eigenvalue of F^H F by power iteration on x -> F^H (F x), with a
/// deterministic start vector. Relative accuracy ~1e-8.
pub fn lambda_max_psd(gram_factor: &CMat) -> Result<f64> {
    let n = gram_factor.ncols();
    if n == 0 || gram_factor.norm_squared() == 0.0 {
        return Err(OutminError::Domain(
            "power iteration needs a nonzero matrix".into(),
        ));
    }
    // Dense deterministic start with a ramp so it is not orthogonal to the
    // leading eigenvector in symmetric corner cases.
    let mut x: CVec = DVector::from_fn(n, |i, _| Complex64::new(1.0 + 0.01 * i as f64, 0.0));
    x /= Complex64::from(x.norm());
    let mut lambda = 0.0f64;
    for iter in 0..POWER_ITER_CAP {
        let y = gram_factor.adjoint() * (gram_factor * &x);
        let norm = y.norm();
        if norm == 0.0 {
            // x in the null space; restart from a shifted ramp.
            x = DVector::from_fn(n, |i, _| {
                Complex64::new(1.0, 0.3 + (i as f64 * 0.7).sin())
            });
            x /= Complex64::from(x.norm());
            continue;
        }
        let next = x.dotc(&y).re;
        x = y / Complex64::from(norm);
        if iter > 0 && (next - lambda).abs() <= 1e-10 * next.max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        lambda = next;
    }
    Err(OutminError::Convergence {
        iters: POWER_ITER_CAP,
        last: lambda,
    })
}

/// The Lemma-1 constants: per-user channel-energy bounds h_k, the aggregate
/// quadratic-form bounds a and b, the six per-block curvature bounds, and
/// their maximum.
#[derive(Debug, Clone)]
pub struct LipschitzConstants {
    pub a: f64,
    pub b: f64,
    pub h_k: Vec<f64>,
    pub l_e1: f64,
    pub l_a1: f64,
    pub l_d1: f64,
    pub l_e2: f64,
    pub l_a2: f64,
    pub l_d2: f64,
    pub l_total: f64,
}

/// Compute the uniform curvature bounds for the given geometry:
/// h_k = lambda_max(H_bi^H diag(h_ik) diag(h_ik^H) H_bi)
///     + (1/L_BU) lambda_max(G_k^H G_k) ||g_k||^2,
/// then a = (UM+1) P^2 lambda^2 and b = (UM+1) P lambda with
/// lambda = max_k h_k, and the six per-block bounds with the worst-case
/// (smallest) SINR target and noise power.
pub fn lipschitz_constants(
    config: &SystemConfig,
    geo: &GeometricChannel,
) -> Result<LipschitzConstants> {
    let basis = ChannelBasis::new(geo);
    let k_users = basis.n_users();
    let um = geo.n_ris * geo.m_per_ris();
    let mut h_k = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let mut term_ris = 0.0;
        if um > 0 {
            // gram factor diag(conj(h_ik)) H_bi.
            let mut f = basis.h_bi.clone();
            for r in 0..um {
                let s = basis.h_i[k][r].conj();
                for c in 0..f.ncols() {
                    f[(r, c)] *= s;
                }
            }
            if f.norm_squared() > 0.0 {
                term_ris = lambda_max_psd(&f)?;
            }
        }
        let l_bu = basis.gains[k].len() as f64;
        let term_direct =
            lambda_max_psd(&basis.g_mat[k])? / l_bu * basis.gains[k].norm_squared();
        h_k.push(term_ris + term_direct);
    }
    let lambda = h_k.iter().cloned().fold(0.0f64, f64::max);
    if lambda <= 0.0 {
        return Err(OutminError::Domain("all-zero channel".into()));
    }
    let dim_e = (um + 1) as f64;
    let p = config.p_max;
    let a = dim_e * p * p * lambda * lambda;
    let b = dim_e * p * lambda;
    let omega = config
        .sinr_targets
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let s2 = config.noise_power;
    let s4 = s2 * s2;
    let eps = config.epsilon;
    let nn = (config.n_tx * config.n_rf) as f64;

    let l_e1 = ((2.0 + 5.0 * omega) * a - 4.0 * a * b / s2 + 6.0 * a * b * b / s4)
        / (omega * omega * eps * s4);
    let l_a1 = b * b / (omega * omega * eps * s4 * nn)
        * (2.0 + (5.0 * omega - 4.0 * b) / s2 + 6.0 * b * b / s4);
    let l_d1 = nn * b * b / (omega * omega * eps * s4 * p) * (2.0 + omega + 6.0 * b * b / s4);
    let l_e2 = 5.0 * a / (omega * s4);
    let l_a2 = 5.0 * b * b / (omega * s4 * nn);
    let l_d2 = b * b * nn / (omega * s4 * p);
    let l_total = [l_e1, l_a1, l_d1, l_e2, l_a2, l_d2]
        .into_iter()
        .fold(0.0f64, f64::max);

    Ok(LipschitzConstants {
        a,
        b,
        h_k,
        l_e1,
        l_a1,
        l_d1,
        l_e2,
        l_a2,
        l_d2,
        l_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_geometry, ChannelBasis};
    use crate::rng::rng_from_seed;
    use crate::selftest;
    use approx::assert_relative_eq;

    fn small_setup() -> (SystemConfig, ChannelSample, BeamformingState) {
        let cfg = crate::selftest::unit_gain_config(4, 2, 2, 1, 2);
        let mut rng = rng_from_seed(21);
        let geo = selftest::synthetic_geometry(&cfg, &mut rng);
        let sample = ChannelBasis::new(&geo).no_blockage();
        let state = selftest::random_feasible_state(&cfg, &mut rng);
        (cfg, sample, state)
    }

    #[test]
    fn sinr_single_user_has_no_interference() {
        let cfg = crate::selftest::unit_gain_config(4, 1, 1, 1, 2);
        let mut rng = rng_from_seed(2);
        let geo = selftest::synthetic_geometry(&cfg, &mut rng);
        let sample = ChannelBasis::new(&geo).no_blockage();
        let state = selftest::random_feasible_state(&cfg, &mut rng);
        let got = sinr(&state, &sample, 0, cfg.noise_power).unwrap();
        let c = state
            .e_vec
            .adjoint()
            * &sample.h_eq[0]
            * &state.a_mat
            * state.d_mat.column(0);
        assert_relative_eq!(got, c[(0, 0)].norm_sqr() / cfg.noise_power, max_relative = 1e-12);
    }

    #[test]
    fn sinr_vanishes_for_zero_precoder_column() {
        let (cfg, sample, mut state) = small_setup();
        state.d_mat.set_column(0, &CVec::zeros(cfg.n_rf));
        assert_eq!(sinr(&state, &sample, 0, cfg.noise_power).unwrap(), 0.0);
    }

    #[test]
    fn hinge_branches() {
        let (omega, eps) = (2.0, 0.1);
        // satisfied: m = -1
        assert_eq!(hinge(omega, eps, 2.0 * omega), 0.0);
        // fully blocked: m = 1 > eps
        assert_relative_eq!(hinge(omega, eps, 0.0), 1.0 - eps / 2.0);
        // branch boundary m = eps: both formulas give eps/2
        let s = omega * (1.0 - eps);
        assert_relative_eq!(hinge(omega, eps, s), eps / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn hinge_gradient_branches() {
        let (cfg, sample, state) = small_setup();
        let noise = cfg.noise_power;
        let s = sinr(&state, &sample, 0, noise).unwrap();
        let eps = 0.05;
        // satisfied user: omega below the achieved SINR -> exact zero.
        let g = grad_hinge_block(Block::E, &state, &sample, 0, s * 0.5, eps, noise).unwrap();
        assert_eq!(g.norm(), 0.0);
        // deep outage branch: grad = -grad_sinr / omega.
        let omega = s / (1.0 - 2.0 * eps);
        let g = grad_hinge_block(Block::A, &state, &sample, 0, omega, eps, noise).unwrap();
        let gs = grad_sinr_block(Block::A, &state, &sample, 0, noise).unwrap();
        let rel = (&g + &gs / Complex64::from(omega)).norm() / g.norm();
        assert!(rel < 1e-12);
        // boundary m = eps: middle branch equals the linear branch.
        let omega_b = s / (1.0 - eps);
        let g_b = grad_hinge_block(Block::D, &state, &sample, 0, omega_b, eps, noise).unwrap();
        let gs_b = grad_sinr_block(Block::D, &state, &sample, 0, noise).unwrap();
        let rel = (&g_b + &gs_b / Complex64::from(omega_b)).norm() / g_b.norm();
        assert!(rel < 1e-9, "gradient continuity at the kink: {rel}");
    }

    #[test]
    fn zero_precoder_gives_zero_sinr_gradient_wrt_e() {
        let (cfg, sample, mut state) = small_setup();
        state.d_mat.set_column(0, &CVec::zeros(cfg.n_rf));
        let g = grad_sinr_block(Block::E, &state, &sample, 0, cfg.noise_power).unwrap();
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn empirical_risk_degenerate_values() {
        let (cfg, sample, mut state) = small_setup();
        let samples = vec![sample.clone(), sample.clone()];
        let eps = cfg.epsilon;
        // D = 0: every user is in the fully-blocked branch.
        state.d_mat.fill(Complex64::new(0.0, 0.0));
        let r = empirical_risk(&state, &samples, &cfg.sinr_targets, eps, cfg.noise_power).unwrap();
        assert_relative_eq!(r, 2.0 * (1.0 - eps / 2.0), max_relative = 1e-12);
        assert!(empirical_risk(&state, &[], &cfg.sinr_targets, eps, 1.0).is_err());
    }

    #[test]
    fn empirical_risk_is_mean_of_per_sample_sums() {
        let cfg = crate::selftest::unit_gain_config(4, 2, 2, 1, 2);
        let mut rng = rng_from_seed(5);
        let geo = selftest::synthetic_geometry(&cfg, &mut rng);
        let state = selftest::random_feasible_state(&cfg, &mut rng);
        let samples =
            crate::channel::training_set(&geo, &cfg, 7, &mut rng).unwrap();
        let r = empirical_risk(&state, &samples, &cfg.sinr_targets, cfg.epsilon, cfg.noise_power)
            .unwrap();
        let mut manual = 0.0;
        for s in &samples {
            for (k, &w) in cfg.sinr_targets.iter().enumerate() {
                manual += hinge(w, cfg.epsilon, sinr(&state, s, k, cfg.noise_power).unwrap());
            }
        }
        assert_relative_eq!(r, manual / samples.len() as f64, max_relative = 1e-12);
    }

    #[test]
    fn lambda_max_trivial_cases() {
        let id = CMat::identity(3, 3);
        assert_relative_eq!(lambda_max_psd(&id).unwrap(), 1.0, max_relative = 1e-8);
        let d = CMat::from_diagonal(&CVec::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(3.0, 0.0),
        ]));
        assert_relative_eq!(lambda_max_psd(&d).unwrap(), 9.0, max_relative = 1e-8);
        assert!(lambda_max_psd(&CMat::zeros(2, 2)).is_err());
    }

    #[test]
    fn lambda_max_matches_dense_eigensolver() {
        let mut rng = rng_from_seed(17);
        for _ in 0..5 {
            let f = selftest::random_cmat(6, 4, &mut rng);
            let got = lambda_max_psd(&f).unwrap();
            let gram = f.adjoint() * &f;
            let eig = gram.symmetric_eigen();
            let want = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
            assert_relative_eq!(got, want, max_relative = 1e-8);
        }
    }

    #[test]
    fn lipschitz_identities_and_monotonicity() {
        let cfg = crate::channel::tests::small_config();
        let geo = gen_geometry(&cfg, &mut rng_from_seed(31)).unwrap();
        let lc = lipschitz_constants(&cfg, &geo).unwrap();
        let dim_e = cfg.dim_e() as f64;
        assert_relative_eq!(lc.a, lc.b * lc.b / dim_e, max_relative = 1e-12);
        let omega = cfg.sinr_targets[0];
        let s4 = cfg.noise_power * cfg.noise_power;
        assert_relative_eq!(lc.l_e2, 5.0 * lc.a / (omega * s4), max_relative = 1e-12);
        assert!(lc.l_total >= lc.l_e1.max(lc.l_d1).max(lc.l_a2));
        assert!(lc.h_k.iter().all(|&h| h > 0.0));

        // nonincreasing in noise power, nondecreasing in transmit power.
        let mut noisier = cfg.clone();
        noisier.noise_power *= 4.0;
        assert!(lipschitz_constants(&noisier, &geo).unwrap().l_total <= lc.l_total);
        let mut stronger = cfg.clone();
        stronger.p_max *= 4.0;
        assert!(lipschitz_constants(&stronger, &geo).unwrap().l_total >= lc.l_total);
    }

    #[test]
    fn per_sample_gradients_average_to_batch_gradient() {
        let cfg = crate::selftest::unit_gain_config(4, 2, 2, 1, 2);
        let mut rng = rng_from_seed(41);
        let geo = selftest::synthetic_geometry(&cfg, &mut rng);
        let state = selftest::random_feasible_state(&cfg, &mut rng);
        let samples = crate::channel::training_set(&geo, &cfg, 16, &mut rng).unwrap();
        for block in [Block::D, Block::A, Block::E] {
            let batch = empirical_risk_grad(
                block,
                &state,
                &samples,
                &cfg.sinr_targets,
                cfg.epsilon,
                cfg.noise_power,
            )
            .unwrap();
            let mut mean = batch.map(|_| Complex64::new(0.0, 0.0));
            for s in &samples {
                for (k, &w) in cfg.sinr_targets.iter().enumerate() {
                    mean += grad_hinge_block(block, &state, s, k, w, cfg.epsilon, cfg.noise_power)
                        .unwrap();
                }
            }
            mean /= Complex64::from(samples.len() as f64);
            let denom = batch.norm().max(1e-300);
            assert!((&mean - &batch).norm() / denom < 1e-12);
        }
    }
}
