//! Geometric mmWave channel generation with Bernoulli blockages.
//!
//! The BS-user direct paths are gated by i.i.d. Bernoulli variables; the
//! RIS-side links are blockage-free. [`ChannelBasis`] caches everything that
//! does not depend on the blockage draw so that resampling inside the
//! training loop only rebuilds the direct-link row of each equivalent
//! channel.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{OutminError, Result};
use crate::rng::Rng;
use crate::{CMat, CVec};

/// Path-loss law parameters for one link class:
/// `PL = -c0_db - 10*exponent*log10(D) - zeta` dB, `zeta ~ N(0, shadowing_std_db^2)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathlossParams {
    pub c0_db: f64,
    pub exponent: f64,
    pub shadowing_std_db: f64,
}

/// Per-link-class path-loss parameters. Defaults are common mmWave ecosystem
/// values (28 GHz): C0 = 61.4 dB, LOS exponent 2.0 for RIS links, NLOS
/// exponent 3.3 for the direct link, 5.8 dB shadowing.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathlossConfig {
    pub bu: PathlossParams,
    pub bi: PathlossParams,
    pub iu: PathlossParams,
}

impl Default for PathlossConfig {
    fn default() -> Self {
        Self {
            bu: PathlossParams {
                c0_db: 61.4,
                exponent: 3.3,
                shadowing_std_db: 5.8,
            },
            bi: PathlossParams {
                c0_db: 61.4,
                exponent: 2.0,
                shadowing_std_db: 5.8,
            },
            iu: PathlossParams {
                c0_db: 61.4,
                exponent: 2.0,
                shadowing_std_db: 5.8,
            },
        }
    }
}

/// 2-D deployment geometry in meters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub bs: [f64; 2],
    pub ris: Vec<[f64; 2]>,
    pub user_center: [f64; 2],
    pub user_radius: f64,
}

/// All scalars of the scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// BS antennas N.
    pub n_tx: usize,
    /// RF chains N_RF.
    pub n_rf: usize,
    /// Users K.
    pub n_users: usize,
    /// Number of RISs U (0 disables the RIS side entirely).
    pub n_ris: usize,
    /// RIS UPA rows; elements per RIS is `m_rows * m_cols`.
    pub m_rows: usize,
    /// RIS UPA columns.
    pub m_cols: usize,
    /// Transmit power budget P_max in watts.
    pub p_max: f64,
    /// Noise power per user in watts.
    pub noise_power: f64,
    /// SINR reliability thresholds, one per user.
    pub sinr_targets: Vec<f64>,
    /// Hinge smoothing width, 0 < eps < 1.
    pub epsilon: f64,
    /// Blockage probability applied to every (user, path) pair.
    pub p_block: f64,
    pub n_paths_bu: usize,
    pub n_paths_bi: usize,
    pub n_paths_iu: usize,
    pub geometry: GeometryConfig,
    pub pathloss: PathlossConfig,
}

impl SystemConfig {
    /// Elements per RIS.
    pub fn m_per_ris(&self) -> usize {
        self.m_rows * self.m_cols
    }

    /// Length of the equivalent reflection vector e: U*M + 1.
    pub fn dim_e(&self) -> usize {
        self.n_ris * self.m_per_ris() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(OutminError::Config(m));
        if self.n_tx == 0 || self.n_rf == 0 || self.n_users == 0 {
            return err("n_tx, n_rf and n_users must be positive".into());
        }
        if !(self.n_users <= self.n_rf && self.n_rf <= self.n_tx) {
            return err(format!(
                "need n_users <= n_rf <= n_tx, got {} <= {} <= {}",
                self.n_users, self.n_rf, self.n_tx
            ));
        }
        if self.n_ris > 0 && (self.m_rows == 0 || self.m_cols == 0) {
            return err("m_rows and m_cols must be positive when n_ris > 0".into());
        }
        if self.p_max <= 0.0 {
            return err("p_max must be positive".into());
        }
        if self.noise_power <= 0.0 {
            return err("noise_power must be positive".into());
        }
        if self.sinr_targets.len() != self.n_users {
            return err(format!(
                "sinr_targets has length {}, expected n_users = {}",
                self.sinr_targets.len(),
                self.n_users
            ));
        }
        if self.sinr_targets.iter().any(|&w| w <= 0.0) {
            return err("all SINR targets must be positive".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return err(format!("epsilon must lie in (0,1), got {}", self.epsilon));
        }
        if !(0.0..=1.0).contains(&self.p_block) {
            return err(format!("p_block must lie in [0,1], got {}", self.p_block));
        }
        if self.n_paths_bu == 0 || (self.n_ris > 0 && (self.n_paths_bi == 0 || self.n_paths_iu == 0)) {
            return err("path counts must be positive".into());
        }
        if self.geometry.ris.len() != self.n_ris {
            return err(format!(
                "geometry lists {} RIS positions, expected n_ris = {}",
                self.geometry.ris.len(),
                self.n_ris
            ));
        }
        if self.geometry.user_radius < 0.0 {
            return err("user_radius must be nonnegative".into());
        }
        Ok(())
    }
}

/// One BS-user propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuPath {
    pub gain: Complex64,
    pub aod: f64,
}

/// One RIS-user propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IuPath {
    pub gain: Complex64,
    pub aod_az: f64,
    pub aod_el: f64,
}

/// One BS-RIS propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiPath {
    pub gain: Complex64,
    pub aoa_az: f64,
    pub aoa_el: f64,
    pub aod: f64,
}

/// Deterministic channel skeleton: per-path angles and complex gains for the
/// BS-user, BS-RIS and RIS-user links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricChannel {
    pub n_tx: usize,
    pub n_ris: usize,
    pub m_rows: usize,
    pub m_cols: usize,
    /// `bu_paths[k][l]`
    pub bu_paths: Vec<Vec<BuPath>>,
    /// `iu_paths[u][k][l]`
    pub iu_paths: Vec<Vec<Vec<IuPath>>>,
    /// `bi_paths[u][l]`
    pub bi_paths: Vec<Vec<BiPath>>,
}

impl GeometricChannel {
    pub fn n_users(&self) -> usize {
        self.bu_paths.len()
    }

    pub fn m_per_ris(&self) -> usize {
        self.m_rows * self.m_cols
    }

    pub fn dim_e(&self) -> usize {
        self.n_ris * self.m_per_ris() + 1
    }

    /// Drop the RIS side entirely (Non-RIS baseline geometry).
    pub fn without_ris(&self) -> GeometricChannel {
        GeometricChannel {
            n_tx: self.n_tx,
            n_ris: 0,
            m_rows: self.m_rows,
            m_cols: self.m_cols,
            bu_paths: self.bu_paths.clone(),
            iu_paths: Vec::new(),
            bi_paths: Vec::new(),
        }
    }

    /// Write the skeleton to a self-describing JSON file for experiment replay.
    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| OutminError::Usage(format!("serialize geometry: {e}")))?;
        std::fs::write(path, text).map_err(|e| OutminError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load_json(path: &std::path::Path) -> Result<GeometricChannel> {
        let text = std::fs::read_to_string(path).map_err(|e| OutminError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| OutminError::Usage(format!("parse geometry file: {e}")))
    }
}

/// One blockage realization: gamma[k][l] in {0,1}, 0 = blocked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockageDraw {
    pub gamma: Vec<Vec<u8>>,
}

/// One stacked equivalent channel realization: `h_eq[k]` is (U*M + 1) x N.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub h_eq: Vec<CMat>,
}

impl ChannelSample {
    pub fn n_users(&self) -> usize {
        self.h_eq.len()
    }
}

/// ULA steering vector, half-wavelength spacing: entry i = exp(j*pi*i*sin(theta)).
pub fn ula_steering(theta: f64, n: usize) -> CVec {
    let s = theta.sin();
    DVector::from_fn(n, |i, _| {
        Complex64::from_polar(1.0, std::f64::consts::PI * i as f64 * s)
    })
}

/// UPA steering vector as a Kronecker product of two ULA-like factors:
/// entry (p, q) = exp(j*pi*(p*sin(theta)*sin(phi) + q*cos(theta))),
/// flattened with index p*m_cols + q.
pub fn upa_steering(theta: f64, phi: f64, m_rows: usize, m_cols: usize) -> CVec {
    let a = theta.sin() * phi.sin();
    let b = theta.cos();
    DVector::from_fn(m_rows * m_cols, |i, _| {
        let p = (i / m_cols) as f64;
        let q = (i % m_cols) as f64;
        Complex64::from_polar(1.0, std::f64::consts::PI * (p * a + q * b))
    })
}

/// Complex Gaussian large-scale gain: g ~ CN(0, 10^(PL/10)) with
/// PL = -c0 - 10*alpha*log10(D) - zeta dB and per-call lognormal shadowing.
pub fn draw_pathloss_gain(
    link_distance: f64,
    pl: &PathlossParams,
    rng: &mut Rng,
) -> Result<Complex64> {
    if link_distance <= 0.0 {
        return Err(OutminError::Domain(format!(
            "link distance must be positive, got {link_distance}"
        )));
    }
    let shadow = if pl.shadowing_std_db > 0.0 {
        Normal::new(0.0, pl.shadowing_std_db)
            .expect("valid std")
            .sample(rng)
    } else {
        0.0
    };
    let pl_db = -pl.c0_db - 10.0 * pl.exponent * link_distance.log10() - shadow;
    let variance = 10f64.powf(pl_db / 10.0);
    let std = (variance / 2.0).sqrt();
    let re: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    let im: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    Ok(Complex64::new(std * re, std * im))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

const AZ_RANGE: f64 = std::f64::consts::FRAC_PI_2;
const EL_RANGE: f64 = std::f64::consts::FRAC_PI_4;

/// Draw a full channel skeleton: user positions uniform in the configured
/// disc, azimuth angles uniform on [-pi/2, pi/2], elevations on [-pi/4, pi/4],
/// gains from the per-link path-loss law.
pub fn gen_geometry(config: &SystemConfig, rng: &mut Rng) -> Result<GeometricChannel> {
    config.validate()?;
    let g = &config.geometry;

    let user_pos: Vec<[f64; 2]> = (0..config.n_users)
        .map(|_| {
            let r = g.user_radius * rng.random::<f64>().sqrt();
            let ang = rng.random::<f64>() * std::f64::consts::TAU;
            [
                g.user_center[0] + r * ang.cos(),
                g.user_center[1] + r * ang.sin(),
            ]
        })
        .collect();

    let mut bu_paths = Vec::with_capacity(config.n_users);
    for pos in &user_pos {
        let d = dist(g.bs, *pos);
        let mut paths = Vec::with_capacity(config.n_paths_bu);
        for _ in 0..config.n_paths_bu {
            let aod = rng.random_range(-AZ_RANGE..AZ_RANGE);
            let gain = draw_pathloss_gain(d, &config.pathloss.bu, rng)?;
            paths.push(BuPath { gain, aod });
        }
        bu_paths.push(paths);
    }

    let mut bi_paths = Vec::with_capacity(config.n_ris);
    for u in 0..config.n_ris {
        let d = dist(g.bs, g.ris[u]);
        let mut paths = Vec::with_capacity(config.n_paths_bi);
        for _ in 0..config.n_paths_bi {
            let aoa_az = rng.random_range(-AZ_RANGE..AZ_RANGE);
            let aoa_el = rng.random_range(-EL_RANGE..EL_RANGE);
            let aod = rng.random_range(-AZ_RANGE..AZ_RANGE);
            let gain = draw_pathloss_gain(d, &config.pathloss.bi, rng)?;
            paths.push(BiPath {
                gain,
                aoa_az,
                aoa_el,
                aod,
            });
        }
        bi_paths.push(paths);
    }

    let mut iu_paths = Vec::with_capacity(config.n_ris);
    for u in 0..config.n_ris {
        let mut per_user = Vec::with_capacity(config.n_users);
        for pos in &user_pos {
            let d = dist(g.ris[u], *pos);
            let mut paths = Vec::with_capacity(config.n_paths_iu);
            for _ in 0..config.n_paths_iu {
                let aod_az = rng.random_range(-AZ_RANGE..AZ_RANGE);
                let aod_el = rng.random_range(-EL_RANGE..EL_RANGE);
                let gain = draw_pathloss_gain(d, &config.pathloss.iu, rng)?;
                paths.push(IuPath {
                    gain,
                    aod_az,
                    aod_el,
                });
            }
            per_user.push(paths);
        }
        iu_paths.push(per_user);
    }

    Ok(GeometricChannel {
        n_tx: config.n_tx,
        n_ris: config.n_ris,
        m_rows: config.m_rows,
        m_cols: config.m_cols,
        bu_paths,
        iu_paths,
        bi_paths,
    })
}

/// Draw gamma[k][l] = 0 with probability p_block, else 1, i.i.d.
pub fn sample_blockage(config: &SystemConfig, rng: &mut Rng) -> BlockageDraw {
    draw_blockage(config.n_users, config.n_paths_bu, config.p_block, rng)
}

pub fn draw_blockage(n_users: usize, n_paths: usize, p_block: f64, rng: &mut Rng) -> BlockageDraw {
    let gamma = (0..n_users)
        .map(|_| {
            (0..n_paths)
                .map(|_| if rng.random::<f64>() < p_block { 0 } else { 1 })
                .collect()
        })
        .collect();
    BlockageDraw { gamma }
}

impl BlockageDraw {
    pub fn all_ones(n_users: usize, n_paths: usize) -> BlockageDraw {
        BlockageDraw {
            gamma: vec![vec![1; n_paths]; n_users],
        }
    }
}

/// Blockage-independent factorization of the equivalent channels.
///
/// For each user the first U*M rows of H_k are fixed; the last row is
/// `sqrt(1/L_BU) * (G_k (gamma_k . g_k))^H` and is the only part rebuilt per
/// blockage draw.
#[derive(Debug, Clone)]
pub struct ChannelBasis {
    pub n_tx: usize,
    pub dim_e: usize,
    /// Stacked BS-RIS channel H_bi, (U*M) x N.
    pub h_bi: CMat,
    /// Stacked RIS-user vectors h_{i,k}, length U*M, per user.
    pub h_i: Vec<CVec>,
    /// Fixed RIS-side rows diag(h_{i,k}^H) H_bi, per user.
    pub ris_rows: Vec<CMat>,
    /// Direct-link steering matrix G_k = [a_L(theta_1), ..., a_L(theta_L)].
    pub g_mat: Vec<CMat>,
    /// Direct-link path gains g_k.
    pub gains: Vec<CVec>,
}

impl ChannelBasis {
    pub fn new(geo: &GeometricChannel) -> ChannelBasis {
        let n = geo.n_tx;
        let m = geo.m_per_ris();
        let um = geo.n_ris * m;
        let k_users = geo.n_users();

        // H_bi: vertical stack of the per-RIS M x N matrices.
        let mut h_bi = DMatrix::zeros(um, n);
        for u in 0..geo.n_ris {
            let paths = &geo.bi_paths[u];
            let norm = (1.0 / paths.len() as f64).sqrt();
            let mut block = DMatrix::zeros(m, n);
            for p in paths {
                let rx = upa_steering(p.aoa_az, p.aoa_el, geo.m_rows, geo.m_cols);
                let tx = ula_steering(p.aod, n);
                // g * a_P(rx) * a_L(tx)^H
                for c in 0..n {
                    let t = p.gain * tx[c].conj();
                    for r in 0..m {
                        block[(r, c)] += t * rx[r];
                    }
                }
            }
            block *= Complex64::from(norm);
            h_bi.view_mut((u * m, 0), (m, n)).copy_from(&block);
        }

        let mut h_i = Vec::with_capacity(k_users);
        let mut ris_rows = Vec::with_capacity(k_users);
        for k in 0..k_users {
            let mut hik = DVector::zeros(um);
            for u in 0..geo.n_ris {
                let paths = &geo.iu_paths[u][k];
                let norm = (1.0 / paths.len() as f64).sqrt();
                let mut v = DVector::zeros(m);
                for p in paths {
                    let a = upa_steering(p.aod_az, p.aod_el, geo.m_rows, geo.m_cols);
                    v += a * p.gain;
                }
                v *= Complex64::from(norm);
                hik.rows_mut(u * m, m).copy_from(&v);
            }
            // diag(h_{i,k}^H) H_bi: row r scaled by conj(h_{i,k}[r]).
            let mut rows = h_bi.clone();
            for r in 0..um {
                let s = hik[r].conj();
                for c in 0..n {
                    rows[(r, c)] *= s;
                }
            }
            h_i.push(hik);
            ris_rows.push(rows);
        }

        let mut g_mat = Vec::with_capacity(k_users);
        let mut gains = Vec::with_capacity(k_users);
        for k in 0..k_users {
            let paths = &geo.bu_paths[k];
            let mut gm = DMatrix::zeros(n, paths.len());
            for (l, p) in paths.iter().enumerate() {
                gm.set_column(l, &ula_steering(p.aod, n));
            }
            g_mat.push(gm);
            gains.push(DVector::from_iterator(
                paths.len(),
                paths.iter().map(|p| p.gain),
            ));
        }

        ChannelBasis {
            n_tx: n,
            dim_e: um + 1,
            h_bi,
            h_i,
            ris_rows,
            g_mat,
            gains,
        }
    }

    pub fn n_users(&self) -> usize {
        self.ris_rows.len()
    }

    /// Direct-link channel vector h_{b,k} under the given gating pattern.
    pub fn direct_link(&self, k: usize, gamma_k: &[u8]) -> CVec {
        let l = self.gains[k].len();
        debug_assert_eq!(gamma_k.len(), l);
        let norm = (1.0 / l as f64).sqrt();
        let gated = DVector::from_iterator(
            l,
            (0..l).map(|i| self.gains[k][i] * (gamma_k[i] as f64)),
        );
        &self.g_mat[k] * gated * Complex64::from(norm)
    }

    /// Assemble the stacked equivalent channels for one blockage draw.
    pub fn assemble(&self, draw: &BlockageDraw) -> Result<ChannelSample> {
        if draw.gamma.len() != self.n_users() {
            return Err(OutminError::Dimension(format!(
                "blockage draw has {} users, basis has {}",
                draw.gamma.len(),
                self.n_users()
            )));
        }
        let um = self.dim_e - 1;
        let mut h_eq = Vec::with_capacity(self.n_users());
        for k in 0..self.n_users() {
            if draw.gamma[k].len() != self.gains[k].len() {
                return Err(OutminError::Dimension(format!(
                    "gamma row {} has {} entries, expected {}",
                    k,
                    draw.gamma[k].len(),
                    self.gains[k].len()
                )));
            }
            let mut h = DMatrix::zeros(self.dim_e, self.n_tx);
            h.view_mut((0, 0), (um, self.n_tx))
                .copy_from(&self.ris_rows[k]);
            let hb = self.direct_link(k, &draw.gamma[k]);
            for c in 0..self.n_tx {
                h[(um, c)] = hb[c].conj();
            }
            h_eq.push(h);
        }
        Ok(ChannelSample { h_eq })
    }

    /// The no-blockage channel H^(0) (gamma identically 1).
    pub fn no_blockage(&self) -> ChannelSample {
        let draw = BlockageDraw::all_ones(self.n_users(), self.gains[0].len());
        self.assemble(&draw).expect("consistent dims")
    }
}

/// Convenience wrapper: assemble from a skeleton directly.
pub fn assemble_equivalent(geo: &GeometricChannel, draw: &BlockageDraw) -> Result<ChannelSample> {
    ChannelBasis::new(geo).assemble(draw)
}

/// T independent blockage realizations composed over a shared skeleton.
pub fn training_set(
    geo: &GeometricChannel,
    config: &SystemConfig,
    t: usize,
    rng: &mut Rng,
) -> Result<Vec<ChannelSample>> {
    if t == 0 {
        return Err(OutminError::Usage("training set size must be >= 1".into()));
    }
    let basis = ChannelBasis::new(geo);
    (0..t)
        .map(|_| basis.assemble(&sample_blockage(config, rng)))
        .collect()
}

/// Scale the channels so the per-user noise power becomes 1 W. SINR is
/// invariant under the joint scaling (H_k / sigma, sigma^2 -> 1), so hinge
/// values and outage events are unchanged while gradients become numerically
/// workable. Returns the scaled skeleton, the adjusted config, and the
/// applied amplitude scale.
pub fn noise_normalized(
    geo: &GeometricChannel,
    config: &SystemConfig,
) -> (GeometricChannel, SystemConfig, f64) {
    let scale = 1.0 / config.noise_power.sqrt();
    let mut g = geo.clone();
    for paths in &mut g.bu_paths {
        for p in paths {
            p.gain *= scale;
        }
    }
    for per_user in &mut g.iu_paths {
        for paths in per_user {
            for p in paths {
                p.gain *= scale;
            }
        }
    }
    let mut c = config.clone();
    c.noise_power = 1.0;
    (g, c, scale)
}
