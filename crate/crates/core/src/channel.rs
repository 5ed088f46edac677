//! Rayleigh block-fading channel model and SNR calibration.
//!
//! The link model is Y = X H + V over a coherence block of T slots: X is the
//! T x M transmitted block, H the M x N fading matrix (constant within the
//! block, i.i.d. CN(0,1) entries, redrawn per block), and V is AWGN with
//! i.i.d. CN(0, sigma^2) entries.
//!
//! SNR is defined as the average received information bit-energy to noise
//! ratio per receive antenna over the whole block, pilot energy included.
//! With every user at unit average power (delta_m * P = 1) that calibrates to
//!
//!   sigma^2 = T / (log2(L) * 10^(snr_db/10))

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::complexlin::ComplexMatrix;
use crate::{Error, Result};

/// System-level dimensioning shared by every module.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Number of single-antenna users M.
    pub num_users: usize,
    /// Number of receive antennas N (N >= M).
    pub num_rx_antennas: usize,
    /// Coherence time T in slots; always pilot_len + data_len.
    pub coherence_time: usize,
    /// Pilot slots T_tau.
    pub pilot_len: usize,
    /// Data slots T_d.
    pub data_len: usize,
    /// Codebook size L per user (power of two).
    pub codebook_size: usize,
    /// Total power budget P.
    pub power_budget: f64,
    /// Per-user power fractions delta_m (sum to 1).
    pub power_split: Vec<f64>,
    /// Eb/N0 per receive antenna in dB.
    pub snr_db: f64,
}

impl SystemConfig {
    /// Symmetric-user configuration: equal split delta_m = 1/M with unit
    /// per-user average power (total budget P = M).
    pub fn symmetric(
        num_users: usize,
        num_rx_antennas: usize,
        pilot_len: usize,
        data_len: usize,
        codebook_size: usize,
        snr_db: f64,
    ) -> Result<Self> {
        let cfg = Self {
            num_users,
            num_rx_antennas,
            coherence_time: pilot_len + data_len,
            pilot_len,
            data_len,
            codebook_size,
            power_budget: num_users as f64,
            power_split: vec![1.0 / num_users as f64; num_users],
            snr_db,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 {
            return Err(Error::Config("M must be at least 1".into()));
        }
        if self.num_rx_antennas < self.num_users {
            return Err(Error::Config(format!(
                "N >= M required, got N={} M={}",
                self.num_rx_antennas, self.num_users
            )));
        }
        if self.coherence_time != self.pilot_len + self.data_len {
            return Err(Error::Config(format!(
                "T = T_tau + T_d required, got T={} T_tau={} T_d={}",
                self.coherence_time, self.pilot_len, self.data_len
            )));
        }
        if self.coherence_time == 0 {
            return Err(Error::Config("T must be at least 1".into()));
        }
        if self.codebook_size < 2 || !self.codebook_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "L must be a power of 2 and >= 2, got {}",
                self.codebook_size
            )));
        }
        if self.power_split.len() != self.num_users {
            return Err(Error::Config("power split length must equal M".into()));
        }
        if self.power_split.iter().any(|&d| d < 0.0) {
            return Err(Error::Config("power split entries must be >= 0".into()));
        }
        let sum: f64 = self.power_split.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "power split must sum to 1, got {sum}"
            )));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Config("snr_db must be finite".into()));
        }
        Ok(())
    }

    /// Bits per message: log2(L).
    pub fn bits_per_user(&self) -> usize {
        self.codebook_size.trailing_zeros() as usize
    }

    /// Bits carried by one block: M * log2(L).
    pub fn bits_per_block(&self) -> usize {
        self.num_users * self.bits_per_user()
    }

    /// Power target delta_m * P for user m.
    pub fn user_power_target(&self, user: usize) -> f64 {
        self.power_split[user] * self.power_budget
    }

    /// Receiver input width 2NT.
    pub fn receiver_input_len(&self) -> usize {
        2 * self.num_rx_antennas * self.coherence_time
    }

    /// Joint waveform-set size J = L^M, None on overflow.
    pub fn joint_codebook_size(&self) -> Option<u64> {
        let mut j: u64 = 1;
        for _ in 0..self.num_users {
            j = j.checked_mul(self.codebook_size as u64)?;
        }
        Some(j)
    }
}

/// One block-fading draw of the M x N channel matrix.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: ComplexMatrix,
}

/// Noise variance per complex dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub sigma2: f64,
}

impl NoiseParams {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::Config(format!("sigma2 must be positive, got {sigma2}")));
        }
        Ok(Self { sigma2 })
    }
}

/// One CN(0,1) draw: real and imaginary parts each N(0, 1/2).
fn standard_complex_gaussian(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
}

/// Draw an M x N Rayleigh block-fading realization with i.i.d. CN(0,1) entries.
pub fn sample_channel(cfg: &SystemConfig, rng: &mut impl Rng) -> ChannelRealization {
    let h = ComplexMatrix::from_fn(cfg.num_users, cfg.num_rx_antennas, |_, _| {
        standard_complex_gaussian(rng)
    });
    ChannelRealization { h }
}

/// Draw a rows x cols AWGN matrix with i.i.d. CN(0, sigma^2) entries.
pub fn sample_noise(rows: usize, cols: usize, np: NoiseParams, rng: &mut impl Rng) -> ComplexMatrix {
    let sigma = np.sigma2.sqrt();
    ComplexMatrix::from_fn(rows, cols, |_, _| standard_complex_gaussian(rng) * sigma)
}

/// Apply the block channel: returns X H + V.
pub fn apply_channel(
    x: &ComplexMatrix,
    h: &ChannelRealization,
    v: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    if x.cols() != h.h.rows() {
        return Err(Error::Shape(format!(
            "apply_channel: X is {}x{} but H is {}x{}",
            x.rows(),
            x.cols(),
            h.h.rows(),
            h.h.cols()
        )));
    }
    x.matmul(&h.h)?.add(v)
}

/// Calibrate the per-complex-dimension noise variance from the configured
/// Eb/N0: sigma^2 = T / (log2(L) * 10^(snr_db/10)).
pub fn snr_to_sigma2(cfg: &SystemConfig) -> NoiseParams {
    let gamma = 10f64.powf(cfg.snr_db / 10.0);
    let sigma2 = cfg.coherence_time as f64 / (cfg.bits_per_user() as f64 * gamma);
    NoiseParams { sigma2 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, purpose};

    fn cfg_4x8() -> SystemConfig {
        SystemConfig::symmetric(4, 8, 4, 1, 4, 0.0).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SystemConfig::symmetric(4, 8, 4, 1, 4, 0.0).is_ok());
        // N < M
        assert!(matches!(
            SystemConfig::symmetric(4, 2, 4, 1, 4, 0.0),
            Err(Error::Config(_))
        ));
        // L not a power of two
        assert!(matches!(
            SystemConfig::symmetric(4, 8, 4, 1, 3, 0.0),
            Err(Error::Config(_))
        ));
        // T mismatch caught via direct construction
        let mut bad = cfg_4x8();
        bad.coherence_time = 7;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn derived_quantities() {
        let cfg = cfg_4x8();
        assert_eq!(cfg.bits_per_user(), 2);
        assert_eq!(cfg.bits_per_block(), 8);
        assert_eq!(cfg.receiver_input_len(), 80);
        assert_eq!(cfg.joint_codebook_size(), Some(256));
        assert!((cfg.user_power_target(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn channel_entry_moments() {
        let cfg = cfg_4x8();
        let mut rng = derive_stream(100, &[purpose::CHANNEL]);
        let n = 100_000;
        let mut sum = Complex64::new(0.0, 0.0);
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let h = sample_channel(&cfg, &mut rng);
            let z = h.h.get(1, 2);
            sum += z;
            sum_sq += z.norm_sqr();
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64;
        assert!(mean.re.abs() < 0.02 && mean.im.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "variance {var}");
    }

    #[test]
    fn channel_determinism() {
        let cfg = cfg_4x8();
        let a = sample_channel(&cfg, &mut derive_stream(7, &[purpose::CHANNEL, 0]));
        let b = sample_channel(&cfg, &mut derive_stream(7, &[purpose::CHANNEL, 0]));
        assert_eq!(a.h, b.h);
    }

    #[test]
    fn rayleigh_magnitude_ks_test() {
        // |h| ~ Rayleigh(sigma = sqrt(0.5)): F(x) = 1 - exp(-x^2).
        let cfg = cfg_4x8();
        let mut rng = derive_stream(200, &[purpose::CHANNEL]);
        let n = 100_000;
        let mut mags: Vec<f64> = Vec::with_capacity(n);
        let mut h_iter = 0;
        while mags.len() < n {
            let h = sample_channel(&cfg, &mut rng);
            mags.push(h.h.get(h_iter % 4, h_iter % 8).norm());
            h_iter += 1;
        }
        mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d_stat: f64 = 0.0;
        for (i, &x) in mags.iter().enumerate() {
            let f = 1.0 - (-x * x).exp();
            let emp_hi = (i + 1) as f64 / n as f64;
            let emp_lo = i as f64 / n as f64;
            d_stat = d_stat.max((emp_hi - f).abs()).max((f - emp_lo).abs());
        }
        // Kolmogorov-Smirnov critical value at alpha = 0.01.
        let critical = 1.628 / (n as f64).sqrt();
        assert!(d_stat < critical, "KS statistic {d_stat:.5} >= {critical:.5}");
    }

    #[test]
    fn noise_variance_and_determinism() {
        let np = NoiseParams::new(2.0).unwrap();
        let mut rng = derive_stream(300, &[purpose::NOISE]);
        let n = 100_000usize;
        let mut sum_sq = 0.0;
        let mut drawn = 0usize;
        while drawn < n {
            let v = sample_noise(2, 2, np, &mut rng);
            for z in v.entries() {
                sum_sq += z.norm_sqr();
                drawn += 1;
            }
        }
        let var = sum_sq / drawn as f64;
        assert!((var - 2.0).abs() < 0.06, "variance {var}");

        let a = sample_noise(3, 5, np, &mut derive_stream(8, &[purpose::NOISE, 1]));
        let b = sample_noise(3, 5, np, &mut derive_stream(8, &[purpose::NOISE, 1]));
        assert_eq!(a, b);
    }

    #[test]
    fn noise_degenerate_limit() {
        assert!(NoiseParams::new(0.0).is_err());
        assert!(NoiseParams::new(-1.0).is_err());
        let np = NoiseParams::new(1e-30).unwrap();
        let mut rng = derive_stream(9, &[purpose::NOISE]);
        let v = sample_noise(4, 4, np, &mut rng);
        assert!(v.entries().iter().all(|z| z.norm() < 1e-10));
    }

    #[test]
    fn apply_channel_degenerate_cases() {
        let cfg = cfg_4x8();
        let mut rng = derive_stream(10, &[purpose::CHANNEL]);
        let h = sample_channel(&cfg, &mut rng);
        let zero_x = ComplexMatrix::zeros(5, 4);
        let v = sample_noise(5, 8, NoiseParams::new(1.0).unwrap(), &mut rng);
        let y = apply_channel(&zero_x, &h, &v).unwrap();
        assert_eq!(y, v);

        // M = N with identity channel and no noise returns X.
        let id = ChannelRealization {
            h: ComplexMatrix::identity(3),
        };
        let x = ComplexMatrix::from_fn(4, 3, |r, c| Complex64::new(r as f64, c as f64));
        let zero_v = ComplexMatrix::zeros(4, 3);
        let y = apply_channel(&x, &id, &zero_v).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn apply_channel_matches_kernel_composition() {
        let cfg = cfg_4x8();
        let mut rng = derive_stream(11, &[purpose::CHANNEL]);
        let h = sample_channel(&cfg, &mut rng);
        let x = ComplexMatrix::from_fn(5, 4, |_, _| standard_complex_gaussian(&mut rng));
        let v = sample_noise(5, 8, NoiseParams::new(0.5).unwrap(), &mut rng);
        let y = apply_channel(&x, &h, &v).unwrap();
        let oracle = x.matmul(&h.h).unwrap().add(&v).unwrap();
        for (a, b) in y.entries().iter().zip(oracle.entries()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn apply_channel_linearity() {
        let cfg = cfg_4x8();
        let mut rng = derive_stream(12, &[purpose::CHANNEL]);
        let h = sample_channel(&cfg, &mut rng);
        let x1 = ComplexMatrix::from_fn(5, 4, |_, _| standard_complex_gaussian(&mut rng));
        let x2 = ComplexMatrix::from_fn(5, 4, |_, _| standard_complex_gaussian(&mut rng));
        let zero_v = ComplexMatrix::zeros(5, 8);
        let y1 = apply_channel(&x1, &h, &zero_v).unwrap();
        let y2 = apply_channel(&x2, &h, &zero_v).unwrap();
        let y12 = apply_channel(&x1.add(&x2).unwrap(), &h, &zero_v).unwrap();
        let diff = y12.sub(&y1.add(&y2).unwrap()).unwrap().frob_norm();
        assert!(diff < 1e-12);
    }

    #[test]
    fn snr_calibration_values() {
        // M=4, L=4, T=5, 0 dB: sigma^2 = 5/2.
        let cfg = SystemConfig::symmetric(4, 8, 4, 1, 4, 0.0).unwrap();
        assert!((snr_to_sigma2(&cfg).sigma2 - 2.5).abs() < 1e-12);

        // M=8, L=4, T=9, 10 dB: sigma^2 = (9/2)/10 = 0.45.
        let cfg = SystemConfig::symmetric(8, 16, 8, 1, 4, 10.0).unwrap();
        assert!((snr_to_sigma2(&cfg).sigma2 - 0.45).abs() < 1e-12);
    }

    #[test]
    fn snr_decibel_identity_and_monotonicity() {
        let mut cfg = cfg_4x8();
        cfg.snr_db = 3.0;
        let s1 = snr_to_sigma2(&cfg).sigma2;
        cfg.snr_db = 3.0 + 10.0 * 2f64.log10();
        let s2 = snr_to_sigma2(&cfg).sigma2;
        assert!((s1 / s2 - 2.0).abs() < 1e-12);

        let mut prev = f64::INFINITY;
        for snr in [-10.0, -3.0, 0.0, 2.5, 7.0, 20.0] {
            cfg.snr_db = snr;
            let s = snr_to_sigma2(&cfg).sigma2;
            assert!(s < prev, "sigma2 not strictly decreasing in snr_db");
            prev = s;
        }
    }
}
