//! Rayleigh-fading uplink channels with imperfect receiver CSI.
//!
//! The true channel mixes the estimate with an independent error term,
//! `H = sqrt(1 - tau^2) * H_hat + tau * Omega`, where both `H_hat` and `Omega`
//! have i.i.d. `CN(0, 1)` entries. Columns are stream-major: user `i`, antenna
//! `j` occupies column `i * N_t + j`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::SystemConfig;
use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest one are treated as zero.
pub const EIGEN_ZERO_FRACTION: f64 = 1e-12;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One `CN(0, variance)` draw.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    // Column-major fill order keeps the draw sequence independent of nalgebra internals.
    let mut m = CMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = complex_gaussian(rng, 1.0);
        }
    }
    m
}

#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Receiver-side estimate `H_hat`, `N_r x N_t K`.
    pub estimated: CMatrix,
    /// Estimation error `Omega`.
    pub error: CMatrix,
    /// True channel `H`.
    pub actual: CMatrix,
    /// Eigenvalues of `H_hat^H H_hat`, ascending, clamped to be non-negative.
    pub eigenvalues: Vec<f64>,
    /// Unitary eigenvector matrix `Q` with `H_hat^H H_hat = Q diag(lambda) Q^H`.
    pub eigenvectors: CMatrix,
    pub tx_antennas: usize,
}

impl ChannelRealization {
    /// Builds a realization from an explicit estimate and error term.
    pub fn compose(estimated: CMatrix, error: CMatrix, tau: f64, tx_antennas: usize) -> Result<Self> {
        if estimated.shape() != error.shape() {
            return Err(Error::Dimension {
                what: "estimation error columns",
                expected: estimated.ncols(),
                got: error.ncols(),
            });
        }
        if tx_antennas == 0 || estimated.ncols() % tx_antennas != 0 {
            return Err(Error::Dimension {
                what: "channel columns per user",
                expected: tx_antennas,
                got: estimated.ncols(),
            });
        }
        let keep = (1.0 - tau * tau).sqrt();
        let actual = estimated.map(|h| h * keep) + error.map(|w| w * tau);
        let (eigenvalues, eigenvectors) = gram_eigen(&estimated);
        Ok(Self {
            estimated,
            error,
            actual,
            eigenvalues,
            eigenvectors,
            tx_antennas,
        })
    }

    pub fn rx_antennas(&self) -> usize {
        self.estimated.nrows()
    }

    pub fn streams(&self) -> usize {
        self.estimated.ncols()
    }

    pub fn users(&self) -> usize {
        self.streams() / self.tx_antennas
    }

    /// Columns of user `i` taken from `m`.
    pub fn user_block<'a>(&self, m: &'a CMatrix, user: usize) -> nalgebra::DMatrixView<'a, Complex64> {
        m.columns(user * self.tx_antennas, self.tx_antennas)
    }
}

/// Draws `H_hat` then `Omega` from a single seeded stream.
pub fn sample_channel(cfg: &SystemConfig, seed: u64) -> ChannelRealization {
    let mut rng = rng_from_seed(seed);
    let n = cfg.streams();
    let estimated = complex_gaussian_matrix(&mut rng, cfg.rx_antennas, n);
    let error = complex_gaussian_matrix(&mut rng, cfg.rx_antennas, n);
    ChannelRealization::compose(estimated, error, cfg.csi_error, cfg.tx_antennas)
        .expect("shapes are consistent by construction")
}

/// Hermitian eigendecomposition of `h^H h`, eigenvalues ascending.
pub fn gram_eigen(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let gram = h.adjoint() * h;
    let n = gram.nrows();
    let eig = nalgebra::SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let floor = EIGEN_ZERO_FRACTION * max;
    let values = order
        .iter()
        .map(|&k| {
            let v = eig.eigenvalues[k];
            if v < floor {
                0.0
            } else {
                v
            }
        })
        .collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `y = H P x + n` with `P = diag(sqrt(p))` and `n ~ CN(0, sigma2 I)`.
pub fn simulate_received_symbols(
    real: &ChannelRealization,
    powers: &[f64],
    symbols: &[Complex64],
    noise_power: f64,
    noise_seed: u64,
) -> Result<CVector> {
    let mut rng = rng_from_seed(noise_seed);
    received_with_rng(&real.actual, powers, symbols, noise_power, &mut rng)
}

pub(crate) fn received_with_rng<R: Rng + ?Sized>(
    channel: &CMatrix,
    powers: &[f64],
    symbols: &[Complex64],
    noise_power: f64,
    rng: &mut R,
) -> Result<CVector> {
    let n = channel.ncols();
    if powers.len() != n {
        return Err(Error::Dimension {
            what: "power vector",
            expected: n,
            got: powers.len(),
        });
    }
    if symbols.len() != n {
        return Err(Error::Dimension {
            what: "symbol vector",
            expected: n,
            got: symbols.len(),
        });
    }
    if powers.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::InvalidArgument("stream powers must be non-negative".into()));
    }
    let mut y = CVector::zeros(channel.nrows());
    for (l, (&p, &x)) in powers.iter().zip(symbols).enumerate() {
        if p == 0.0 {
            continue;
        }
        let s = x * p.sqrt();
        y.axpy(s, &channel.column(l), Complex64::new(1.0, 0.0));
    }
    if noise_power > 0.0 {
        for v in y.iter_mut() {
            *v += complex_gaussian(rng, noise_power);
        }
    }
    Ok(y)
}

/// Haar-distributed unitary matrix: QR of a complex Gaussian matrix with the
/// phases of `R`'s diagonal folded back into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let z = complex_gaussian_matrix(rng, n, n);
    let (mut q, r) = z.qr().unpack();
    for k in 0..n {
        let d = r[(k, k)];
        let norm = d.norm();
        let phase = if norm > 0.0 { d / norm } else { Complex64::new(1.0, 0.0) };
        for row in 0..n {
            q[(row, k)] *= phase;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(k: usize, nt: usize, nr: usize, tau: f64) -> SystemConfig {
        SystemConfig {
            users: k,
            tx_antennas: nt,
            rx_antennas: nr,
            csi_error: tau,
            bits_per_use: 4 * nt as u32,
            min_bits: 1,
            ..Default::default()
        }
    }

    #[test]
    fn perfect_csi_keeps_estimate() {
        let real = sample_channel(&cfg(3, 2, 4, 0.0), 7);
        assert_eq!(real.actual, real.estimated);
    }

    #[test]
    fn unknown_csi_is_pure_error() {
        let real = sample_channel(&cfg(3, 2, 4, 1.0), 7);
        for (h, w) in real.actual.iter().zip(real.error.iter()) {
            assert!((h - w).norm() < 1e-15);
        }
    }

    #[test]
    fn mixing_identity_is_exact() {
        let tau = 0.37;
        let real = sample_channel(&cfg(4, 2, 6, tau), 11);
        let keep = (1.0 - tau * tau).sqrt();
        for ((h, e), w) in real.actual.iter().zip(real.estimated.iter()).zip(real.error.iter()) {
            assert_eq!(*h, e * keep + w * tau);
        }
    }

    #[test]
    fn same_seed_same_realization() {
        let c = cfg(10, 2, 4, 0.2);
        let a = sample_channel(&c, 99);
        let b = sample_channel(&c, 99);
        assert_eq!(a.actual, b.actual);
        assert_eq!(a.eigenvalues, b.eigenvalues);
        let other = sample_channel(&c, 100);
        assert_ne!(a.estimated, other.estimated);
    }

    #[test]
    fn rank_deficient_gram_has_zero_eigenvalues() {
        let real = sample_channel(&cfg(10, 2, 4, 0.0), 3);
        assert_eq!(real.eigenvalues.len(), 20);
        assert!(real.eigenvalues.iter().all(|&l| l >= 0.0));
        assert_eq!(real.eigenvalues.iter().filter(|&&l| l < 1e-9).count(), 16);
    }

    #[test]
    fn eigenvectors_are_unitary_and_reconstruct() {
        let real = sample_channel(&cfg(3, 2, 8, 0.0), 5);
        let q = &real.eigenvectors;
        let n = q.ncols();
        let eye = q.adjoint() * q;
        for r in 0..n {
            for c in 0..n {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((eye[(r, c)] - Complex64::new(want, 0.0)).norm() < 1e-10);
            }
        }
        let lam = CMatrix::from_diagonal(&DVector::from_iterator(
            n,
            real.eigenvalues.iter().map(|&l| Complex64::new(l, 0.0)),
        ));
        let gram = real.estimated.adjoint() * &real.estimated;
        let rebuilt = q * lam * q.adjoint();
        assert!((rebuilt - &gram).norm() / gram.norm() < 1e-8);
    }

    #[test]
    fn received_zero_power_zero_noise_is_zero() {
        let real = sample_channel(&cfg(2, 2, 3, 0.0), 1);
        let x = vec![Complex64::new(1.0, 0.0); 4];
        let y = simulate_received_symbols(&real, &[0.0; 4], &x, 0.0, 1).unwrap();
        assert!(y.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn received_zero_power_is_noise_draw() {
        let real = sample_channel(&cfg(2, 2, 3, 0.0), 1);
        let x = vec![Complex64::new(1.0, 0.0); 4];
        let y = simulate_received_symbols(&real, &[0.0; 4], &x, 2.0, 42).unwrap();
        let mut rng = rng_from_seed(42);
        for v in y.iter() {
            assert_eq!(*v, complex_gaussian(&mut rng, 2.0));
        }
    }

    #[test]
    fn scalar_link() {
        let one = CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        let zero = CMatrix::zeros(1, 1);
        let real = ChannelRealization::compose(one, zero, 0.0, 1).unwrap();
        let y = simulate_received_symbols(&real, &[4.0], &[Complex64::new(1.0, 0.0)], 0.0, 0).unwrap();
        assert_eq!(y[0], Complex64::new(2.0, 0.0));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let real = sample_channel(&cfg(2, 2, 3, 0.0), 1);
        let err = simulate_received_symbols(&real, &[1.0; 3], &[Complex64::new(1.0, 0.0); 4], 1.0, 0);
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }

    #[test]
    fn haar_matrix_is_unitary() {
        let mut rng = rng_from_seed(3);
        let q = haar_unitary(&mut rng, 5);
        let eye = q.adjoint() * &q;
        assert!((eye - CMatrix::identity(5, 5)).norm() < 1e-12);
    }
}
