//! Mask-driven multichannel Wiener filtering.
//!
//! A ratio mask `M` weights the mixture covariance into target and noise
//! estimates,
//!
//! ```text
//! Phi_ss(f) = 1/T sum_t M(t,f)^2     x x^H
//! Phi_nn(f) = 1/T sum_t (1-M(t,f))^2 x x^H
//! ```
//!
//! from which a time-invariant filter `w(f)` estimates the target's W channel
//! as `y = w^H x`. [`mwf_filter`] is the plain MWF,
//! `(Phi_ss + Phi_nn)^{-1} Phi_ss u_1`. [`gevd_rank1_filter`] first replaces
//! `Phi_ss` by its rank-1 approximation in the generalized eigenbasis of
//! `(Phi_ss, Phi_nn)`, computed by Cholesky whitening against `Phi_nn`.
//!
//! Bins are processed independently (in parallel with the `parallel`
//! feature); each bin's accumulation order is fixed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foa::CHANNELS;
use crate::linalg::{cholesky, eigh, solve_hermitian, solve_lower, ComplexMatrix};
use crate::masks::Mask;
use crate::par;
use crate::stft::Spectrogram;

/// Relative diagonal loading `eps * trace / 4`.
pub const LOADING: f64 = 1e-6;
/// Reciprocal condition number below which a covariance is loaded.
pub const LOADING_RCOND: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Per-bin 4x4 target and noise covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePair {
    pub phi_ss: Vec<ComplexMatrix>,
    pub phi_nn: Vec<ComplexMatrix>,
    pub frame_count: usize,
}

impl CovariancePair {
    pub fn bins(&self) -> usize {
        self.phi_ss.len()
    }

    /// Scales both covariances by `alpha`.
    pub fn scaled(&self, alpha: f64) -> CovariancePair {
        CovariancePair {
            phi_ss: self.phi_ss.iter().map(|m| m.scale(alpha)).collect(),
            phi_nn: self.phi_nn.iter().map(|m| m.scale(alpha)).collect(),
            frame_count: self.frame_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterVariant {
    FullMwf,
    GevdRank1,
}

/// Per-bin filter vectors plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterWeights {
    pub weights: Vec<[Complex64; 4]>,
    pub variant: FilterVariant,
    /// Bins where a covariance had to be diagonally loaded.
    pub loaded_bins: Vec<usize>,
    /// Bins that could not be solved and pass the W channel through.
    pub passthrough_bins: Vec<usize>,
}

impl FilterWeights {
    /// The same vector `w` in every bin.
    pub fn constant(w: [Complex64; 4], bins: usize, variant: FilterVariant) -> Self {
        Self {
            weights: vec![w; bins],
            variant,
            loaded_bins: Vec::new(),
            passthrough_bins: Vec::new(),
        }
    }
}

/// Masked covariance estimates, accumulated in double precision.
pub fn masked_covariances(mix: &Spectrogram, mask: &Mask) -> Result<CovariancePair> {
    if mix.channels() != CHANNELS {
        return Err(Error::Shape(format!(
            "expected a {CHANNELS}-channel spectrogram, got {}",
            mix.channels()
        )));
    }
    if mix.frames() == 0 {
        return Err(Error::InvalidArgument("empty spectrogram".into()));
    }
    if mask.frames() != mix.frames() || mask.bins() != mix.bins() {
        return Err(Error::Shape(format!(
            "mask is {}x{}, spectrogram is {}x{}",
            mask.frames(),
            mask.bins(),
            mix.frames(),
            mix.bins()
        )));
    }
    let frames = mix.frames();
    let norm = 1.0 / frames as f64;
    let per_bin = par::map_range(mix.bins(), |f| {
        let mut ss = [[ZERO; 4]; 4];
        let mut nn = [[ZERO; 4]; 4];
        for t in 0..frames {
            let m = f64::from(mask.get(t, f));
            let ws = m * m;
            let wn = (1.0 - m) * (1.0 - m);
            let x = mix.vector4(t, f);
            for i in 0..4 {
                for j in 0..4 {
                    let p = x[i] * x[j].conj();
                    ss[i][j] += p * ws;
                    nn[i][j] += p * wn;
                }
            }
        }
        let to_matrix = |a: &[[Complex64; 4]; 4]| {
            ComplexMatrix::from_fn(4, 4, |i, j| a[i][j] * norm).symmetrized()
        };
        (to_matrix(&ss), to_matrix(&nn))
    });
    let (phi_ss, phi_nn) = per_bin.into_iter().unzip();
    Ok(CovariancePair {
        phi_ss,
        phi_nn,
        frame_count: frames,
    })
}

struct BinFilter {
    w: [Complex64; 4],
    loaded: bool,
    passthrough: bool,
}

fn is_zero(m: &ComplexMatrix) -> bool {
    m.as_slice().iter().all(|z| *z == ZERO)
}

fn passthrough() -> [Complex64; 4] {
    [Complex64::new(1.0, 0.0), ZERO, ZERO, ZERO]
}

fn to_array(m: &ComplexMatrix) -> [Complex64; 4] {
    std::array::from_fn(|i| m[(i, 0)])
}

fn mwf_bin(ss: &ComplexMatrix, nn: &ComplexMatrix) -> Result<BinFilter> {
    if is_zero(ss) {
        return Ok(BinFilter {
            w: [ZERO; 4],
            loaded: false,
            passthrough: false,
        });
    }
    let a = ss.add(nn);
    let rhs = ComplexMatrix::column(&ss.col(0));
    match solve_hermitian(&a, &rhs) {
        Ok(w) => Ok(BinFilter {
            w: to_array(&w),
            loaded: false,
            passthrough: false,
        }),
        Err(Error::IllConditioned { .. }) => {
            let tr = a.trace().re;
            let fallback = BinFilter {
                w: passthrough(),
                loaded: true,
                passthrough: true,
            };
            if !(tr > 0.0) {
                return Ok(fallback);
            }
            match solve_hermitian(&a.add_diagonal(LOADING * tr / 4.0), &rhs) {
                Ok(w) => Ok(BinFilter {
                    w: to_array(&w),
                    loaded: true,
                    passthrough: false,
                }),
                Err(Error::IllConditioned { .. }) => Ok(fallback),
                Err(e) => Err(e),
            }
        }
        Err(e) => Err(e),
    }
}

fn collect(results: Vec<Result<BinFilter>>, variant: FilterVariant) -> Result<FilterWeights> {
    let mut out = FilterWeights {
        weights: Vec::with_capacity(results.len()),
        variant,
        loaded_bins: Vec::new(),
        passthrough_bins: Vec::new(),
    };
    for (f, r) in results.into_iter().enumerate() {
        let r = r?;
        if r.loaded {
            out.loaded_bins.push(f);
        }
        if r.passthrough {
            out.passthrough_bins.push(f);
        }
        out.weights.push(r.w);
    }
    Ok(out)
}

/// Full-rank MWF `w = (Phi_ss + Phi_nn)^{-1} Phi_ss u_1` per bin.
///
/// An ill-conditioned sum is diagonally loaded with `LOADING * trace / 4`;
/// a bin that still cannot be solved passes the W channel through and is
/// listed in [`FilterWeights::passthrough_bins`].
pub fn mwf_filter(cov: &CovariancePair) -> Result<FilterWeights> {
    check_pair(cov)?;
    let results = par::map_range(cov.bins(), |f| mwf_bin(&cov.phi_ss[f], &cov.phi_nn[f]));
    collect(results, FilterVariant::FullMwf)
}

fn check_pair(cov: &CovariancePair) -> Result<()> {
    if cov.phi_ss.len() != cov.phi_nn.len() {
        return Err(Error::Shape(format!(
            "{} target covariances vs {} noise covariances",
            cov.phi_ss.len(),
            cov.phi_nn.len()
        )));
    }
    Ok(())
}

/// Returns `Phi_nn`, loaded if it is not comfortably positive definite, and
/// its Cholesky factor.
fn whitening(
    ss: &ComplexMatrix,
    nn: &ComplexMatrix,
    bin: usize,
) -> Result<(ComplexMatrix, ComplexMatrix, bool)> {
    let well_conditioned = eigh(nn)
        .map(|e| e.values.last().copied().unwrap_or(0.0) > LOADING_RCOND * e.values[0])
        .unwrap_or(false);
    if well_conditioned {
        if let Ok(l) = cholesky(nn) {
            return Ok((nn.clone(), l, false));
        }
    }
    let tr = ss.add(nn).trace().re;
    if !(tr > 0.0) || !tr.is_finite() {
        return Err(Error::NoiseCovariance { bin });
    }
    let loaded = nn.add_diagonal(LOADING * tr / 4.0);
    let l = cholesky(&loaded).map_err(|_| Error::NoiseCovariance { bin })?;
    Ok((loaded, l, true))
}

fn gevd_bin(ss: &ComplexMatrix, nn: &ComplexMatrix, bin: usize) -> Result<BinFilter> {
    if is_zero(ss) {
        return Ok(BinFilter {
            w: [ZERO; 4],
            loaded: false,
            passthrough: false,
        });
    }
    let (nn, l, loaded) = whitening(ss, nn, bin)?;
    // C = L^{-1} Phi_ss L^{-H}
    let x = solve_lower(&l, ss);
    let c = solve_lower(&l, &x.adjoint()).symmetrized();
    let e = eigh(&c)?;
    let lambda = e.values[0].max(0.0);
    if lambda == 0.0 {
        return Ok(BinFilter {
            w: [ZERO; 4],
            loaded,
            passthrough: false,
        });
    }
    let v = l.mul_vec(&e.vector(0));
    let rank1 = ComplexMatrix::outer(&v, &v).scale(lambda);
    let mut r = mwf_bin(&rank1, &nn)?;
    r.loaded |= loaded;
    Ok(r)
}

/// Rank-1 GEVD approximation of the MWF.
///
/// Per bin: whiten with `L = chol(Phi_nn)`, take the principal eigenpair
/// `(lambda, u)` of `L^{-1} Phi_ss L^{-H}`, rebuild
/// `Phi_ss' = max(lambda, 0) (L u)(L u)^H` and solve the MWF on
/// `(Phi_ss', Phi_nn)`. A negative principal eigenvalue gives `w = 0`.
pub fn gevd_rank1_filter(cov: &CovariancePair) -> Result<FilterWeights> {
    check_pair(cov)?;
    let results = par::map_range(cov.bins(), |f| gevd_bin(&cov.phi_ss[f], &cov.phi_nn[f], f));
    collect(results, FilterVariant::GevdRank1)
}

/// `y(t, f) = w(f)^H x(t, f)`.
pub fn apply_filter(mix: &Spectrogram, w: &FilterWeights) -> Result<Spectrogram> {
    if mix.channels() != CHANNELS || w.weights.len() != mix.bins() {
        return Err(Error::Shape(format!(
            "filter has {} bins for a {}-channel spectrogram with {} bins",
            w.weights.len(),
            mix.channels(),
            mix.bins()
        )));
    }
    let bins = mix.bins();
    let conj: Vec<[Complex64; 4]> = w.weights.iter().map(|v| v.map(|z| z.conj())).collect();
    let mut out = Spectrogram::zeros(1, mix.frames(), *mix.config());
    par::for_each_chunk_mut(out.data_mut(), bins, |t, row| {
        for (f, y) in row.iter_mut().enumerate() {
            let x = mix.vector4(t, f);
            let b = &conj[f];
            *y = b[0] * x[0] + b[1] * x[1] + b[2] * x[2] + b[3] * x[3];
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::StftConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_spec(frames: usize, rng: &mut impl Rng) -> Spectrogram {
        let cfg = StftConfig::with_frame_len(16, 16_000);
        let n = 4 * frames * cfg.bins();
        let data = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        Spectrogram::from_data(4, frames, cfg, data).unwrap()
    }

    fn random_mask(frames: usize, bins: usize, rng: &mut impl Rng) -> Mask {
        Mask::new(
            frames,
            bins,
            (0..frames * bins).map(|_| rng.random_range(0.0..=1.0)).collect(),
        )
        .unwrap()
    }

    fn pair(ss: ComplexMatrix, nn: ComplexMatrix) -> CovariancePair {
        CovariancePair {
            phi_ss: vec![ss],
            phi_nn: vec![nn],
            frame_count: 1,
        }
    }

    #[test]
    fn unit_mask_and_half_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_spec(5, &mut rng);
        let ones = Mask::constant(5, x.bins(), 1.0);
        let cov = masked_covariances(&x, &ones).unwrap();
        for f in 0..x.bins() {
            assert!(cov.phi_nn[f].frobenius() == 0.0);
            let mut raw = ComplexMatrix::zeros(4, 4);
            for t in 0..5 {
                let v = x.vector4(t, f);
                raw = raw.add(&ComplexMatrix::outer(&v, &v));
            }
            assert!(cov.phi_ss[f].max_abs_diff(&raw.scale(0.2)) < 1e-12);
        }

        let one = random_spec(1, &mut rng);
        let half = Mask::constant(1, one.bins(), 0.5);
        let cov = masked_covariances(&one, &half).unwrap();
        for f in 0..one.bins() {
            let v = one.vector4(0, f);
            let expected = ComplexMatrix::outer(&v, &v).scale(0.25);
            assert!(cov.phi_ss[f].max_abs_diff(&expected) < 1e-14);
            assert_eq!(cov.phi_ss[f], cov.phi_nn[f]);
        }
    }

    #[test]
    fn covariance_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_spec(5, &mut rng);
        assert!(masked_covariances(&x, &Mask::constant(4, x.bins(), 1.0)).is_err());
        let mono = x.extract_channel(0);
        assert!(masked_covariances(&mono, &Mask::constant(5, x.bins(), 1.0)).is_err());
    }

    #[test]
    fn closed_form_mwf() {
        let e1 = [c(1.0), c(0.0), c(0.0), c(0.0)];
        let cov = pair(ComplexMatrix::outer(&e1, &e1), ComplexMatrix::identity(4));
        let w = mwf_filter(&cov).unwrap();
        let expected = [0.5, 0.0, 0.0, 0.0];
        for (a, b) in w.weights[0].iter().zip(expected) {
            assert!((a - c(b)).norm() < 1e-10);
        }
        assert!(w.loaded_bins.is_empty());
    }

    #[test]
    fn zero_target_gives_zero_filter() {
        let cov = pair(ComplexMatrix::zeros(4, 4), ComplexMatrix::identity(4));
        assert_eq!(mwf_filter(&cov).unwrap().weights[0], [ZERO; 4]);
        assert_eq!(gevd_rank1_filter(&cov).unwrap().weights[0], [ZERO; 4]);
    }

    #[test]
    fn mwf_residual_and_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x = random_spec(12, &mut rng);
            let m = random_mask(12, x.bins(), &mut rng);
            let cov = masked_covariances(&x, &m).unwrap();
            let w = mwf_filter(&cov).unwrap();
            let ws = mwf_filter(&cov.scaled(1e3)).unwrap();
            for f in 0..cov.bins() {
                let a = cov.phi_ss[f].add(&cov.phi_nn[f]);
                let rhs = cov.phi_ss[f].col(0);
                let r: Vec<Complex64> = a.mul_vec(&w.weights[f]);
                let err: f64 = r
                    .iter()
                    .zip(&rhs)
                    .map(|(p, q)| (p - q).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                let den: f64 = rhs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                assert!(err / den < 1e-8);
                for (p, q) in w.weights[f].iter().zip(&ws.weights[f]) {
                    assert!((p - q).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn gevd_matches_mwf_for_rank_one_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let d: Vec<Complex64> = (0..4)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let sigma2 = rng.random_range(0.1..10.0);
            let ss = ComplexMatrix::outer(&d, &d).scale(sigma2);
            let a = ComplexMatrix::from_fn(4, 4, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let nn = a.matmul(&a.adjoint()).add_diagonal(0.1);
            for nn in [ComplexMatrix::identity(4), nn] {
                let cov = pair(ss.clone(), nn);
                let full = mwf_filter(&cov).unwrap();
                let gevd = gevd_rank1_filter(&cov).unwrap();
                for (p, q) in full.weights[0].iter().zip(&gevd.weights[0]) {
                    assert!((p - q).norm() < 1e-8, "{p} vs {q}");
                }
            }
        }
    }

    #[test]
    fn singular_bins_are_handled() {
        // both zero: target zero -> w = 0
        let cov = pair(ComplexMatrix::zeros(4, 4), ComplexMatrix::zeros(4, 4));
        assert_eq!(mwf_filter(&cov).unwrap().weights[0], [ZERO; 4]);
        // rank-deficient sum gets loaded
        let e1 = [c(1.0), c(0.0), c(0.0), c(0.0)];
        let cov = pair(ComplexMatrix::outer(&e1, &e1), ComplexMatrix::zeros(4, 4));
        let w = mwf_filter(&cov).unwrap();
        assert_eq!(w.loaded_bins, vec![0]);
        assert!(w.weights[0].iter().all(|z| z.re.is_finite()));
        let g = gevd_rank1_filter(&cov).unwrap();
        assert_eq!(g.loaded_bins, vec![0]);
        // indefinite noise covariance cannot be whitened
        let cov = pair(
            ComplexMatrix::outer(&e1, &e1),
            ComplexMatrix::identity(4).scale(-1.0),
        );
        assert!(matches!(
            gevd_rank1_filter(&cov),
            Err(Error::NoiseCovariance { bin: 0 })
        ));
    }

    #[test]
    fn apply_selectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_spec(6, &mut rng);
        let u1 = FilterWeights::constant(
            [c(1.0), c(0.0), c(0.0), c(0.0)],
            x.bins(),
            FilterVariant::FullMwf,
        );
        assert_eq!(apply_filter(&x, &u1).unwrap(), x.extract_channel(0));
        let zero = FilterWeights::constant([ZERO; 4], x.bins(), FilterVariant::FullMwf);
        assert!(apply_filter(&x, &zero)
            .unwrap()
            .data()
            .iter()
            .all(|z| *z == ZERO));
    }
}
