//! Narrowband clustered mmWave MIMO channel and AWGN.
//!
//! A realization is
//! `H = sqrt(Nt·Nr / (Ncl·Nray)) · Σ_i Σ_l α_il · a_r(φ^r_il) · a_t(φ^t_il)ᴴ`
//! with uniform-linear-array responses on both ends and `α_il ~ CN(0, 1)`.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::linalg::{svd, CMatrix, Svd, C64};

/// Uniform linear array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    num_elements: usize,
    spacing_over_wavelength: f64,
}

impl ArrayGeometry {
    pub fn new(num_elements: usize, spacing_over_wavelength: f64) -> Result<Self> {
        if num_elements == 0 {
            return Err(invalid("array needs at least one element"));
        }
        if !(spacing_over_wavelength > 0.0 && spacing_over_wavelength.is_finite()) {
            return Err(invalid("element spacing must be positive"));
        }
        Ok(Self {
            num_elements,
            spacing_over_wavelength,
        })
    }

    /// Half-wavelength spaced array.
    pub fn half_wavelength(num_elements: usize) -> Result<Self> {
        Self::new(num_elements, 0.5)
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn spacing_over_wavelength(&self) -> f64 {
        self.spacing_over_wavelength
    }
}

/// Unit-norm ULA steering vector for azimuth `azimuth` (radians).
pub fn array_response(geometry: &ArrayGeometry, azimuth: f64) -> Vec<C64> {
    let n = geometry.num_elements;
    let norm = 1.0 / (n as f64).sqrt();
    let step = -2.0 * PI * geometry.spacing_over_wavelength * azimuth.sin();
    (0..n)
        .map(|k| C64::from_polar(norm, step * k as f64))
        .collect()
}

/// How ray azimuths are drawn. Cluster centers are uniform on
/// `[center_min, center_max]`; each ray adds a zero-mean Laplacian offset
/// with standard deviation `ray_spread`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleModel {
    pub center_min: f64,
    pub center_max: f64,
    pub ray_spread: f64,
}

impl Default for AngleModel {
    fn default() -> Self {
        Self {
            center_min: -PI / 2.0,
            center_max: PI / 2.0,
            ray_spread: 7.5f64.to_radians(),
        }
    }
}

impl AngleModel {
    fn validate(&self) -> Result<()> {
        if !(self.center_min.is_finite() && self.center_max.is_finite())
            || self.center_min > self.center_max
        {
            return Err(invalid("angle center range is empty"));
        }
        if !(self.ray_spread >= 0.0 && self.ray_spread.is_finite()) {
            return Err(invalid("ray spread must be non-negative"));
        }
        Ok(())
    }

    fn center<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.center_min + (self.center_max - self.center_min) * rng.random::<f64>()
    }

    fn offset<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Inverse-CDF Laplace sample; scale b gives std b·√2.
        let b = self.ray_spread / core::f64::consts::SQRT_2;
        loop {
            let u = rng.random::<f64>() - 0.5;
            if u.abs() < 0.5 {
                return -b * u.signum() * (1.0 - 2.0 * u.abs()).ln();
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    num_clusters: usize,
    rays_per_cluster: usize,
    tx_geometry: ArrayGeometry,
    rx_geometry: ArrayGeometry,
    angles: AngleModel,
}

impl ClusterConfig {
    pub fn new(
        num_clusters: usize,
        rays_per_cluster: usize,
        tx_geometry: ArrayGeometry,
        rx_geometry: ArrayGeometry,
    ) -> Result<Self> {
        Self::with_angles(
            num_clusters,
            rays_per_cluster,
            tx_geometry,
            rx_geometry,
            AngleModel::default(),
        )
    }

    pub fn with_angles(
        num_clusters: usize,
        rays_per_cluster: usize,
        tx_geometry: ArrayGeometry,
        rx_geometry: ArrayGeometry,
        angles: AngleModel,
    ) -> Result<Self> {
        if num_clusters == 0 || rays_per_cluster == 0 {
            return Err(invalid("need at least one cluster and one ray"));
        }
        angles.validate()?;
        Ok(Self {
            num_clusters,
            rays_per_cluster,
            tx_geometry,
            rx_geometry,
            angles,
        })
    }

    /// `nt × nr` half-wavelength arrays with 2 clusters of 4 rays.
    pub fn mmwave(nt: usize, nr: usize) -> Result<Self> {
        Self::new(
            2,
            4,
            ArrayGeometry::half_wavelength(nt)?,
            ArrayGeometry::half_wavelength(nr)?,
        )
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn rays_per_cluster(&self) -> usize {
        self.rays_per_cluster
    }

    pub fn tx_geometry(&self) -> &ArrayGeometry {
        &self.tx_geometry
    }

    pub fn rx_geometry(&self) -> &ArrayGeometry {
        &self.rx_geometry
    }

    pub fn angles(&self) -> &AngleModel {
        &self.angles
    }

    pub fn num_tx(&self) -> usize {
        self.tx_geometry.num_elements
    }

    pub fn num_rx(&self) -> usize {
        self.rx_geometry.num_elements
    }
}

/// A channel realization together with its cached SVD.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    entries: CMatrix,
    svd: Svd,
}

impl ChannelMatrix {
    pub fn from_entries(entries: CMatrix) -> Self {
        let svd = svd(&entries);
        Self { entries, svd }
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn num_rx(&self) -> usize {
        self.entries.rows()
    }

    pub fn num_tx(&self) -> usize {
        self.entries.cols()
    }

    pub fn svd(&self) -> &Svd {
        &self.svd
    }

    pub fn u(&self) -> &CMatrix {
        &self.svd.u
    }

    pub fn sigma(&self) -> &[f64] {
        &self.svd.sigma
    }

    pub fn v(&self) -> &CMatrix {
        &self.svd.v
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }
}

/// Standard circularly-symmetric complex Gaussian sample, `E|z|² = 1`.
pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
}

/// Draws `H` without decomposing it.
pub fn sample_channel_entries<R: Rng + ?Sized>(config: &ClusterConfig, rng: &mut R) -> CMatrix {
    let (nt, nr) = (config.num_tx(), config.num_rx());
    let paths = config.num_clusters * config.rays_per_cluster;
    let gain = ((nt * nr) as f64 / paths as f64).sqrt();
    let mut h = CMatrix::zeros(nr, nt);
    for _ in 0..config.num_clusters {
        let center_rx = config.angles.center(rng);
        let center_tx = config.angles.center(rng);
        for _ in 0..config.rays_per_cluster {
            let phi_rx = center_rx + config.angles.offset(rng);
            let phi_tx = center_tx + config.angles.offset(rng);
            let alpha = complex_gaussian(rng) * gain;
            let a_r = array_response(&config.rx_geometry, phi_rx);
            let a_t = array_response(&config.tx_geometry, phi_tx);
            for (i, ar) in a_r.iter().enumerate() {
                let coeff = alpha * ar;
                for (j, at) in a_t.iter().enumerate() {
                    h[(i, j)] += coeff * at.conj();
                }
            }
        }
    }
    h
}

pub fn generate_channel<R: Rng + ?Sized>(config: &ClusterConfig, rng: &mut R) -> ChannelMatrix {
    ChannelMatrix::from_entries(sample_channel_entries(config, rng))
}

/// Per-receive-antenna complex noise variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    variance: f64,
}

impl NoiseModel {
    pub fn new(variance_per_complex_dim: f64) -> Result<Self> {
        if !(variance_per_complex_dim > 0.0 && variance_per_complex_dim.is_finite()) {
            return Err(invalid("noise variance must be positive and finite"));
        }
        Ok(Self {
            variance: variance_per_complex_dim,
        })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }
}

/// Noise variance for a given SNR with unit average power per transmitted
/// symbol: `σ² = 10^(−snr/10)`.
pub fn snr_to_noise_variance(snr_db: f64) -> Result<NoiseModel> {
    NoiseModel::new(10f64.powf(-snr_db / 10.0))
}

pub fn draw_noise<R: Rng + ?Sized>(model: &NoiseModel, dim: usize, rng: &mut R) -> Vec<C64> {
    let std = model.variance.sqrt();
    (0..dim).map(|_| complex_gaussian(rng) * std).collect()
}
