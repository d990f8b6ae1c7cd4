//! Relative truncation error of the Laplacian on a (perturbed) lattice.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::neighbor::NeighborList;
use crate::operators::OperatorSet;
use crate::particles::{lattice_init, ParticleKind, ParticleSystem};
use crate::scalar::Real;
use crate::weights::{Preset, WeightTriple};

/// Lattice spacing of the study.
pub const TRUNCATION_DX: f64 = 1.0 / 16.0;
/// Width of the particle strip around the unit square.
pub const TRUNCATION_STRIP: f64 = 3.0 / 16.0;
/// Influence radii studied, as multiples of the spacing.
pub const H_FACTORS: [f64; 3] = [2.1, 2.6, 3.1];

fn study_domain<T: Real>() -> Result<DomainSpec<T, 2>> {
    DomainSpec::walled([T::zero(); 2], [T::one(); 2], T::lit(TRUNCATION_STRIP))
}

/// Lattice of spacing 1/16 over the unit square and its strip of width 3/16, each node
/// shifted componentwise by `(e/2) dx` with `e` uniform in `[-eps_max, eps_max]`.
/// Nodes of the unit square are `Fluid`, strip nodes `Boundary`.
pub fn perturbed_lattice<T: Real>(eps_max: T, seed: u64) -> Result<ParticleSystem<T, 2>> {
    if !(eps_max >= T::zero() && eps_max < T::one()) {
        return Err(Error::InvalidConfig(format!("eps_max must lie in [0, 1), got {eps_max}")));
    }
    let dx = T::lit(TRUNCATION_DX);
    let mut system = lattice_init(&study_domain::<T>()?, dx, true)?;
    if eps_max > T::zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = eps_max.as_f64();
        let half_dx = dx * T::lit(0.5);
        for x in &mut system.positions {
            for c in x.iter_mut() {
                *c = *c + T::lit(rng.gen_range(-e..=e)) * half_dx;
            }
        }
    }
    Ok(system)
}

/// `phi(x) = sin(2 pi (x1 + x2))` and its Laplacian.
fn test_field<T: Real>(x: &[T; 2]) -> (T, T) {
    let two_pi = T::lit(2.0) * T::PI();
    let a = two_pi * (x[0] + x[1]);
    (a.sin(), -T::lit(2.0) * two_pi * two_pi * a.sin())
}

/// `max_i |lap phi_i - lap_h phi_i| / max_i |lap phi_i|` over the particles of the unit square.
pub fn laplacian_truncation_error<T: Real>(system: &ParticleSystem<T, 2>, ops: &OperatorSet<T>) -> Result<T> {
    let domain = study_domain::<T>()?;
    let nl = NeighborList::from_positions(&system.positions, &domain, ops.h())?;
    let phi: Vec<T> = system.positions.iter().map(|x| test_field(x).0).collect();
    let mut num = T::zero();
    let mut den = T::zero();
    for i in system.fluid_indices() {
        let exact = test_field(&system.positions[i]).1;
        let approx = ops.laplacian(i, &nl, &system.volumes, &phi);
        num = num.max((exact - approx).abs());
        den = den.max(exact.abs());
    }
    if den > T::zero() {
        Ok(num / den)
    } else {
        Err(Error::InvalidInput("no particles inside the unit square".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationReport<T> {
    pub preset: Preset,
    pub h_factor: T,
    pub eps_max: T,
    pub seeds: Vec<u64>,
    pub errors: Vec<T>,
    pub mean: T,
}

/// Truncation error of a preset's Laplacian for `h = h_factor dx`, one value per seed.
/// With `eps_max = 0` the lattice is exact and a single seed suffices.
pub fn truncation_error_study<T: Real>(preset: Preset, h_factor: T, eps_max: T, seeds: &[u64]) -> Result<TruncationReport<T>> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("truncation study needs at least one seed".into()));
    }
    let ops = OperatorSet::new(WeightTriple::preset(preset, 2)?, h_factor * T::lit(TRUNCATION_DX))?;
    let errors = seeds
        .iter()
        .map(|&seed| laplacian_truncation_error(&perturbed_lattice(eps_max, seed)?, &ops))
        .collect::<Result<Vec<T>>>()?;
    let mean = errors.iter().copied().sum::<T>() / T::from_usize_lossy(errors.len());
    Ok(TruncationReport { preset, h_factor, eps_max, seeds: seeds.to_vec(), errors, mean })
}

/// Number of particles counted as `Fluid` by [`perturbed_lattice`].
pub fn interior_count<T: Real>(system: &ParticleSystem<T, 2>) -> usize {
    system.count(ParticleKind::Fluid)
}
