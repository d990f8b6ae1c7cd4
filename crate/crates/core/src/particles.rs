//! Particle state and lattice initialization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{min_image_displacement, DomainSpec};
use crate::error::{Error, Result};
use crate::neighbor::NeighborList;
use crate::scalar::Real;
use crate::vector::{self, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParticleKind {
    Fluid,
    /// Fixed dummy particle in the wall strip.
    Boundary,
}

impl ParticleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParticleKind::Fluid => "fluid",
            ParticleKind::Boundary => "boundary",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fluid" => Some(ParticleKind::Fluid),
            "boundary" => Some(ParticleKind::Boundary),
            _ => None,
        }
    }
}

/// Structure-of-arrays particle storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem<T, const D: usize> {
    pub positions: Vec<Vector<T, D>>,
    pub velocities: Vec<Vector<T, D>>,
    pub pressures: Vec<T>,
    pub volumes: Vec<T>,
    pub kinds: Vec<ParticleKind>,
}

impl<T: Real, const D: usize> ParticleSystem<T, D> {
    pub fn new(
        positions: Vec<Vector<T, D>>,
        velocities: Vec<Vector<T, D>>,
        pressures: Vec<T>,
        volumes: Vec<T>,
        kinds: Vec<ParticleKind>,
    ) -> Result<Self> {
        let system = Self { positions, velocities, pressures, volumes, kinds };
        system.validate()?;
        Ok(system)
    }

    /// Particles at rest with zero pressure.
    pub fn at_rest(positions: Vec<Vector<T, D>>, volumes: Vec<T>, kinds: Vec<ParticleKind>) -> Result<Self> {
        let n = positions.len();
        Self::new(positions, vec![vector::zero(); n], vec![T::zero(); n], volumes, kinds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if self.velocities.len() != n || self.pressures.len() != n || self.volumes.len() != n || self.kinds.len() != n {
            return Err(Error::InvalidInput(format!(
                "particle arrays disagree in length: positions {n}, velocities {}, pressures {}, volumes {}, kinds {}",
                self.velocities.len(),
                self.pressures.len(),
                self.volumes.len(),
                self.kinds.len()
            )));
        }
        if let Some(i) = self.volumes.iter().position(|v| !(*v > T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!("particle {i} has non-positive volume {}", self.volumes[i])));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_volume(&self) -> T {
        self.volumes.iter().copied().sum()
    }

    pub fn count(&self, kind: ParticleKind) -> usize {
        self.kinds.iter().filter(|&&k| k == kind).count()
    }

    pub fn fluid_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.kinds.iter().enumerate().filter(|(_, k)| **k == ParticleKind::Fluid).map(|(i, _)| i)
    }
}

/// Number of lattice nodes `(i - 1/2) dx`, `i = 1..=n`, that fit in an edge of length `len`.
pub(crate) fn nodes_along(len: f64, dx: f64) -> usize {
    (len / dx + 1e-9).floor() as usize
}

/// Number of node layers `(i - 1/2) dx` with `i <= 0` lying strictly inside a strip of width `width`.
pub(crate) fn layers_in_strip(width: f64, dx: f64) -> usize {
    let l = (width / dx - 0.5 - 1e-9).ceil();
    if l > 0.0 {
        l as usize
    } else {
        0
    }
}

/// Fills a lattice of spacing `dx` anchored at `origin` (nodes at `origin + (i - 1/2) dx`),
/// keeping nodes for which `classify` returns a kind. Index ranges are inclusive per axis.
pub fn lattice_fill<T: Real, const D: usize>(
    origin: Vector<T, D>,
    dx: T,
    ranges: [(i64, i64); D],
    mut classify: impl FnMut(&Vector<T, D>) -> Option<ParticleKind>,
) -> (Vec<Vector<T, D>>, Vec<ParticleKind>) {
    let mut positions = Vec::new();
    let mut kinds = Vec::new();
    let half = T::lit(0.5);
    let mut idx: [i64; D] = std::array::from_fn(|k| ranges[k].0);
    if ranges.iter().any(|(a, b)| a > b) {
        return (positions, kinds);
    }
    loop {
        let x: Vector<T, D> = std::array::from_fn(|k| origin[k] + (T::lit(idx[k] as f64) - half) * dx);
        if let Some(kind) = classify(&x) {
            positions.push(x);
            kinds.push(kind);
        }
        // odometer with axis 0 fastest
        let mut axis = 0;
        loop {
            if axis == D {
                return (positions, kinds);
            }
            idx[axis] += 1;
            if idx[axis] <= ranges[axis].1 {
                break;
            }
            idx[axis] = ranges[axis].0;
            axis += 1;
        }
    }
}

/// Square/cubic lattice with spacing `dx` over the primary box; optionally adds dummy
/// layers continuing the lattice into the expansion strip of every non-periodic axis.
pub fn lattice_init<T: Real, const D: usize>(
    domain: &DomainSpec<T, D>,
    dx: T,
    include_dummy_layers: bool,
) -> Result<ParticleSystem<T, D>> {
    domain.validate()?;
    if !(dx > T::zero()) || !dx.is_finite() {
        return Err(Error::InvalidConfig(format!("lattice spacing must be positive, got {dx}")));
    }
    if dx > domain.min_edge() {
        return Err(Error::InvalidConfig(format!("lattice spacing {dx} exceeds a box edge")));
    }
    let walls = domain.periodic.iter().any(|p| !p);
    if include_dummy_layers && walls && domain.expansion < dx {
        return Err(Error::InvalidConfig(format!(
            "dummy layers need expansion width {} >= dx {dx}",
            domain.expansion
        )));
    }
    let dxf = dx.as_f64();
    let ranges: [(i64, i64); D] = std::array::from_fn(|k| {
        let len = domain.edge(k).as_f64();
        let n = nodes_along(len, dxf) as i64;
        if include_dummy_layers && !domain.periodic[k] {
            let below = layers_in_strip(domain.expansion.as_f64(), dxf) as i64;
            // nodes (i - 1/2) dx < len + H
            let top = ((len + domain.expansion.as_f64()) / dxf + 0.5 - 1e-9).ceil() as i64 - 1;
            (1 - below, top)
        } else {
            (1, n)
        }
    });
    let counts: [i64; D] = std::array::from_fn(|k| nodes_along(domain.edge(k).as_f64(), dxf) as i64);
    let half = T::lit(0.5);
    let (positions, kinds) = lattice_fill(domain.lo, dx, ranges, |x| {
        let inside = (0..D).all(|k| {
            let i = ((x[k] - domain.lo[k]) / dx + half).round().to_i64().unwrap_or(0);
            i >= 1 && i <= counts[k]
        });
        Some(if inside { ParticleKind::Fluid } else { ParticleKind::Boundary })
    });
    let volume = dx.powi(D as i32);
    let n = positions.len();
    ParticleSystem::at_rest(positions, vec![volume; n], kinds)
}

/// Minimum pairwise (minimum-image) distance.
pub fn min_pair_distance<T: Real, const D: usize>(system: &ParticleSystem<T, D>, domain: &DomainSpec<T, D>) -> Result<T> {
    let n = system.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least two particles, got {n}")));
    }
    // Grow a search radius from the mean spacing; the first radius that captures any
    // pair captures the closest one.
    let (lo, hi) = bounding_box(&system.positions);
    let extent = (0..D)
        .map(|k| if domain.periodic[k] { domain.edge(k) } else { (hi[k] - lo[k]).max(T::epsilon()) })
        .fold(T::one(), |a, b| a * b);
    let mut radius = T::lit(2.0) * (extent / T::from_usize_lossy(n)).powf(T::one() / T::lit(D as f64));
    let half_edge = domain.min_periodic_half_edge();
    for _ in 0..8 {
        if half_edge.map_or(false, |he| radius >= he) {
            break;
        }
        let nl = NeighborList::build(system, domain, radius)?;
        if let Some(r) = nl.min_distance() {
            return Ok(r);
        }
        radius = radius * T::lit(2.0);
    }
    Ok(min_pair_distance_brute(system, domain))
}

/// O(N^2) scan; also used as the oracle for [`min_pair_distance`].
pub fn min_pair_distance_brute<T: Real, const D: usize>(system: &ParticleSystem<T, D>, domain: &DomainSpec<T, D>) -> T {
    let pos = &system.positions;
    (0..pos.len())
        .into_par_iter()
        .map(|i| {
            let mut best = T::infinity();
            for j in (i + 1)..pos.len() {
                let d = vector::norm(&min_image_displacement(&pos[i], &pos[j], domain));
                if d < best {
                    best = d;
                }
            }
            best
        })
        .reduce(T::infinity, T::min)
}

pub(crate) fn bounding_box<T: Real, const D: usize>(positions: &[Vector<T, D>]) -> (Vector<T, D>, Vector<T, D>) {
    let mut lo = [T::infinity(); D];
    let mut hi = [T::neg_infinity(); D];
    for x in positions {
        for k in 0..D {
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    (lo, hi)
}

impl<T: Real, const D: usize> DomainSpec<T, D> {
    pub(crate) fn min_periodic_half_edge(&self) -> Option<T> {
        (0..D)
            .filter(|&k| self.periodic[k])
            .map(|k| self.edge(k) * T::lit(0.5))
            .fold(None, |acc: Option<T>, e| Some(acc.map_or(e, |a| a.min(e))))
    }
}
