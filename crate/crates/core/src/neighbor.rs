//! Fixed-radius neighbor search on a uniform cell grid.

use rayon::prelude::*;

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::particles::{bounding_box, ParticleSystem};
use crate::scalar::Real;
use crate::vector::{self, Vector};

/// Compressed per-particle neighbor lists. Neighbors of `i` are sorted by index, exclude `i`
/// itself, and carry the minimum-image displacement `x_j - x_i` and its length.
#[derive(Debug, Clone)]
pub struct NeighborList<T, const D: usize> {
    radius: T,
    cell_size: Vector<T, D>,
    offsets: Vec<usize>,
    indices: Vec<u32>,
    displacements: Vec<Vector<T, D>>,
    distances: Vec<T>,
}

struct Grid<T, const D: usize> {
    origin: Vector<T, D>,
    cell_size: Vector<T, D>,
    dims: [usize; D],
    periodic: [bool; D],
}

impl<T: Real, const D: usize> Grid<T, D> {
    fn coords(&self, x: &Vector<T, D>) -> [usize; D] {
        std::array::from_fn(|k| {
            let c = ((x[k] - self.origin[k]) / self.cell_size[k]).floor().to_i64().unwrap_or(0);
            c.clamp(0, self.dims[k] as i64 - 1) as usize
        })
    }

    fn linear(&self, c: &[usize; D]) -> usize {
        let mut id = 0;
        for k in (0..D).rev() {
            id = id * self.dims[k] + c[k];
        }
        id
    }

    /// Distinct linear ids of the cells in the one-ring around `c` (including `c`).
    fn ring(&self, c: &[usize; D], out: &mut Vec<usize>) {
        out.clear();
        let total = 3usize.pow(D as u32);
        'offsets: for code in 0..total {
            let mut rem = code;
            let mut n = [0usize; D];
            for k in 0..D {
                let off = (rem % 3) as i64 - 1;
                rem /= 3;
                let v = c[k] as i64 + off;
                let dim = self.dims[k] as i64;
                n[k] = if self.periodic[k] {
                    v.rem_euclid(dim) as usize
                } else if v < 0 || v >= dim {
                    continue 'offsets;
                } else {
                    v as usize
                };
            }
            let id = self.linear(&n);
            if !out.contains(&id) {
                out.push(id);
            }
        }
    }
}

impl<T: Real, const D: usize> NeighborList<T, D> {
    /// All pairs with minimum-image distance strictly below `radius`.
    pub fn build(system: &ParticleSystem<T, D>, domain: &DomainSpec<T, D>, radius: T) -> Result<Self> {
        Self::from_positions(&system.positions, domain, radius)
    }

    pub fn from_positions(positions: &[Vector<T, D>], domain: &DomainSpec<T, D>, radius: T) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::InvalidConfig(format!("neighbor radius must be positive, got {radius}")));
        }
        if let Some(half) = domain.min_periodic_half_edge() {
            if radius >= half {
                return Err(Error::InvalidConfig(format!(
                    "neighbor radius {radius} must be below half the periodic edge ({half})"
                )));
            }
        }
        let n = positions.len();
        if n > u32::MAX as usize {
            return Err(Error::InvalidInput("too many particles for 32-bit neighbor indices".into()));
        }
        let (bb_lo, bb_hi) = if n == 0 { (domain.lo, domain.hi) } else { bounding_box(positions) };
        let mut origin = domain.lo;
        let mut cell_size = [radius; D];
        let mut dims = [1usize; D];
        // Cells may be larger than the radius; capping their number keeps memory
        // proportional to N when the radius is tiny compared with the domain.
        let max_per_axis = ((4 * n + 64) as f64).powf(1.0 / D as f64).ceil() as usize;
        for k in 0..D {
            if domain.periodic[k] {
                let len = domain.edge(k);
                let cells = (len / radius).floor().to_usize().unwrap_or(1).clamp(1, max_per_axis);
                dims[k] = cells;
                cell_size[k] = len / T::from_usize_lossy(cells);
            } else {
                origin[k] = bb_lo[k].min(domain.lo[k]);
                let span = bb_hi[k].max(domain.hi[k]) - origin[k];
                let cells = (span / radius).floor().to_usize().unwrap_or(usize::MAX).saturating_add(1);
                if cells > max_per_axis {
                    dims[k] = max_per_axis;
                    cell_size[k] = span / T::from_usize_lossy(max_per_axis - 1);
                } else {
                    dims[k] = cells;
                }
            }
        }
        let grid = Grid { origin, cell_size, dims, periodic: domain.periodic };
        let n_cells: usize = dims.iter().product();

        // counting sort of particles into cells; stable, so each cell is index-ordered
        let cell_of: Vec<usize> = positions.par_iter().map(|x| grid.linear(&grid.coords(x))).collect();
        let mut starts = vec![0usize; n_cells + 1];
        for &c in &cell_of {
            starts[c + 1] += 1;
        }
        for c in 0..n_cells {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut sorted = vec![0u32; n];
        for (i, &c) in cell_of.iter().enumerate() {
            sorted[fill[c]] = i as u32;
            fill[c] += 1;
        }

        let r2 = radius * radius;
        let image = MinImage::new(domain);

        // Work cell by cell: the candidates of a cell are shared by all its particles and,
        // once sorted, yield every particle's neighbors in ascending index order.
        struct CellOut<T, const D: usize> {
            counts: Vec<usize>,
            indices: Vec<u32>,
            displacements: Vec<Vector<T, D>>,
            distances: Vec<T>,
        }
        let per_cell: Vec<CellOut<T, D>> = (0..n_cells)
            .into_par_iter()
            .map_init(
                || (Vec::new(), Vec::new()),
                |(ring, cand): &mut (Vec<usize>, Vec<u32>), cell| {
                    let members = &sorted[starts[cell]..starts[cell + 1]];
                    let mut out = CellOut { counts: Vec::with_capacity(members.len()), indices: Vec::new(), displacements: Vec::new(), distances: Vec::new() };
                    if members.is_empty() {
                        return out;
                    }
                    let mut c = [0usize; D];
                    let mut rem = cell;
                    for k in 0..D {
                        c[k] = rem % dims[k];
                        rem /= dims[k];
                    }
                    grid.ring(&c, ring);
                    cand.clear();
                    for &rc in ring.iter() {
                        cand.extend_from_slice(&sorted[starts[rc]..starts[rc + 1]]);
                    }
                    cand.sort_unstable();
                    for &i in members {
                        let xi = &positions[i as usize];
                        let before = out.indices.len();
                        for &j in cand.iter() {
                            if j == i {
                                continue;
                            }
                            let d = image.displacement(xi, &positions[j as usize]);
                            let q = vector::norm_sq(&d);
                            if q < r2 {
                                out.indices.push(j);
                                out.displacements.push(d);
                                out.distances.push(q.sqrt());
                            }
                        }
                        out.counts.push(out.indices.len() - before);
                    }
                    out
                },
            )
            .collect();

        let mut offsets = vec![0usize; n + 1];
        for (cell, out) in per_cell.iter().enumerate() {
            for (&i, &cnt) in sorted[starts[cell]..starts[cell + 1]].iter().zip(&out.counts) {
                offsets[i as usize + 1] = cnt;
            }
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let total = offsets[n];
        let mut indices = vec![0u32; total];
        let mut displacements = vec![vector::zero::<T, D>(); total];
        let mut distances = vec![T::zero(); total];
        for (cell, out) in per_cell.iter().enumerate() {
            let mut src = 0;
            for (&i, &cnt) in sorted[starts[cell]..starts[cell + 1]].iter().zip(&out.counts) {
                let dst = offsets[i as usize];
                indices[dst..dst + cnt].copy_from_slice(&out.indices[src..src + cnt]);
                displacements[dst..dst + cnt].copy_from_slice(&out.displacements[src..src + cnt]);
                distances[dst..dst + cnt].copy_from_slice(&out.distances[src..src + cnt]);
                src += cnt;
            }
        }
        Ok(Self { radius, cell_size, offsets, indices, displacements, distances })
    }

    #[inline]
    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn cell_size(&self) -> Vector<T, D> {
        self.cell_size
    }

    /// Number of particles the list was built for.
    #[inline]
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total number of directed (i, j) entries.
    pub fn entries(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn count(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    #[inline]
    pub fn indices(&self, i: usize) -> &[u32] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn displacements(&self, i: usize) -> &[Vector<T, D>] {
        &self.displacements[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn distances(&self, i: usize) -> &[T] {
        &self.distances[self.offsets[i]..self.offsets[i + 1]]
    }

    /// `(j, x_j - x_i, |x_j - x_i|)` for every neighbor of `i`, ascending in `j`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, &Vector<T, D>, T)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.indices[range.clone()]
            .iter()
            .zip(&self.displacements[range.clone()])
            .zip(&self.distances[range])
            .map(|((&j, d), &r)| (j as usize, d, r))
    }

    pub fn min_distance(&self) -> Option<T> {
        self.distances.iter().copied().fold(None, |acc, r| Some(acc.map_or(r, |a: T| a.min(r))))
    }

    /// Unordered pairs `(i, j)` with `i < j`, sorted.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.entries() / 2);
        for i in 0..self.len() {
            for &j in self.indices(i) {
                if (j as usize) > i {
                    out.push((i, j as usize));
                }
            }
        }
        out
    }
    /// The sub-list of pairs closer than `radius` at new `positions`. Exact as long as no pair
    /// that is now within `radius` was outside this list's radius when it was built.
    pub fn filtered(&self, positions: &[Vector<T, D>], domain: &DomainSpec<T, D>, radius: T) -> Self {
        debug_assert!(radius <= self.radius && positions.len() == self.len());
        let image = MinImage::new(domain);
        let r2 = radius * radius;
        let n = self.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut displacements = Vec::with_capacity(self.indices.len());
        let mut distances = Vec::with_capacity(self.indices.len());
        offsets.push(0);
        for i in 0..n {
            let xi = &positions[i];
            for &j in self.indices(i) {
                let d = image.displacement(xi, &positions[j as usize]);
                let q = vector::norm_sq(&d);
                if q < r2 {
                    indices.push(j);
                    displacements.push(d);
                    distances.push(q.sqrt());
                }
            }
            offsets.push(indices.len());
        }
        Self { radius, cell_size: self.cell_size, offsets, indices, displacements, distances }
    }
}


/// Minimum-image displacement that skips the division unless a periodic wrap is needed;
/// bitwise equal to [`crate::domain::min_image_displacement`].
struct MinImage<T, const D: usize> {
    periodic: [bool; D],
    len: Vector<T, D>,
    half: Vector<T, D>,
}

impl<T: Real, const D: usize> MinImage<T, D> {
    fn new(domain: &DomainSpec<T, D>) -> Self {
        Self {
            periodic: domain.periodic,
            len: std::array::from_fn(|k| domain.edge(k)),
            half: std::array::from_fn(|k| domain.edge(k) * T::lit(0.5)),
        }
    }

    #[inline]
    fn displacement(&self, xi: &Vector<T, D>, xj: &Vector<T, D>) -> Vector<T, D> {
        std::array::from_fn(|k| {
            let d = xj[k] - xi[k];
            if self.periodic[k] && d.abs() >= self.half[k] {
                d - self.len[k] * (d / self.len[k]).round()
            } else {
                d
            }
        })
    }
}

/// Verlet-style cache: a candidate list with radius `h + skin`, rebuilt only once some
/// particle has moved more than half the skin since the last rebuild. The lists it hands
/// out are identical to fresh builds.
#[derive(Debug, Clone)]
pub struct VerletCache<T, const D: usize> {
    radius: T,
    skin: T,
    candidates: Option<NeighborList<T, D>>,
    anchor: Vec<Vector<T, D>>,
    rebuilds: usize,
}

impl<T: Real, const D: usize> VerletCache<T, D> {
    /// The skin is shrunk if `radius + skin` would reach half a periodic edge.
    pub fn new(radius: T, skin: T, domain: &DomainSpec<T, D>) -> Self {
        let mut skin = skin.max(T::zero());
        if let Some(half) = domain.min_periodic_half_edge() {
            let room = half * T::lit(0.999) - radius;
            skin = skin.min(room.max(T::zero()));
        }
        Self { radius, skin, candidates: None, anchor: Vec::new(), rebuilds: 0 }
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn skin(&self) -> T {
        self.skin
    }

    /// Candidate-list rebuilds so far.
    pub fn rebuilds(&self) -> usize {
        self.rebuilds
    }

    pub fn neighbors(&mut self, positions: &[Vector<T, D>], domain: &DomainSpec<T, D>) -> Result<NeighborList<T, D>> {
        if self.skin <= T::zero() {
            return NeighborList::from_positions(positions, domain, self.radius);
        }
        if !self.is_valid_for(positions, domain) {
            self.candidates = Some(NeighborList::from_positions(positions, domain, self.radius + self.skin)?);
            self.anchor = positions.to_vec();
            self.rebuilds += 1;
        }
        let cand = self.candidates.as_ref().expect("candidate list present after rebuild");
        Ok(cand.filtered(positions, domain, self.radius))
    }

    fn is_valid_for(&self, positions: &[Vector<T, D>], domain: &DomainSpec<T, D>) -> bool {
        if self.candidates.is_none() || self.anchor.len() != positions.len() {
            return false;
        }
        let limit = self.skin * T::lit(0.5);
        let limit2 = limit * limit;
        let image = MinImage::new(domain);
        positions.iter().zip(&self.anchor).all(|(x, a)| vector::norm_sq(&image.displacement(a, x)) < limit2)
    }
}
