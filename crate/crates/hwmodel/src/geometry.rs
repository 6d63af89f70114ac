//! Zone geographies: distance matrices, demand, and proximity kernels.
//!
//! Three lattice builders are provided (ring, square torus, triangular
//! torus), all with unit-weight graph distances computed by BFS. Arbitrary
//! geographies can be loaded from JSON files. Every constructor normalizes
//! demand so that total demand over cost, `sum(Q) / kappa`, equals one; the
//! applied scale factor is recorded on the struct.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geography family. Zone indices are 0-based in the API; file formats and
/// report labels use 1-based zone numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Ring,
    SquareTorus,
    TriTorus,
    Custom,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Ring => "ring",
            Kind::SquareTorus => "square_torus",
            Kind::TriTorus => "tri_torus",
            Kind::Custom => "custom",
        }
    }
}

/// Zones, pairwise distances, demand weights and the cost rate kappa.
///
/// Invariants (checked by [`Geography::validate`], which every constructor
/// runs): the distance matrix is symmetric with zero diagonal, positive
/// off-diagonal entries, and satisfies the triangle inequality; demand is
/// strictly positive; and `sum(demand) == kappa` so the attracting mass of
/// the dynamics is exactly one.
#[derive(Clone, Debug)]
pub struct Geography {
    kind: Kind,
    n: Option<usize>,
    k: usize,
    dist: Vec<f64>,
    demand: Vec<f64>,
    kappa: f64,
    demand_scale: f64,
}

#[derive(Serialize, Deserialize)]
struct GeographyFile {
    kind: Kind,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dist: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    demand: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    demand_scale: Option<f64>,
}

impl Geography {
    /// Cycle of `k` zones, distance = hop count around the ring.
    pub fn ring(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidGeography(format!("ring needs k >= 2, got {k}")));
        }
        let neighbors: Vec<Vec<usize>> = (0..k).map(|i| vec![(i + 1) % k, (i + k - 1) % k]).collect();
        Self::from_neighbors(Kind::Ring, Some(k), k, &neighbors)
    }

    /// n x n square lattice with periodic boundaries; distance is the
    /// wrapped L1 (4-neighbor) metric. Zone index = row * n + col.
    pub fn square_torus(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGeography(format!("square torus needs n >= 2, got {n}")));
        }
        let k = n * n;
        let idx = |r: usize, c: usize| (r % n) * n + (c % n);
        let neighbors: Vec<Vec<usize>> = (0..k)
            .map(|i| {
                let (r, c) = (i / n, i % n);
                vec![idx(r + 1, c), idx(r + n - 1, c), idx(r, c + 1), idx(r, c + n - 1)]
            })
            .collect();
        Self::from_neighbors(Kind::SquareTorus, Some(n), k, &neighbors)
    }

    /// n x n triangular lattice with periodic boundaries (6 neighbors per
    /// zone) in axial coordinates; zone index = q * n + r.
    pub fn tri_torus(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGeography(format!("tri torus needs n >= 2, got {n}")));
        }
        let k = n * n;
        let idx = |q: usize, r: usize| (q % n) * n + (r % n);
        let neighbors: Vec<Vec<usize>> = (0..k)
            .map(|i| {
                let (q, r) = (i / n, i % n);
                vec![
                    idx(q + 1, r),
                    idx(q + n - 1, r),
                    idx(q, r + 1),
                    idx(q, r + n - 1),
                    idx(q + 1, r + n - 1),
                    idx(q + n - 1, r + 1),
                ]
            })
            .collect();
        Self::from_neighbors(Kind::TriTorus, Some(n), k, &neighbors)
    }

    /// Geography from an explicit distance matrix, demand vector and kappa.
    /// Demand is rescaled so that `sum(demand) == kappa`; the factor applied
    /// to kappa is recorded in [`Geography::demand_scale`].
    pub fn custom(dist: Vec<Vec<f64>>, demand: Vec<f64>, kappa: f64) -> Result<Self> {
        let k = dist.len();
        if k < 2 {
            return Err(Error::InvalidGeography("need at least 2 zones".into()));
        }
        let mut flat = Vec::with_capacity(k * k);
        for row in &dist {
            if row.len() != k {
                return Err(Error::InvalidGeography(format!(
                    "dist must be square: {k} rows but a row of length {}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        if demand.len() != k {
            return Err(Error::InvalidGeography(format!(
                "demand length {} does not match {} zones",
                demand.len(),
                k
            )));
        }
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::InvalidGeography(format!("kappa must be positive, got {kappa}")));
        }
        let total: f64 = demand.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidGeography("total demand must be positive".into()));
        }
        // Rescale kappa to the demand total so sum(Q)/kappa == 1.
        let geo = Geography {
            kind: Kind::Custom,
            n: None,
            k,
            dist: flat,
            demand,
            kappa: total,
            demand_scale: total / kappa,
        };
        geo.validate()?;
        Ok(geo)
    }

    fn from_neighbors(kind: Kind, n: Option<usize>, k: usize, neighbors: &[Vec<usize>]) -> Result<Self> {
        let mut dist = vec![0.0; k * k];
        for src in 0..k {
            let row = bfs_distances(k, neighbors, src)?;
            for (j, d) in row.into_iter().enumerate() {
                dist[src * k + j] = d as f64;
            }
        }
        let geo = Geography {
            kind,
            n,
            k,
            dist,
            demand: vec![1.0 / k as f64; k],
            kappa: 1.0,
            demand_scale: 1.0,
        };
        geo.validate()?;
        Ok(geo)
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    /// Lattice side length (ring: zone count), `None` for custom geographies.
    pub fn n(&self) -> Option<usize> {
        self.n
    }

    /// Number of zones.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.k + j]
    }

    pub fn demand(&self) -> &[f64] {
        &self.demand
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Factor by which kappa was multiplied during normalization.
    pub fn demand_scale(&self) -> f64 {
        self.demand_scale
    }

    pub fn max_dist(&self) -> f64 {
        self.dist.iter().cloned().fold(0.0, f64::max)
    }

    /// True when every distance is a nonnegative integer (all lattice
    /// builders) so that proximity powers can use a lookup table.
    pub fn has_integer_distances(&self) -> bool {
        self.dist.iter().all(|d| d.fract() == 0.0)
    }

    /// Proximity kernel `w[(j, k)] = phi ^ dist(j, k)` for `phi` in (0, 1).
    pub fn proximity(&self, phi: f64) -> Result<DMatrix<f64>> {
        if !(phi > 0.0 && phi < 1.0) {
            return Err(Error::InvalidParameter(format!("phi must lie in (0, 1), got {phi}")));
        }
        let k = self.k;
        let w = if self.has_integer_distances() {
            let maxd = self.max_dist() as usize;
            let mut pow = vec![1.0; maxd + 1];
            for d in 1..=maxd {
                pow[d] = pow[d - 1] * phi;
            }
            DMatrix::from_fn(k, k, |i, j| pow[self.dist[i * k + j] as usize])
        } else {
            DMatrix::from_fn(k, k, |i, j| phi.powf(self.dist[i * k + j]))
        };
        Ok(w)
    }

    /// Checks metric and demand invariants. O(K^3) due to the exhaustive
    /// triangle inequality scan.
    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        if self.dist.len() != k * k || self.demand.len() != k {
            return Err(Error::InvalidGeography("matrix shape mismatch".into()));
        }
        for i in 0..k {
            if self.dist[i * k + i] != 0.0 {
                return Err(Error::InvalidGeography(format!("dist({a},{a}) must be 0", a = i + 1)));
            }
            for j in 0..k {
                let d = self.dist[i * k + j];
                if !d.is_finite() || (i != j && d <= 0.0) {
                    return Err(Error::InvalidGeography(format!(
                        "dist({},{}) = {} must be positive and finite",
                        i + 1,
                        j + 1,
                        d
                    )));
                }
                if (d - self.dist[j * k + i]).abs() > 0.0 {
                    return Err(Error::InvalidGeography(format!(
                        "dist must be symmetric: dist({i1},{j1}) = {} but dist({j1},{i1}) = {}",
                        d,
                        self.dist[j * k + i],
                        i1 = i + 1,
                        j1 = j + 1,
                    )));
                }
            }
        }
        for i in 0..k {
            for j in 0..k {
                let dij = self.dist[i * k + j];
                for m in 0..k {
                    if self.dist[i * k + m] + self.dist[m * k + j] < dij - 1e-12 {
                        return Err(Error::InvalidGeography(format!(
                            "triangle inequality violated at zones ({}, {}, {})",
                            i + 1,
                            m + 1,
                            j + 1
                        )));
                    }
                }
            }
        }
        for (j, q) in self.demand.iter().enumerate() {
            if !(q.is_finite() && *q > 0.0) {
                return Err(Error::InvalidGeography(format!("demand({}) = {q} must be positive", j + 1)));
            }
        }
        let total: f64 = self.demand.iter().sum();
        if (total - self.kappa).abs() > 1e-9 * self.kappa {
            return Err(Error::InvalidGeography(format!(
                "demand is not normalized: sum(Q) = {total} but kappa = {}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Writes the geography as JSON with matrices at full double precision.
    pub fn save(&self, path: &Path) -> Result<()> {
        let k = self.k;
        let rows: Vec<Vec<f64>> = (0..k).map(|i| self.dist[i * k..(i + 1) * k].to_vec()).collect();
        let file = GeographyFile {
            kind: self.kind,
            n: self.n,
            dist: Some(rows),
            demand: Some(self.demand.clone()),
            kappa: Some(self.kappa),
            demand_scale: Some(self.demand_scale),
        };
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Loads a geography from JSON. Lattice kinds (`{"kind": "...", "n": k}`)
    /// are rebuilt from their builder and cross-checked against any embedded
    /// matrices; `"custom"` requires explicit `dist`, `demand` and `kappa`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: GeographyFile = serde_json::from_str(&text)?;
        match file.kind {
            Kind::Custom => {
                let dist = file
                    .dist
                    .ok_or_else(|| Error::InvalidGeography("custom geography requires dist".into()))?;
                let demand = file
                    .demand
                    .ok_or_else(|| Error::InvalidGeography("custom geography requires demand".into()))?;
                let kappa = file
                    .kappa
                    .ok_or_else(|| Error::InvalidGeography("custom geography requires kappa".into()))?;
                Self::custom(dist, demand, kappa)
            }
            kind => {
                let n = file.n.ok_or_else(|| {
                    Error::InvalidGeography(format!("{} geography requires n", kind.as_str()))
                })?;
                let geo = match kind {
                    Kind::Ring => Self::ring(n)?,
                    Kind::SquareTorus => Self::square_torus(n)?,
                    Kind::TriTorus => Self::tri_torus(n)?,
                    Kind::Custom => unreachable!(),
                };
                if let Some(rows) = &file.dist {
                    let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
                    if flat != geo.dist {
                        return Err(Error::InvalidGeography(
                            "embedded dist does not match the builder for this kind/n".into(),
                        ));
                    }
                }
                Ok(geo)
            }
        }
    }
}

fn bfs_distances(k: usize, neighbors: &[Vec<usize>], src: usize) -> Result<Vec<u32>> {
    let mut dist = vec![u32::MAX; k];
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for &v in &neighbors[u] {
            if dist[v] == u32::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    if dist.contains(&u32::MAX) {
        return Err(Error::InvalidGeography("graph is not connected".into()));
    }
    Ok(dist)
}
