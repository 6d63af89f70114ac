//! Symmetry groups of geographies and the support patterns they induce.
//!
//! A lattice geography has a finite group of distance-preserving zone
//! permutations (translations plus point symmetries). Enumerating all
//! subgroups and collecting their zone orbits yields every support that is a
//! single orbit of some subgroup; deduplicated up to the full group action,
//! these are the candidate supports for invariant equilibria.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Geography, Kind};
use crate::par;

/// Zone permutation, stored as its image table: `map[i]` is where zone `i`
/// goes. Acting on states, `(g . x)[map[i]] = x[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Perm {
    map: Vec<u16>,
}

impl Perm {
    pub fn identity(k: usize) -> Self {
        Perm { map: (0..k as u16).collect() }
    }

    /// Builds a permutation from its image table, checking bijectivity.
    pub fn new(map: Vec<u16>) -> Result<Self> {
        let k = map.len();
        let mut seen = vec![false; k];
        for &v in &map {
            if (v as usize) >= k || seen[v as usize] {
                return Err(Error::InvalidParameter("not a permutation".into()));
            }
            seen[v as usize] = true;
        }
        Ok(Perm { map })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.map[i] as usize
    }

    /// `self` after `other`: `(self * other)(i) = self(other(i))`.
    pub fn compose(&self, other: &Perm) -> Perm {
        Perm { map: other.map.iter().map(|&i| self.map[i as usize]).collect() }
    }

    pub fn inverse(&self) -> Perm {
        let mut inv = vec![0u16; self.map.len()];
        for (i, &v) in self.map.iter().enumerate() {
            inv[v as usize] = i as u16;
        }
        Perm { map: inv }
    }

    /// Image of a support set, returned sorted.
    pub fn apply_support(&self, support: &[u16]) -> Vec<u16> {
        let mut out: Vec<u16> = support.iter().map(|&i| self.map[i as usize]).collect();
        out.sort_unstable();
        out
    }

    /// Image of a state vector under the zone relabeling.
    pub fn permute_state(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (i, &v) in x.iter().enumerate() {
            out[self.map[i] as usize] = v;
        }
        out
    }

    fn preserves_distances(&self, geo: &Geography) -> bool {
        let k = geo.k();
        for i in 0..k {
            for j in 0..k {
                if geo.dist(self.apply(i), self.apply(j)) != geo.dist(i, j) {
                    return false;
                }
            }
        }
        true
    }
}

/// A finite permutation group, elements sorted by image table so that
/// element 0 is the identity and indices are reproducible.
#[derive(Clone, Debug)]
pub struct PermGroup {
    k: usize,
    elements: Vec<Perm>,
}

/// Subgroup of a [`PermGroup`], as sorted indices into its element list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subgroup {
    pub elements: Vec<u16>,
}

impl Subgroup {
    pub fn order(&self) -> usize {
        self.elements.len()
    }
}

/// A candidate equilibrium support: a zone set closed under some subgroup,
/// stored as its canonical representative (lexicographically smallest sorted
/// image over the full group). Ids are 1-based and ascend with (size, zones).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportPattern {
    pub id: u32,
    pub m: usize,
    pub zones: Vec<u16>,
}

const MAX_GROUP_ORDER: usize = 10_000;

impl PermGroup {
    /// Identity-only group on `k` zones.
    pub fn trivial(k: usize) -> Self {
        PermGroup { k, elements: vec![Perm::identity(k)] }
    }

    /// Closure of a generator set under composition.
    pub fn from_generators(k: usize, gens: Vec<Perm>) -> Result<Self> {
        for g in &gens {
            if g.len() != k {
                return Err(Error::InvalidParameter(format!(
                    "generator acts on {} zones, expected {k}",
                    g.len()
                )));
            }
        }
        let mut elements = vec![Perm::identity(k)];
        let mut seen: HashSet<Vec<u16>> = elements.iter().map(|p| p.map.clone()).collect();
        for g in gens {
            if seen.insert(g.map.clone()) {
                elements.push(g);
            }
        }
        let mut i = 0;
        while i < elements.len() {
            let mut j = 0;
            while j <= i {
                for p in [elements[i].compose(&elements[j]), elements[j].compose(&elements[i])] {
                    if seen.insert(p.map.clone()) {
                        elements.push(p);
                    }
                }
                if elements.len() > MAX_GROUP_ORDER {
                    return Err(Error::InvalidParameter(format!(
                        "group closure exceeded {MAX_GROUP_ORDER} elements"
                    )));
                }
                j += 1;
            }
            i += 1;
        }
        elements.sort_unstable_by(|a, b| a.map.cmp(&b.map));
        Ok(PermGroup { k, elements })
    }

    /// The distance-preserving symmetry group of a lattice geography:
    /// translations and point symmetries of the torus (ring: the dihedral
    /// group). Custom geographies are not supported; their automorphism
    /// group is not discovered automatically.
    pub fn for_geography(geo: &Geography) -> Result<Self> {
        let k = geo.k();
        let gens: Vec<Perm> = match geo.kind() {
            Kind::Ring => {
                let rot: Vec<u16> = (0..k).map(|i| ((i + 1) % k) as u16).collect();
                let refl: Vec<u16> = (0..k).map(|i| ((k - i) % k) as u16).collect();
                vec![Perm::new(rot)?, Perm::new(refl)?]
            }
            Kind::SquareTorus => {
                let n = geo.n().expect("lattice geography has n");
                let idx = |r: usize, c: usize| ((r % n) * n + c % n) as u16;
                let t1: Vec<u16> = (0..k).map(|i| idx(i / n + 1, i % n)).collect();
                let t2: Vec<u16> = (0..k).map(|i| idx(i / n, i % n + 1)).collect();
                let rot: Vec<u16> = (0..k).map(|i| idx(i % n, n - i / n)).collect();
                let refl: Vec<u16> = (0..k).map(|i| idx(i % n, i / n)).collect();
                vec![Perm::new(t1)?, Perm::new(t2)?, Perm::new(rot)?, Perm::new(refl)?]
            }
            Kind::TriTorus => {
                let n = geo.n().expect("lattice geography has n");
                let idx = |q: usize, r: usize| ((q % n) * n + r % n) as u16;
                let t1: Vec<u16> = (0..k).map(|i| idx(i / n + 1, i % n)).collect();
                let t2: Vec<u16> = (0..k).map(|i| idx(i / n, i % n + 1)).collect();
                // 60 degree rotation in axial coordinates: (q, r) -> (-r, q + r).
                let rot: Vec<u16> = (0..k).map(|i| idx(n - i % n, i / n + i % n)).collect();
                let refl: Vec<u16> = (0..k).map(|i| idx(i % n, i / n)).collect();
                vec![Perm::new(t1)?, Perm::new(t2)?, Perm::new(rot)?, Perm::new(refl)?]
            }
            Kind::Custom => {
                return Err(Error::Unsupported(
                    "symmetry groups are only built for lattice geographies".into(),
                ))
            }
        };
        for g in &gens {
            if !g.preserves_distances(geo) {
                return Err(Error::InvalidGeography(
                    "generator does not preserve distances".into(),
                ));
            }
        }
        Self::from_generators(k, gens)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Perm] {
        &self.elements
    }

    fn mult_table(&self) -> Result<Vec<u16>> {
        let n = self.elements.len();
        if n > u16::MAX as usize {
            return Err(Error::Unsupported(format!("group too large for subgroup scan: {n}")));
        }
        let index: std::collections::HashMap<&[u16], u16> = self
            .elements
            .iter()
            .enumerate()
            .map(|(i, p)| (p.map.as_slice(), i as u16))
            .collect();
        let mut table = vec![0u16; n * n];
        for a in 0..n {
            for b in 0..n {
                let prod = self.elements[a].compose(&self.elements[b]);
                table[a * n + b] = *index
                    .get(prod.map.as_slice())
                    .ok_or_else(|| Error::Numerical("group is not closed".into()))?;
            }
        }
        Ok(table)
    }

    /// Enumerates every subgroup by breadth-first single-generator
    /// extensions from the trivial subgroup. Complete because any subgroup
    /// equals a chain of such extensions along its own generator list.
    /// Each frontier entry keeps its generating set, so a closure costs
    /// O(order * generators) table lookups.
    pub fn subgroups(&self) -> Result<Vec<Subgroup>> {
        let n = self.elements.len();
        let table = self.mult_table()?;
        debug_assert_eq!(self.elements[0], Perm::identity(self.k));

        let trivial = vec![0u16]; // identity sorts first
        let mut seen: HashSet<Vec<u16>> = HashSet::from([trivial.clone()]);
        let mut frontier: Vec<(Vec<u16>, Vec<u16>)> = vec![(trivial, Vec::new())];
        while !frontier.is_empty() {
            let batches = par::map(&frontier, |(h, gens)| {
                let mut in_h = vec![false; n];
                for &e in h {
                    in_h[e as usize] = true;
                }
                let mut out: Vec<(Vec<u16>, Vec<u16>)> = Vec::new();
                let mut local: HashSet<Vec<u16>> = HashSet::new();
                let mut gens_ext = gens.clone();
                for g in 0..n as u16 {
                    if !in_h[g as usize] {
                        gens_ext.push(g);
                        let ext = generated_subgroup(&table, n, &gens_ext);
                        if local.insert(ext.clone()) {
                            out.push((ext, gens_ext.clone()));
                        }
                        gens_ext.pop();
                    }
                }
                out
            });
            let mut next = Vec::new();
            for batch in batches {
                for (sub, gens) in batch {
                    if seen.insert(sub.clone()) {
                        next.push((sub, gens));
                    }
                }
            }
            frontier = next;
        }
        let mut subs: Vec<Subgroup> = seen.into_iter().map(|elements| Subgroup { elements }).collect();
        subs.sort_unstable_by(|a, b| (a.order(), &a.elements).cmp(&(b.order(), &b.elements)));
        Ok(subs)
    }

    /// Zone orbits of a subgroup, sorted by smallest member.
    pub fn orbits(&self, sub: &Subgroup) -> Vec<Vec<u16>> {
        let mut orbit_of = vec![usize::MAX; self.k];
        let mut orbits: Vec<Vec<u16>> = Vec::new();
        for start in 0..self.k {
            if orbit_of[start] != usize::MAX {
                continue;
            }
            let id = orbits.len();
            let mut stack = vec![start];
            orbit_of[start] = id;
            let mut members = vec![start as u16];
            while let Some(z) = stack.pop() {
                for &e in &sub.elements {
                    let w = self.elements[e as usize].apply(z);
                    if orbit_of[w] == usize::MAX {
                        orbit_of[w] = id;
                        stack.push(w);
                        members.push(w as u16);
                    }
                }
            }
            members.sort_unstable();
            orbits.push(members);
        }
        orbits
    }

    /// Canonical representative of a support: the lexicographically smallest
    /// sorted image over all group elements.
    pub fn canonical_support(&self, support: &[u16]) -> Vec<u16> {
        let mut best: Option<Vec<u16>> = None;
        for g in &self.elements {
            let img = g.apply_support(support);
            if best.as_ref().is_none_or(|b| img < *b) {
                best = Some(img);
            }
        }
        best.unwrap_or_default()
    }

    /// Canonical representative of a state vector: the lexicographically
    /// smallest permuted copy (componentwise f64 order).
    pub fn canonical_state(&self, x: &[f64]) -> Vec<f64> {
        let mut best: Option<Vec<f64>> = None;
        for g in &self.elements {
            let img = g.permute_state(x);
            let smaller = match &best {
                None => true,
                Some(b) => lex_less(&img, b),
            };
            if smaller {
                best = Some(img);
            }
        }
        best.unwrap_or_default()
    }
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Subgroup generated by `gens`: the orbit of the identity under left
/// multiplication by the generators. Positive words suffice in a finite
/// group since every generator's inverse is one of its powers.
fn generated_subgroup(table: &[u16], n: usize, gens: &[u16]) -> Vec<u16> {
    let mut member = vec![false; n];
    member[0] = true;
    let mut elems: Vec<u16> = vec![0];
    let mut i = 0;
    while i < elems.len() {
        let x = elems[i] as usize;
        for &s in gens {
            let p = table[(s as usize) * n + x];
            if !member[p as usize] {
                member[p as usize] = true;
                elems.push(p);
            }
        }
        i += 1;
    }
    elems.sort_unstable();
    elems
}

/// All supports that form a single orbit of some subgroup, reduced to
/// canonical representatives, sorted by (size, zones) with 1-based ids.
pub fn invariant_supports(group: &PermGroup, subs: &[Subgroup]) -> Vec<SupportPattern> {
    let mut raw: HashSet<Vec<u16>> = HashSet::new();
    for sub in subs {
        for orbit in group.orbits(sub) {
            raw.insert(orbit);
        }
    }
    let raw: Vec<Vec<u16>> = raw.into_iter().collect();
    let canon = par::map(&raw, |s| group.canonical_support(s));
    let unique: HashSet<Vec<u16>> = canon.into_iter().collect();
    let mut sorted: Vec<Vec<u16>> = unique.into_iter().collect();
    sorted.sort_unstable_by(|a, b| (a.len(), a.as_slice()).cmp(&(b.len(), b.as_slice())));
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, zones)| SupportPattern { id: i as u32 + 1, m: zones.len(), zones })
        .collect()
}
