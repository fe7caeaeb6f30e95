//! Finite connected lattice domains and their edge sets.
//!
//! A [`Domain`] is a finite set of points of `Z^d` containing the origin and
//! connected under nearest-neighbour adjacency. Its edge set `E_B` holds every
//! nearest-neighbour bond with at least one endpoint in the domain: interior
//! bonds join two domain sites, boundary bonds join a site to an exterior
//! lattice point where the walk is killed.
//!
//! Sites and edges are kept in lexicographic order, so field sampling and
//! matrix assembly are reproducible under a fixed seed.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the integer lattice.
pub type Point = Vec<i64>;

/// One endpoint of an edge in `E_B`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Endpoint {
    /// A site of the domain, by index.
    Site(usize),
    /// A lattice point outside the domain.
    Exterior(Point),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Interior,
    Boundary,
}

/// A nearest-neighbour bond with at least one endpoint in the domain.
///
/// `a` is the lexicographically smaller lattice point.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Edge {
    pub a: Endpoint,
    pub b: Endpoint,
    pub kind: EdgeKind,
}

impl Edge {
    /// The endpoint reached from site `from`, or `None` if `from` is not on the edge.
    pub fn other(&self, from: usize) -> Option<&Endpoint> {
        match (&self.a, &self.b) {
            (Endpoint::Site(x), other) if *x == from => Some(other),
            (other, Endpoint::Site(y)) if *y == from => Some(other),
            _ => None,
        }
    }

    /// Site indices of the endpoints that lie in the domain.
    pub fn sites(&self) -> (Option<usize>, Option<usize>) {
        let idx = |e: &Endpoint| match e {
            Endpoint::Site(i) => Some(*i),
            Endpoint::Exterior(_) => None,
        };
        (idx(&self.a), idx(&self.b))
    }
}

/// Where a step along an edge leads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighbor {
    Site(usize),
    /// Leaving the domain; the walk is killed.
    Exit,
}

/// Adjacency entry of a site: the edge index and where it leads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub edge: usize,
    pub to: Neighbor,
}

/// A finite connected subset of `Z^d` containing the origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    dim: usize,
    sites: Vec<Point>,
    origin: usize,
    edges: Vec<Edge>,
    // per site, incident edges in order (coordinate, -1 then +1)
    incidence: Vec<Vec<Incidence>>,
}

/// JSON form of a domain: dimension and site coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDoc {
    pub d: usize,
    pub sites: Vec<Point>,
}

impl Domain {
    /// Validates the point list and builds the domain.
    pub fn new(points: &[Point], dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if points.is_empty() {
            return Err(Error::EmptyDomain);
        }
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    point: p.clone(),
                    expected: dim,
                    found: p.len(),
                });
            }
        }
        let mut sites = points.to_vec();
        sites.sort();
        for w in sites.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateSite(w[0].clone()));
            }
        }
        let lookup: BTreeMap<&Point, usize> =
            sites.iter().enumerate().map(|(i, p)| (p, i)).collect();
        let origin = *lookup
            .get(&vec![0; dim])
            .ok_or(Error::OriginMissing)?;

        // connectivity by BFS from the origin
        let mut seen = vec![false; sites.len()];
        let mut queue = VecDeque::from([origin]);
        seen[origin] = true;
        let mut reached = 1;
        while let Some(i) = queue.pop_front() {
            for q in neighbours(&sites[i]) {
                if let Some(&j) = lookup.get(&q) {
                    if !seen[j] {
                        seen[j] = true;
                        reached += 1;
                        queue.push_back(j);
                    }
                }
            }
        }
        if reached != sites.len() {
            return Err(Error::DisconnectedDomain);
        }

        let mut keyed: Vec<(Point, Point, Edge)> = Vec::new();
        for (i, x) in sites.iter().enumerate() {
            for y in neighbours(x) {
                match lookup.get(&y) {
                    Some(&j) => {
                        if x < &y {
                            keyed.push((
                                x.clone(),
                                y.clone(),
                                Edge {
                                    a: Endpoint::Site(i),
                                    b: Endpoint::Site(j),
                                    kind: EdgeKind::Interior,
                                },
                            ));
                        }
                    }
                    None => {
                        let (lo, hi, a, b) = if &y < x {
                            (y.clone(), x.clone(), Endpoint::Exterior(y), Endpoint::Site(i))
                        } else {
                            (x.clone(), y.clone(), Endpoint::Site(i), Endpoint::Exterior(y))
                        };
                        keyed.push((lo, hi, Edge { a, b, kind: EdgeKind::Boundary }));
                    }
                }
            }
        }
        keyed.sort_by(|l, r| (&l.0, &l.1).cmp(&(&r.0, &r.1)));
        let edges: Vec<Edge> = keyed.into_iter().map(|(_, _, e)| e).collect();

        let mut incidence = vec![Vec::with_capacity(2 * dim); sites.len()];
        let edge_index: BTreeMap<(Point, Point), usize> = edges
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let pa = endpoint_point(&sites, &e.a);
                let pb = endpoint_point(&sites, &e.b);
                ((pa, pb), k)
            })
            .collect();
        for (i, x) in sites.iter().enumerate() {
            for y in neighbours(x) {
                let key = if x < &y { (x.clone(), y.clone()) } else { (y.clone(), x.clone()) };
                let edge = edge_index[&key];
                let to = match lookup.get(&y) {
                    Some(&j) => Neighbor::Site(j),
                    None => Neighbor::Exit,
                };
                incidence[i].push(Incidence { edge, to });
            }
        }

        Ok(Domain { dim, sites, origin, edges, incidence })
    }

    /// The centred box `[-half_width, half_width]^d`.
    pub fn cube(dim: usize, half_width: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        let hw = half_width as i64;
        let side: Vec<i64> = (-hw..=hw).collect();
        let mut points: Vec<Point> = vec![Vec::new()];
        for _ in 0..dim {
            points = points
                .into_iter()
                .flat_map(|p| {
                    side.iter().map(move |&c| {
                        let mut q = p.clone();
                        q.push(c);
                        q
                    })
                })
                .collect();
        }
        Domain::new(&points, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Point] {
        &self.sites
    }

    pub fn site(&self, index: usize) -> &Point {
        &self.sites[index]
    }

    pub fn origin_index(&self) -> usize {
        self.origin
    }

    /// The edge set `E_B`, in canonical order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_interior_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Interior).count()
    }

    /// Edges incident to a site, `2d` of them.
    pub fn incident(&self, site: usize) -> &[Incidence] {
        &self.incidence[site]
    }

    pub fn index_of(&self, point: &[i64]) -> Option<usize> {
        self.sites.binary_search_by(|p| p.as_slice().cmp(point)).ok()
    }

    /// Lattice coordinates of an edge endpoint.
    pub fn endpoint_point(&self, e: &Endpoint) -> Point {
        endpoint_point(&self.sites, e)
    }

    pub fn to_doc(&self) -> DomainDoc {
        DomainDoc { d: self.dim, sites: self.sites.clone() }
    }

    pub fn from_doc(doc: &DomainDoc) -> Result<Self> {
        Domain::new(&doc.sites, doc.d)
    }
}

/// Free-function form of [`Domain::new`].
pub fn build_domain(points: &[Point], dim: usize) -> Result<Domain> {
    Domain::new(points, dim)
}

/// Free-function form of [`Domain::cube`].
pub fn box_domain(dim: usize, half_width: u32) -> Result<Domain> {
    Domain::cube(dim, half_width)
}

/// The edge set `E_B` of a domain as an owned list.
pub fn edge_set(dom: &Domain) -> Vec<Edge> {
    dom.edges.clone()
}

fn endpoint_point(sites: &[Point], e: &Endpoint) -> Point {
    match e {
        Endpoint::Site(i) => sites[*i].clone(),
        Endpoint::Exterior(p) => p.clone(),
    }
}

// Nearest neighbours in the order (axis 0, -1), (axis 0, +1), (axis 1, -1), ...
fn neighbours(x: &[i64]) -> impl Iterator<Item = Point> + '_ {
    (0..x.len()).flat_map(move |axis| {
        [-1i64, 1].into_iter().map(move |step| {
            let mut y = x.to_vec();
            y[axis] += step;
            y
        })
    })
}

impl Serialize for Domain {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_doc().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = DomainDoc::deserialize(d)?;
        Domain::from_doc(&doc).map_err(serde::de::Error::custom)
    }
}
